#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epiview/attention.hpp"
#include "epiview/pipeline.hpp"
#include "epiview/scene.hpp"

namespace epiview::eval {

using geometry::Vec2;
using numerics::FeatureMap;

/// Returned by psnr for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE) over all channels, unit peak.
double psnr(const FeatureMap& a, const FeatureMap& b);

inline constexpr int kSsimWindow = 8;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM over every fully contained window x window patch and channel,
/// uniform weights, population statistics.
double ssim(const FeatureMap& a, const FeatureMap& b, int window = kSsimWindow);

/// An image paired with the ground-truth render of the same camera, which
/// supplies geometry for the correspondences.
struct ConsistencyView {
  const FeatureMap* image = nullptr;
  const scene::RenderedView* gt = nullptr;
};

struct PairConsistency {
  int a = 0;
  int b = 0;
  std::size_t pixels = 0;
  std::optional<double> error;  // undefined when no pixel is mutually visible
};

struct ConsistencyReport {
  std::vector<PairConsistency> pairs;
  std::optional<double> mean;  // mean over the defined pairs
};

/// For every ordered pair (a, b) and every foreground pixel of a whose
/// surface point is visible in b: mean absolute RGB difference between a's
/// pixel and b's image sampled bilinearly at the exact reprojection. Only
/// positions whose four lattice neighbours in b show the same primitive are
/// used, so GT renders of flat-coloured scenes score exactly zero.
ConsistencyReport reprojection_consistency(const scene::Scene& scene, std::span<const ConsistencyView> views);

/// Fraction of queries whose argmax position lies within k pixels of the
/// ground truth. Queries without an argmax count as misses.
double localization_accuracy(std::span<const attention::SimilarityProbe> probes, std::span<const Vec2> ground_truth,
                             double k);

struct LocalizationReport {
  std::size_t visible_queries = 0;
  std::size_t hits = 0;
  double accuracy() const { return visible_queries ? static_cast<double>(hits) / visible_queries : 0.0; }
};

/// Probes every target feature pixel whose surface point is visible in the
/// reference view and checks the argmax against the GT correspondence.
/// Features live on a grid `stride` times coarser than the renders.
LocalizationReport measure_localization(const scene::Scene& scene, const scene::RenderedView& target,
                                        const scene::RenderedView& reference, const FeatureMap& target_features,
                                        const FeatureMap& reference_features, const attention::AttentionParams& params,
                                        pipeline::InjectionMode mode, double k,
                                        geometry::SampleAxis axis = geometry::SampleAxis::dominant);

struct MetricRow {
  std::string run_id;
  std::string metric;
  std::string view_pair;
  double value = 0.0;  // NaN for undefined
};

/// run_id,metric,view_pair,value; infinities as "inf", undefined as "nan".
std::string metrics_csv(std::span<const MetricRow> rows);

}  // namespace epiview::eval
