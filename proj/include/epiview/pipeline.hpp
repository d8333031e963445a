#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epiview/attention.hpp"
#include "epiview/diffusion.hpp"
#include "epiview/geometry.hpp"

namespace epiview::pipeline {

using diffusion::Denoiser;
using diffusion::NoiseSchedule;
using geometry::CameraIntrinsics;
using geometry::SphericalCamera;
using numerics::FeatureMap;

enum class InjectionMode { epipolar, full, off };

InjectionMode parse_injection_mode(const std::string& s);
std::string to_string(InjectionMode m);
geometry::SampleAxis parse_sample_axis(const std::string& s);
std::string to_string(geometry::SampleAxis a);
attention::ValueSource parse_value_source(const std::string& s);
std::string to_string(attention::ValueSource v);

struct GenerationConfig {
  double alpha = 0.5;
  int context_views = 2;     // M
  int inject_after_step = 4; // iterations counted from the noise end
  // Empty means every attention layer of the backend.
  std::vector<std::string> inject_layers;
  InjectionMode mode = InjectionMode::epipolar;
  geometry::SampleAxis sample_axis = geometry::SampleAxis::dominant;
  attention::ValueSource value_source = attention::ValueSource::value_projection;
  bool apply_out_proj = true;
  std::uint64_t seed = 0;

  void validate() const;
};

class CacheMiss : public std::runtime_error {
 public:
  CacheMiss(int iteration, int timestep, const std::string& layer);
  int iteration;
  int timestep;
  std::string layer;
};

/// Per-view features at the injected (timestep, layer) pairs: projected keys,
/// projected values (only with the value-projection source) and raw block input.
class FeatureCache {
 public:
  using Key = std::pair<int, std::string>;

  void insert(int timestep, const std::string& layer, attention::ContextFeatures features);
  bool contains(int timestep, const std::string& layer) const { return entries_.contains({timestep, layer}); }
  /// Throws CacheMiss; `iteration` is only used for the message.
  const attention::ContextFeatures& at(int timestep, const std::string& layer, int iteration = -1) const;
  std::size_t size() const { return entries_.size(); }
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  const std::map<Key, attention::ContextFeatures>& entries() const { return entries_; }

 private:
  std::map<Key, attention::ContextFeatures> entries_;
  bool frozen_ = false;
};

struct ViewStats {
  std::int64_t wall_ns = 0;
  std::size_t injections = 0;          // (step, layer) sites where retrieval ran
  std::size_t similarity_peak = 0;     // largest single similarity buffer
  std::size_t similarity_total = 0;
};

inline constexpr int kInputView = -1;

/// Input view first, then up to M previously generated views by increasing
/// great-circle distance to the target; ties go to the earlier view.
std::vector<int> select_context_views(const SphericalCamera& target, std::span<const SphericalCamera> generated, int M);

struct ReferenceBranch {
  FeatureMap image;  // reconstruction of the input
  FeatureCache cache;
  ViewStats stats;
};

struct GeneratedView {
  SphericalCamera camera;
  FeatureMap image;
  FeatureCache cache;
  std::vector<int> context;  // kInputView or indices into earlier views
  ViewStats stats;
};

struct TrajectoryRun {
  FeatureMap x_R;
  ReferenceBranch reference;
  std::vector<GeneratedView> views;
  std::int64_t invert_ns = 0;
};

class Pipeline {
 public:
  Pipeline(const Denoiser& denoiser, NoiseSchedule sched, CameraIntrinsics K, GenerationConfig config);

  const GenerationConfig& config() const { return config_; }
  const NoiseSchedule& schedule() const { return sched_; }
  const std::vector<std::string>& layers() const { return layers_; }
  bool injects(int iteration, const std::string& layer) const;

  /// Deterministic DDIM inversion of the input under the zero-pose condition.
  FeatureMap invert_input(const FeatureMap& input) const;

  /// Reconstructs the input from x^R and records its features. Never injected.
  ReferenceBranch run_reference_branch(const FeatureMap& x_R, const FeatureMap& input) const;

  GeneratedView synthesize_view(const SphericalCamera& target, const FeatureMap& input, const SphericalCamera& input_camera,
                                const FeatureMap& x_R, const ReferenceBranch& reference,
                                std::span<const GeneratedView> previous) const;

  TrajectoryRun synthesize_trajectory(const FeatureMap& input, const SphericalCamera& input_camera,
                                      std::span<const SphericalCamera> poses) const;

 private:
  const Denoiser& denoiser_;
  NoiseSchedule sched_;
  CameraIntrinsics K_;
  GenerationConfig config_;
  std::vector<std::string> layers_;
};

}  // namespace epiview::pipeline
