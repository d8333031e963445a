#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "epiview/geometry.hpp"
#include "epiview/numerics.hpp"

namespace epiview::attention {

using numerics::FeatureMap;
using numerics::LinearMap;
using numerics::Scalar;

struct AttentionParams {
  LinearMap q_proj;
  LinearMap k_proj;
  LinearMap v_proj;
  LinearMap out_proj;
  int heads = 1;
  int head_dim = 1;

  int model_dim() const { return q_proj.in_dim; }
  int inner_dim() const { return heads * head_dim; }
  void validate() const;
};

/// Deep value copy of a block's parameters.
AttentionParams duplicate_params(const AttentionParams& src);

/// Softmax(Q K^T / sqrt(head_dim)) V per head, heads concatenated. Q, K and V
/// are already projected; no output projection is applied.
FeatureMap scaled_dot_product(const FeatureMap& queries, const FeatureMap& keys, const FeatureMap& values, int heads,
                              int head_dim);

FeatureMap self_attention(const FeatureMap& features, const AttentionParams& params);

/// Reference-branch features consumed by cross-view attention, all on the
/// same grid: projected keys, projected values and the raw block input.
struct ContextFeatures {
  FeatureMap keys;
  FeatureMap values;
  FeatureMap raw;
};

ContextFeatures make_context(const FeatureMap& features, const AttentionParams& params);

enum class ValueSource { value_projection, raw_feature };

struct EpipolarAttentionBlock {
  AttentionParams params;
  Scalar fusion_alpha = 0.5;
  ValueSource value_source = ValueSource::value_projection;
  bool apply_out_proj = true;

  /// Instantiates the block with a copy of a trained self-attention block.
  static EpipolarAttentionBlock from_self_attention(const AttentionParams& src, Scalar alpha = 0.5);
};

/// Output of a cross-view retrieval. Pixels with contributed == 0 carry no
/// reference evidence and their feature row is zero.
struct Retrieval {
  FeatureMap features;
  std::vector<std::uint8_t> contributed;
  /// Elements of the similarity buffer materialised for one head.
  std::size_t similarity_elems = 0;

  std::size_t contributing_pixels() const;
};

Retrieval epipolar_attention(const FeatureMap& target, const ContextFeatures& ctx, const geometry::EpipolarSampleSet& samples,
                             const EpipolarAttentionBlock& block);

/// Bilinear footprints of the usable samples of a sample set on a reference
/// grid. They depend only on geometry, so one set serves every denoising step.
struct SampleFootprints {
  struct Tap {
    std::uint32_t idx[4];
    Scalar w[4];
  };
  int query_width = 0;
  int query_height = 0;
  int ref_width = 0;
  int ref_height = 0;
  std::vector<std::size_t> offsets;  // per query into taps, queries + 1 entries
  std::vector<Tap> taps;
  std::size_t total_samples = 0;  // including masked samples
};

SampleFootprints prepare_footprints(const geometry::EpipolarSampleSet& samples, int ref_width, int ref_height);

Retrieval epipolar_attention(const FeatureMap& target, const ContextFeatures& ctx, const SampleFootprints& footprints,
                             const EpipolarAttentionBlock& block);

/// Baseline that attends every target position to every reference position
/// through an explicit (H W) x (H W) similarity matrix.
Retrieval full_cross_attention(const FeatureMap& target, const ContextFeatures& ctx, const AttentionParams& params,
                               ValueSource value_source = ValueSource::value_projection, bool apply_out_proj = true);

/// F = alpha * F_src + (1 - alpha) * F_hat on contributing pixels, F_hat elsewhere.
FeatureMap fuse(const FeatureMap& f_hat, const Retrieval& src, Scalar alpha);

/// Per-pixel mean over the views that contributed, reduced in the given order.
Retrieval multi_view_aggregate(std::span<const Retrieval> views);

/// Head-averaged attention weights of one query over its candidate positions.
struct SimilarityProbe {
  std::vector<geometry::Sample> positions;
  std::vector<Scalar> weights;
  std::ptrdiff_t argmax = -1;  // lowest index on ties; -1 when nothing is valid
};

SimilarityProbe probe_epipolar(const FeatureMap& target, const ContextFeatures& ctx,
                               const geometry::EpipolarSampleSet& samples, const AttentionParams& params,
                               std::size_t query);

SimilarityProbe probe_full(const FeatureMap& target, const ContextFeatures& ctx, const AttentionParams& params,
                           std::size_t query);

/// Softmax over cosine similarity of raw block features, the matching rule
/// of feature-correspondence methods; kept as a diagnostic comparison.
SimilarityProbe probe_cosine(const FeatureMap& target_raw, const FeatureMap& reference_raw, std::size_t query,
                             Scalar temperature = 0.1);

/// Scatters probe weights onto a W x H grid (bilinear splat), max-normalised to [0, 1].
std::vector<Scalar> similarity_image(const SimilarityProbe& probe, int width, int height);

}  // namespace epiview::attention
