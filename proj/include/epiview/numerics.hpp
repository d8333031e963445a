#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace epiview::numerics {

using Scalar = double;

/// Dense H x W x C grid of scalars, row-major with channels innermost.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int height, int width, int channels, Scalar fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }
  bool same_shape(const FeatureMap& other) const;

  Scalar& at(int y, int x, int c) { return data_[index(y, x) + c]; }
  Scalar at(int y, int x, int c) const { return data_[index(y, x) + c]; }

  std::span<Scalar> pixel(int y, int x) { return {data_.data() + index(y, x), static_cast<std::size_t>(channels_)}; }
  std::span<const Scalar> pixel(int y, int x) const {
    return {data_.data() + index(y, x), static_cast<std::size_t>(channels_)};
  }
  // Pixel by flat index p = y * width + x.
  std::span<Scalar> pixel(std::size_t p) { return {data_.data() + p * channels_, static_cast<std::size_t>(channels_)}; }
  std::span<const Scalar> pixel(std::size_t p) const {
    return {data_.data() + p * channels_, static_cast<std::size_t>(channels_)};
  }

  std::span<Scalar> data() { return data_; }
  std::span<const Scalar> data() const { return data_; }

  bool all_finite() const;

 private:
  std::size_t index(int y, int x) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<Scalar> data_;
};

/// Affine map y = W x + b applied per pixel. Weight is out x in, row-major.
struct LinearMap {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<Scalar> weight;
  std::vector<Scalar> bias;  // empty means no bias

  static LinearMap identity(int dim);
  static LinearMap zeros(int in_dim, int out_dim);

  void validate() const;
  void apply(std::span<const Scalar> in, std::span<Scalar> out) const;
};

FeatureMap apply_linear(const LinearMap& map, const FeatureMap& fm);

/// Bilinear blend of the four lattice neighbours of (u, v), where u is the
/// column and v the row coordinate. Returns false (and leaves out untouched)
/// when (u, v) lies outside [0, W-1] x [0, H-1]; out-of-grid samples are never
/// clamped.
bool bilinear_sample(const FeatureMap& fm, Scalar u, Scalar v, std::span<Scalar> out);
std::optional<std::vector<Scalar>> bilinear_sample(const FeatureMap& fm, Scalar u, Scalar v);

struct SoftmaxResult {
  std::vector<Scalar> weights;
  bool empty = false;
};

/// softmax(scale * logits) restricted to entries with mask != 0. Masked
/// entries get weight zero. With no valid entry every weight is zero and
/// `empty` is set.
SoftmaxResult masked_softmax(std::span<const Scalar> logits, std::span<const std::uint8_t> mask, Scalar scale);

/// In-place variant used by the attention kernels. Returns false when every
/// entry is masked.
bool masked_softmax_inplace(std::span<Scalar> logits, std::span<const std::uint8_t> mask, Scalar scale);

/// Plain softmax(scale * logits) in place.
void softmax_inplace(std::span<Scalar> logits, Scalar scale);

/// The single seeded generator type used across a run.
using Rng = std::mt19937_64;

FeatureMap random_normal(int height, int width, int channels, Rng& rng, Scalar stddev = 1.0);
FeatureMap random_uniform(int height, int width, int channels, Rng& rng, Scalar lo = 0.0, Scalar hi = 1.0);
LinearMap random_linear(int in_dim, int out_dim, Rng& rng, bool with_bias = true);

}  // namespace epiview::numerics
