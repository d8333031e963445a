#include "epiview/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace epiview::numerics {

FeatureMap::FeatureMap(int height, int width, int channels, Scalar fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw std::invalid_argument("FeatureMap: negative dimension");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

bool FeatureMap::same_shape(const FeatureMap& other) const {
  return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
}

bool FeatureMap::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
}

LinearMap LinearMap::identity(int dim) {
  LinearMap m = zeros(dim, dim);
  for (int i = 0; i < dim; ++i) m.weight[static_cast<std::size_t>(i) * dim + i] = 1.0;
  return m;
}

LinearMap LinearMap::zeros(int in_dim, int out_dim) {
  LinearMap m;
  m.in_dim = in_dim;
  m.out_dim = out_dim;
  m.weight.assign(static_cast<std::size_t>(in_dim) * out_dim, 0.0);
  return m;
}

void LinearMap::validate() const {
  if (in_dim <= 0 || out_dim <= 0) throw std::invalid_argument("LinearMap: non-positive dimension");
  if (weight.size() != static_cast<std::size_t>(in_dim) * out_dim) {
    throw std::invalid_argument("LinearMap: weight size does not match out x in");
  }
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(out_dim)) {
    throw std::invalid_argument("LinearMap: bias size does not match out dimension");
  }
  auto finite = [](Scalar v) { return std::isfinite(v); };
  if (!std::all_of(weight.begin(), weight.end(), finite) || !std::all_of(bias.begin(), bias.end(), finite)) {
    throw std::invalid_argument("LinearMap: non-finite parameter");
  }
}

void LinearMap::apply(std::span<const Scalar> in, std::span<Scalar> out) const {
  const Scalar* w = weight.data();
  for (int o = 0; o < out_dim; ++o) {
    Scalar acc = bias.empty() ? 0.0 : bias[o];
    const Scalar* row = w + static_cast<std::size_t>(o) * in_dim;
    for (int i = 0; i < in_dim; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

FeatureMap apply_linear(const LinearMap& map, const FeatureMap& fm) {
  map.validate();
  if (map.in_dim != fm.channels()) {
    throw std::invalid_argument("apply_linear: map expects " + std::to_string(map.in_dim) + " channels, feature map has " +
                                std::to_string(fm.channels()));
  }
  FeatureMap out(fm.height(), fm.width(), map.out_dim);
  for (std::size_t p = 0; p < fm.pixels(); ++p) map.apply(fm.pixel(p), out.pixel(p));
  return out;
}

bool bilinear_sample(const FeatureMap& fm, Scalar u, Scalar v, std::span<Scalar> out) {
  const int w = fm.width();
  const int h = fm.height();
  if (!(u >= 0.0 && v >= 0.0 && u <= w - 1 && v <= h - 1)) return false;

  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const Scalar fx = u - x0;
  const Scalar fy = v - y0;
  // On the last row/column the far neighbour has zero weight.
  const int x1 = fx > 0.0 ? x0 + 1 : x0;
  const int y1 = fy > 0.0 ? y0 + 1 : y0;

  const auto p00 = fm.pixel(y0, x0);
  const auto p01 = fm.pixel(y0, x1);
  const auto p10 = fm.pixel(y1, x0);
  const auto p11 = fm.pixel(y1, x1);
  const Scalar w00 = (1.0 - fx) * (1.0 - fy);
  const Scalar w01 = fx * (1.0 - fy);
  const Scalar w10 = (1.0 - fx) * fy;
  const Scalar w11 = fx * fy;
  for (int c = 0; c < fm.channels(); ++c) {
    out[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
  }
  return true;
}

std::optional<std::vector<Scalar>> bilinear_sample(const FeatureMap& fm, Scalar u, Scalar v) {
  std::vector<Scalar> out(fm.channels());
  if (!bilinear_sample(fm, u, v, out)) return std::nullopt;
  return out;
}

bool masked_softmax_inplace(std::span<Scalar> logits, std::span<const std::uint8_t> mask, Scalar scale) {
  if (mask.size() != logits.size()) throw std::invalid_argument("masked_softmax: mask length differs from logits");
  Scalar max_logit = -std::numeric_limits<Scalar>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    max_logit = std::max(max_logit, scale * logits[i]);
    any = true;
  }
  if (!any) {
    std::fill(logits.begin(), logits.end(), 0.0);
    return false;
  }
  Scalar total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) {
      logits[i] = std::exp(scale * logits[i] - max_logit);
      total += logits[i];
    } else {
      logits[i] = 0.0;
    }
  }
  for (auto& w : logits) w /= total;
  return true;
}

void softmax_inplace(std::span<Scalar> logits, Scalar scale) {
  if (logits.empty()) return;
  Scalar max_logit = -std::numeric_limits<Scalar>::infinity();
  for (Scalar l : logits) max_logit = std::max(max_logit, scale * l);
  Scalar total = 0.0;
  for (auto& l : logits) {
    l = std::exp(scale * l - max_logit);
    total += l;
  }
  for (auto& l : logits) l /= total;
}

SoftmaxResult masked_softmax(std::span<const Scalar> logits, std::span<const std::uint8_t> mask, Scalar scale) {
  SoftmaxResult r;
  r.weights.assign(logits.begin(), logits.end());
  r.empty = !masked_softmax_inplace(r.weights, mask, scale);
  return r;
}

FeatureMap random_normal(int height, int width, int channels, Rng& rng, Scalar stddev) {
  FeatureMap fm(height, width, channels);
  std::normal_distribution<Scalar> dist(0.0, stddev);
  for (auto& v : fm.data()) v = dist(rng);
  return fm;
}

FeatureMap random_uniform(int height, int width, int channels, Rng& rng, Scalar lo, Scalar hi) {
  FeatureMap fm(height, width, channels);
  std::uniform_real_distribution<Scalar> dist(lo, hi);
  for (auto& v : fm.data()) v = dist(rng);
  return fm;
}

LinearMap random_linear(int in_dim, int out_dim, Rng& rng, bool with_bias) {
  LinearMap m = LinearMap::zeros(in_dim, out_dim);
  const Scalar bound = 1.0 / std::sqrt(static_cast<Scalar>(in_dim));
  std::uniform_real_distribution<Scalar> dist(-bound, bound);
  for (auto& w : m.weight) w = dist(rng);
  if (with_bias) {
    m.bias.resize(out_dim);
    for (auto& b : m.bias) b = dist(rng);
  }
  return m;
}

}  // namespace epiview::numerics
