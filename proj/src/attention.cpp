#include "epiview/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace epiview::attention {

namespace {

void require_same_grid(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument(std::string(what) + ": resolution mismatch (" + std::to_string(a.width()) + "x" +
                                std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                                std::to_string(b.height()) + ")");
  }
}

Scalar dot(const Scalar* a, const Scalar* b, int n) {
  Scalar acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

const FeatureMap& value_map(const ContextFeatures& ctx, ValueSource source) {
  return source == ValueSource::value_projection ? ctx.values : ctx.raw;
}

// Bilinear taps of (u, v); false outside [0, W-1] x [0, H-1]. Mirrors
// numerics::bilinear_sample so keys and values share one weight computation.
struct Taps {
  std::size_t idx[4];
  Scalar w[4];
};

bool bilinear_taps(const FeatureMap& fm, Scalar u, Scalar v, Taps& t) {
  const int w = fm.width();
  const int h = fm.height();
  if (!(u >= 0.0 && v >= 0.0 && u <= w - 1 && v <= h - 1)) return false;
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const Scalar fx = u - x0;
  const Scalar fy = v - y0;
  const int x1 = fx > 0.0 ? x0 + 1 : x0;
  const int y1 = fy > 0.0 ? y0 + 1 : y0;
  t.idx[0] = static_cast<std::size_t>(y0) * w + x0;
  t.idx[1] = static_cast<std::size_t>(y0) * w + x1;
  t.idx[2] = static_cast<std::size_t>(y1) * w + x0;
  t.idx[3] = static_cast<std::size_t>(y1) * w + x1;
  t.w[0] = (1.0 - fx) * (1.0 - fy);
  t.w[1] = fx * (1.0 - fy);
  t.w[2] = (1.0 - fx) * fy;
  t.w[3] = fx * fy;
  return true;
}

void blend(const FeatureMap& fm, const Taps& t, Scalar* out) {
  const int c = fm.channels();
  const Scalar* p0 = fm.pixel(t.idx[0]).data();
  const Scalar* p1 = fm.pixel(t.idx[1]).data();
  const Scalar* p2 = fm.pixel(t.idx[2]).data();
  const Scalar* p3 = fm.pixel(t.idx[3]).data();
  for (int k = 0; k < c; ++k) out[k] = t.w[0] * p0[k] + t.w[1] * p1[k] + t.w[2] * p2[k] + t.w[3] * p3[k];
}

// Gathers bilinear keys (and values) at the usable candidate positions of one
// query, compacted; `used` receives their indices into `positions`.
std::size_t gather(const FeatureMap& keys, const FeatureMap* values, std::span<const geometry::Sample> positions,
                   std::vector<Scalar>& key_buf, std::vector<Scalar>* value_buf, std::vector<std::size_t>& used) {
  const int kc = keys.channels();
  const int vc = values ? values->channels() : 0;
  key_buf.resize(positions.size() * kc);
  if (value_buf) value_buf->resize(positions.size() * vc);
  used.clear();
  Taps taps;
  for (std::size_t j = 0; j < positions.size(); ++j) {
    const auto& s = positions[j];
    if (!s.valid || !bilinear_taps(keys, s.u, s.v, taps)) continue;
    const std::size_t n = used.size();
    blend(keys, taps, key_buf.data() + n * kc);
    if (value_buf) blend(*values, taps, value_buf->data() + n * vc);
    used.push_back(j);
  }
  return used.size();
}

SimilarityProbe probe_positions(const FeatureMap& target, const ContextFeatures& ctx,
                                std::span<const geometry::Sample> positions, const AttentionParams& params,
                                std::size_t query) {
  params.validate();
  if (query >= target.pixels()) throw std::out_of_range("probe: query index out of range");
  require_same_grid(target, ctx.keys, "probe");
  std::vector<Scalar> q(params.inner_dim());
  params.q_proj.apply(target.pixel(query), q);

  SimilarityProbe probe;
  probe.positions.assign(positions.begin(), positions.end());
  probe.weights.assign(positions.size(), 0.0);

  std::vector<Scalar> keys;
  std::vector<std::size_t> used;
  const std::size_t n = gather(ctx.keys, nullptr, positions, keys, nullptr, used);
  if (n == 0) return probe;

  const int d = params.head_dim;
  const int inner = params.inner_dim();
  std::vector<Scalar> logits(n);
  for (int h = 0; h < params.heads; ++h) {
    for (std::size_t j = 0; j < n; ++j) logits[j] = dot(q.data() + h * d, keys.data() + j * inner + h * d, d);
    numerics::softmax_inplace(logits, 1.0 / std::sqrt(static_cast<Scalar>(d)));
    for (std::size_t j = 0; j < n; ++j) probe.weights[used[j]] += logits[j] / params.heads;
  }
  for (std::size_t j : used) {
    if (probe.argmax < 0 || probe.weights[j] > probe.weights[probe.argmax]) probe.argmax = static_cast<std::ptrdiff_t>(j);
  }
  return probe;
}

std::vector<geometry::Sample> all_positions(int width, int height) {
  std::vector<geometry::Sample> out;
  out.reserve(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.push_back({static_cast<double>(x), static_cast<double>(y), true});
  }
  return out;
}

}  // namespace

void AttentionParams::validate() const {
  if (heads <= 0 || head_dim <= 0) throw std::invalid_argument("AttentionParams: heads and head_dim must be positive");
  q_proj.validate();
  k_proj.validate();
  v_proj.validate();
  out_proj.validate();
  const int inner = inner_dim();
  if (q_proj.out_dim != inner || k_proj.out_dim != inner || v_proj.out_dim != inner) {
    throw std::invalid_argument("AttentionParams: projection width must equal heads * head_dim");
  }
  if (k_proj.in_dim != q_proj.in_dim || v_proj.in_dim != q_proj.in_dim) {
    throw std::invalid_argument("AttentionParams: q/k/v input widths differ");
  }
  if (out_proj.in_dim != inner) throw std::invalid_argument("AttentionParams: out_proj input must be heads * head_dim");
}

AttentionParams duplicate_params(const AttentionParams& src) {
  AttentionParams copy = src;
  return copy;
}

FeatureMap scaled_dot_product(const FeatureMap& queries, const FeatureMap& keys, const FeatureMap& values, int heads,
                              int head_dim) {
  const int inner = heads * head_dim;
  if (queries.channels() != inner || keys.channels() != inner || values.channels() != inner) {
    throw std::invalid_argument("scaled_dot_product: channel count must equal heads * head_dim");
  }
  if (keys.pixels() != values.pixels()) throw std::invalid_argument("scaled_dot_product: keys and values differ in size");
  const std::size_t n = queries.pixels();
  const std::size_t m = keys.pixels();
  const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(head_dim));
  FeatureMap out(queries.height(), queries.width(), inner);
  std::vector<Scalar> logits(m);
  const std::vector<std::uint8_t> mask(m, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar* q = queries.pixel(i).data();
    Scalar* o = out.pixel(i).data();
    for (int h = 0; h < heads; ++h) {
      const int off = h * head_dim;
      for (std::size_t j = 0; j < m; ++j) logits[j] = dot(q + off, keys.pixel(j).data() + off, head_dim);
      numerics::masked_softmax_inplace(logits, mask, scale);
      for (std::size_t j = 0; j < m; ++j) {
        const Scalar* v = values.pixel(j).data() + off;
        for (int c = 0; c < head_dim; ++c) o[off + c] += logits[j] * v[c];
      }
    }
  }
  return out;
}

FeatureMap self_attention(const FeatureMap& features, const AttentionParams& params) {
  params.validate();
  const FeatureMap q = numerics::apply_linear(params.q_proj, features);
  const FeatureMap k = numerics::apply_linear(params.k_proj, features);
  const FeatureMap v = numerics::apply_linear(params.v_proj, features);
  return numerics::apply_linear(params.out_proj, scaled_dot_product(q, k, v, params.heads, params.head_dim));
}

ContextFeatures make_context(const FeatureMap& features, const AttentionParams& params) {
  params.validate();
  return {numerics::apply_linear(params.k_proj, features), numerics::apply_linear(params.v_proj, features), features};
}

EpipolarAttentionBlock EpipolarAttentionBlock::from_self_attention(const AttentionParams& src, Scalar alpha) {
  EpipolarAttentionBlock block;
  block.params = duplicate_params(src);
  block.fusion_alpha = alpha;
  return block;
}

std::size_t Retrieval::contributing_pixels() const {
  return static_cast<std::size_t>(std::count(contributed.begin(), contributed.end(), std::uint8_t{1}));
}

SampleFootprints prepare_footprints(const geometry::EpipolarSampleSet& samples, int ref_width, int ref_height) {
  if (ref_width <= 0 || ref_height <= 0) throw std::invalid_argument("prepare_footprints: empty reference grid");
  SampleFootprints fp;
  fp.query_width = samples.width();
  fp.query_height = samples.height();
  fp.ref_width = ref_width;
  fp.ref_height = ref_height;
  fp.total_samples = samples.total_samples();
  fp.offsets.reserve(samples.queries() + 1);
  fp.offsets.push_back(0);
  const FeatureMap shape(ref_height, ref_width, 0);
  Taps t;
  for (std::size_t q = 0; q < samples.queries(); ++q) {
    for (const auto& s : samples.query(q)) {
      if (!s.valid || !bilinear_taps(shape, s.u, s.v, t)) continue;
      SampleFootprints::Tap tap;
      for (int k = 0; k < 4; ++k) {
        tap.idx[k] = static_cast<std::uint32_t>(t.idx[k]);
        tap.w[k] = t.w[k];
      }
      fp.taps.push_back(tap);
    }
    fp.offsets.push_back(fp.taps.size());
  }
  return fp;
}

Retrieval epipolar_attention(const FeatureMap& target, const ContextFeatures& ctx, const geometry::EpipolarSampleSet& samples,
                             const EpipolarAttentionBlock& block) {
  if (samples.width() != target.width() || samples.height() != target.height() || samples.queries() != target.pixels()) {
    throw std::invalid_argument("epipolar_attention: sample set does not match the target grid");
  }
  return epipolar_attention(target, ctx, prepare_footprints(samples, ctx.keys.width(), ctx.keys.height()), block);
}

Retrieval epipolar_attention(const FeatureMap& target, const ContextFeatures& ctx, const SampleFootprints& fp,
                             const EpipolarAttentionBlock& block) {
  const AttentionParams& params = block.params;
  params.validate();
  require_same_grid(target, ctx.keys, "epipolar_attention");
  require_same_grid(ctx.keys, ctx.raw, "epipolar_attention");
  if (fp.query_width != target.width() || fp.query_height != target.height() ||
      fp.offsets.size() != target.pixels() + 1) {
    throw std::invalid_argument("epipolar_attention: sample set does not match the target grid");
  }
  if (fp.ref_width != ctx.keys.width() || fp.ref_height != ctx.keys.height()) {
    throw std::invalid_argument("epipolar_attention: footprints were prepared for another reference grid");
  }
  const FeatureMap& values = value_map(ctx, block.value_source);
  require_same_grid(ctx.keys, values, "epipolar_attention");
  const int inner = params.inner_dim();
  if (ctx.keys.channels() != inner || values.channels() != inner) {
    throw std::invalid_argument("epipolar_attention: context channels must equal heads * head_dim");
  }

  const FeatureMap q = numerics::apply_linear(params.q_proj, target);
  const int d = params.head_dim;
  const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(d));
  const int out_channels = block.apply_out_proj ? params.out_proj.out_dim : inner;

  Retrieval r;
  r.features = FeatureMap(target.height(), target.width(), out_channels);
  r.contributed.assign(target.pixels(), 0);
  // One head's worth of query x sample similarities, reused across heads.
  // Masked samples keep their slot; usable ones are packed at its front.
  std::vector<Scalar> similarity(fp.total_samples);
  r.similarity_elems = similarity.size();

  const Scalar* kdata = ctx.keys.data().data();
  const Scalar* vdata = values.data().data();
  std::vector<Scalar> keys;
  std::vector<Scalar> vals;
  std::vector<Scalar> mixed(inner);
  for (std::size_t p = 0; p < target.pixels(); ++p) {
    const std::size_t begin = fp.offsets[p];
    const std::size_t n = fp.offsets[p + 1] - begin;
    if (n == 0) continue;
    keys.resize(n * inner);
    vals.resize(n * inner);
    for (std::size_t j = 0; j < n; ++j) {
      const auto& t = fp.taps[begin + j];
      Scalar* ko = keys.data() + j * inner;
      Scalar* vo = vals.data() + j * inner;
      const std::size_t i0 = t.idx[0] * inner, i1 = t.idx[1] * inner, i2 = t.idx[2] * inner, i3 = t.idx[3] * inner;
      for (int c = 0; c < inner; ++c) {
        ko[c] = t.w[0] * kdata[i0 + c] + t.w[1] * kdata[i1 + c] + t.w[2] * kdata[i2 + c] + t.w[3] * kdata[i3 + c];
        vo[c] = t.w[0] * vdata[i0 + c] + t.w[1] * vdata[i1 + c] + t.w[2] * vdata[i2 + c] + t.w[3] * vdata[i3 + c];
      }
    }
    std::span<Scalar> logits(similarity.data() + begin, n);

    std::fill(mixed.begin(), mixed.end(), 0.0);
    const Scalar* qp = q.pixel(p).data();
    for (int h = 0; h < params.heads; ++h) {
      const int off = h * d;
      for (std::size_t j = 0; j < n; ++j) logits[j] = dot(qp + off, keys.data() + j * inner + off, d);
      numerics::softmax_inplace(logits, scale);
      for (std::size_t j = 0; j < n; ++j) {
        const Scalar* v = vals.data() + j * inner + off;
        for (int c = 0; c < d; ++c) mixed[off + c] += logits[j] * v[c];
      }
    }
    if (block.apply_out_proj) {
      params.out_proj.apply(mixed, r.features.pixel(p));
    } else {
      std::copy(mixed.begin(), mixed.end(), r.features.pixel(p).begin());
    }
    r.contributed[p] = 1;
  }
  return r;
}

Retrieval full_cross_attention(const FeatureMap& target, const ContextFeatures& ctx, const AttentionParams& params,
                               ValueSource value_source, bool apply_out_proj) {
  params.validate();
  const FeatureMap& values = value_map(ctx, value_source);
  require_same_grid(target, ctx.keys, "full_cross_attention");
  require_same_grid(ctx.keys, values, "full_cross_attention");
  const int inner = params.inner_dim();
  if (ctx.keys.channels() != inner || values.channels() != inner) {
    throw std::invalid_argument("full_cross_attention: context channels must equal heads * head_dim");
  }

  const FeatureMap q = numerics::apply_linear(params.q_proj, target);
  const std::size_t n = q.pixels();
  const std::size_t m = ctx.keys.pixels();
  const int d = params.head_dim;
  const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(d));

  FeatureMap mixed(target.height(), target.width(), inner);
  std::vector<Scalar> similarity(n * m);
  const std::vector<std::uint8_t> mask(m, 1);
  for (int h = 0; h < params.heads; ++h) {
    const int off = h * d;
    for (std::size_t i = 0; i < n; ++i) {
      const Scalar* qi = q.pixel(i).data() + off;
      Scalar* row = similarity.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) row[j] = dot(qi, ctx.keys.pixel(j).data() + off, d);
      numerics::masked_softmax_inplace(std::span<Scalar>(row, m), mask, scale);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Scalar* row = similarity.data() + i * m;
      Scalar* o = mixed.pixel(i).data() + off;
      for (std::size_t j = 0; j < m; ++j) {
        const Scalar* v = values.pixel(j).data() + off;
        for (int c = 0; c < d; ++c) o[c] += row[j] * v[c];
      }
    }
  }

  Retrieval r;
  r.features = apply_out_proj ? numerics::apply_linear(params.out_proj, mixed) : std::move(mixed);
  r.contributed.assign(n, 1);
  r.similarity_elems = similarity.size();
  return r;
}

FeatureMap fuse(const FeatureMap& f_hat, const Retrieval& src, Scalar alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("fuse: alpha must lie in [0, 1]");
  if (!f_hat.same_shape(src.features) || src.contributed.size() != f_hat.pixels()) {
    throw std::invalid_argument("fuse: shape mismatch between block output and retrieved features");
  }
  FeatureMap out = f_hat;
  for (std::size_t p = 0; p < out.pixels(); ++p) {
    if (!src.contributed[p]) continue;
    auto o = out.pixel(p);
    const auto s = src.features.pixel(p);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] = alpha * s[c] + (1.0 - alpha) * o[c];
  }
  return out;
}

Retrieval multi_view_aggregate(std::span<const Retrieval> views) {
  if (views.empty()) throw std::invalid_argument("multi_view_aggregate: no context views");
  const FeatureMap& first = views.front().features;
  Retrieval agg;
  agg.features = FeatureMap(first.height(), first.width(), first.channels());
  agg.contributed.assign(first.pixels(), 0);
  std::vector<int> counts(first.pixels(), 0);
  for (const auto& v : views) {
    if (!v.features.same_shape(first) || v.contributed.size() != first.pixels()) {
      throw std::invalid_argument("multi_view_aggregate: views differ in shape");
    }
    agg.similarity_elems += v.similarity_elems;
    for (std::size_t p = 0; p < first.pixels(); ++p) {
      if (!v.contributed[p]) continue;
      auto o = agg.features.pixel(p);
      const auto s = v.features.pixel(p);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += s[c];
      ++counts[p];
    }
  }
  for (std::size_t p = 0; p < first.pixels(); ++p) {
    if (counts[p] == 0) continue;
    agg.contributed[p] = 1;
    for (auto& c : agg.features.pixel(p)) c /= counts[p];
  }
  return agg;
}

SimilarityProbe probe_epipolar(const FeatureMap& target, const ContextFeatures& ctx,
                               const geometry::EpipolarSampleSet& samples, const AttentionParams& params,
                               std::size_t query) {
  if (query >= samples.queries()) throw std::out_of_range("probe_epipolar: query index out of range");
  return probe_positions(target, ctx, samples.query(query), params, query);
}

SimilarityProbe probe_full(const FeatureMap& target, const ContextFeatures& ctx, const AttentionParams& params,
                           std::size_t query) {
  const auto positions = all_positions(ctx.keys.width(), ctx.keys.height());
  return probe_positions(target, ctx, positions, params, query);
}

SimilarityProbe probe_cosine(const FeatureMap& target_raw, const FeatureMap& reference_raw, std::size_t query,
                             Scalar temperature) {
  require_same_grid(target_raw, reference_raw, "probe_cosine");
  if (query >= target_raw.pixels()) throw std::out_of_range("probe_cosine: query index out of range");
  SimilarityProbe probe;
  probe.positions = all_positions(reference_raw.width(), reference_raw.height());
  const auto q = target_raw.pixel(query);
  const int c = target_raw.channels();
  const Scalar qn = std::sqrt(dot(q.data(), q.data(), c));
  probe.weights.resize(probe.positions.size());
  for (std::size_t j = 0; j < probe.positions.size(); ++j) {
    const auto k = reference_raw.pixel(j);
    const Scalar kn = std::sqrt(dot(k.data(), k.data(), c));
    probe.weights[j] = (qn > 0 && kn > 0) ? dot(q.data(), k.data(), c) / (qn * kn) : 0.0;
  }
  const std::vector<std::uint8_t> mask(probe.weights.size(), 1);
  numerics::masked_softmax_inplace(probe.weights, mask, 1.0 / temperature);
  probe.argmax = std::distance(probe.weights.begin(), std::max_element(probe.weights.begin(), probe.weights.end()));
  return probe;
}

std::vector<Scalar> similarity_image(const SimilarityProbe& probe, int width, int height) {
  std::vector<Scalar> img(static_cast<std::size_t>(width) * height, 0.0);
  for (std::size_t j = 0; j < probe.positions.size(); ++j) {
    const auto& s = probe.positions[j];
    if (!s.valid || probe.weights[j] == 0.0) continue;
    const int x0 = static_cast<int>(std::floor(s.u));
    const int y0 = static_cast<int>(std::floor(s.v));
    const Scalar fx = s.u - x0;
    const Scalar fy = s.v - y0;
    const Scalar ws[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int k = 0; k < 4; ++k) {
      if (xs[k] < 0 || ys[k] < 0 || xs[k] >= width || ys[k] >= height || ws[k] == 0.0) continue;
      img[static_cast<std::size_t>(ys[k]) * width + xs[k]] += ws[k] * probe.weights[j];
    }
  }
  const Scalar peak = *std::max_element(img.begin(), img.end());
  if (peak > 0) {
    for (auto& v : img) v /= peak;
  }
  return img;
}

}  // namespace epiview::attention
