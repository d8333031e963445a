#include "epiview/eval.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace epiview::eval {

namespace {

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": image shapes differ");
  if (a.empty()) throw std::invalid_argument(std::string(what) + ": empty image");
}

// (H+1) x (W+1) summed-area table of f(a, b) for one channel.
template <class F>
std::vector<double> integral(const FeatureMap& a, const FeatureMap& b, int c, F f) {
  const int h = a.height();
  const int w = a.width();
  std::vector<double> s(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += f(a.at(y, x, c), b.at(y, x, c));
      s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
    }
  }
  return s;
}

double box(const std::vector<double>& s, int w, int y, int x, int n) {
  const int stride = w + 1;
  return s[(y + n) * stride + x + n] - s[y * stride + x + n] - s[(y + n) * stride + x] + s[y * stride + x];
}

geometry::Vec2 to_feature(const geometry::Vec2& image_px, double stride) {
  return (image_px.array() + 0.5) / stride - 0.5;
}

}  // namespace

double psnr(const FeatureMap& a, const FeatureMap& b) {
  require_same_shape(a, b, "psnr");
  const auto x = a.data();
  const auto y = b.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += (x[i] - y[i]) * (x[i] - y[i]);
  if (sum == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / (sum / static_cast<double>(x.size())));
}

double ssim(const FeatureMap& a, const FeatureMap& b, int window) {
  require_same_shape(a, b, "ssim");
  if (window < 1 || a.height() < window || a.width() < window) {
    throw std::invalid_argument("ssim: image smaller than the " + std::to_string(window) + "x" + std::to_string(window) +
                                " window");
  }
  const int h = a.height();
  const int w = a.width();
  const double n = static_cast<double>(window) * window;
  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < a.channels(); ++c) {
    const auto sa = integral(a, b, c, [](double p, double) { return p; });
    const auto sb = integral(a, b, c, [](double, double q) { return q; });
    const auto saa = integral(a, b, c, [](double p, double) { return p * p; });
    const auto sbb = integral(a, b, c, [](double, double q) { return q * q; });
    const auto sab = integral(a, b, c, [](double p, double q) { return p * q; });
    for (int y = 0; y + window <= h; ++y) {
      for (int x = 0; x + window <= w; ++x) {
        const double mu_a = box(sa, w, y, x, window) / n;
        const double mu_b = box(sb, w, y, x, window) / n;
        const double var_a = box(saa, w, y, x, window) / n - mu_a * mu_a;
        const double var_b = box(sbb, w, y, x, window) / n - mu_b * mu_b;
        const double cov = box(sab, w, y, x, window) / n - mu_a * mu_b;
        total += ((2 * mu_a * mu_b + kSsimC1) * (2 * cov + kSsimC2)) /
                 ((mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

ConsistencyReport reprojection_consistency(const scene::Scene& scene, std::span<const ConsistencyView> views) {
  for (const auto& v : views) {
    if (!v.image || !v.gt) throw std::invalid_argument("reprojection_consistency: incomplete view");
    if (v.image->height() != v.gt->height() || v.image->width() != v.gt->width() || v.image->channels() != 3) {
      throw std::invalid_argument("reprojection_consistency: image does not match its GT render");
    }
  }
  ConsistencyReport report;
  double sum_pairs = 0.0;
  std::size_t defined = 0;
  std::vector<double> sampled(3);
  for (std::size_t ia = 0; ia < views.size(); ++ia) {
    for (std::size_t ib = 0; ib < views.size(); ++ib) {
      if (ia == ib) continue;
      const auto& a = views[ia];
      const auto& b = views[ib];
      PairConsistency pair;
      pair.a = static_cast<int>(ia);
      pair.b = static_cast<int>(ib);
      double err = 0.0;
      for (int y = 0; y < a.gt->height(); ++y) {
        for (int x = 0; x < a.gt->width(); ++x) {
          const int prim = a.gt->primitive_at(x, y);
          if (prim < 0) continue;
          const auto corr = scene::gt_correspondence(scene, *a.gt, *b.gt, Vec2(x, y));
          if (corr.status != scene::Visibility::visible) continue;
          const double u = corr.pixel.x();
          const double v = corr.pixel.y();
          if (u < 0 || v < 0 || u > b.gt->width() - 1 || v > b.gt->height() - 1) continue;
          const int x0 = static_cast<int>(std::floor(u));
          const int y0 = static_cast<int>(std::floor(v));
          const int x1 = std::min(x0 + 1, b.gt->width() - 1);
          const int y1 = std::min(y0 + 1, b.gt->height() - 1);
          if (b.gt->primitive_at(x0, y0) != prim || b.gt->primitive_at(x1, y0) != prim ||
              b.gt->primitive_at(x0, y1) != prim || b.gt->primitive_at(x1, y1) != prim) {
            continue;
          }
          if (!numerics::bilinear_sample(*b.image, u, v, sampled)) continue;
          const auto pa = a.image->pixel(y, x);
          double d = 0.0;
          for (int c = 0; c < 3; ++c) d += std::abs(pa[c] - sampled[c]);
          err += d / 3.0;
          ++pair.pixels;
        }
      }
      if (pair.pixels) {
        pair.error = err / static_cast<double>(pair.pixels);
        sum_pairs += *pair.error;
        ++defined;
      }
      report.pairs.push_back(pair);
    }
  }
  if (defined) report.mean = sum_pairs / static_cast<double>(defined);
  return report;
}

double localization_accuracy(std::span<const attention::SimilarityProbe> probes, std::span<const Vec2> ground_truth,
                             double k) {
  if (probes.size() != ground_truth.size()) throw std::invalid_argument("localization_accuracy: size mismatch");
  if (probes.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& p = probes[i];
    if (p.argmax < 0) continue;
    const auto& s = p.positions[static_cast<std::size_t>(p.argmax)];
    if ((Vec2(s.u, s.v) - ground_truth[i]).norm() <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probes.size());
}

LocalizationReport measure_localization(const scene::Scene& scene, const scene::RenderedView& target,
                                        const scene::RenderedView& reference, const FeatureMap& target_features,
                                        const FeatureMap& reference_features, const attention::AttentionParams& params,
                                        pipeline::InjectionMode mode, double k, geometry::SampleAxis axis) {
  if (mode == pipeline::InjectionMode::off) throw std::invalid_argument("measure_localization: mode must be epipolar or full");
  if (!target_features.same_shape(reference_features)) {
    throw std::invalid_argument("measure_localization: feature grids differ");
  }
  const int fw = target_features.width();
  const int fh = target_features.height();
  if (target.width() % fw || target.width() / fw * fh != target.height()) {
    throw std::invalid_argument("measure_localization: feature grid is not an integer downsampling of the renders");
  }
  const double stride = static_cast<double>(target.width()) / fw;
  const auto K_feat = target.K.scaled_to(fw, fh);
  const auto ctx = attention::make_context(reference_features, params);

  geometry::EpipolarSampleSet samples;
  if (mode == pipeline::InjectionMode::epipolar) {
    const auto pose = geometry::relative_pose(geometry::camera_on_sphere(reference.camera),
                                              geometry::camera_on_sphere(target.camera));
    samples = geometry::build_sample_set(pose, K_feat, axis);
  }

  std::vector<attention::SimilarityProbe> probes;
  std::vector<Vec2> truth;
  for (int y = 0; y < fh; ++y) {
    for (int x = 0; x < fw; ++x) {
      const Vec2 image_px = (Vec2(x, y).array() + 0.5) * stride - 0.5;
      if (!scene::surface_at(scene, target, image_px)) continue;
      const auto corr = scene::gt_correspondence(scene, target, reference, image_px);
      if (corr.status != scene::Visibility::visible) continue;
      const std::size_t q = static_cast<std::size_t>(y) * fw + x;
      probes.push_back(mode == pipeline::InjectionMode::epipolar
                           ? attention::probe_epipolar(target_features, ctx, samples, params, q)
                           : attention::probe_full(target_features, ctx, params, q));
      truth.push_back(to_feature(corr.pixel, stride));
    }
  }
  LocalizationReport r;
  r.visible_queries = probes.size();
  r.hits = static_cast<std::size_t>(std::llround(localization_accuracy(probes, truth, k) * probes.size()));
  return r;
}

std::string metrics_csv(std::span<const MetricRow> rows) {
  std::ostringstream out;
  out.precision(17);
  out << "run_id,metric,view_pair,value\n";
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.metric << ',' << r.view_pair << ',';
    if (std::isnan(r.value)) out << "nan";
    else if (std::isinf(r.value)) out << (r.value > 0 ? "inf" : "-inf");
    else out << r.value;
    out << '\n';
  }
  return out.str();
}

}  // namespace epiview::eval
