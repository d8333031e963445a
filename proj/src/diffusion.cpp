#include "epiview/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace epiview::diffusion {

namespace {

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

double wrap_degrees(double d) {
  d = std::fmod(d + 180.0, 360.0);
  if (d < 0) d += 360.0;
  return d - 180.0;
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<Scalar> alphas) : alphas_(std::move(alphas)) {
  if (alphas_.empty()) throw std::invalid_argument("NoiseSchedule: empty");
  if (alphas_.front() != 1.0) throw std::invalid_argument("NoiseSchedule: alpha_0 must be 1");
  for (std::size_t t = 1; t < alphas_.size(); ++t) {
    if (!(alphas_[t] > 0.0 && alphas_[t] < alphas_[t - 1])) {
      throw std::invalid_argument("NoiseSchedule: alphas must be positive and strictly decreasing");
    }
  }
}

NoiseSchedule NoiseSchedule::linear(const LinearSpec& spec) {
  if (spec.steps < 0 || spec.steps > spec.train_steps) throw std::invalid_argument("NoiseSchedule: bad step count");
  if (!(spec.beta_start > 0 && spec.beta_end < 1 && spec.beta_start <= spec.beta_end)) {
    throw std::invalid_argument("NoiseSchedule: bad beta range");
  }
  std::vector<Scalar> cumulative(spec.train_steps);
  Scalar prod = 1.0;
  for (int i = 0; i < spec.train_steps; ++i) {
    const Scalar beta = spec.train_steps == 1
                            ? spec.beta_start
                            : spec.beta_start + (spec.beta_end - spec.beta_start) * i / (spec.train_steps - 1);
    prod *= 1.0 - beta;
    cumulative[i] = prod;
  }
  std::vector<Scalar> alphas{1.0};
  for (int k = 1; k <= spec.steps; ++k) {
    const long idx = std::lround(static_cast<double>(k) * spec.train_steps / spec.steps) - 1;
    alphas.push_back(cumulative[static_cast<std::size_t>(idx)]);
  }
  NoiseSchedule s(std::move(alphas));
  s.spec_ = spec;
  return s;
}

FeatureMap forward_diffuse(const FeatureMap& x0, int t, const FeatureMap& z, const NoiseSchedule& sched) {
  require_same_shape(x0, z, "forward_diffuse");
  if (t < 0 || t > sched.steps()) throw std::out_of_range("forward_diffuse: timestep out of range");
  const Scalar a = std::sqrt(sched.alpha(t));
  const Scalar b = std::sqrt(1.0 - sched.alpha(t));
  FeatureMap out(x0.height(), x0.width(), x0.channels());
  auto o = out.data();
  const auto xs = x0.data();
  const auto zs = z.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * xs[i] + b * zs[i];
  return out;
}

FeatureMap predict_x0(const FeatureMap& x_t, const FeatureMap& eps, int t, const NoiseSchedule& sched) {
  require_same_shape(x_t, eps, "predict_x0");
  const Scalar alpha = sched.alpha(t);
  if (!(alpha > 0.0)) throw std::domain_error("predict_x0: alpha_t = 0");
  const Scalar a = std::sqrt(alpha);
  const Scalar b = std::sqrt(1.0 - alpha);
  FeatureMap out(x_t.height(), x_t.width(), x_t.channels());
  auto o = out.data();
  const auto xs = x_t.data();
  const auto es = eps.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (xs[i] - b * es[i]) / a;
  return out;
}

FeatureMap ddim_step(const FeatureMap& x, const FeatureMap& eps, int from, int to, const NoiseSchedule& sched) {
  if (std::abs(from - to) != 1 || std::min(from, to) < 0 || std::max(from, to) > sched.steps()) {
    throw std::out_of_range("ddim_step: steps must be adjacent and inside the schedule");
  }
  const FeatureMap x0 = predict_x0(x, eps, from, sched);
  const Scalar a = std::sqrt(sched.alpha(to));
  const Scalar b = std::sqrt(1.0 - sched.alpha(to));
  FeatureMap out(x.height(), x.width(), x.channels());
  auto o = out.data();
  const auto x0s = x0.data();
  const auto es = eps.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * x0s[i] + b * es[i];
  return out;
}

PoseDelta PoseDelta::between(const geometry::SphericalCamera& input, const geometry::SphericalCamera& target) {
  return {target.elevation_deg - input.elevation_deg, wrap_degrees(target.azimuth_deg - input.azimuth_deg),
          target.radius - input.radius};
}

geometry::SphericalCamera PoseDelta::apply(const geometry::SphericalCamera& input) const {
  return {input.elevation_deg + elevation_deg, input.azimuth_deg + azimuth_deg, input.radius + radius};
}

void CaptureHook::on_attention(AttentionSite& site) {
  if (std::find(layers_.begin(), layers_.end(), site.layer) == layers_.end()) return;
  captures_[{site.timestep, site.layer}] = {site.queries, site.keys, site.values, site.input};
}

const attention::AttentionParams& Denoiser::attention_params(const std::string& layer) const {
  throw std::invalid_argument(name() + " has no attention layer '" + layer + "'");
}

int Denoiser::feature_stride(const std::string& layer) const {
  throw std::invalid_argument(name() + " has no attention layer '" + layer + "'");
}

FeatureMap ddim_invert(const FeatureMap& x0, const Denoiser& denoiser, const Condition& cond, const NoiseSchedule& sched) {
  if (!x0.all_finite()) throw std::invalid_argument("ddim_invert: non-finite input");
  FeatureMap x = x0;
  for (int t = 0; t < sched.steps(); ++t) {
    const FeatureMap eps = denoiser.predict_noise(x, t + 1, cond, sched);
    x = ddim_step(x, eps, t, t + 1, sched);
  }
  return x;
}

FeatureMap ddim_sample(const FeatureMap& x_T, const Denoiser& denoiser, const Condition& cond, const NoiseSchedule& sched,
                       AttentionHook* hook, const StepObserver& observer) {
  FeatureMap x = x_T;
  for (int t = sched.steps(); t >= 1; --t) {
    if (observer) observer(sched.steps() - t, t);
    const FeatureMap eps = denoiser.predict_noise(x, t, cond, sched, hook);
    x = ddim_step(x, eps, t, t - 1, sched);
  }
  return x;
}

}  // namespace epiview::diffusion
