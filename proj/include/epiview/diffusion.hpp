#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "epiview/attention.hpp"
#include "epiview/geometry.hpp"
#include "epiview/numerics.hpp"

namespace epiview::diffusion {

using numerics::FeatureMap;
using numerics::Scalar;

/// Cumulative signal levels alpha_t for t = 0..T; alpha_0 = 1 is the clean end.
class NoiseSchedule {
 public:
  struct LinearSpec {
    int steps = 50;
    int train_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
  };

  NoiseSchedule() = default;
  explicit NoiseSchedule(std::vector<Scalar> alphas);

  /// Linear-in-beta training schedule of `train_steps` steps, strided down
  /// to `steps` inference steps.
  static NoiseSchedule linear(const LinearSpec& spec);
  static NoiseSchedule linear(int steps) { return linear(LinearSpec{steps}); }

  int steps() const { return static_cast<int>(alphas_.size()) - 1; }
  Scalar alpha(int t) const { return alphas_.at(t); }
  const std::vector<Scalar>& alphas() const { return alphas_; }
  const LinearSpec& spec() const { return spec_; }

 private:
  std::vector<Scalar> alphas_{1.0};
  LinearSpec spec_{0};
};

/// x_t = sqrt(alpha_t) x0 + sqrt(1 - alpha_t) z
FeatureMap forward_diffuse(const FeatureMap& x0, int t, const FeatureMap& z, const NoiseSchedule& sched);

/// Clean-image estimate implied by a noise prediction at step t.
FeatureMap predict_x0(const FeatureMap& x_t, const FeatureMap& eps, int t, const NoiseSchedule& sched);

/// Deterministic (eta = 0) DDIM move between adjacent steps `from` and `to`.
/// to = from - 1 denoises; to = from + 1 is the inversion direction.
FeatureMap ddim_step(const FeatureMap& x, const FeatureMap& eps, int from, int to, const NoiseSchedule& sched);

/// Spherical pose offset of a target view from the input view.
struct PoseDelta {
  double elevation_deg = 0.0;
  double azimuth_deg = 0.0;
  double radius = 0.0;

  bool is_zero() const { return elevation_deg == 0.0 && azimuth_deg == 0.0 && radius == 0.0; }
  static PoseDelta between(const geometry::SphericalCamera& input, const geometry::SphericalCamera& target);
  geometry::SphericalCamera apply(const geometry::SphericalCamera& input) const;
};

/// Denoiser conditioning: the input image and the relative pose of the view being generated.
struct Condition {
  const FeatureMap* reference = nullptr;
  PoseDelta delta;
};

/// One evaluation of an attention layer, handed to hooks before the block
/// output is consumed. Hooks may overwrite `output`.
struct AttentionSite {
  const std::string& layer;
  int timestep;
  const attention::AttentionParams& params;
  const FeatureMap& input;    // block input F
  const FeatureMap& queries;  // Q
  const FeatureMap& keys;     // K
  const FeatureMap& values;   // V
  FeatureMap& output;         // block output F_hat
};

class AttentionHook {
 public:
  virtual ~AttentionHook() = default;
  virtual void on_attention(AttentionSite& site) = 0;
};

/// Records Q, K, V and F of the requested layers, keyed by (timestep, layer).
class CaptureHook : public AttentionHook {
 public:
  struct Captured {
    FeatureMap queries;
    FeatureMap keys;
    FeatureMap values;
    FeatureMap input;
  };

  explicit CaptureHook(std::vector<std::string> layers) : layers_(std::move(layers)) {}
  void on_attention(AttentionSite& site) override;
  const std::map<std::pair<int, std::string>, Captured>& captures() const { return captures_; }

 private:
  std::vector<std::string> layers_;
  std::map<std::pair<int, std::string>, Captured> captures_;
};

/// Pose-conditioned noise predictor eps(x_t, t | x_r, delta).
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual std::string name() const = 0;
  virtual FeatureMap predict_noise(const FeatureMap& x_t, int t, const Condition& cond, const NoiseSchedule& sched,
                                   AttentionHook* hook = nullptr) const = 0;

  virtual std::vector<std::string> attention_layers() const { return {}; }
  virtual const attention::AttentionParams& attention_params(const std::string& layer) const;
  /// Image-to-feature-grid downsampling factor of an attention layer.
  virtual int feature_stride(const std::string& layer) const;
};

/// Walks the inversion direction 0 -> T. The noise at step t is predicted
/// from the current state x_t at timestep t + 1 (first-order approximation).
FeatureMap ddim_invert(const FeatureMap& x0, const Denoiser& denoiser, const Condition& cond, const NoiseSchedule& sched);

/// Callback run before each denoising iteration (iteration 0 is the noise end).
using StepObserver = std::function<void(int iteration, int timestep)>;

/// Deterministic sampling T -> 0.
FeatureMap ddim_sample(const FeatureMap& x_T, const Denoiser& denoiser, const Condition& cond, const NoiseSchedule& sched,
                       AttentionHook* hook = nullptr, const StepObserver& observer = {});

}  // namespace epiview::diffusion
