#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "epiview/diffusion.hpp"
#include "epiview/scene.hpp"

namespace epiview::diffusion {

/// Ground-truth renders of the conditioned pose, used as the clean-image
/// target by the closed-form backends. A zero pose offset returns the
/// conditioning image itself, so no scene is needed for reconstruction.
class TargetProvider {
 public:
  TargetProvider(std::shared_ptr<const scene::Scene> scene, geometry::SphericalCamera input_camera,
                 geometry::CameraIntrinsics K);

  const FeatureMap& target(const Condition& cond) const;
  const geometry::SphericalCamera& input_camera() const { return input_camera_; }
  const geometry::CameraIntrinsics& intrinsics() const { return K_; }

 private:
  std::shared_ptr<const scene::Scene> scene_;
  geometry::SphericalCamera input_camera_;
  geometry::CameraIntrinsics K_;
  mutable std::mutex mutex_;
  mutable std::map<std::tuple<double, double, double>, FeatureMap> cache_;
};

/// eps = (x_t - sqrt(alpha_t) x0*) / sqrt(1 - alpha_t) toward the GT render
/// x0* of the conditioned pose. Has no attention layers.
class OracleDenoiser : public Denoiser {
 public:
  OracleDenoiser(std::shared_ptr<const scene::Scene> scene, geometry::SphericalCamera input_camera,
                 geometry::CameraIntrinsics K)
      : targets_(std::move(scene), input_camera, K) {}

  std::string name() const override { return "oracle"; }
  FeatureMap predict_noise(const FeatureMap& x_t, int t, const Condition& cond, const NoiseSchedule& sched,
                           AttentionHook* hook = nullptr) const override;

 private:
  TargetProvider targets_;
};

/// Closed-form denoiser whose clean-image estimate passes through one
/// attention stage. The estimate is the GT render plus a fixed per-view
/// perturbation sigma * eta(view), standing in for a base model that is
/// individually plausible per view but mutually inconsistent. The stage
/// features are F = [r, g, b, r^2 + g^2 + b^2]; keys, values and the output
/// projection are identities, and the query projection turns Q.K into a
/// Gaussian colour-distance kernel of the given bandwidth. Each position
/// attends only to itself, so without injection the block output equals its
/// input and the backend reduces to the oracle.
class AnalyticAttentionDenoiser : public Denoiser {
 public:
  struct Options {
    double perturbation = 0.05;      // sigma_p
    double color_bandwidth = 0.1;    // kernel width in RGB units
    std::uint64_t seed = 0;
  };

  static inline const std::string kLayer = "analytic";

  AnalyticAttentionDenoiser(std::shared_ptr<const scene::Scene> scene, geometry::SphericalCamera input_camera,
                            geometry::CameraIntrinsics K, Options options);

  std::string name() const override { return "analytic"; }
  FeatureMap predict_noise(const FeatureMap& x_t, int t, const Condition& cond, const NoiseSchedule& sched,
                           AttentionHook* hook = nullptr) const override;
  std::vector<std::string> attention_layers() const override { return {kLayer}; }
  const attention::AttentionParams& attention_params(const std::string& layer) const override;
  int feature_stride(const std::string& layer) const override;

  /// Clean-image estimate before the attention stage.
  FeatureMap perturbed_target(const Condition& cond) const;
  const Options& options() const { return options_; }

  static FeatureMap stage_features(const FeatureMap& rgb);
  static attention::AttentionParams stage_params(double color_bandwidth);

 private:
  TargetProvider targets_;
  Options options_;
  attention::AttentionParams params_;
};

/// Small pose-conditioned U-Net: two 3x3 conv stages down to a half-resolution
/// bottleneck, one multi-head self-attention block with a residual
/// connection, and a conv decoder with a skip connection. Input is x_t
/// concatenated with the conditioning image; timestep and pose offset enter
/// as an additive sinusoidal embedding at the bottleneck.
class ToyUNet : public Denoiser {
 public:
  struct Config {
    int width = 32;
    int height = 32;
    int enc_channels = 16;
    int mid_channels = 32;
    int heads = 2;
    int embed_frequencies = 8;
  };

  struct Conv2d {
    int in = 0;
    int out = 0;
    int stride = 1;
    std::vector<Scalar> weight;  // [out][in][3][3]
    std::vector<Scalar> bias;    // [out]

    FeatureMap forward(const FeatureMap& x) const;
  };

  static inline const std::string kLayer = "bottleneck";

  ToyUNet(Config config, std::uint64_t seed);

  std::string name() const override { return "toyunet"; }
  FeatureMap predict_noise(const FeatureMap& x_t, int t, const Condition& cond, const NoiseSchedule& sched,
                           AttentionHook* hook = nullptr) const override;
  std::vector<std::string> attention_layers() const override { return {kLayer}; }
  const attention::AttentionParams& attention_params(const std::string& layer) const override;
  int feature_stride(const std::string& layer) const override;

  const Config& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

  /// Little-endian u64 header length, JSON header (layer names, shapes,
  /// seed, config), then every parameter as little-endian f32 in header order.
  void save(const std::filesystem::path& path) const;
  static ToyUNet load(const std::filesystem::path& path);

  struct TrainSample {
    FeatureMap x0;         // target view
    FeatureMap reference;  // conditioning view
    PoseDelta delta;
  };
  struct TrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
  };
  /// Overfits the output convolution on noise prediction for the given
  /// samples with hand-derived gradients; every other layer stays fixed.
  TrainReport train_output_layer(const std::vector<TrainSample>& samples, const NoiseSchedule& sched, int steps,
                                 double learning_rate, std::uint64_t seed);

 private:
  struct Activations {
    FeatureMap skip;
    FeatureMap decoded;  // input of the output convolution
  };
  Activations forward(const FeatureMap& x_t, int t, const Condition& cond, const NoiseSchedule& sched,
                      AttentionHook* hook) const;
  std::vector<Scalar> embedding(int t, const NoiseSchedule& sched, const PoseDelta& delta) const;
  std::vector<std::pair<std::string, std::vector<Scalar>*>> parameters();

  Config config_;
  std::uint64_t seed_ = 0;
  Conv2d enc1_;
  Conv2d enc2_;
  numerics::LinearMap embed_;
  attention::AttentionParams attn_;
  Conv2d dec1_;
  Conv2d out_;
};

enum class Backend { oracle, analytic, toyunet };
Backend parse_backend(const std::string& s);
std::string to_string(Backend b);

}  // namespace epiview::diffusion
