#include "epiview/denoisers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace epiview::diffusion {

namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t h, double value) {
  const auto q = static_cast<std::int64_t>(std::llround(value * 1e6));
  return splitmix64(h ^ static_cast<std::uint64_t>(q));
}

FeatureMap noise_from_x0(const FeatureMap& x_t, const FeatureMap& x0, int t, const NoiseSchedule& sched) {
  if (!x_t.same_shape(x0)) throw std::invalid_argument("denoiser: x_t and target differ in shape");
  if (t < 1 || t > sched.steps()) throw std::out_of_range("denoiser: timestep must lie in [1, T]");
  const Scalar a = std::sqrt(sched.alpha(t));
  const Scalar b = std::sqrt(1.0 - sched.alpha(t));
  FeatureMap eps(x_t.height(), x_t.width(), x_t.channels());
  auto e = eps.data();
  const auto xs = x_t.data();
  const auto ys = x0.data();
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = (xs[i] - a * ys[i]) / b;
  return eps;
}

Scalar silu(Scalar x) { return x / (1.0 + std::exp(-x)); }

void apply_silu(FeatureMap& fm) {
  for (auto& v : fm.data()) v = silu(v);
}

Scalar as_f32(Scalar v) { return static_cast<Scalar>(static_cast<float>(v)); }

ToyUNet::Conv2d make_conv(int in, int out, int stride, numerics::Rng& rng) {
  ToyUNet::Conv2d c;
  c.in = in;
  c.out = out;
  c.stride = stride;
  const Scalar bound = 1.0 / std::sqrt(static_cast<Scalar>(in * 9));
  std::uniform_real_distribution<Scalar> dist(-bound, bound);
  c.weight.resize(static_cast<std::size_t>(out) * in * 9);
  for (auto& w : c.weight) w = as_f32(dist(rng));
  c.bias.resize(out);
  for (auto& b : c.bias) b = as_f32(dist(rng));
  return c;
}

numerics::LinearMap make_linear(int in, int out, numerics::Rng& rng) {
  numerics::LinearMap m = numerics::random_linear(in, out, rng, true);
  for (auto& w : m.weight) w = as_f32(w);
  for (auto& b : m.bias) b = as_f32(b);
  return m;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw std::invalid_argument("concat: grid mismatch");
  FeatureMap out(a.height(), a.width(), a.channels() + b.channels());
  for (std::size_t p = 0; p < a.pixels(); ++p) {
    auto o = out.pixel(p);
    std::copy(a.pixel(p).begin(), a.pixel(p).end(), o.begin());
    std::copy(b.pixel(p).begin(), b.pixel(p).end(), o.begin() + a.channels());
  }
  return out;
}

FeatureMap upsample2(const FeatureMap& in, int height, int width) {
  FeatureMap out(height, width, in.channels());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto src = in.pixel(std::min(y / 2, in.height() - 1), std::min(x / 2, in.width() - 1));
      std::copy(src.begin(), src.end(), out.pixel(y, x).begin());
    }
  }
  return out;
}

struct ParamRef {
  std::string name;
  std::vector<int> shape;
  std::vector<Scalar>* data;
};

}  // namespace

TargetProvider::TargetProvider(std::shared_ptr<const scene::Scene> scene, geometry::SphericalCamera input_camera,
                               geometry::CameraIntrinsics K)
    : scene_(std::move(scene)), input_camera_(input_camera), K_(K) {}

const FeatureMap& TargetProvider::target(const Condition& cond) const {
  if (cond.delta.is_zero()) {
    if (!cond.reference) throw std::invalid_argument("denoiser: zero-pose condition without a reference image");
    return *cond.reference;
  }
  if (!scene_) throw std::invalid_argument("denoiser: a scene is required for non-zero pose offsets");
  const geometry::SphericalCamera cam = cond.delta.apply(input_camera_);
  const auto key = std::make_tuple(cam.elevation_deg, cam.azimuth_deg, cam.radius);
  std::lock_guard lock(mutex_);
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(key, scene::render(*scene_, cam, K_).rgb).first;
  return it->second;
}

FeatureMap OracleDenoiser::predict_noise(const FeatureMap& x_t, int t, const Condition& cond, const NoiseSchedule& sched,
                                         AttentionHook*) const {
  return noise_from_x0(x_t, targets_.target(cond), t, sched);
}

AnalyticAttentionDenoiser::AnalyticAttentionDenoiser(std::shared_ptr<const scene::Scene> scene,
                                                     geometry::SphericalCamera input_camera, geometry::CameraIntrinsics K,
                                                     Options options)
    : targets_(std::move(scene), input_camera, K), options_(options), params_(stage_params(options.color_bandwidth)) {
  if (options_.perturbation < 0) throw std::invalid_argument("AnalyticAttentionDenoiser: negative perturbation");
}

FeatureMap AnalyticAttentionDenoiser::stage_features(const FeatureMap& rgb) {
  if (rgb.channels() != 3) throw std::invalid_argument("stage_features: expected 3 channels");
  FeatureMap f(rgb.height(), rgb.width(), 4);
  for (std::size_t p = 0; p < rgb.pixels(); ++p) {
    const auto c = rgb.pixel(p);
    auto o = f.pixel(p);
    o[0] = c[0];
    o[1] = c[1];
    o[2] = c[2];
    o[3] = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
  }
  return f;
}

attention::AttentionParams AnalyticAttentionDenoiser::stage_params(double color_bandwidth) {
  if (!(color_bandwidth > 0)) throw std::invalid_argument("stage_params: bandwidth must be positive");
  // Q.K / sqrt(4) = -(s / 4) |c_q - c_k|^2 + const(q), so s = 2 / bandwidth^2.
  const Scalar s = 2.0 / (color_bandwidth * color_bandwidth);
  attention::AttentionParams p;
  p.heads = 1;
  p.head_dim = 4;
  p.q_proj = numerics::LinearMap::zeros(4, 4);
  for (int i = 0; i < 3; ++i) p.q_proj.weight[i * 4 + i] = s;
  p.q_proj.bias = {0.0, 0.0, 0.0, -0.5 * s};
  p.k_proj = numerics::LinearMap::identity(4);
  p.v_proj = numerics::LinearMap::identity(4);
  p.out_proj = numerics::LinearMap::identity(4);
  return p;
}

FeatureMap AnalyticAttentionDenoiser::perturbed_target(const Condition& cond) const {
  FeatureMap y = targets_.target(cond);
  if (cond.delta.is_zero() || options_.perturbation == 0.0) return y;
  std::uint64_t h = splitmix64(options_.seed);
  h = mix(h, cond.delta.elevation_deg);
  h = mix(h, cond.delta.azimuth_deg);
  h = mix(h, cond.delta.radius);
  numerics::Rng rng(h);
  std::normal_distribution<Scalar> dist(0.0, options_.perturbation);
  for (auto& v : y.data()) v += dist(rng);
  return y;
}

FeatureMap AnalyticAttentionDenoiser::predict_noise(const FeatureMap& x_t, int t, const Condition& cond,
                                                    const NoiseSchedule& sched, AttentionHook* hook) const {
  const FeatureMap features = stage_features(perturbed_target(cond));
  const FeatureMap q = numerics::apply_linear(params_.q_proj, features);
  const FeatureMap k = numerics::apply_linear(params_.k_proj, features);
  const FeatureMap v = numerics::apply_linear(params_.v_proj, features);
  FeatureMap out = numerics::apply_linear(params_.out_proj, v);
  if (hook) {
    AttentionSite site{kLayer, t, params_, features, q, k, v, out};
    hook->on_attention(site);
  }
  FeatureMap x0(out.height(), out.width(), 3);
  for (std::size_t p = 0; p < out.pixels(); ++p) {
    const auto o = out.pixel(p);
    std::copy(o.begin(), o.begin() + 3, x0.pixel(p).begin());
  }
  return noise_from_x0(x_t, x0, t, sched);
}

const attention::AttentionParams& AnalyticAttentionDenoiser::attention_params(const std::string& layer) const {
  if (layer != kLayer) return Denoiser::attention_params(layer);
  return params_;
}

int AnalyticAttentionDenoiser::feature_stride(const std::string& layer) const {
  if (layer != kLayer) return Denoiser::feature_stride(layer);
  return 1;
}

// ToyUNet

FeatureMap ToyUNet::Conv2d::forward(const FeatureMap& x) const {
  if (x.channels() != in) throw std::invalid_argument("Conv2d: channel mismatch");
  const int oh = (x.height() + stride - 1) / stride;
  const int ow = (x.width() + stride - 1) / stride;
  FeatureMap y(oh, ow, out);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      auto o = y.pixel(oy, ox);
      for (int co = 0; co < out; ++co) o[co] = bias[co];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride + ky - 1;
        if (iy < 0 || iy >= x.height()) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          if (ix < 0 || ix >= x.width()) continue;
          const auto src = x.pixel(iy, ix);
          for (int co = 0; co < out; ++co) {
            const Scalar* w = weight.data() + (static_cast<std::size_t>(co) * in * 9) + ky * 3 + kx;
            Scalar acc = 0.0;
            for (int ci = 0; ci < in; ++ci) acc += w[ci * 9] * src[ci];
            o[co] += acc;
          }
        }
      }
    }
  }
  return y;
}

ToyUNet::ToyUNet(Config config, std::uint64_t seed) : config_(config), seed_(seed) {
  if (config_.width % 2 || config_.height % 2) throw std::invalid_argument("ToyUNet: resolution must be even");
  if (config_.mid_channels % config_.heads) throw std::invalid_argument("ToyUNet: heads must divide mid_channels");
  numerics::Rng rng(seed);
  enc1_ = make_conv(6, config_.enc_channels, 1, rng);
  enc2_ = make_conv(config_.enc_channels, config_.mid_channels, 2, rng);
  embed_ = make_linear(5 * 2 * config_.embed_frequencies, config_.mid_channels, rng);
  attn_.heads = config_.heads;
  attn_.head_dim = config_.mid_channels / config_.heads;
  attn_.q_proj = make_linear(config_.mid_channels, config_.mid_channels, rng);
  attn_.k_proj = make_linear(config_.mid_channels, config_.mid_channels, rng);
  attn_.v_proj = make_linear(config_.mid_channels, config_.mid_channels, rng);
  attn_.out_proj = make_linear(config_.mid_channels, config_.mid_channels, rng);
  dec1_ = make_conv(config_.mid_channels + config_.enc_channels, config_.enc_channels, 1, rng);
  out_ = make_conv(config_.enc_channels, 3, 1, rng);
}

std::vector<Scalar> ToyUNet::embedding(int t, const NoiseSchedule& sched, const PoseDelta& delta) const {
  const double az = delta.azimuth_deg * std::numbers::pi / 180.0;
  const double tau = sched.steps() > 0 ? static_cast<double>(t) / sched.steps() : 0.0;
  const double values[5] = {tau, delta.elevation_deg / 90.0, std::sin(az), std::cos(az), delta.radius};
  std::vector<Scalar> e;
  e.reserve(5 * 2 * config_.embed_frequencies);
  for (double v : values) {
    for (int k = 0; k < config_.embed_frequencies; ++k) {
      const double w = std::ldexp(1.0, k);
      e.push_back(std::sin(w * v));
      e.push_back(std::cos(w * v));
    }
  }
  return e;
}

ToyUNet::Activations ToyUNet::forward(const FeatureMap& x_t, int t, const Condition& cond, const NoiseSchedule& sched,
                                      AttentionHook* hook) const {
  if (!cond.reference) throw std::invalid_argument("ToyUNet: condition without reference image");
  if (x_t.height() != config_.height || x_t.width() != config_.width || x_t.channels() != 3) {
    throw std::invalid_argument("ToyUNet: input must be " + std::to_string(config_.width) + "x" +
                                std::to_string(config_.height) + "x3");
  }
  Activations act;
  act.skip = enc1_.forward(concat_channels(x_t, *cond.reference));
  apply_silu(act.skip);
  FeatureMap mid = enc2_.forward(act.skip);
  apply_silu(mid);

  const auto emb_in = embedding(t, sched, cond.delta);
  std::vector<Scalar> emb(config_.mid_channels);
  embed_.apply(emb_in, emb);
  for (std::size_t p = 0; p < mid.pixels(); ++p) {
    auto px = mid.pixel(p);
    for (int c = 0; c < config_.mid_channels; ++c) px[c] += emb[c];
  }

  const FeatureMap q = numerics::apply_linear(attn_.q_proj, mid);
  const FeatureMap k = numerics::apply_linear(attn_.k_proj, mid);
  const FeatureMap v = numerics::apply_linear(attn_.v_proj, mid);
  FeatureMap attended =
      numerics::apply_linear(attn_.out_proj, attention::scaled_dot_product(q, k, v, attn_.heads, attn_.head_dim));
  if (hook) {
    AttentionSite site{kLayer, t, attn_, mid, q, k, v, attended};
    hook->on_attention(site);
  }
  auto m = mid.data();
  const auto a = attended.data();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] += a[i];

  act.decoded = dec1_.forward(concat_channels(upsample2(mid, config_.height, config_.width), act.skip));
  apply_silu(act.decoded);
  return act;
}

FeatureMap ToyUNet::predict_noise(const FeatureMap& x_t, int t, const Condition& cond, const NoiseSchedule& sched,
                                  AttentionHook* hook) const {
  return out_.forward(forward(x_t, t, cond, sched, hook).decoded);
}

const attention::AttentionParams& ToyUNet::attention_params(const std::string& layer) const {
  if (layer != kLayer) return Denoiser::attention_params(layer);
  return attn_;
}

int ToyUNet::feature_stride(const std::string& layer) const {
  if (layer != kLayer) return Denoiser::feature_stride(layer);
  return 2;
}

std::vector<std::pair<std::string, std::vector<Scalar>*>> ToyUNet::parameters() {
  return {{"enc1.weight", &enc1_.weight},         {"enc1.bias", &enc1_.bias},
          {"enc2.weight", &enc2_.weight},         {"enc2.bias", &enc2_.bias},
          {"embed.weight", &embed_.weight},       {"embed.bias", &embed_.bias},
          {"attn.q.weight", &attn_.q_proj.weight}, {"attn.q.bias", &attn_.q_proj.bias},
          {"attn.k.weight", &attn_.k_proj.weight}, {"attn.k.bias", &attn_.k_proj.bias},
          {"attn.v.weight", &attn_.v_proj.weight}, {"attn.v.bias", &attn_.v_proj.bias},
          {"attn.out.weight", &attn_.out_proj.weight}, {"attn.out.bias", &attn_.out_proj.bias},
          {"dec1.weight", &dec1_.weight},         {"dec1.bias", &dec1_.bias},
          {"out.weight", &out_.weight},           {"out.bias", &out_.bias}};
}

void ToyUNet::save(const std::filesystem::path& path) const {
  auto params = const_cast<ToyUNet*>(this)->parameters();
  json header;
  header["format"] = "epiview-toyunet";
  header["version"] = 1;
  header["seed"] = seed_;
  header["config"] = {{"width", config_.width},
                      {"height", config_.height},
                      {"enc_channels", config_.enc_channels},
                      {"mid_channels", config_.mid_channels},
                      {"heads", config_.heads},
                      {"embed_frequencies", config_.embed_frequencies}};
  header["layers"] = json::array();
  for (const auto& [name, data] : params) header["layers"].push_back({{"name", name}, {"count", data->size()}});
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  std::uint64_t len = text.size();
  unsigned char len_bytes[8];
  for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>(len >> (8 * i));
  out.write(reinterpret_cast<const char*>(len_bytes), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, data] : params) {
    for (Scalar v : *data) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      unsigned char b[4];
      for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
      out.write(reinterpret_cast<const char*>(b), 4);
    }
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

ToyUNet ToyUNet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  unsigned char len_bytes[8];
  if (!in.read(reinterpret_cast<char*>(len_bytes), 8)) throw std::runtime_error("truncated checkpoint header");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(len_bytes[i]) << (8 * i);
  if (len > (1u << 24)) throw std::runtime_error("implausible checkpoint header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("truncated checkpoint header");
  const json header = json::parse(text);
  if (header.value("format", "") != "epiview-toyunet") throw std::runtime_error("not a toyunet checkpoint");

  Config cfg;
  const auto& c = header.at("config");
  cfg.width = c.at("width");
  cfg.height = c.at("height");
  cfg.enc_channels = c.at("enc_channels");
  cfg.mid_channels = c.at("mid_channels");
  cfg.heads = c.at("heads");
  cfg.embed_frequencies = c.at("embed_frequencies");
  ToyUNet net(cfg, header.at("seed").get<std::uint64_t>());

  auto params = net.parameters();
  const auto& layers = header.at("layers");
  if (layers.size() != params.size()) throw std::runtime_error("checkpoint layer count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, data] = params[i];
    if (layers[i].at("name") != name || layers[i].at("count").get<std::size_t>() != data->size()) {
      throw std::runtime_error("checkpoint layer mismatch at " + name);
    }
    for (auto& v : *data) {
      unsigned char b[4];
      if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated checkpoint data");
      std::uint32_t bits = 0;
      for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(b[k]) << (8 * k);
      v = std::bit_cast<float>(bits);
    }
  }
  return net;
}

ToyUNet::TrainReport ToyUNet::train_output_layer(const std::vector<TrainSample>& samples, const NoiseSchedule& sched,
                                                 int steps, double learning_rate, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("train_output_layer: no samples");
  if (sched.steps() < 1) throw std::invalid_argument("train_output_layer: schedule has no steps");
  numerics::Rng rng(seed);
  std::uniform_int_distribution<int> pick_t(1, sched.steps());

  // Only the output convolution trains, so its inputs are fixed and computed once.
  struct Example {
    FeatureMap features;
    FeatureMap noise;
  };
  std::vector<Example> batch;
  constexpr int kTimestepsPerSample = 4;
  for (const auto& s : samples) {
    const Condition cond{&s.reference, s.delta};
    for (int r = 0; r < kTimestepsPerSample; ++r) {
      const int t = pick_t(rng);
      FeatureMap z = numerics::random_normal(s.x0.height(), s.x0.width(), 3, rng);
      const FeatureMap x_t = forward_diffuse(s.x0, t, z, sched);
      batch.push_back({forward(x_t, t, cond, sched, nullptr).decoded, std::move(z)});
    }
  }

  auto loss_and_grad = [&](std::vector<Scalar>* gw, std::vector<Scalar>* gb) {
    if (gw) gw->assign(out_.weight.size(), 0.0);
    if (gb) gb->assign(out_.bias.size(), 0.0);
    double loss = 0.0;
    std::size_t count = 0;
    for (const auto& ex : batch) count += ex.noise.data().size();
    for (const auto& ex : batch) {
      const FeatureMap pred = out_.forward(ex.features);
      const int h = pred.height();
      const int w = pred.width();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          for (int co = 0; co < 3; ++co) {
            const double r = pred.at(y, x, co) - ex.noise.at(y, x, co);
            loss += r * r;
            if (!gw) continue;
            const double g = 2.0 * r / count;
            (*gb)[co] += g;
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = y + ky - 1;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int ix = x + kx - 1;
                if (ix < 0 || ix >= w) continue;
                const auto a = ex.features.pixel(iy, ix);
                for (int ci = 0; ci < out_.in; ++ci) {
                  (*gw)[(static_cast<std::size_t>(co) * out_.in + ci) * 9 + ky * 3 + kx] += g * a[ci];
                }
              }
            }
          }
        }
      }
    }
    return loss / count;
  };

  TrainReport report;
  report.initial_loss = loss_and_grad(nullptr, nullptr);
  // Adam on the output layer.
  std::vector<Scalar> gw, gb;
  std::vector<Scalar> mw(out_.weight.size(), 0.0), vw(out_.weight.size(), 0.0);
  std::vector<Scalar> mb(out_.bias.size(), 0.0), vb(out_.bias.size(), 0.0);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int step = 1; step <= steps; ++step) {
    loss_and_grad(&gw, &gb);
    const double c1 = 1.0 - std::pow(b1, step);
    const double c2 = 1.0 - std::pow(b2, step);
    auto update = [&](std::vector<Scalar>& p, const std::vector<Scalar>& g, std::vector<Scalar>& m,
                      std::vector<Scalar>& v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1 - b1) * g[i];
        v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
        p[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    };
    update(out_.weight, gw, mw, vw);
    update(out_.bias, gb, mb, vb);
  }
  for (auto& w : out_.weight) w = as_f32(w);
  for (auto& b : out_.bias) b = as_f32(b);
  report.final_loss = loss_and_grad(nullptr, nullptr);
  return report;
}

Backend parse_backend(const std::string& s) {
  if (s == "oracle") return Backend::oracle;
  if (s == "analytic") return Backend::analytic;
  if (s == "toyunet") return Backend::toyunet;
  throw std::invalid_argument("unknown backend: " + s);
}

std::string to_string(Backend b) {
  switch (b) {
    case Backend::oracle: return "oracle";
    case Backend::analytic: return "analytic";
    case Backend::toyunet: return "toyunet";
  }
  return "oracle";
}

}  // namespace epiview::diffusion
