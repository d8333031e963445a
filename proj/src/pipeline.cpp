#include "epiview/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

namespace epiview::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count();
}

attention::ContextFeatures cache_entry(const diffusion::AttentionSite& site, attention::ValueSource source) {
  attention::ContextFeatures f;
  f.keys = site.keys;
  if (source == attention::ValueSource::value_projection) f.values = site.values;
  f.raw = site.input;
  return f;
}

// Records own features at injected sites; no retrieval.
class RecordHook : public diffusion::AttentionHook {
 public:
  RecordHook(const Pipeline& p, FeatureCache& cache) : p_(p), cache_(cache) {}

  void on_attention(diffusion::AttentionSite& site) override {
    if (!p_.injects(p_.schedule().steps() - site.timestep, site.layer)) return;
    cache_.insert(site.timestep, site.layer, cache_entry(site, p_.config().value_source));
  }

 private:
  const Pipeline& p_;
  FeatureCache& cache_;
};

struct ContextView {
  const FeatureCache* cache;
  geometry::RelativePose pose;  // context = reference, new view = target
};

class InjectHook : public diffusion::AttentionHook {
 public:
  InjectHook(const Pipeline& p, const Denoiser& denoiser, const CameraIntrinsics& K, std::vector<ContextView> contexts,
             FeatureCache& own, ViewStats& stats)
      : p_(p), contexts_(std::move(contexts)), own_(own), stats_(stats) {
    const auto& cfg = p_.config();
    for (const auto& layer : p_.layers()) {
      LayerState st;
      st.block = attention::EpipolarAttentionBlock::from_self_attention(denoiser.attention_params(layer), cfg.alpha);
      st.block.value_source = cfg.value_source;
      st.block.apply_out_proj = cfg.apply_out_proj;
      const int stride = denoiser.feature_stride(layer);
      st.K_feat = K.scaled_to(K.width / stride, K.height / stride);
      if (cfg.mode == InjectionMode::epipolar) {
        for (const auto& c : contexts_) {
          st.footprints.push_back(attention::prepare_footprints(geometry::build_sample_set(c.pose, st.K_feat, cfg.sample_axis),
                                                             st.K_feat.width, st.K_feat.height));
        }
      }
      layers_.emplace(layer, std::move(st));
    }
  }

  void on_attention(diffusion::AttentionSite& site) override {
    const int iteration = p_.schedule().steps() - site.timestep;
    if (!p_.injects(iteration, site.layer)) return;
    const auto& cfg = p_.config();
    // Own features are cached before injection alters the block output.
    own_.insert(site.timestep, site.layer, cache_entry(site, cfg.value_source));

    const LayerState& st = layers_.at(site.layer);
    if (site.input.width() != st.K_feat.width || site.input.height() != st.K_feat.height) {
      throw std::logic_error("layer '" + site.layer + "' feature grid does not match its declared stride");
    }
    std::vector<attention::Retrieval> retrieved;
    retrieved.reserve(contexts_.size());
    for (std::size_t i = 0; i < contexts_.size(); ++i) {
      const attention::ContextFeatures& ctx = contexts_[i].cache->at(site.timestep, site.layer, iteration);
      if (cfg.mode == InjectionMode::epipolar) {
        retrieved.push_back(attention::epipolar_attention(site.input, ctx, st.footprints[i], st.block));
      } else {
        retrieved.push_back(
            attention::full_cross_attention(site.input, ctx, st.block.params, cfg.value_source, cfg.apply_out_proj));
      }
      stats_.similarity_peak = std::max(stats_.similarity_peak, retrieved.back().similarity_elems);
      stats_.similarity_total += retrieved.back().similarity_elems;
    }
    const attention::Retrieval merged = attention::multi_view_aggregate(retrieved);
    site.output = attention::fuse(site.output, merged, cfg.alpha);
    ++stats_.injections;
  }

 private:
  struct LayerState {
    attention::EpipolarAttentionBlock block;
    CameraIntrinsics K_feat;
    std::vector<attention::SampleFootprints> footprints;  // per context
  };

  const Pipeline& p_;
  std::vector<ContextView> contexts_;
  std::map<std::string, LayerState> layers_;
  FeatureCache& own_;
  ViewStats& stats_;
};

}  // namespace

InjectionMode parse_injection_mode(const std::string& s) {
  if (s == "epipolar") return InjectionMode::epipolar;
  if (s == "full") return InjectionMode::full;
  if (s == "off") return InjectionMode::off;
  throw std::invalid_argument("unknown injection mode: " + s);
}

std::string to_string(InjectionMode m) {
  switch (m) {
    case InjectionMode::epipolar: return "epipolar";
    case InjectionMode::full: return "full";
    case InjectionMode::off: return "off";
  }
  return "off";
}

geometry::SampleAxis parse_sample_axis(const std::string& s) {
  if (s == "dominant") return geometry::SampleAxis::dominant;
  if (s == "width") return geometry::SampleAxis::width;
  throw std::invalid_argument("unknown sample axis: " + s);
}

std::string to_string(geometry::SampleAxis a) { return a == geometry::SampleAxis::width ? "width" : "dominant"; }

attention::ValueSource parse_value_source(const std::string& s) {
  if (s == "value_projection") return attention::ValueSource::value_projection;
  if (s == "raw_feature") return attention::ValueSource::raw_feature;
  throw std::invalid_argument("unknown value source: " + s);
}

std::string to_string(attention::ValueSource v) {
  return v == attention::ValueSource::raw_feature ? "raw_feature" : "value_projection";
}

void GenerationConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (context_views < 0) throw std::invalid_argument("context view count must be >= 0");
  if (inject_after_step < 0) throw std::invalid_argument("inject_after_step must be >= 0");
}

CacheMiss::CacheMiss(int iteration_, int timestep_, const std::string& layer_)
    : std::runtime_error("missing cached features for step " + std::to_string(iteration_) + " (timestep " +
                         std::to_string(timestep_) + "), layer '" + layer_ + "'"),
      iteration(iteration_),
      timestep(timestep_),
      layer(layer_) {}

void FeatureCache::insert(int timestep, const std::string& layer, attention::ContextFeatures features) {
  if (frozen_) throw std::logic_error("feature cache is frozen");
  if (!entries_.emplace(Key{timestep, layer}, std::move(features)).second) {
    throw std::logic_error("duplicate cache entry for timestep " + std::to_string(timestep) + ", layer '" + layer + "'");
  }
}

const attention::ContextFeatures& FeatureCache::at(int timestep, const std::string& layer, int iteration) const {
  const auto it = entries_.find({timestep, layer});
  if (it == entries_.end()) throw CacheMiss(iteration, timestep, layer);
  return it->second;
}

std::vector<int> select_context_views(const SphericalCamera& target, std::span<const SphericalCamera> generated, int M) {
  if (M < 0) throw std::invalid_argument("select_context_views: M must be >= 0");
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(generated.size());
  for (std::size_t i = 0; i < generated.size(); ++i) {
    ranked.emplace_back(geometry::angular_distance_deg(target, generated[i]), static_cast<int>(i));
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<int> out{kInputView};
  for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < M; ++i) out.push_back(ranked[i].second);
  return out;
}

Pipeline::Pipeline(const Denoiser& denoiser, NoiseSchedule sched, CameraIntrinsics K, GenerationConfig config)
    : denoiser_(denoiser), sched_(std::move(sched)), K_(K), config_(std::move(config)) {
  config_.validate();
  K_.validate();
  const auto available = denoiser_.attention_layers();
  layers_ = config_.inject_layers.empty() ? available : config_.inject_layers;
  for (const auto& l : layers_) {
    if (std::find(available.begin(), available.end(), l) == available.end()) {
      throw std::invalid_argument("backend " + denoiser_.name() + " has no attention layer '" + l + "'");
    }
  }
}

bool Pipeline::injects(int iteration, const std::string& layer) const {
  if (config_.mode == InjectionMode::off || iteration < config_.inject_after_step) return false;
  return std::find(layers_.begin(), layers_.end(), layer) != layers_.end();
}

FeatureMap Pipeline::invert_input(const FeatureMap& input) const {
  if (input.width() != K_.width || input.height() != K_.height || input.channels() != 3) {
    throw std::invalid_argument("input image must be " + std::to_string(K_.width) + "x" + std::to_string(K_.height) +
                                " RGB");
  }
  return diffusion::ddim_invert(input, denoiser_, {&input, {}}, sched_);
}

ReferenceBranch Pipeline::run_reference_branch(const FeatureMap& x_R, const FeatureMap& input) const {
  const auto start = Clock::now();
  ReferenceBranch ref;
  RecordHook hook(*this, ref.cache);
  diffusion::AttentionHook* h = config_.mode == InjectionMode::off ? nullptr : &hook;
  ref.image = diffusion::ddim_sample(x_R, denoiser_, {&input, {}}, sched_, h);
  ref.cache.freeze();
  ref.stats.wall_ns = elapsed_ns(start);
  return ref;
}

GeneratedView Pipeline::synthesize_view(const SphericalCamera& target, const FeatureMap& input,
                                        const SphericalCamera& input_camera, const FeatureMap& x_R,
                                        const ReferenceBranch& reference, std::span<const GeneratedView> previous) const {
  const auto start = Clock::now();
  GeneratedView out;
  out.camera = target;
  const diffusion::Condition cond{&input, diffusion::PoseDelta::between(input_camera, target)};

  if (config_.mode == InjectionMode::off) {
    out.image = diffusion::ddim_sample(x_R, denoiser_, cond, sched_);
  } else {
    std::vector<SphericalCamera> cams;
    cams.reserve(previous.size());
    for (const auto& v : previous) cams.push_back(v.camera);
    out.context = select_context_views(target, cams, config_.context_views);

    const geometry::Extrinsics ext_tgt = geometry::camera_on_sphere(target);
    std::vector<ContextView> contexts;
    for (int idx : out.context) {
      const FeatureCache* cache = idx == kInputView ? &reference.cache : &previous[idx].cache;
      const SphericalCamera& cam = idx == kInputView ? input_camera : previous[idx].camera;
      contexts.push_back({cache, geometry::relative_pose(geometry::camera_on_sphere(cam), ext_tgt)});
    }
    InjectHook hook(*this, denoiser_, K_, std::move(contexts), out.cache, out.stats);
    out.image = diffusion::ddim_sample(x_R, denoiser_, cond, sched_, &hook);
  }
  out.cache.freeze();
  out.stats.wall_ns = elapsed_ns(start);
  return out;
}

TrajectoryRun Pipeline::synthesize_trajectory(const FeatureMap& input, const SphericalCamera& input_camera,
                                              std::span<const SphericalCamera> poses) const {
  TrajectoryRun run;
  const auto start = Clock::now();
  run.x_R = invert_input(input);
  run.invert_ns = elapsed_ns(start);
  run.reference = run_reference_branch(run.x_R, input);
  run.views.reserve(poses.size());
  for (const auto& pose : poses) {
    run.views.push_back(synthesize_view(pose, input, input_camera, run.x_R, run.reference, run.views));
  }
  return run;
}

}  // namespace epiview::pipeline
