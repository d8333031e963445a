// epiview command-line tool. Exit codes: 0 ok, 2 usage, 3 data, 4 internal.
// Failures print one JSON line to stderr: {"error":KIND,"exit_code":N,"message":...}.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "epiview/bench.hpp"
#include "epiview/denoisers.hpp"
#include "epiview/eval.hpp"
#include "epiview/io.hpp"
#include "epiview/pipeline.hpp"
#include "epiview/scene.hpp"

namespace {

using namespace epiview;
using nlohmann::json;
namespace fs = std::filesystem;
using numerics::FeatureMap;

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int fail(const char* kind, int code, const std::string& message) {
  std::cerr << json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << std::endl;
  return code;
}

json versions() {
  return {{"epiview", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"cli11", CLI11_VERSION},
          {"compiler", __VERSION__}};
}

std::pair<int, int> parse_pair(const std::string& s, const char* what) {
  int a = 0, b = 0;
  char extra = 0;
  if (std::sscanf(s.c_str(), "%d,%d%c", &a, &b, &extra) != 2) {
    throw UsageError(std::string(what) + " expects two comma-separated integers, got '" + s + "'");
  }
  return {a, b};
}

// Settings shared by the commands that run a denoiser. Flags beat the config
// file, which beats the defaults below.
struct RunSettings {
  std::string input;
  std::string traj;
  std::string scene_dir;
  std::string backend = "analytic";
  std::string checkpoint;
  int steps = 50;
  double fov = 50.0;
  double perturbation = 0.05;
  double bandwidth = 0.1;
  std::uint64_t seed = 0;
  pipeline::GenerationConfig config;
};

struct RunFlags {
  std::string mode = "epipolar";
  std::string sample_axis = "dominant";
  std::string value_source = "value_projection";
  std::string config_path;
  std::vector<std::string> layers;
};

void add_run_options(CLI::App* cmd, RunSettings& s, RunFlags& f, bool generation) {
  cmd->add_option("--input", s.input, "input image (PPM)");
  cmd->add_option("--backend", s.backend, "oracle | analytic | toyunet")
      ->check(CLI::IsMember({"oracle", "analytic", "toyunet"}));
  cmd->add_option("--scene", s.scene_dir, "fixture directory supplying the scene (oracle/analytic targets)");
  cmd->add_option("--checkpoint", s.checkpoint, "ToyUNet checkpoint");
  cmd->add_option("--steps", s.steps, "DDIM steps T")->check(CLI::Range(1, 1000));
  cmd->add_option("--fov", s.fov, "horizontal field of view, degrees")->check(CLI::Range(1.0, 179.0));
  cmd->add_option("--sigma", s.perturbation, "analytic per-view perturbation")->check(CLI::NonNegativeNumber);
  cmd->add_option("--bandwidth", s.bandwidth, "analytic colour kernel width")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", s.seed, "run seed");
  cmd->add_option("--config", f.config_path, "JSON config file or run manifest");
  if (!generation) return;
  cmd->add_option("--traj", s.traj, "trajectory JSON");
  cmd->add_option("--mode", f.mode, "epipolar | full | off")->check(CLI::IsMember({"epipolar", "full", "off"}));
  cmd->add_option("--alpha", s.config.alpha, "fusion weight")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--context", s.config.context_views, "context view count M")->check(CLI::NonNegativeNumber);
  cmd->add_option("--inject-step", s.config.inject_after_step, "first injected iteration, counted from the noise end")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--layers", f.layers, "injected attention layers (default: all)")->delimiter(',');
  cmd->add_option("--sample-axis", f.sample_axis, "dominant | width")->check(CLI::IsMember({"dominant", "width"}));
  cmd->add_option("--value-source", f.value_source, "value_projection | raw_feature")
      ->check(CLI::IsMember({"value_projection", "raw_feature"}));
}

bool given(const CLI::App* cmd, const std::string& flag) {
  const CLI::Option* opt = cmd->get_option_no_throw(flag);
  return opt && opt->count() > 0;
}

// Overlays a config file (plain config or a previous run's manifest) under the flags.
void resolve_settings(const CLI::App* cmd, RunSettings& s, const RunFlags& f) {
  pipeline::GenerationConfig from_flags = s.config;
  bool config_has_seed = false;
  if (!f.config_path.empty()) {
    const json j = io::read_json(f.config_path);
    const json& inputs = j.contains("inputs") ? j["inputs"] : j;
    auto take = [&](const json& src, const char* key, const char* flag, auto& dst) {
      if (!given(cmd, flag) && src.contains(key) && !src[key].is_null()) {
        try {
          src[key].get_to(dst);
        } catch (const json::exception& e) {
          throw io::DataError(std::string("config key '") + key + "': " + e.what());
        }
      }
    };
    take(inputs, "input", "--input", s.input);
    take(inputs, "traj", "--traj", s.traj);
    take(inputs, "scene", "--scene", s.scene_dir);
    take(inputs, "checkpoint", "--checkpoint", s.checkpoint);
    take(inputs, "fov", "--fov", s.fov);
    if (j.contains("backend")) {
      const json& b = j["backend"];
      take(b, "name", "--backend", s.backend);
      take(b, "perturbation", "--sigma", s.perturbation);
      take(b, "color_bandwidth", "--bandwidth", s.bandwidth);
    }
    if (j.contains("schedule")) take(j["schedule"], "steps", "--steps", s.steps);
    take(j, "seed", "--seed", s.seed);
    if (j.contains("config")) {
      io::apply_config_json(j["config"], s.config);
      config_has_seed = j["config"].contains("seed");
    }
  }
  // Flags win over whatever the file set.
  if (given(cmd, "--alpha")) s.config.alpha = from_flags.alpha;
  if (given(cmd, "--context")) s.config.context_views = from_flags.context_views;
  if (given(cmd, "--inject-step")) s.config.inject_after_step = from_flags.inject_after_step;
  if (given(cmd, "--mode") || f.config_path.empty()) s.config.mode = pipeline::parse_injection_mode(f.mode);
  if (given(cmd, "--sample-axis") || f.config_path.empty()) s.config.sample_axis = pipeline::parse_sample_axis(f.sample_axis);
  if (given(cmd, "--value-source") || f.config_path.empty()) {
    s.config.value_source = pipeline::parse_value_source(f.value_source);
  }
  if (given(cmd, "--layers") || f.config_path.empty()) s.config.inject_layers = f.layers;
  if (given(cmd, "--seed") || !config_has_seed) s.config.seed = s.seed;
  s.seed = s.config.seed;
  try {
    s.config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  try {
    diffusion::parse_backend(s.backend);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (s.input.empty()) throw UsageError("--input is required");
}

struct Backend {
  std::unique_ptr<diffusion::Denoiser> denoiser;
  json description;
};

Backend make_backend(const RunSettings& s, std::shared_ptr<const scene::Scene> scene, const geometry::SphericalCamera& input_cam,
                     const geometry::CameraIntrinsics& K) {
  Backend b;
  const auto kind = diffusion::parse_backend(s.backend);
  b.description = {{"name", s.backend}};
  switch (kind) {
    case diffusion::Backend::oracle:
      b.denoiser = std::make_unique<diffusion::OracleDenoiser>(scene, input_cam, K);
      break;
    case diffusion::Backend::analytic:
      b.denoiser = std::make_unique<diffusion::AnalyticAttentionDenoiser>(
          scene, input_cam, K, diffusion::AnalyticAttentionDenoiser::Options{s.perturbation, s.bandwidth, s.seed});
      b.description["perturbation"] = s.perturbation;
      b.description["color_bandwidth"] = s.bandwidth;
      break;
    case diffusion::Backend::toyunet: {
      if (!s.checkpoint.empty()) {
        try {
          b.denoiser = std::make_unique<diffusion::ToyUNet>(diffusion::ToyUNet::load(s.checkpoint));
        } catch (const std::runtime_error& e) {
          throw io::DataError(e.what());
        }
      } else {
        diffusion::ToyUNet::Config cfg;
        cfg.width = K.width;
        cfg.height = K.height;
        b.denoiser = std::make_unique<diffusion::ToyUNet>(cfg, s.seed);
      }
      const auto& net = static_cast<const diffusion::ToyUNet&>(*b.denoiser);
      if (net.config().width != K.width || net.config().height != K.height) {
        throw io::DataError("checkpoint resolution differs from the input image");
      }
      b.description["checkpoint"] = s.checkpoint;
      b.description["init_seed"] = net.seed();
      break;
    }
  }
  return b;
}

std::shared_ptr<const scene::Scene> load_scene(const std::string& dir) {
  if (dir.empty()) return nullptr;
  return std::make_shared<const scene::Scene>(io::scene_from_json(io::read_json(fs::path(dir) / "scene.json")));
}

json settings_json(const RunSettings& s, const Backend& b, const diffusion::NoiseSchedule& sched,
                   const geometry::CameraIntrinsics& K) {
  return {{"version", versions()},
          {"seed", s.seed},
          {"inputs",
           {{"input", fs::absolute(s.input).string()},
            {"traj", s.traj.empty() ? json(nullptr) : json(fs::absolute(s.traj).string())},
            {"scene", s.scene_dir.empty() ? json(nullptr) : json(fs::absolute(s.scene_dir).string())},
            {"checkpoint", s.checkpoint.empty() ? json(nullptr) : json(fs::absolute(s.checkpoint).string())},
            {"fov", s.fov}}},
          {"backend", b.description},
          {"schedule", io::to_json(sched)},
          {"intrinsics", io::to_json(K)},
          {"config", io::to_json(s.config)}};
}

// scene gen

int cmd_scene_gen(std::uint64_t seed, const std::string& mode, const std::string& out, const std::string& traj_mode,
                  std::optional<std::uint64_t> traj_seed, int width, int height, double fov) {
  io::Fixture fx;
  fx.scene = scene::make_scene(seed, scene::parse_texture_mode(mode));
  fx.K = geometry::CameraIntrinsics::from_fov(width, height, fov);
  const auto tmode = scene::parse_trajectory_mode(traj_mode);
  const std::uint64_t tseed = traj_seed.value_or(seed);
  fx.trajectory = scene::make_trajectory(tmode, tseed);
  fx.renders.push_back(scene::render(fx.scene, fx.trajectory.input, fx.K));
  for (const auto& cam : fx.trajectory.views) fx.renders.push_back(scene::render(fx.scene, cam, fx.K));
  io::write_fixture(out, fx, tmode, tseed);
  std::cout << "wrote fixture " << out << " (" << fx.renders.size() << " views)\n";
  return 0;
}

// traj make

int cmd_traj_make(const std::string& mode, std::uint64_t seed, double radius, const std::string& out) {
  const auto tmode = scene::parse_trajectory_mode(mode);
  io::write_json(out, io::to_json(scene::make_trajectory(tmode, seed, radius), tmode, seed));
  std::cout << "wrote " << out << "\n";
  return 0;
}

// invert

int cmd_invert(const CLI::App* cmd, RunSettings s, const RunFlags& f, const std::string& out) {
  resolve_settings(cmd, s, f);
  const FeatureMap input = io::read_ppm(s.input);
  const auto K = geometry::CameraIntrinsics::from_fov(input.width(), input.height(), s.fov);
  const auto scene = load_scene(s.scene_dir);
  const geometry::SphericalCamera input_cam{30.0, 0.0, scene::kDefaultCameraRadius};
  const auto backend = make_backend(s, scene, input_cam, K);
  const auto sched = diffusion::NoiseSchedule::linear(s.steps);
  s.config.mode = pipeline::InjectionMode::off;
  const pipeline::Pipeline pl(*backend.denoiser, sched, K, s.config);
  const auto x_R = pl.invert_input(input);
  io::write_blob(out, x_R);
  json manifest = settings_json(s, backend, sched, K);
  manifest["command"] = "invert";
  manifest["output"] = fs::absolute(out).string();
  fs::path mpath = out;
  mpath.replace_extension(".manifest.json");
  io::write_json(mpath, manifest);
  std::cout << "wrote " << out << " and " << mpath.string() << "\n";
  return 0;
}

// synth

int cmd_synth(const CLI::App* cmd, RunSettings s, const RunFlags& f, const std::string& out) {
  resolve_settings(cmd, s, f);
  if (s.traj.empty()) throw UsageError("--traj is required");
  const FeatureMap input = io::read_ppm(s.input);
  const auto traj = io::trajectory_from_json(io::read_json(s.traj));
  const auto K = geometry::CameraIntrinsics::from_fov(input.width(), input.height(), s.fov);
  const auto scene = load_scene(s.scene_dir);
  if (!scene && s.backend != "toyunet") {
    for (const auto& cam : traj.views) {
      if (!diffusion::PoseDelta::between(traj.input, cam).is_zero()) {
        throw UsageError("--scene is required for backend " + s.backend + " with non-zero pose offsets");
      }
    }
  }
  const auto backend = make_backend(s, scene, traj.input, K);
  const auto sched = diffusion::NoiseSchedule::linear(s.steps);
  const pipeline::Pipeline pl(*backend.denoiser, sched, K, s.config);
  const auto run = pl.synthesize_trajectory(input, traj.input, traj.views);

  const fs::path dir = out;
  io::write_ppm(dir / "reference.ppm", run.reference.image);
  json views = json::array();
  for (std::size_t i = 0; i < run.views.size(); ++i) {
    const auto& v = run.views[i];
    const std::string file = "views/" + io::view_name(i + 1) + ".ppm";
    io::write_ppm(dir / file, v.image);
    json ctx = json::array();
    for (int c : v.context) ctx.push_back(c == pipeline::kInputView ? json("input") : json(c + 1));
    views.push_back({{"index", i + 1},
                     {"file", file},
                     {"camera", io::to_json(v.camera)},
                     {"context", ctx},
                     {"wall_ns", v.stats.wall_ns},
                     {"injections", v.stats.injections},
                     {"similarity_peak", v.stats.similarity_peak},
                     {"similarity_total", v.stats.similarity_total}});
  }
  json manifest = settings_json(s, backend, sched, K);
  manifest["command"] = "synth";
  manifest["input_camera"] = io::to_json(traj.input);
  manifest["invert_ns"] = run.invert_ns;
  manifest["reference"] = {{"file", "reference.ppm"}, {"wall_ns", run.reference.stats.wall_ns}};
  manifest["views"] = views;
  io::write_json(dir / "manifest.json", manifest);
  std::cout << "wrote " << run.views.size() << " views to " << out << "\n";
  return 0;
}

// simmap

int cmd_simmap(const std::string& fixtures, const std::vector<std::string>& queries, const std::string& pair_s,
               const std::string& mode, double bandwidth, const std::string& out) {
  const auto fx = io::load_fixture(fixtures);
  const auto [a, b] = parse_pair(pair_s, "--pair");
  const int n = static_cast<int>(fx.renders.size());
  if (a < 0 || b < 0 || a >= n || b >= n) throw UsageError("--pair indices must lie in [0, " + std::to_string(n - 1) + "]");
  const auto& target = fx.renders[a];
  const auto& reference = fx.renders[b];
  using AD = diffusion::AnalyticAttentionDenoiser;
  const auto params = AD::stage_params(bandwidth);
  const auto ft = AD::stage_features(target.rgb);
  const auto fr = AD::stage_features(reference.rgb);
  const auto ctx = attention::make_context(fr, params);
  const auto samples = geometry::build_sample_set(
      geometry::relative_pose(geometry::camera_on_sphere(reference.camera), geometry::camera_on_sphere(target.camera)),
      fx.K);
  std::vector<std::string> modes = mode == "both" ? std::vector<std::string>{"epipolar", "full"}
                                                  : std::vector<std::string>{mode};
  json summary = json::array();
  for (const auto& qs : queries) {
    const auto [x, y] = parse_pair(qs, "--query");
    if (x < 0 || y < 0 || x >= target.width() || y >= target.height()) throw UsageError("query " + qs + " outside the image");
    json entry = {{"query", {x, y}}, {"pair", {a, b}}};
    if (target.foreground(x, y)) {
      const auto corr = scene::gt_correspondence(fx.scene, target, reference, geometry::Vec2(x, y));
      entry["gt"] = {{"visible", corr.status == scene::Visibility::visible}, {"pixel", {corr.pixel.x(), corr.pixel.y()}}};
    }
    const std::size_t q = static_cast<std::size_t>(y) * target.width() + x;
    for (const auto& m : modes) {
      const auto probe = m == "epipolar" ? attention::probe_epipolar(ft, ctx, samples, params, q)
                                         : attention::probe_full(ft, ctx, params, q);
      const auto img = attention::similarity_image(probe, reference.width(), reference.height());
      const std::string file = "sim_" + io::view_name(a) + "_" + io::view_name(b) + "_" + std::to_string(x) + "_" +
                               std::to_string(y) + "_" + m + ".pgm";
      io::write_pgm(fs::path(out) / file, img, reference.width(), reference.height());
      json r = {{"file", file}};
      if (probe.argmax >= 0) {
        const auto& s = probe.positions[static_cast<std::size_t>(probe.argmax)];
        r["argmax"] = {s.u, s.v};
      }
      entry[m] = r;
    }
    summary.push_back(entry);
  }
  io::write_json(fs::path(out) / "simmap.json", {{"version", versions()}, {"fixtures", fs::absolute(fixtures).string()},
                                                {"color_bandwidth", bandwidth}, {"maps", summary}});
  std::cout << "wrote " << summary.size() * modes.size() << " maps to " << out << "\n";
  return 0;
}

// bench

int cmd_bench(const std::vector<int>& sizes, int reps, const std::string& mode, std::uint64_t seed, const std::string& out) {
  std::vector<bench::BenchRow> rows;
  bench::BenchOptions opt;
  opt.seed = seed;
  const std::vector<std::string> modes =
      mode == "both" ? std::vector<std::string>{"full", "epipolar"} : std::vector<std::string>{mode};
  try {
    for (const auto& m : modes) {
      const auto r = bench::run_scaling_bench(sizes, pipeline::parse_injection_mode(m), reps, opt);
      std::printf("%s: buffer slope %.4f, time slope %.4f\n", m.c_str(), bench::buffer_slope(r), bench::time_slope(r));
      rows.insert(rows.end(), r.begin(), r.end());
    }
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  io::write_text(out, bench::bench_csv(rows));
  return 0;
}

// eval

int cmd_eval(const std::string& run_dir, const std::string& fixtures, const std::string& out, std::string run_id) {
  const auto fx = io::load_fixture(fixtures);
  const json manifest = io::read_json(fs::path(run_dir) / "manifest.json");
  if (run_id.empty()) run_id = fs::path(run_dir).filename().string();
  std::vector<eval::MetricRow> rows;
  std::vector<FeatureMap> images;
  std::vector<const scene::RenderedView*> gts;
  try {
    images.push_back(fx.renders.at(0).rgb);
    gts.push_back(&fx.renders[0]);
    for (const auto& v : manifest.at("views")) {
      const std::size_t idx = v.at("index").get<std::size_t>();
      if (idx >= fx.renders.size()) throw io::DataError("run view " + std::to_string(idx) + " has no fixture view");
      const auto cam = io::camera_from_json(v.at("camera"));
      const auto& gt = fx.renders[idx];
      if (std::abs(cam.elevation_deg - gt.camera.elevation_deg) > 1e-9 ||
          std::abs(cam.azimuth_deg - gt.camera.azimuth_deg) > 1e-9 || std::abs(cam.radius - gt.camera.radius) > 1e-9) {
        throw io::DataError("run view " + std::to_string(idx) + " camera differs from the fixture");
      }
      images.push_back(io::read_ppm(fs::path(run_dir) / v.at("file").get<std::string>()));
      if (!images.back().same_shape(gt.rgb)) throw io::DataError("run view " + std::to_string(idx) + " size differs");
      gts.push_back(&gt);
      const std::string pair = io::view_name(idx) + "-gt";
      rows.push_back({run_id, "psnr", pair, eval::psnr(images.back(), gt.rgb)});
      rows.push_back({run_id, "ssim", pair, eval::ssim(images.back(), gt.rgb)});
    }
  } catch (const json::exception& e) {
    throw io::DataError(std::string("manifest: ") + e.what());
  }
  std::vector<eval::ConsistencyView> views;
  for (std::size_t i = 0; i < images.size(); ++i) views.push_back({&images[i], gts[i]});
  const auto rep = eval::reprojection_consistency(fx.scene, views);
  auto index_of = [&](int k) {
    return k == 0 ? std::string("000") : io::view_name(manifest["views"][k - 1]["index"].get<std::size_t>());
  };
  for (const auto& p : rep.pairs) {
    rows.push_back({run_id, "reprojection_error", index_of(p.a) + "-" + index_of(p.b),
                    p.error.value_or(std::numeric_limits<double>::quiet_NaN())});
  }
  rows.push_back({run_id, "reprojection_error_mean", "all", rep.mean.value_or(std::numeric_limits<double>::quiet_NaN())});
  io::write_text(out, eval::metrics_csv(rows));
  std::cout << "wrote " << rows.size() << " metric rows to " << out << "\n";
  return 0;
}

// train-toy

int cmd_train_toy(const std::string& fixtures, int steps, const std::string& out, std::uint64_t seed, double lr,
                  int schedule_steps) {
  const auto fx = io::load_fixture(fixtures);
  diffusion::ToyUNet::Config cfg;
  cfg.width = fx.K.width;
  cfg.height = fx.K.height;
  diffusion::ToyUNet net(cfg, seed);
  std::vector<diffusion::ToyUNet::TrainSample> samples;
  const auto& input = fx.renders.at(0);
  for (std::size_t i = 1; i < fx.renders.size(); ++i) {
    samples.push_back({fx.renders[i].rgb, input.rgb, diffusion::PoseDelta::between(input.camera, fx.renders[i].camera)});
  }
  const auto sched = diffusion::NoiseSchedule::linear(schedule_steps);
  const auto report = net.train_output_layer(samples, sched, steps, lr, seed);
  net.save(out);
  fs::path mpath = out;
  mpath.replace_extension(".manifest.json");
  io::write_json(mpath, {{"command", "train-toy"},
                         {"version", versions()},
                         {"seed", seed},
                         {"fixtures", fs::absolute(fixtures).string()},
                         {"steps", steps},
                         {"learning_rate", lr},
                         {"schedule", io::to_json(sched)},
                         {"initial_loss", report.initial_loss},
                         {"final_loss", report.final_loss}});
  std::printf("loss %.6f -> %.6f\n", report.initial_loss, report.final_loss);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"epiview: training-free epipolar attention for consistent novel views"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // scene gen
  auto* scene_cmd = app.add_subcommand("scene", "synthetic scene fixtures");
  scene_cmd->require_subcommand(1);
  auto* gen = scene_cmd->add_subcommand("gen", "render a fixture directory");
  std::uint64_t gen_seed = 0;
  std::string gen_mode = "distinctive", gen_out, gen_traj = "free16";
  std::optional<std::uint64_t> gen_traj_seed;
  int gen_w = 32, gen_h = 32;
  double gen_fov = 50.0;
  gen->add_option("--seed", gen_seed, "scene seed")->required();
  gen->add_option("--mode", gen_mode, "distinctive | plain")->check(CLI::IsMember({"distinctive", "plain"}));
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--traj", gen_traj, "free16 | fixed16 | free32")->check(CLI::IsMember({"free16", "fixed16", "free32"}));
  gen->add_option("--traj-seed", gen_traj_seed, "trajectory seed (default: scene seed)");
  gen->add_option("--width", gen_w, "render width")->check(CLI::Range(4, 4096));
  gen->add_option("--height", gen_h, "render height")->check(CLI::Range(4, 4096));
  gen->add_option("--fov", gen_fov, "horizontal field of view, degrees")->check(CLI::Range(1.0, 179.0));

  // traj make
  auto* traj_cmd = app.add_subcommand("traj", "camera trajectories");
  traj_cmd->require_subcommand(1);
  auto* make = traj_cmd->add_subcommand("make", "write a trajectory file");
  std::string traj_mode = "free16", traj_out;
  std::uint64_t traj_seed = 0;
  double traj_radius = scene::kDefaultCameraRadius;
  make->add_option("--mode", traj_mode, "free16 | fixed16 | free32")->check(CLI::IsMember({"free16", "fixed16", "free32"}));
  make->add_option("--seed", traj_seed, "trajectory seed");
  make->add_option("--radius", traj_radius, "camera distance")->check(CLI::PositiveNumber);
  make->add_option("--out", traj_out, "output JSON")->required();

  // invert
  auto* inv = app.add_subcommand("invert", "DDIM-invert an input image to its initial noise");
  RunSettings inv_s;
  RunFlags inv_f;
  std::string inv_out;
  add_run_options(inv, inv_s, inv_f, false);
  inv->add_option("--out", inv_out, "noise blob")->required();

  // synth
  auto* syn = app.add_subcommand("synth", "generate a view trajectory from one input image");
  RunSettings syn_s;
  RunFlags syn_f;
  std::string syn_out;
  add_run_options(syn, syn_s, syn_f, true);
  syn->add_option("--out", syn_out, "output directory")->required();

  // simmap
  auto* sim = app.add_subcommand("simmap", "dump attention similarity maps for query pixels");
  std::string sim_fix, sim_pair, sim_mode = "both", sim_out;
  std::vector<std::string> sim_queries;
  double sim_bw = 0.1;
  sim->add_option("--fixtures", sim_fix, "fixture directory")->required();
  sim->add_option("--query", sim_queries, "target pixel x,y (repeatable)")->required();
  sim->add_option("--pair", sim_pair, "target,reference view indices")->required();
  sim->add_option("--mode", sim_mode, "epipolar | full | both")->check(CLI::IsMember({"epipolar", "full", "both"}));
  sim->add_option("--bandwidth", sim_bw, "colour kernel width")->check(CLI::PositiveNumber);
  sim->add_option("--out", sim_out, "output directory")->required();

  // bench
  auto* ben = app.add_subcommand("bench", "attention scaling benchmark");
  std::vector<int> ben_sizes{8, 16, 32, 64};
  int ben_reps = 3;
  std::string ben_mode = "both", ben_out;
  std::uint64_t ben_seed = 7;
  ben->add_option("--sizes", ben_sizes, "grid sizes L")->delimiter(',');
  ben->add_option("--reps", ben_reps, "repetitions per size (>= 3)");
  ben->add_option("--mode", ben_mode, "epipolar | full | both")->check(CLI::IsMember({"epipolar", "full", "both"}));
  ben->add_option("--seed", ben_seed, "feature/pose seed");
  ben->add_option("--out", ben_out, "CSV output")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "metrics of a synth run against its fixture");
  std::string ev_run, ev_fix, ev_out, ev_id;
  ev->add_option("--run", ev_run, "synth output directory")->required();
  ev->add_option("--fixtures", ev_fix, "fixture directory")->required();
  ev->add_option("--out", ev_out, "CSV output")->required();
  ev->add_option("--run-id", ev_id, "run identifier (default: run directory name)");

  // train-toy
  auto* tr = app.add_subcommand("train-toy", "fit the ToyUNet output layer on a fixture");
  std::string tr_scene, tr_out;
  int tr_steps = 200, tr_sched = 50;
  std::uint64_t tr_seed = 0;
  double tr_lr = 1e-2;
  tr->add_option("--scene", tr_scene, "fixture directory")->required();
  tr->add_option("--steps", tr_steps, "optimizer steps")->check(CLI::NonNegativeNumber);
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--seed", tr_seed, "init and noise seed");
  tr->add_option("--lr", tr_lr, "learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--schedule-steps", tr_sched, "DDIM steps T of the schedule")->check(CLI::Range(1, 1000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", 2, e.what());
  }

  try {
    if (*gen) return cmd_scene_gen(gen_seed, gen_mode, gen_out, gen_traj, gen_traj_seed, gen_w, gen_h, gen_fov);
    if (*make) return cmd_traj_make(traj_mode, traj_seed, traj_radius, traj_out);
    if (*inv) return cmd_invert(inv, inv_s, inv_f, inv_out);
    if (*syn) return cmd_synth(syn, syn_s, syn_f, syn_out);
    if (*sim) return cmd_simmap(sim_fix, sim_queries, sim_pair, sim_mode, sim_bw, sim_out);
    if (*ben) return cmd_bench(ben_sizes, ben_reps, ben_mode, ben_seed, ben_out);
    if (*ev) return cmd_eval(ev_run, ev_fix, ev_out, ev_id);
    if (*tr) return cmd_train_toy(tr_scene, tr_steps, tr_out, tr_seed, tr_lr, tr_sched);
  } catch (const UsageError& e) {
    return fail("usage", 2, e.what());
  } catch (const io::DataError& e) {
    return fail("data", 3, e.what());
  } catch (const std::invalid_argument& e) {
    return fail("data", 3, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail("data", 3, e.what());
  } catch (const std::exception& e) {
    return fail("internal", 4, e.what());
  }
  return fail("usage", 2, "no command given");
}
