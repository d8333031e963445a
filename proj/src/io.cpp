#include "epiview/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace epiview::io {

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

template <class T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b, sizeof(U));
}

template <class T>
T get_le(std::istream& in, const fs::path& path) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) throw DataError("truncated file " + path.string());
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(b[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

// Next whitespace-delimited header token, skipping # comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int pnm_int(std::istream& in, const fs::path& path) {
  const std::string tok = pnm_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError("bad PNM header in " + path.string());
  }
}

unsigned char quantize(double v) {
  if (!std::isfinite(v)) v = 0.0;
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<double> vec(const geometry::Vec3& v) { return {v.x(), v.y(), v.z()}; }

geometry::Vec3 vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw DataError(std::string(what) + ": expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

const char* kind_name(scene::PrimitiveKind k) {
  switch (k) {
    case scene::PrimitiveKind::sphere: return "sphere";
    case scene::PrimitiveKind::box: return "box";
    case scene::PrimitiveKind::point: return "point";
  }
  return "sphere";
}

}  // namespace

void write_ppm(const fs::path& path, const FeatureMap& rgb) {
  if (rgb.channels() != 3) throw std::invalid_argument("write_ppm: expected 3 channels");
  auto out = open_out(path);
  out << "P6\n" << rgb.width() << ' ' << rgb.height() << "\n255\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(rgb.data().size());
  for (double v : rgb.data()) bytes.push_back(quantize(v));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

FeatureMap read_ppm(const fs::path& path) {
  auto in = open_in(path);
  if (pnm_token(in) != "P6") throw DataError(path.string() + " is not a binary PPM (P6)");
  const int w = pnm_int(in, path);
  const int h = pnm_int(in, path);
  const int maxval = pnm_int(in, path);
  if (maxval > 255) throw DataError(path.string() + ": only 8-bit PPM is supported");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw DataError("truncated PPM " + path.string());
  }
  FeatureMap fm(h, w, 3);
  auto d = fm.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) d[i] = static_cast<double>(bytes[i]) / maxval;
  return fm;
}

void write_pgm(const fs::path& path, const std::vector<double>& values, int width, int height) {
  if (values.size() != static_cast<std::size_t>(width) * height) throw std::invalid_argument("write_pgm: size mismatch");
  auto out = open_out(path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (double v : values) out.put(static_cast<char>(quantize(v)));
  if (!out) throw DataError("failed writing " + path.string());
}

void write_depth(const fs::path& path, const std::vector<double>& depth, int width, int height) {
  if (depth.size() != static_cast<std::size_t>(width) * height) throw std::invalid_argument("write_depth: size mismatch");
  auto out = open_out(path);
  for (double d : depth) put_le(out, static_cast<float>(d));
  if (!out) throw DataError("failed writing " + path.string());
  fs::path sidecar = path;
  sidecar.replace_extension(".json");
  write_json(sidecar, {{"width", width},
                       {"height", height},
                       {"dtype", "float32"},
                       {"byte_order", "little"},
                       {"layout", "row-major"},
                       {"quantity", "camera-frame z"},
                       {"background", "inf"}});
}

std::vector<double> read_depth(const fs::path& path, int& width, int& height) {
  fs::path sidecar = path;
  sidecar.replace_extension(".json");
  const json meta = read_json(sidecar);
  try {
    width = meta.at("width").get<int>();
    height = meta.at("height").get<int>();
  } catch (const json::exception& e) {
    throw DataError(sidecar.string() + ": " + e.what());
  }
  auto in = open_in(path);
  std::vector<double> depth(static_cast<std::size_t>(width) * height);
  for (auto& d : depth) d = get_le<float>(in, path);
  return depth;
}

void write_blob(const fs::path& path, const FeatureMap& fm) {
  auto out = open_out(path);
  out.write("EPVB", 4);
  put_le(out, static_cast<std::uint32_t>(fm.height()));
  put_le(out, static_cast<std::uint32_t>(fm.width()));
  put_le(out, static_cast<std::uint32_t>(fm.channels()));
  for (double v : fm.data()) put_le(out, v);
  if (!out) throw DataError("failed writing " + path.string());
}

FeatureMap read_blob(const fs::path& path) {
  auto in = open_in(path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "EPVB", 4) != 0) throw DataError(path.string() + " is not a feature blob");
  const auto h = get_le<std::uint32_t>(in, path);
  const auto w = get_le<std::uint32_t>(in, path);
  const auto c = get_le<std::uint32_t>(in, path);
  if (h == 0 || w == 0 || c == 0 || static_cast<std::uint64_t>(h) * w * c > (1ull << 28)) {
    throw DataError(path.string() + ": implausible blob shape");
  }
  FeatureMap fm(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (auto& v : fm.data()) v = get_le<double>(in, path);
  return fm;
}

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

json to_json(const geometry::SphericalCamera& cam) {
  return {{"elevation_deg", cam.elevation_deg}, {"azimuth_deg", cam.azimuth_deg}, {"radius", cam.radius}};
}

json to_json(const geometry::CameraIntrinsics& K) {
  return {{"f", K.f}, {"cx", K.cx}, {"cy", K.cy}, {"width", K.width}, {"height", K.height}};
}

json to_json(const scene::Scene& s) {
  json prims = json::array();
  for (const auto& p : s.primitives) {
    std::vector<double> wave;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) wave.push_back(p.wave(r, c));
    prims.push_back({{"kind", kind_name(p.kind)},
                     {"center", vec(p.center)},
                     {"radius", p.radius},
                     {"half_extent", vec(p.half_extent)},
                     {"base_color", vec(p.base_color)},
                     {"wave", wave},
                     {"phase", vec(p.phase)}});
  }
  return {{"seed", s.seed},
          {"mode", scene::to_string(s.mode)},
          {"bounding_radius", s.bounding_radius},
          {"background", vec(s.background)},
          {"primitives", prims}};
}

json to_json(const scene::Trajectory& traj, scene::TrajectoryMode mode, std::uint64_t seed) {
  json views = json::array();
  for (const auto& v : traj.views) views.push_back(to_json(v));
  return {{"mode", scene::to_string(mode)}, {"seed", seed}, {"input", to_json(traj.input)}, {"views", views}};
}

json to_json(const pipeline::GenerationConfig& cfg) {
  return {{"alpha", cfg.alpha},
          {"context_views", cfg.context_views},
          {"inject_after_step", cfg.inject_after_step},
          {"inject_layers", cfg.inject_layers},
          {"mode", pipeline::to_string(cfg.mode)},
          {"sample_axis", pipeline::to_string(cfg.sample_axis)},
          {"value_source", pipeline::to_string(cfg.value_source)},
          {"apply_out_proj", cfg.apply_out_proj},
          {"seed", cfg.seed}};
}

json to_json(const diffusion::NoiseSchedule& sched) {
  const auto& s = sched.spec();
  return {{"kind", "linear"},
          {"steps", sched.steps()},
          {"train_steps", s.train_steps},
          {"beta_start", s.beta_start},
          {"beta_end", s.beta_end}};
}

geometry::SphericalCamera camera_from_json(const json& j) {
  try {
    if (j.contains("elevation_deg")) {
      geometry::SphericalCamera cam{j.at("elevation_deg").get<double>(), j.at("azimuth_deg").get<double>(),
                                    j.value("radius", scene::kDefaultCameraRadius)};
      cam.validate();
      return cam;
    }
    const auto r = j.at("R").get<std::vector<double>>();
    const auto t = j.at("t").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw DataError("pose R must have 9 entries and t 3");
    geometry::Extrinsics ext;
    for (int i = 0; i < 9; ++i) ext.R(i / 3, i % 3) = r[i];
    ext.t = {t[0], t[1], t[2]};
    const geometry::Vec3 c = ext.center();
    const double radius = c.norm();
    if (!(radius > 0)) throw DataError("pose: camera centre at the origin");
    geometry::SphericalCamera cam{std::asin(std::clamp(c.z() / radius, -1.0, 1.0)) * 180.0 / std::numbers::pi,
                                  std::atan2(c.y(), c.x()) * 180.0 / std::numbers::pi, radius};
    const auto check = geometry::camera_on_sphere(cam);
    if ((check.R - ext.R).cwiseAbs().maxCoeff() > 1e-6) throw DataError("pose: R is not a look-at rotation toward the origin");
    return cam;
  } catch (const json::exception& e) {
    throw DataError(std::string("pose: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("pose: ") + e.what());
  }
}

geometry::CameraIntrinsics intrinsics_from_json(const json& j) {
  try {
    geometry::CameraIntrinsics K;
    K.f = j.at("f").get<double>();
    K.cx = j.at("cx").get<double>();
    K.cy = j.at("cy").get<double>();
    K.width = j.at("width").get<int>();
    K.height = j.at("height").get<int>();
    K.validate();
    return K;
  } catch (const json::exception& e) {
    throw DataError(std::string("intrinsics: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("intrinsics: ") + e.what());
  }
}

scene::Scene scene_from_json(const json& j) {
  try {
    scene::Scene s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.mode = scene::parse_texture_mode(j.at("mode").get<std::string>());
    s.bounding_radius = j.value("bounding_radius", 1.0);
    if (j.contains("background")) s.background = vec3(j["background"], "background");
    for (const auto& p : j.at("primitives")) {
      scene::Primitive prim;
      const std::string kind = p.at("kind");
      if (kind == "sphere") prim.kind = scene::PrimitiveKind::sphere;
      else if (kind == "box") prim.kind = scene::PrimitiveKind::box;
      else if (kind == "point") prim.kind = scene::PrimitiveKind::point;
      else throw DataError("scene: unknown primitive kind " + kind);
      prim.center = vec3(p.at("center"), "center");
      prim.radius = p.value("radius", 0.0);
      if (p.contains("half_extent")) prim.half_extent = vec3(p["half_extent"], "half_extent");
      prim.base_color = vec3(p.at("base_color"), "base_color");
      if (p.contains("wave")) {
        const auto w = p["wave"].get<std::vector<double>>();
        if (w.size() != 9) throw DataError("scene: wave must have 9 entries");
        for (int i = 0; i < 9; ++i) prim.wave(i / 3, i % 3) = w[i];
      }
      if (p.contains("phase")) prim.phase = vec3(p["phase"], "phase");
      s.primitives.push_back(prim);
    }
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("scene: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("scene: ") + e.what());
  }
}

scene::Trajectory trajectory_from_json(const json& j) {
  try {
    scene::Trajectory t;
    t.input = camera_from_json(j.at("input"));
    for (const auto& v : j.at("views")) t.views.push_back(camera_from_json(v));
    return t;
  } catch (const json::exception& e) {
    throw DataError(std::string("trajectory: ") + e.what());
  }
}

void apply_config_json(const json& j, pipeline::GenerationConfig& cfg) {
  try {
    if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
    if (j.contains("context_views")) cfg.context_views = j["context_views"].get<int>();
    if (j.contains("inject_after_step")) cfg.inject_after_step = j["inject_after_step"].get<int>();
    if (j.contains("inject_layers")) cfg.inject_layers = j["inject_layers"].get<std::vector<std::string>>();
    if (j.contains("mode")) cfg.mode = pipeline::parse_injection_mode(j["mode"].get<std::string>());
    if (j.contains("sample_axis")) cfg.sample_axis = pipeline::parse_sample_axis(j["sample_axis"].get<std::string>());
    if (j.contains("value_source")) cfg.value_source = pipeline::parse_value_source(j["value_source"].get<std::string>());
    if (j.contains("apply_out_proj")) cfg.apply_out_proj = j["apply_out_proj"].get<bool>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
}

std::string view_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", index);
  return buf;
}

void write_fixture(const fs::path& dir, const Fixture& fx, scene::TrajectoryMode mode, std::uint64_t traj_seed) {
  fs::create_directories(dir / "views");
  fs::create_directories(dir / "depth");
  write_json(dir / "scene.json", to_json(fx.scene));
  json cams = to_json(fx.trajectory, mode, traj_seed);
  cams["intrinsics"] = to_json(fx.K);
  json files = json::array();
  for (std::size_t i = 0; i < fx.renders.size(); ++i) {
    const auto& r = fx.renders[i];
    const std::string name = view_name(i);
    write_ppm(dir / "views" / (name + ".ppm"), r.rgb);
    write_depth(dir / "depth" / (name + ".f32"), r.depth, r.width(), r.height());
    json entry = to_json(r.camera);
    entry["image"] = "views/" + name + ".ppm";
    entry["depth"] = "depth/" + name + ".f32";
    files.push_back(entry);
  }
  cams["renders"] = files;
  write_json(dir / "cameras.json", cams);
}

Fixture load_fixture(const fs::path& dir) {
  Fixture fx;
  fx.scene = scene_from_json(read_json(dir / "scene.json"));
  const json cams = read_json(dir / "cameras.json");
  try {
    fx.K = intrinsics_from_json(cams.at("intrinsics"));
    fx.trajectory = trajectory_from_json(cams);
    for (const auto& entry : cams.at("renders")) {
      const auto cam = camera_from_json(entry);
      auto view = scene::render(fx.scene, cam, fx.K);
      const FeatureMap stored = read_ppm(dir / entry.at("image").get<std::string>());
      if (!stored.same_shape(view.rgb)) throw DataError("fixture image size differs from cameras.json");
      const auto a = stored.data();
      const auto b = view.rgb.data();
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::lround(a[i] * 255.0) != quantize(b[i])) {
          throw DataError("fixture image " + entry.at("image").get<std::string>() + " does not match scene.json");
        }
      }
      fx.renders.push_back(std::move(view));
    }
  } catch (const json::exception& e) {
    throw DataError("cameras.json: " + std::string(e.what()));
  }
  return fx;
}

}  // namespace epiview::io
