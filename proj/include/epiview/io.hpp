#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "epiview/diffusion.hpp"
#include "epiview/pipeline.hpp"
#include "epiview/scene.hpp"

namespace epiview::io {

namespace fs = std::filesystem;
using nlohmann::json;
using numerics::FeatureMap;

/// Malformed or missing input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary P6, maxval 255. Values are clamped to [0, 1] and rounded.
void write_ppm(const fs::path& path, const FeatureMap& rgb);
FeatureMap read_ppm(const fs::path& path);
/// Binary P5 of a W x H grid of values in [0, 1].
void write_pgm(const fs::path& path, const std::vector<double>& values, int width, int height);

/// Raw little-endian f32, row-major, +inf on background, plus a JSON sidecar
/// next to it (same stem, .json).
void write_depth(const fs::path& path, const std::vector<double>& depth, int width, int height);
std::vector<double> read_depth(const fs::path& path, int& width, int& height);

/// "EPVB", u32 height, width, channels, then little-endian f64 values.
void write_blob(const fs::path& path, const FeatureMap& fm);
FeatureMap read_blob(const fs::path& path);

json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& j);
void write_text(const fs::path& path, const std::string& text);

json to_json(const geometry::SphericalCamera& cam);
json to_json(const geometry::CameraIntrinsics& K);
json to_json(const scene::Scene& scene);
json to_json(const scene::Trajectory& traj, scene::TrajectoryMode mode, std::uint64_t seed);
json to_json(const pipeline::GenerationConfig& cfg);
json to_json(const diffusion::NoiseSchedule& sched);

/// Accepts {elevation_deg, azimuth_deg, radius} or {R: 9 row-major, t: 3}.
/// The R/t form must be a look-at camera on a sphere around the origin.
geometry::SphericalCamera camera_from_json(const json& j);
geometry::CameraIntrinsics intrinsics_from_json(const json& j);
scene::Scene scene_from_json(const json& j);
scene::Trajectory trajectory_from_json(const json& j);
/// Overlays the keys present in j onto cfg.
void apply_config_json(const json& j, pipeline::GenerationConfig& cfg);

/// scene.json, cameras.json, views/NNN.ppm and depth/NNN.f32 (+ .json).
/// View 000 is the input camera, followed by the trajectory views.
struct Fixture {
  scene::Scene scene;
  geometry::CameraIntrinsics K;
  scene::Trajectory trajectory;
  std::vector<scene::RenderedView> renders;  // input first
};

void write_fixture(const fs::path& dir, const Fixture& fixture, scene::TrajectoryMode mode, std::uint64_t traj_seed);
/// Loads geometry and re-renders; fails if the stored images disagree.
Fixture load_fixture(const fs::path& dir);

std::string view_name(std::size_t index);  // "000"

}  // namespace epiview::io
