#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "epiview/geometry.hpp"
#include "epiview/numerics.hpp"

namespace epiview::scene {

using geometry::CameraIntrinsics;
using geometry::SphericalCamera;
using geometry::Vec2;
using geometry::Vec3;
using numerics::FeatureMap;

enum class TextureMode { distinctive, plain };
enum class PrimitiveKind { sphere, box, point };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::sphere;
  Vec3 center = Vec3::Zero();
  double radius = 0.0;                  // sphere
  Vec3 half_extent = Vec3::Zero();      // axis-aligned box
  Vec3 base_color = Vec3::Constant(0.5);
  // Distinctive texture: channel k is 0.1 + 0.8 * (0.5 + 0.5 sin(wave[k] . (X - center) + phase[k])).
  geometry::Mat3 wave = geometry::Mat3::Zero();
  Vec3 phase = Vec3::Zero();
};

struct Hit {
  double depth = 0.0;  // ray parameter; equals camera-frame z for camera rays
  int primitive = -1;
  Vec3 point = Vec3::Zero();
};

struct Scene {
  std::uint64_t seed = 0;
  TextureMode mode = TextureMode::distinctive;
  std::vector<Primitive> primitives;
  double bounding_radius = 1.0;
  Vec3 background = Vec3::Ones();

  /// Nearest sphere/box hit of origin + s * dir for s > min_depth. Points are
  /// not ray-traced; they only enter renders through the z-buffer.
  std::optional<Hit> intersect(const Vec3& origin, const Vec3& dir, double min_depth = 1e-9) const;
  Vec3 color_at(int primitive, const Vec3& point) const;
};

/// Random spheres and one box inside the unit sphere. Distinctive mode gives
/// every surface point a smoothly varying, locally unique colour; plain mode
/// paints each primitive a single flat colour.
Scene make_scene(std::uint64_t seed, TextureMode mode);

struct RenderedView {
  FeatureMap rgb;                // H x W x 3 in [0, 1]
  std::vector<double> depth;     // camera-frame z; +inf on background
  std::vector<int> primitive;    // primitive id per pixel; -1 on background
  SphericalCamera camera;
  CameraIntrinsics K;

  int width() const { return K.width; }
  int height() const { return K.height; }
  double depth_at(int x, int y) const { return depth[static_cast<std::size_t>(y) * K.width + x]; }
  int primitive_at(int x, int y) const { return primitive[static_cast<std::size_t>(y) * K.width + x]; }
  bool foreground(int x, int y) const { return primitive_at(x, y) >= 0; }
};

/// Ray-cast pinhole render (one ray per pixel centre) with a z-buffer for
/// point primitives.
RenderedView render(const Scene& scene, const SphericalCamera& cam, const CameraIntrinsics& K);

enum class Visibility { visible, occluded, out_of_frame };

struct Correspondence {
  Visibility status = Visibility::out_of_frame;
  Vec2 pixel = Vec2::Zero();  // continuous pixel in view b
  Vec3 world = Vec3::Zero();
};

inline constexpr double kOcclusionTolerance = 1e-4;

/// Surface point seen through (sub-pixel) p of view a, if any.
std::optional<Hit> surface_at(const Scene& scene, const RenderedView& view, const Vec2& p);

/// Ground-truth correspondence of pixel p of view a in view b, by ray-casting
/// a, reprojecting into b and re-casting b's ray. Throws std::invalid_argument
/// for a background pixel.
Correspondence gt_correspondence(const Scene& scene, const RenderedView& a, const RenderedView& b, const Vec2& p);

enum class TrajectoryMode { free16, fixed16, free32 };

struct Trajectory {
  SphericalCamera input;
  std::vector<SphericalCamera> views;
};

inline constexpr double kDefaultCameraRadius = 2.5;

/// free16/free32: azimuths k * 360 / N, elevations sweep [-10, 40] degrees
/// sinusoidally around the circle with a seeded phase. fixed16: elevation 30,
/// azimuths k * 22.5. The input camera sits at azimuth 0 with the elevation
/// of the first view.
Trajectory make_trajectory(TrajectoryMode mode, std::uint64_t seed, double radius = kDefaultCameraRadius);

TrajectoryMode parse_trajectory_mode(const std::string& s);
std::string to_string(TrajectoryMode mode);
TextureMode parse_texture_mode(const std::string& s);
std::string to_string(TextureMode mode);

}  // namespace epiview::scene
