#include "epiview/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace epiview::scene {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::optional<double> hit_sphere(const Primitive& s, const Vec3& o, const Vec3& d, double min_depth) {
  const Vec3 oc = o - s.center;
  const double a = d.squaredNorm();
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - a * c;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  for (double t : {(-b - root) / a, (-b + root) / a}) {
    if (t > min_depth) return t;
  }
  return std::nullopt;
}

std::optional<double> hit_box(const Primitive& bx, const Vec3& o, const Vec3& d, double min_depth) {
  double t0 = -kInf;
  double t1 = kInf;
  for (int k = 0; k < 3; ++k) {
    const double lo = bx.center[k] - bx.half_extent[k];
    const double hi = bx.center[k] + bx.half_extent[k];
    if (d[k] == 0.0) {
      if (o[k] < lo || o[k] > hi) return std::nullopt;
      continue;
    }
    double a = (lo - o[k]) / d[k];
    double b = (hi - o[k]) / d[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  }
  if (t0 > t1) return std::nullopt;
  if (t0 > min_depth) return t0;
  if (t1 > min_depth) return t1;
  return std::nullopt;
}

// Ray through a continuous pixel: origin at the camera centre, direction
// scaled so the ray parameter equals camera-frame depth.
std::pair<Vec3, Vec3> pixel_ray(const geometry::Extrinsics& ext, const CameraIntrinsics& K, const Vec2& p) {
  return {ext.center(), ext.R.transpose() * K.normalize(p)};
}

Vec3 hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h * 6.0, 6.0);
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Vec3 rgb;
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  return rgb + Vec3::Constant(v - c);
}

}  // namespace

std::optional<Hit> Scene::intersect(const Vec3& origin, const Vec3& dir, double min_depth) const {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const Primitive& p = primitives[i];
    std::optional<double> t;
    if (p.kind == PrimitiveKind::sphere) t = hit_sphere(p, origin, dir, min_depth);
    else if (p.kind == PrimitiveKind::box) t = hit_box(p, origin, dir, min_depth);
    if (t && (!best || *t < best->depth)) best = Hit{*t, static_cast<int>(i), origin + *t * dir};
  }
  return best;
}

Vec3 Scene::color_at(int primitive, const Vec3& point) const {
  const Primitive& p = primitives.at(primitive);
  if (mode == TextureMode::plain) return p.base_color;
  const Vec3 local = point - p.center;
  Vec3 c;
  for (int k = 0; k < 3; ++k) {
    c[k] = 0.1 + 0.8 * (0.5 + 0.5 * std::sin(p.wave.row(k).dot(local) + p.phase[k]));
  }
  return c;
}

Scene make_scene(std::uint64_t seed, TextureMode mode) {
  numerics::Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto random_direction = [&]() {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 v(n(rng), n(rng), n(rng));
    return Vec3(v.normalized());
  };

  Scene scene;
  scene.seed = seed;
  scene.mode = mode;
  const double hue0 = unit(rng);
  auto add_texture = [&](Primitive& p, int index) {
    p.base_color = hsv_to_rgb(std::fmod(hue0 + 0.27 * index, 1.0), 0.75, 0.9);
    for (int k = 0; k < 3; ++k) {
      p.wave.row(k) = uniform(4.0, 7.0) * random_direction().transpose();
      p.phase[k] = uniform(0.0, 2.0 * std::numbers::pi);
    }
  };

  Primitive core;
  core.kind = PrimitiveKind::sphere;
  core.radius = uniform(0.35, 0.5);
  add_texture(core, 0);
  scene.primitives.push_back(core);

  const int satellites = 2;
  for (int i = 0; i < satellites; ++i) {
    Primitive s;
    s.kind = PrimitiveKind::sphere;
    s.radius = uniform(0.15, 0.28);
    s.center = uniform(0.35, 0.85 - s.radius) * random_direction();
    add_texture(s, i + 1);
    scene.primitives.push_back(s);
  }

  Primitive box;
  box.kind = PrimitiveKind::box;
  box.half_extent = Vec3(uniform(0.12, 0.22), uniform(0.12, 0.22), uniform(0.12, 0.22));
  box.center = uniform(0.3, 0.9 - box.half_extent.norm()) * random_direction();
  add_texture(box, satellites + 1);
  scene.primitives.push_back(box);

  scene.bounding_radius = 1.0;
  return scene;
}

RenderedView render(const Scene& scene, const SphericalCamera& cam, const CameraIntrinsics& K) {
  K.validate();
  const geometry::Extrinsics ext = geometry::camera_on_sphere(cam);
  RenderedView view;
  view.camera = cam;
  view.K = K;
  view.rgb = FeatureMap(K.height, K.width, 3);
  view.depth.assign(static_cast<std::size_t>(K.width) * K.height, kInf);
  view.primitive.assign(view.depth.size(), -1);

  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const auto [origin, dir] = pixel_ray(ext, K, Vec2(x, y));
      const std::size_t i = static_cast<std::size_t>(y) * K.width + x;
      Vec3 color = scene.background;
      if (const auto hit = scene.intersect(origin, dir)) {
        view.depth[i] = hit->depth;
        view.primitive[i] = hit->primitive;
        color = scene.color_at(hit->primitive, hit->point);
      }
      for (int c = 0; c < 3; ++c) view.rgb.at(y, x, c) = color[c];
    }
  }

  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    if (p.kind != PrimitiveKind::point) continue;
    const Vec3 xc = ext.to_camera(p.center);
    if (xc.z() <= 0.0) continue;
    const Vec2 uv = K.to_pixel(xc);
    const int x = static_cast<int>(std::lround(uv.x()));
    const int y = static_cast<int>(std::lround(uv.y()));
    if (x < 0 || y < 0 || x >= K.width || y >= K.height) continue;
    const std::size_t idx = static_cast<std::size_t>(y) * K.width + x;
    if (xc.z() >= view.depth[idx]) continue;
    view.depth[idx] = xc.z();
    view.primitive[idx] = static_cast<int>(i);
    for (int c = 0; c < 3; ++c) view.rgb.at(y, x, c) = p.base_color[c];
  }
  return view;
}

std::optional<Hit> surface_at(const Scene& scene, const RenderedView& view, const Vec2& p) {
  const geometry::Extrinsics ext = geometry::camera_on_sphere(view.camera);
  const int x = static_cast<int>(std::lround(p.x()));
  const int y = static_cast<int>(std::lround(p.y()));
  if (x >= 0 && y >= 0 && x < view.width() && y < view.height()) {
    const int prim = view.primitive_at(x, y);
    if (prim >= 0 && scene.primitives[prim].kind == PrimitiveKind::point) {
      const Vec3 world = scene.primitives[prim].center;
      return Hit{ext.to_camera(world).z(), prim, world};
    }
  }
  const auto [origin, dir] = pixel_ray(ext, view.K, p);
  return scene.intersect(origin, dir);
}

Correspondence gt_correspondence(const Scene& scene, const RenderedView& a, const RenderedView& b, const Vec2& p) {
  const auto hit = surface_at(scene, a, p);
  if (!hit) throw std::invalid_argument("gt_correspondence: background pixel");

  Correspondence out;
  out.world = hit->point;
  const geometry::Extrinsics ext_b = geometry::camera_on_sphere(b.camera);
  const Vec3 xb = ext_b.to_camera(hit->point);
  if (xb.z() <= 0.0) return out;
  out.pixel = b.K.to_pixel(xb);
  if (out.pixel.x() < -0.5 || out.pixel.y() < -0.5 || out.pixel.x() >= b.width() - 0.5 ||
      out.pixel.y() >= b.height() - 0.5) {
    return out;
  }

  double nearest = kInf;
  const auto [origin, dir] = pixel_ray(ext_b, b.K, out.pixel);
  if (const auto hb = scene.intersect(origin, dir)) nearest = hb->depth;
  const int x = static_cast<int>(std::lround(out.pixel.x()));
  const int y = static_cast<int>(std::lround(out.pixel.y()));
  const int prim = b.primitive_at(x, y);
  if (prim >= 0 && scene.primitives[prim].kind == PrimitiveKind::point) nearest = std::min(nearest, b.depth_at(x, y));

  out.status = nearest < xb.z() - kOcclusionTolerance ? Visibility::occluded : Visibility::visible;
  return out;
}

Trajectory make_trajectory(TrajectoryMode mode, std::uint64_t seed, double radius) {
  Trajectory traj;
  const int n = mode == TrajectoryMode::free32 ? 32 : 16;
  numerics::Rng rng(seed);
  const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  for (int k = 0; k < n; ++k) {
    SphericalCamera cam;
    cam.radius = radius;
    cam.azimuth_deg = 360.0 * k / n;
    cam.elevation_deg =
        mode == TrajectoryMode::fixed16 ? 30.0 : 15.0 + 25.0 * std::sin(2.0 * std::numbers::pi * k / n + phase);
    traj.views.push_back(cam);
  }
  traj.input = {traj.views.front().elevation_deg, 0.0, radius};
  return traj;
}

TrajectoryMode parse_trajectory_mode(const std::string& s) {
  if (s == "free16") return TrajectoryMode::free16;
  if (s == "fixed16") return TrajectoryMode::fixed16;
  if (s == "free32") return TrajectoryMode::free32;
  throw std::invalid_argument("unknown trajectory mode: " + s);
}

std::string to_string(TrajectoryMode mode) {
  switch (mode) {
    case TrajectoryMode::free16: return "free16";
    case TrajectoryMode::fixed16: return "fixed16";
    case TrajectoryMode::free32: return "free32";
  }
  return "free16";
}

TextureMode parse_texture_mode(const std::string& s) {
  if (s == "distinctive") return TextureMode::distinctive;
  if (s == "plain") return TextureMode::plain;
  throw std::invalid_argument("unknown texture mode: " + s);
}

std::string to_string(TextureMode mode) { return mode == TextureMode::plain ? "plain" : "distinctive"; }

}  // namespace epiview::scene
