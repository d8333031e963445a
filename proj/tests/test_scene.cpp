#include <gtest/gtest.h>

#include <cmath>

#include "epiview/geometry.hpp"
#include "epiview/scene.hpp"
#include "oracles.hpp"

using namespace epiview;
using namespace epiview::scene;
using geometry::CameraIntrinsics;

namespace {

Primitive sphere(const Vec3& c, double r, const Vec3& color) {
  Primitive p;
  p.kind = PrimitiveKind::sphere;
  p.center = c;
  p.radius = r;
  p.base_color = color;
  return p;
}

}  // namespace

TEST(Render, EmptySceneIsBackground) {
  Scene sc;
  const auto v = render(sc, {20.0, 30.0, 2.5}, CameraIntrinsics::from_fov(8, 8));
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      EXPECT_FALSE(v.foreground(x, y));
      EXPECT_TRUE(std::isinf(v.depth_at(x, y)));
      EXPECT_EQ(v.rgb.at(y, x, 0), sc.background[0]);
    }
  }
}

TEST(Render, PointAtOriginLandsOnPrincipalPoint) {
  Scene sc;
  Primitive p;
  p.kind = PrimitiveKind::point;
  p.base_color = Vec3(1, 0, 0);
  sc.primitives.push_back(p);
  const auto K = CameraIntrinsics::from_fov(33, 33);
  for (const SphericalCamera cam : {SphericalCamera{0, 0, 2}, SphericalCamera{35, 120, 3}, SphericalCamera{-20, 250, 2.5}}) {
    const auto v = render(sc, cam, K);
    EXPECT_TRUE(v.foreground(16, 16));
    EXPECT_NEAR(v.depth_at(16, 16), cam.radius, 1e-12);
    int fg = 0;
    for (int i = 0; i < 33 * 33; ++i) fg += v.primitive[i] >= 0;
    EXPECT_EQ(fg, 1);
  }
}

TEST(Render, DeterministicForSeed) {
  const auto K = CameraIntrinsics::from_fov(24, 24);
  const auto a = render(make_scene(7, TextureMode::distinctive), {10, 40, 2.5}, K);
  const auto b = render(make_scene(7, TextureMode::distinctive), {10, 40, 2.5}, K);
  EXPECT_EQ(oracle::max_abs_diff(a.rgb, b.rgb), 0.0);
  EXPECT_EQ(a.depth, b.depth);
  const auto c = render(make_scene(8, TextureMode::distinctive), {10, 40, 2.5}, K);
  EXPECT_GT(oracle::max_abs_diff(a.rgb, c.rgb), 0.0);
}

TEST(Render, ForegroundHasPositiveDepthAndUnitColours) {
  const auto sc = make_scene(3, TextureMode::distinctive);
  const auto v = render(sc, {15, 60, 2.5}, CameraIntrinsics::from_fov(32, 32));
  int fg = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (!v.foreground(x, y)) continue;
      ++fg;
      EXPECT_GT(v.depth_at(x, y), 0.0);
      EXPECT_TRUE(std::isfinite(v.depth_at(x, y)));
    }
  }
  EXPECT_GT(fg, 100);
  for (double c : v.rgb.data()) {
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(MakeScene, InsideUnitSphere) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto sc = make_scene(seed, TextureMode::plain);
    for (const auto& p : sc.primitives) {
      const double extent = p.kind == PrimitiveKind::box ? p.half_extent.norm() : p.radius;
      EXPECT_LE(p.center.norm() + extent, sc.bounding_radius + 1e-12);
    }
    EXPECT_LE(sc.bounding_radius, 1.0);
  }
}

TEST(MakeScene, PlainModeIsFlat) {
  const auto sc = make_scene(2, TextureMode::plain);
  for (std::size_t i = 0; i < sc.primitives.size(); ++i) {
    const auto& p = sc.primitives[i];
    EXPECT_EQ(sc.color_at(static_cast<int>(i), p.center + Vec3(0.01, 0.02, 0.0)), p.base_color);
  }
}

TEST(GtCorrespondence, IdenticalViewsMapToThemselves) {
  const auto sc = make_scene(4, TextureMode::distinctive);
  const auto K = CameraIntrinsics::from_fov(16, 16);
  const auto v = render(sc, {20, 10, 2.5}, K);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (!v.foreground(x, y)) continue;
      const auto c = gt_correspondence(sc, v, v, Vec2(x, y));
      EXPECT_EQ(c.status, Visibility::visible);
      EXPECT_LT((c.pixel - Vec2(x, y)).norm(), 1e-9);
    }
  }
}

TEST(GtCorrespondence, BackgroundPixelThrows) {
  Scene sc;
  const auto K = CameraIntrinsics::from_fov(8, 8);
  const auto v = render(sc, {0, 0, 2}, K);
  EXPECT_THROW(gt_correspondence(sc, v, v, Vec2(3, 3)), std::invalid_argument);
}

TEST(GtCorrespondence, LiesOnEpipolarLine) {
  const auto sc = make_scene(5, TextureMode::distinctive);
  const auto K = CameraIntrinsics::from_fov(32, 32);
  const auto a = render(sc, {10, 0, 2.5}, K);
  const auto b = render(sc, {30, 70, 2.5}, K);
  const auto pose = geometry::relative_pose(geometry::camera_on_sphere(b.camera), geometry::camera_on_sphere(a.camera));
  int n = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (!a.foreground(x, y)) continue;
      const auto c = gt_correspondence(sc, a, b, Vec2(x, y));
      if (c.status != Visibility::visible) continue;
      const auto line = geometry::epipolar_line(Vec2(x, y), pose, K);
      const Vec3 xr = K.normalize(c.pixel);
      EXPECT_LT(line.distance(xr.head<2>()), 1e-6);
      ++n;
    }
  }
  EXPECT_GT(n, 50);
}

TEST(GtCorrespondence, SymmetricForMutuallyVisible) {
  const auto sc = make_scene(6, TextureMode::distinctive);
  const auto K = CameraIntrinsics::from_fov(32, 32);
  const auto a = render(sc, {10, 0, 2.5}, K);
  const auto b = render(sc, {20, 35, 2.5}, K);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (!a.foreground(x, y)) continue;
      const auto ab = gt_correspondence(sc, a, b, Vec2(x, y));
      if (ab.status != Visibility::visible) continue;
      const auto ba = gt_correspondence(sc, b, a, ab.pixel);
      ASSERT_EQ(ba.status, Visibility::visible);
      EXPECT_LT((ba.pixel - Vec2(x, y)).norm(), 0.5);
    }
  }
}

TEST(GtCorrespondence, OccluderHidesPoint) {
  Scene sc;
  sc.primitives.push_back(sphere(Vec3::Zero(), 0.3, Vec3(1, 0, 0)));
  sc.primitives.push_back(sphere(Vec3(1.2, 0, 0), 0.3, Vec3(0, 1, 0)));
  const auto K = CameraIntrinsics::from_fov(64, 64);
  const auto a = render(sc, {0, 90, 2.5}, K);  // looks along -y
  const auto b = render(sc, {0, 0, 2.5}, K);   // looks along -x, behind the second sphere
  const Vec3 X(0.3 * std::cos(M_PI / 4), 0.3 * std::sin(M_PI / 4), 0.0);
  const Vec3 xa = geometry::camera_on_sphere(a.camera).to_camera(X);
  const Vec2 pa = K.to_pixel(xa / xa.z());
  const auto c = gt_correspondence(sc, a, b, pa);
  EXPECT_EQ(c.status, Visibility::occluded);
  EXPECT_LT((c.world - X).norm(), 1e-9);
  // The same point seen from a third camera that clears the occluder.
  const auto d = render(sc, {0, 45, 2.5}, K);
  EXPECT_EQ(gt_correspondence(sc, a, d, pa).status, Visibility::visible);
}

TEST(GtCorrespondence, OutOfFrame) {
  Scene sc;
  sc.primitives.push_back(sphere(Vec3(0, 0.9, 0), 0.1, Vec3(1, 1, 0)));
  const auto K = CameraIntrinsics::from_fov(32, 32, 30.0);
  const auto a = render(sc, {0, 90, 2.5}, K);
  const auto b = render(sc, {0, 0, 1.5}, K);
  const Vec3 X(0, 0.9, 0);
  const Vec3 xa = geometry::camera_on_sphere(a.camera).to_camera(X);
  const auto c = gt_correspondence(sc, a, b, K.to_pixel(xa / xa.z()));
  EXPECT_EQ(c.status, Visibility::out_of_frame);
}

TEST(Trajectory, Fixed16) {
  const auto t = make_trajectory(TrajectoryMode::fixed16, 0);
  ASSERT_EQ(t.views.size(), 16u);
  for (int k = 0; k < 16; ++k) {
    EXPECT_EQ(t.views[k].elevation_deg, 30.0);
    EXPECT_NEAR(t.views[k].azimuth_deg, 22.5 * k, 1e-12);
  }
  EXPECT_EQ(t.input.azimuth_deg, 0.0);
}

TEST(Trajectory, Free16AndFree32) {
  for (auto [mode, n] : {std::pair{TrajectoryMode::free16, 16}, std::pair{TrajectoryMode::free32, 32}}) {
    const auto t = make_trajectory(mode, 9);
    ASSERT_EQ(static_cast<int>(t.views.size()), n);
    for (int k = 0; k < n; ++k) {
      EXPECT_NEAR(t.views[k].azimuth_deg, 360.0 * k / n, 1e-12);
      EXPECT_GE(t.views[k].elevation_deg, -10.0);
      EXPECT_LE(t.views[k].elevation_deg, 40.0);
    }
  }
  const auto a = make_trajectory(TrajectoryMode::free16, 1);
  const auto b = make_trajectory(TrajectoryMode::free16, 2);
  EXPECT_NE(a.views[3].elevation_deg, b.views[3].elevation_deg);
}

TEST(ParseModes, RoundTripAndReject) {
  EXPECT_EQ(parse_trajectory_mode(to_string(TrajectoryMode::free32)), TrajectoryMode::free32);
  EXPECT_EQ(parse_texture_mode("plain"), TextureMode::plain);
  EXPECT_THROW(parse_texture_mode("shiny"), std::invalid_argument);
}
