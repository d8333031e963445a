#include <gtest/gtest.h>

#include <random>

#include <Eigen/LU>

#include "epiview/geometry.hpp"
#include "epiview/scene.hpp"

using namespace epiview;
using namespace epiview::geometry;

namespace {

Vec3 random_vec(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Vec3(n(rng), n(rng), n(rng));
}

SphericalCamera random_cam(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> e(-30.0, 60.0), a(0.0, 360.0), r(2.0, 3.5);
  return {e(rng), a(rng), r(rng)};
}

}  // namespace

TEST(SkewSymmetric, ZeroVector) { EXPECT_TRUE(skew_symmetric(Vec3::Zero()).isZero(0.0)); }

TEST(SkewSymmetric, UnitX) {
  Mat3 expected;
  expected << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  EXPECT_EQ(skew_symmetric(Vec3(1, 0, 0)), expected);
}

TEST(SkewSymmetric, MatchesComponentwiseCross) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Vec3 t = random_vec(rng);
    const Vec3 v = random_vec(rng);
    const Vec3 cross(t[1] * v[2] - t[2] * v[1], t[2] * v[0] - t[0] * v[2], t[0] * v[1] - t[1] * v[0]);
    EXPECT_LT((skew_symmetric(t) * v - cross).norm(), 1e-12);
    EXPECT_LT((skew_symmetric(t) + skew_symmetric(t).transpose()).norm(), 1e-15);
  }
}

TEST(CameraOnSphere, AxisAlignedPlacement) {
  const auto a = camera_on_sphere({0.0, 0.0, 2.0});
  EXPECT_LT((a.center() - Vec3(2, 0, 0)).norm(), 1e-12);
  EXPECT_LT((a.to_camera(Vec3::Zero()) - Vec3(0, 0, 2)).norm(), 1e-12);
  const auto b = camera_on_sphere({0.0, 180.0, 2.0});
  EXPECT_LT((b.center() - Vec3(-2, 0, 0)).norm(), 1e-12);
}

TEST(CameraOnSphere, RightHandedRotation) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto e = camera_on_sphere(random_cam(rng));
    EXPECT_LT((e.R * e.R.transpose() - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(e.R.determinant(), 1.0, 1e-12);
  }
}

TEST(CameraOnSphere, PoleUsesFallbackUp) {
  const auto e = camera_on_sphere({90.0, 0.0, 2.0});
  EXPECT_LT((e.center() - Vec3(0, 0, 2)).norm(), 1e-12);
  EXPECT_NEAR(e.R.determinant(), 1.0, 1e-12);
  EXPECT_LT((e.to_camera(Vec3::Zero()) - Vec3(0, 0, 2)).norm(), 1e-12);
}

TEST(CameraOnSphere, OriginProjectsToPrincipalPoint) {
  std::mt19937_64 rng(3);
  const auto K = CameraIntrinsics::from_fov(32, 24);
  for (int i = 0; i < 20; ++i) {
    const Vec3 c = camera_on_sphere(random_cam(rng)).to_camera(Vec3::Zero());
    const Vec2 p = K.to_pixel(c / c.z());
    EXPECT_NEAR(p.x(), K.cx, 1e-9);
    EXPECT_NEAR(p.y(), K.cy, 1e-9);
  }
}

TEST(Intrinsics, PixelCentresOnIntegers) {
  const auto K = CameraIntrinsics::from_fov(32, 32, 50.0);
  EXPECT_DOUBLE_EQ(K.cx, 15.5);
  EXPECT_DOUBLE_EQ(K.cy, 15.5);
  EXPECT_NEAR(K.f, 16.0 / std::tan(25.0 * M_PI / 180.0), 1e-12);
  const auto Kf = K.scaled_to(16, 16);
  EXPECT_DOUBLE_EQ(Kf.cx, 7.5);
  EXPECT_NEAR(Kf.f, K.f / 2, 1e-12);
}

TEST(RelativePose, IdenticalCamerasGiveIdentity) {
  const auto e = camera_on_sphere({20.0, 40.0, 2.5});
  const auto p = relative_pose(e, e);
  EXPECT_LT((p.R - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LT(p.t.norm(), 1e-12);
  EXPECT_TRUE(p.degenerate());
}

TEST(RelativePose, ComposeWithReverseIsIdentity) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const auto a = camera_on_sphere(random_cam(rng));
    const auto b = camera_on_sphere(random_cam(rng));
    const auto id = compose(relative_pose(a, b), relative_pose(b, a));
    EXPECT_LT((id.R - Mat3::Identity()).norm(), 1e-9);
    EXPECT_LT(id.t.norm(), 1e-9);
  }
}

TEST(RelativePose, MatchesDirectPointTransform) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto ref = camera_on_sphere(random_cam(rng));
    const auto tgt = camera_on_sphere(random_cam(rng));
    const auto pose = relative_pose(ref, tgt);
    const Vec3 X = random_vec(rng) * 0.5;
    EXPECT_LT((pose.to_reference(tgt.to_camera(X)) - ref.to_camera(X)).norm(), 1e-12);
    EXPECT_LT((pose.to_target(ref.to_camera(X)) - tgt.to_camera(X)).norm(), 1e-12);
  }
}

TEST(EssentialMatrix, IdentityRotation) {
  RelativePose p;
  p.t = Vec3(1, 0, 0);
  const auto E = essential_matrix(p);
  EXPECT_FALSE(E.degenerate);
  EXPECT_EQ(E.E, skew_symmetric(p.t));
}

TEST(EssentialMatrix, ZeroTranslationFlagged) {
  const auto E = essential_matrix(RelativePose{});
  EXPECT_TRUE(E.degenerate);
  EXPECT_TRUE(E.E.isZero(0.0));
}

TEST(EssentialMatrix, GroundTruthCorrespondences) {
  const auto sc = scene::make_scene(11, scene::TextureMode::distinctive);
  const auto K = CameraIntrinsics::from_fov(32, 32);
  const auto a = scene::render(sc, {10.0, 0.0, 2.5}, K);
  const auto b = scene::render(sc, {25.0, 50.0, 2.5}, K);
  const auto pose = relative_pose(camera_on_sphere(b.camera), camera_on_sphere(a.camera));
  const auto E = essential_matrix(pose);
  int checked = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (!a.foreground(x, y)) continue;
      const auto c = scene::gt_correspondence(sc, a, b, Vec2(x, y));
      if (c.status != scene::Visibility::visible) continue;
      const Vec3 xt = K.normalize(Vec2(x, y));
      const Vec3 xr = K.normalize(c.pixel);
      EXPECT_LT(std::abs(xr.dot(E.E * xt)), 1e-6);
      ++checked;
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(EpipolarLine, LateralTranslationIsHorizontal) {
  RelativePose p;
  p.t = Vec3(1, 0, 0);
  const auto K = CameraIntrinsics::from_fov(32, 32);
  const auto l = epipolar_line(Vec2(K.cx, K.cy), p, K);
  ASSERT_FALSE(l.degenerate);
  EXPECT_NEAR(l.coeffs.x(), 0.0, 1e-12);
  EXPECT_LT(l.distance(Vec2(0, 0)), 1e-12);
  EXPECT_LT(l.distance(Vec2(0.7, 0)), 1e-12);
}

TEST(EpipolarLine, DegeneratePoseFlagged) {
  const auto K = CameraIntrinsics::from_fov(16, 16);
  EXPECT_TRUE(epipolar_line(Vec2(3, 4), RelativePose{}, K).degenerate);
}

TEST(EpipolarLine, SameLineUnderFocalScaling) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ray(-0.04, 0.04);
  const auto K = CameraIntrinsics::from_fov(32, 32);
  for (int i = 0; i < 20; ++i) {
    const auto pose = relative_pose(camera_on_sphere(random_cam(rng)), camera_on_sphere(random_cam(rng)));
    const Vec3 x(ray(rng), ray(rng), 1.0);
    const auto base = epipolar_line(K.to_pixel(x), pose, K);
    const Vec3 n1 = base.coeffs / base.coeffs.head<2>().norm();
    for (double k : {0.5, 2.0, 10.0}) {
      const auto Kk = K.with_focal_scale(k);
      const auto l = epipolar_line(Kk.to_pixel(x), pose, Kk);
      const Vec3 n2 = l.coeffs / l.coeffs.head<2>().norm();
      EXPECT_LT(std::min((n1 - n2).norm(), (n1 + n2).norm()), 1e-9);
    }
  }
}

TEST(SampleEpipolarPoints, HorizontalRow) {
  const auto K = CameraIntrinsics::from_fov(8, 8);
  EpipolarLine l;
  l.degenerate = false;
  l.coeffs = Vec3(0, 1, -(3 - K.cy) / K.f);
  const auto s = sample_epipolar_points(l, 8, 8, K);
  ASSERT_EQ(s.size(), 8u);
  for (int i = 0; i < 8; ++i) {
    EXPECT_TRUE(s[i].valid);
    EXPECT_NEAR(s[i].u, i, 1e-9);
    EXPECT_NEAR(s[i].v, 3.0, 1e-9);
  }
}

TEST(SampleEpipolarPoints, LineOutsideImage) {
  const auto K = CameraIntrinsics::from_fov(8, 8);
  EpipolarLine l;
  l.degenerate = false;
  l.coeffs = Vec3(0, 1, -(20 - K.cy) / K.f);
  for (const auto& s : sample_epipolar_points(l, 8, 8, K)) EXPECT_FALSE(s.valid);
}

TEST(SampleEpipolarPoints, DiagonalMatchesRasterization) {
  const auto K = CameraIntrinsics::from_fov(8, 8);
  // Pixel line v = u + 0.5, expressed in normalized coordinates.
  const Vec3 pix(1.0, -1.0, 0.5);
  EpipolarLine l;
  l.degenerate = false;
  l.coeffs = K.matrix().transpose() * pix;
  const auto s = sample_epipolar_points(l, 8, 8, K);
  ASSERT_EQ(s.size(), 8u);
  for (int u = 0; u < 8; ++u) {
    const double v = u + 0.5;
    const bool inside = v <= 7.0;
    EXPECT_NEAR(s[u].u, u, 1e-9);
    EXPECT_NEAR(s[u].v, v, 1e-9);
    EXPECT_EQ(s[u].valid, inside);
  }
}

TEST(SampleEpipolarPoints, SteepLineStepsAlongRows) {
  const auto K = CameraIntrinsics::from_fov(8, 8);
  EpipolarLine l;
  l.degenerate = false;
  l.coeffs = K.matrix().transpose() * Vec3(1.0, 0.0, -2.25);  // u = 2.25
  const auto dominant = sample_epipolar_points(l, 8, 8, K);
  ASSERT_EQ(dominant.size(), 8u);
  for (int v = 0; v < 8; ++v) {
    EXPECT_TRUE(dominant[v].valid);
    EXPECT_NEAR(dominant[v].u, 2.25, 1e-9);
    EXPECT_NEAR(dominant[v].v, v, 1e-9);
  }
  int valid = 0;
  for (const auto& s : sample_epipolar_points(l, 8, 8, K, SampleAxis::width)) valid += s.valid;
  EXPECT_EQ(valid, 0);
}

TEST(SampleEpipolarPoints, ValidSamplesStayInGrid) {
  std::mt19937_64 rng(8);
  const auto K = CameraIntrinsics::from_fov(12, 9);
  for (int i = 0; i < 10; ++i) {
    const auto pose = relative_pose(camera_on_sphere(random_cam(rng)), camera_on_sphere(random_cam(rng)));
    const auto set = build_sample_set(pose, K);
    EXPECT_EQ(set.queries(), 108u);
    EXPECT_LE(set.max_samples_per_query(), 12u);
    for (std::size_t q = 0; q < set.queries(); ++q) {
      for (const auto& s : set.query(q)) {
        if (!s.valid) continue;
        EXPECT_GE(s.u, 0.0);
        EXPECT_LE(s.u, 11.0);
        EXPECT_GE(s.v, 0.0);
        EXPECT_LE(s.v, 8.0);
      }
    }
  }
}

TEST(SampleSet, DegeneratePoseMasksEverything) {
  const auto set = build_sample_set(RelativePose{}, CameraIntrinsics::from_fov(6, 6));
  EXPECT_TRUE(set.degenerate());
  for (std::size_t q = 0; q < set.queries(); ++q) {
    for (const auto& s : set.query(q)) EXPECT_FALSE(s.valid);
  }
}

TEST(AngularDistance, GreatCircle) {
  EXPECT_NEAR(angular_distance_deg({0, 0, 2}, {0, 90, 3}), 90.0, 1e-9);
  EXPECT_NEAR(angular_distance_deg({0, 10, 2}, {0, 10, 2}), 0.0, 1e-6);
  EXPECT_NEAR(angular_distance_deg({0, 0, 2}, {90, 0, 2}), 90.0, 1e-9);
}
