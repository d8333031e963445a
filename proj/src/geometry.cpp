#include "epiview/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace epiview::geometry {

namespace {

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

CameraIntrinsics CameraIntrinsics::from_fov(int width, int height, double fov_deg) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("CameraIntrinsics: non-positive image size");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw std::invalid_argument("CameraIntrinsics: fov out of (0, 180)");
  CameraIntrinsics K;
  K.width = width;
  K.height = height;
  K.f = 0.5 * width / std::tan(0.5 * deg2rad(fov_deg));
  K.cx = 0.5 * (width - 1);
  K.cy = 0.5 * (height - 1);
  return K;
}

void CameraIntrinsics::validate() const {
  if (!(f > 0.0)) throw std::invalid_argument("CameraIntrinsics: f must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("CameraIntrinsics: non-positive image size");
  if (cx < 0.0 || cx > width || cy < 0.0 || cy > height) {
    throw std::invalid_argument("CameraIntrinsics: principal point outside the image");
  }
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 K;
  K << f, 0, cx, 0, f, cy, 0, 0, 1;
  return K;
}

Mat3 CameraIntrinsics::inverse() const {
  Mat3 Ki;
  Ki << 1.0 / f, 0, -cx / f, 0, 1.0 / f, -cy / f, 0, 0, 1;
  return Ki;
}

CameraIntrinsics CameraIntrinsics::scaled_to(int new_width, int new_height) const {
  const double sx = static_cast<double>(new_width) / width;
  const double sy = static_cast<double>(new_height) / height;
  if (std::abs(sx - sy) > 1e-12) throw std::invalid_argument("CameraIntrinsics: anisotropic rescale");
  CameraIntrinsics K = *this;
  K.width = new_width;
  K.height = new_height;
  K.f = f * sx;
  // Pixel centres are on integers, so the pixel edge at -0.5 is what scales.
  K.cx = (cx + 0.5) * sx - 0.5;
  K.cy = (cy + 0.5) * sy - 0.5;
  return K;
}

CameraIntrinsics CameraIntrinsics::with_focal_scale(double k) const {
  CameraIntrinsics K = *this;
  K.f = f * k;
  return K;
}

Vec3 CameraIntrinsics::normalize(const Vec2& pixel) const {
  return {(pixel.x() - cx) / f, (pixel.y() - cy) / f, 1.0};
}

Vec2 CameraIntrinsics::to_pixel(const Vec3& n) const {
  return {f * n.x() / n.z() + cx, f * n.y() / n.z() + cy};
}

void SphericalCamera::validate() const {
  if (!(radius > 0.0)) throw std::invalid_argument("SphericalCamera: radius must be positive");
  if (elevation_deg < -90.0 || elevation_deg > 90.0) {
    throw std::invalid_argument("SphericalCamera: elevation outside [-90, 90]");
  }
}

Vec3 SphericalCamera::unit_direction() const {
  const double e = deg2rad(elevation_deg);
  const double a = deg2rad(azimuth_deg);
  return {std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e)};
}

Vec3 SphericalCamera::position() const { return radius * unit_direction(); }

Extrinsics camera_on_sphere(const SphericalCamera& cam) {
  cam.validate();
  const Vec3 center = cam.position();
  const Vec3 forward = -center.normalized();
  Vec3 up(0, 0, 1);
  if (std::abs(forward.dot(up)) > 1.0 - 1e-12) up = Vec3(1, 0, 0);
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);

  Extrinsics ext;
  ext.R.row(0) = right.transpose();
  ext.R.row(1) = down.transpose();
  ext.R.row(2) = forward.transpose();
  ext.t = -ext.R * center;
  return ext;
}

RelativePose RelativePose::inverse() const {
  // X_tgt = R^T (X_ref - R t) = R^T (X_ref + (-R t))
  return {R.transpose(), -(R * t)};
}

void RelativePose::validate(double tol) const {
  if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) {
    throw std::invalid_argument("RelativePose: R is not orthonormal");
  }
  if (std::abs(R.determinant() - 1.0) > tol) throw std::invalid_argument("RelativePose: det(R) != 1");
  if (!t.allFinite()) throw std::invalid_argument("RelativePose: non-finite translation");
}

RelativePose relative_pose(const Extrinsics& ext_ref, const Extrinsics& ext_tgt) {
  // X_ref = R_r R_t^T (X_tgt - t_t) + t_r = R (X_tgt + R^T t_r - t_t)
  RelativePose pose;
  pose.R = ext_ref.R * ext_tgt.R.transpose();
  pose.t = pose.R.transpose() * ext_ref.t - ext_tgt.t;
  return pose;
}

RelativePose compose(const RelativePose& first, const RelativePose& second) {
  // X_a = R1 (R2 (X_c + t2) + t1) = R1 R2 (X_c + t2 + R2^T t1)
  return {first.R * second.R, second.t + second.R.transpose() * first.t};
}

Mat3 skew_symmetric(const Vec3& t) {
  Mat3 m;
  m << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
  return m;
}

EssentialMatrix essential_matrix(const RelativePose& pose) {
  EssentialMatrix e;
  e.degenerate = pose.degenerate();
  e.E = e.degenerate ? Mat3::Zero() : Mat3(pose.R * skew_symmetric(pose.t));
  return e;
}

double EpipolarLine::distance(const Vec2& point) const {
  const double n = coeffs.head<2>().norm();
  return std::abs(coeffs.x() * point.x() + coeffs.y() * point.y() + coeffs.z()) / n;
}

Vec3 EpipolarLine::in_pixels(const CameraIntrinsics& K) const {
  return K.inverse().transpose() * coeffs;
}

EpipolarLine epipolar_line(const Vec2& p, const RelativePose& pose, const CameraIntrinsics& K) {
  if (p.x() < -0.5 || p.y() < -0.5 || p.x() > K.width - 0.5 || p.y() > K.height - 0.5) {
    throw std::invalid_argument("epipolar_line: point outside the target image");
  }
  const EssentialMatrix e = essential_matrix(pose);
  EpipolarLine line;
  if (e.degenerate) return line;
  line.coeffs = e.E * K.normalize(p);
  // A point at the epipole maps to the zero line as well.
  const double scale = std::max(1.0, line.coeffs.norm());
  line.degenerate = line.coeffs.head<2>().norm() <= 1e-12 * scale;
  if (line.degenerate) line.coeffs.setZero();
  return line;
}

std::vector<Sample> sample_epipolar_points(const EpipolarLine& line, int width, int height,
                                           const CameraIntrinsics& K_feat, SampleAxis axis) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("sample_epipolar_points: empty grid");
  std::vector<Sample> out;
  if (line.degenerate) return out;

  const Vec3 l = line.in_pixels(K_feat);
  const double a = l.x();
  const double b = l.y();
  const double c = l.z();
  constexpr double kSnap = 1e-9;
  auto inside = [&](double& value, int extent) {
    if (value < -kSnap || value > extent - 1 + kSnap) return false;
    value = std::clamp(value, 0.0, static_cast<double>(extent - 1));
    return true;
  };

  const bool step_columns = axis == SampleAxis::width || std::abs(b) >= std::abs(a);
  if (step_columns) {
    out.resize(width);
    const bool vertical = std::abs(b) <= 1e-12 * std::hypot(a, b);
    for (int x = 0; x < width; ++x) {
      Sample& s = out[x];
      s.u = x;
      if (vertical) continue;
      s.v = -(a * x + c) / b;
      s.valid = inside(s.v, height);
    }
  } else {
    out.resize(height);
    for (int y = 0; y < height; ++y) {
      Sample& s = out[y];
      s.v = y;
      s.u = -(b * y + c) / a;
      s.valid = inside(s.u, width);
    }
  }
  return out;
}

std::size_t EpipolarSampleSet::max_samples_per_query() const {
  std::size_t m = 0;
  for (std::size_t q = 0; q < queries(); ++q) m = std::max(m, offsets_[q + 1] - offsets_[q]);
  return m;
}

void EpipolarSampleSet::push_query(std::span<const Sample> samples) {
  samples_.insert(samples_.end(), samples.begin(), samples.end());
  offsets_.push_back(samples_.size());
}

EpipolarSampleSet build_sample_set(const RelativePose& pose, const CameraIntrinsics& K_feat, SampleAxis axis) {
  const int w = K_feat.width;
  const int h = K_feat.height;
  EpipolarSampleSet set(w, h);
  set.set_degenerate(pose.degenerate());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const EpipolarLine line = epipolar_line(Vec2(x, y), pose, K_feat);
      const auto samples = sample_epipolar_points(line, w, h, K_feat, axis);
      set.push_query(samples);
    }
  }
  return set;
}

EpipolarSampleSet full_image_sample_set(int width, int height) {
  EpipolarSampleSet set(width, height);
  std::vector<Sample> all;
  all.reserve(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) all.push_back({static_cast<double>(x), static_cast<double>(y), true});
  }
  for (int q = 0; q < width * height; ++q) set.push_query(all);
  return set;
}

double angular_distance_deg(const SphericalCamera& a, const SphericalCamera& b) {
  const double cosang = std::clamp(a.unit_direction().dot(b.unit_direction()), -1.0, 1.0);
  return std::acos(cosang) * 180.0 / std::numbers::pi;
}

}  // namespace epiview::geometry
