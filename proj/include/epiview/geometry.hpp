#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <vector>

namespace epiview::geometry {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

/// Pinhole intrinsics with square pixels. Pixel centres sit on integer
/// coordinates, so the centre of a W-wide image is at (W - 1) / 2.
struct CameraIntrinsics {
  double f = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Principal point at the image centre, focal length from a horizontal field of view.
  static CameraIntrinsics from_fov(int width, int height, double fov_deg = 50.0);

  void validate() const;
  Mat3 matrix() const;
  Mat3 inverse() const;

  /// Intrinsics of the same camera resampled to a width x height grid that
  /// covers the same field of view (feature maps).
  CameraIntrinsics scaled_to(int new_width, int new_height) const;
  /// Same principal point, focal length multiplied by k.
  CameraIntrinsics with_focal_scale(double k) const;

  Vec3 normalize(const Vec2& pixel) const;  // K^-1 [u v 1]
  Vec2 to_pixel(const Vec3& normalized) const;
};

struct SphericalCamera {
  double elevation_deg = 0.0;
  double azimuth_deg = 0.0;
  double radius = 1.0;

  void validate() const;
  Vec3 position() const;
  Vec3 unit_direction() const;
};

/// World-to-camera transform: X_cam = R X_world + t. Camera axes are x right,
/// y down, z along the optical axis.
struct Extrinsics {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 to_camera(const Vec3& world) const { return R * world + t; }
  Vec3 to_world(const Vec3& cam) const { return R.transpose() * (cam - t); }
  Vec3 center() const { return -R.transpose() * t; }
};

/// Look-at placement on a sphere around the origin with +z up. At elevation
/// +-90 degrees the up vector falls back to +x.
Extrinsics camera_on_sphere(const SphericalCamera& cam);

/// Relative transform between a reference and a target camera, stored so
/// that the essential matrix is R [t]x:
///   X_ref = R (X_tgt + t),   X_tgt = R^T X_ref - t.
/// R rotates target axes into reference axes; t is the reference-to-target
/// displacement expressed in target axes (t = -(reference centre in target
/// coordinates)).
struct RelativePose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static constexpr double kDegenerateTranslation = 1e-6;

  Vec3 to_reference(const Vec3& x_tgt) const { return R * (x_tgt + t); }
  Vec3 to_target(const Vec3& x_ref) const { return R.transpose() * x_ref - t; }
  RelativePose inverse() const;
  bool degenerate() const { return t.norm() < kDegenerateTranslation; }
  void validate(double tol = 1e-9) const;
};

RelativePose relative_pose(const Extrinsics& ext_ref, const Extrinsics& ext_tgt);
/// first maps frame b into frame a, second maps c into b; the result maps c into a.
RelativePose compose(const RelativePose& first, const RelativePose& second);

Mat3 skew_symmetric(const Vec3& t);

struct EssentialMatrix {
  Mat3 E = Mat3::Zero();
  bool degenerate = false;
};

/// E = R [t]x; x_ref^T E x_tgt = 0 for corresponding normalized points.
EssentialMatrix essential_matrix(const RelativePose& pose);

/// a x + b y + c = 0. Normalized image coordinates unless stated otherwise.
struct EpipolarLine {
  Vec3 coeffs = Vec3::Zero();
  bool degenerate = true;

  double distance(const Vec2& point) const;
  /// The same line expressed in pixel coordinates of K (K^-T l).
  Vec3 in_pixels(const CameraIntrinsics& K) const;
};

/// Epipolar line in the reference view of target pixel p: l = R [t]x K^-1 p.
EpipolarLine epipolar_line(const Vec2& p, const RelativePose& pose, const CameraIntrinsics& K);

enum class SampleAxis { dominant, width };

struct Sample {
  double u = 0.0;  // column
  double v = 0.0;  // row
  bool valid = false;
};

/// One sample per integer step of the stepping axis over a W x H feature
/// grid. Dominant mode steps along the axis with the larger line extent;
/// width mode always steps along columns. Samples outside the grid are kept
/// but masked.
std::vector<Sample> sample_epipolar_points(const EpipolarLine& line, int width, int height,
                                           const CameraIntrinsics& K_feat, SampleAxis axis = SampleAxis::dominant);

/// Samples for every query pixel of a target feature grid, stored flat.
class EpipolarSampleSet {
 public:
  EpipolarSampleSet() = default;
  EpipolarSampleSet(int width, int height) : width_(width), height_(height), offsets_(1, 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t queries() const { return offsets_.size() - 1; }
  std::size_t total_samples() const { return samples_.size(); }
  std::size_t max_samples_per_query() const;
  bool degenerate() const { return degenerate_; }
  void set_degenerate(bool d) { degenerate_ = d; }

  void push_query(std::span<const Sample> samples);
  std::span<const Sample> query(std::size_t q) const {
    return {samples_.data() + offsets_[q], offsets_[q + 1] - offsets_[q]};
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<Sample> samples_;
  bool degenerate_ = false;
};

/// Epipolar samples in the reference grid for each pixel of the target grid.
/// Both grids share K_feat. A degenerate pose masks everything.
EpipolarSampleSet build_sample_set(const RelativePose& pose, const CameraIntrinsics& K_feat,
                                   SampleAxis axis = SampleAxis::dominant);

/// Every reference pixel, in raster order, for every query.
EpipolarSampleSet full_image_sample_set(int width, int height);

/// Great-circle angle between the camera positions, degrees.
double angular_distance_deg(const SphericalCamera& a, const SphericalCamera& b);

}  // namespace epiview::geometry
