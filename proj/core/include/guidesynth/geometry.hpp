#pragma once

// Pinhole camera model, rigid transforms, depth maps and a z-buffer
// rasterizer.
//
// Frame conventions used throughout the library:
//   * camera looks down +Z, X to the right, Y down;
//   * image origin is the top-left pixel, pixel (x, y) has its center at the
//     integer coordinate (x, y);
//   * Euler angles are extrinsic X then Y then Z: R = Rz(rz) * Ry(ry) * Rx(rx).

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace guidesynth {

using Point3 = Eigen::Vector3d;
using Pixel = Eigen::Vector2d;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  // Throws Error(kInvalidParams) when the invariants do not hold.
  void validate() const;

  Eigen::Matrix3d matrix() const;
  Eigen::Matrix3d inverse_matrix() const;

  // Squared image diagonal in px^2.
  double diagonal_sq() const {
    return static_cast<double>(width) * width + static_cast<double>(height) * height;
  }
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Point3 operator()(const Point3& p) const { return rotation * p + translation; }

  // (this * other)(p) == this(other(p))
  RigidTransform operator*(const RigidTransform& other) const;
  RigidTransform inverse() const;

  bool operator==(const RigidTransform&) const = default;
};

// Degrees, each expected in [0, 360).
struct EulerAngles {
  double rx = 0.0;
  double ry = 0.0;
  double rz = 0.0;

  bool operator==(const EulerAngles&) const = default;
};

class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  bool valid(int x, int y) const { return valid_[index(x, y)] != 0; }
  double depth(int x, int y) const { return depth_[index(x, y)]; }

  // Non-finite or non-positive depths are stored as invalid; depth() of an
  // invalid pixel reads 0.
  void set(int x, int y, double depth);
  void invalidate(int x, int y);

  std::size_t valid_count() const;

  bool operator==(const DepthMap&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> depth_;
  std::vector<std::uint8_t> valid_;
};

struct TriMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<int, 3>> triangles;

  // Throws Error(kEmptyMesh) without triangles and Error(kInvalidParams) on
  // out-of-range indices.
  void validate() const;
};

// Output of the rasterizer: nearest-surface depth plus the index of the
// triangle that won the depth test (-1 where nothing was drawn).
struct Raster {
  DepthMap depth;
  std::vector<std::int32_t> triangle;

  std::int32_t triangle_at(int x, int y) const {
    return triangle[static_cast<std::size_t>(y) * static_cast<std::size_t>(depth.width()) +
                    static_cast<std::size_t>(x)];
  }
};

// Pinhole projection with perspective division. Throws kNonPositiveDepth when
// P.z() <= 0.
Pixel project(const Point3& p, const CameraIntrinsics& k);

// Samples D(p) and lifts p to D(p) * K^-1 [px, py, 1]^T.
//
// The depth is bilinearly interpolated from the four surrounding pixel
// centers. When any of those is invalid the nearest valid one is used
// instead. Pixels with px in [-0.5, width - 0.5) and py in [-0.5, height - 0.5)
// are inside the image; neighbors past the edge are clamped.
Point3 unproject(const Pixel& p, const DepthMap& depth, const CameraIntrinsics& k);

// Depth sampling used by unproject(), exposed for callers that only need D(p).
double sample_depth(const Pixel& p, const DepthMap& depth);

Eigen::Matrix3d euler_to_rotation(const EulerAngles& a);

// Sine and cosine of an angle in degrees, exact at multiples of 90 and
// symmetric under the usual reflections so equal-magnitude angles yield
// bit-identical values.
double sin_deg(double deg);
double cos_deg(double deg);

std::vector<Point3> apply_transform(const RigidTransform& t, std::span<const Point3> pts);

// Z-buffer rasterization with a top-left fill rule and perspective-correct
// barycentric depth. Throws kEmptyMesh for a mesh without triangles and
// kNonPositiveDepth when a vertex of a drawn triangle is at or behind the
// camera plane.
Raster rasterize(const TriMesh& mesh, const CameraIntrinsics& k);
DepthMap rasterize_depth(const TriMesh& mesh, const CameraIntrinsics& k);

// Angle of R1^T R2 in degrees, clamped to [0, 180].
double rotation_geodesic_deg(const Eigen::Matrix3d& r1, const Eigen::Matrix3d& r2);

// Rodrigues map from an axis-angle vector (radians) to a rotation matrix.
Eigen::Matrix3d axis_angle_to_rotation(const Eigen::Vector3d& omega);

bool is_rotation(const Eigen::Matrix3d& r, double tol = 1e-9);

}  // namespace guidesynth
