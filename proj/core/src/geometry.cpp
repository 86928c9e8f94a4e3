#include "guidesynth/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>

#include "guidesynth/error.hpp"

namespace guidesynth {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kInvalidParams, "focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidParams, "image dimensions must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw Error(ErrorCode::kInvalidParams, "principal point outside the image");
  }
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Eigen::Matrix3d CameraIntrinsics::inverse_matrix() const {
  Eigen::Matrix3d k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

DepthMap::DepthMap(int width, int height)
    : width_(width),
      height_(height),
      depth_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0.0),
      valid_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidParams, "depth map dimensions must be positive");
  }
}

void DepthMap::set(int x, int y, double depth) {
  const auto i = index(x, y);
  if (std::isfinite(depth) && depth > 0.0) {
    depth_[i] = depth;
    valid_[i] = 1;
  } else {
    depth_[i] = 0.0;
    valid_[i] = 0;
  }
}

void DepthMap::invalidate(int x, int y) {
  const auto i = index(x, y);
  depth_[i] = 0.0;
  valid_[i] = 0;
}

std::size_t DepthMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), std::uint8_t{1}));
}

void TriMesh::validate() const {
  if (triangles.empty()) {
    throw Error(ErrorCode::kEmptyMesh, "mesh has no triangles");
  }
  const auto n = static_cast<int>(vertices.size());
  for (const auto& tri : triangles) {
    for (int idx : tri) {
      if (idx < 0 || idx >= n) {
        throw Error(ErrorCode::kInvalidParams, "triangle index out of range");
      }
    }
  }
}

Pixel project(const Point3& p, const CameraIntrinsics& k) {
  if (!(p.z() > 0.0)) {
    throw Error(ErrorCode::kNonPositiveDepth, "cannot project a point with Z <= 0");
  }
  const double inv_z = 1.0 / p.z();
  return {k.fx * p.x() * inv_z + k.cx, k.fy * p.y() * inv_z + k.cy};
}

double sample_depth(const Pixel& p, const DepthMap& depth) {
  const double px = p.x();
  const double py = p.y();
  if (!(px >= -0.5 && px < depth.width() - 0.5 && py >= -0.5 && py < depth.height() - 0.5)) {
    throw Error(ErrorCode::kOutOfBounds, "pixel outside the depth map");
  }
  const int x0 = static_cast<int>(std::floor(px));
  const int y0 = static_cast<int>(std::floor(py));
  const double wx = px - x0;
  const double wy = py - y0;

  const int max_x = depth.width() - 1;
  const int max_y = depth.height() - 1;
  const std::array<int, 4> xs = {std::clamp(x0, 0, max_x), std::clamp(x0 + 1, 0, max_x),
                                 std::clamp(x0, 0, max_x), std::clamp(x0 + 1, 0, max_x)};
  const std::array<int, 4> ys = {std::clamp(y0, 0, max_y), std::clamp(y0, 0, max_y),
                                 std::clamp(y0 + 1, 0, max_y), std::clamp(y0 + 1, 0, max_y)};
  const std::array<double, 4> weights = {(1.0 - wx) * (1.0 - wy), wx * (1.0 - wy),
                                         (1.0 - wx) * wy, wx * wy};

  bool all_valid = true;
  for (int i = 0; i < 4; ++i) {
    all_valid = all_valid && depth.valid(xs[i], ys[i]);
  }
  if (all_valid) {
    double d = 0.0;
    for (int i = 0; i < 4; ++i) {
      d += weights[i] * depth.depth(xs[i], ys[i]);
    }
    return d;
  }

  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) {
    if (!depth.valid(xs[i], ys[i])) {
      continue;
    }
    const double dx = px - xs[i];
    const double dy = py - ys[i];
    const double dist = dx * dx + dy * dy;
    if (dist < best_dist) {
      best_dist = dist;
      best = i;
    }
  }
  if (best < 0) {
    throw Error(ErrorCode::kInvalidDepth, "no valid depth around the sampled pixel");
  }
  return depth.depth(xs[best], ys[best]);
}

Point3 unproject(const Pixel& p, const DepthMap& depth, const CameraIntrinsics& k) {
  const double d = sample_depth(p, depth);
  const Eigen::Vector3d ray((p.x() - k.cx) / k.fx, (p.y() - k.cy) / k.fy, 1.0);
  return d * ray;
}

double sin_deg(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) {
    r += 360.0;
  }
  double sign = 1.0;
  if (r >= 180.0) {
    r -= 180.0;
    sign = -1.0;
  }
  if (r > 90.0) {
    r = 180.0 - r;
  }
  // r in [0, 90]
  constexpr double kRad = std::numbers::pi / 180.0;
  double v;
  if (r == 0.0) {
    v = 0.0;
  } else if (r == 90.0) {
    v = 1.0;
  } else if (r > 45.0) {
    v = std::cos((90.0 - r) * kRad);
  } else {
    v = std::sin(r * kRad);
  }
  return sign * v;
}

double cos_deg(double deg) { return sin_deg(deg + 90.0); }

Eigen::Matrix3d euler_to_rotation(const EulerAngles& a) {
  const double sx = sin_deg(a.rx), cx = cos_deg(a.rx);
  const double sy = sin_deg(a.ry), cy = cos_deg(a.ry);
  const double sz = sin_deg(a.rz), cz = cos_deg(a.rz);
  Eigen::Matrix3d rx, ry, rz;
  rx << 1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx;
  ry << cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy;
  rz << cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0;
  return rz * ry * rx;
}

std::vector<Point3> apply_transform(const RigidTransform& t, std::span<const Point3> pts) {
  std::vector<Point3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) {
    out.push_back(t(p));
  }
  return out;
}

namespace {

// Twice the signed area of (a, b, p); positive when p lies on the interior
// side of a->b for a triangle with positive area.
double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

// With y pointing down, a top edge runs in +x and a left edge runs upward.
bool is_top_left(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const double dx = b.x() - a.x();
  const double dy = b.y() - a.y();
  return (dy == 0.0 && dx > 0.0) || dy < 0.0;
}

bool covers(double w, bool top_left) { return w > 0.0 || (w == 0.0 && top_left); }

}  // namespace

Raster rasterize(const TriMesh& mesh, const CameraIntrinsics& k) {
  mesh.validate();
  Raster out{DepthMap(k.width, k.height),
             std::vector<std::int32_t>(static_cast<std::size_t>(k.width) * static_cast<std::size_t>(k.height), -1)};
  std::vector<double> zbuf(out.triangle.size(), std::numeric_limits<double>::infinity());

  for (std::size_t ti = 0; ti < mesh.triangles.size(); ++ti) {
    const auto& tri = mesh.triangles[ti];
    std::array<Eigen::Vector2d, 3> s;
    std::array<double, 3> z;
    for (int i = 0; i < 3; ++i) {
      const Point3& v = mesh.vertices[static_cast<std::size_t>(tri[i])];
      s[i] = project(v, k);
      z[i] = v.z();
    }
    double area = edge(s[0], s[1], s[2]);
    if (area == 0.0 || !std::isfinite(area)) {
      continue;
    }
    if (area < 0.0) {
      std::swap(s[1], s[2]);
      std::swap(z[1], z[2]);
      area = -area;
    }
    const bool tl0 = is_top_left(s[1], s[2]);
    const bool tl1 = is_top_left(s[2], s[0]);
    const bool tl2 = is_top_left(s[0], s[1]);

    const double min_x = std::min({s[0].x(), s[1].x(), s[2].x()});
    const double max_x = std::max({s[0].x(), s[1].x(), s[2].x()});
    const double min_y = std::min({s[0].y(), s[1].y(), s[2].y()});
    const double max_y = std::max({s[0].y(), s[1].y(), s[2].y()});
    const int x_begin = std::max(0, static_cast<int>(std::ceil(min_x)));
    const int x_end = std::min(k.width - 1, static_cast<int>(std::floor(max_x)));
    const int y_begin = std::max(0, static_cast<int>(std::ceil(min_y)));
    const int y_end = std::min(k.height - 1, static_cast<int>(std::floor(max_y)));

    for (int y = y_begin; y <= y_end; ++y) {
      for (int x = x_begin; x <= x_end; ++x) {
        const Eigen::Vector2d p(x, y);
        const double w0 = edge(s[1], s[2], p);
        const double w1 = edge(s[2], s[0], p);
        const double w2 = edge(s[0], s[1], p);
        if (!covers(w0, tl0) || !covers(w1, tl1) || !covers(w2, tl2)) {
          continue;
        }
        const double inv_z = (w0 / z[0] + w1 / z[1] + w2 / z[2]) / area;
        const double d = 1.0 / inv_z;
        const std::size_t idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(k.width) +
                                static_cast<std::size_t>(x);
        if (d < zbuf[idx]) {
          zbuf[idx] = d;
          out.triangle[idx] = static_cast<std::int32_t>(ti);
          out.depth.set(x, y, d);
        }
      }
    }
  }
  return out;
}

DepthMap rasterize_depth(const TriMesh& mesh, const CameraIntrinsics& k) {
  return rasterize(mesh, k).depth;
}

double rotation_geodesic_deg(const Eigen::Matrix3d& r1, const Eigen::Matrix3d& r2) {
  const Eigen::Matrix3d rel = r1.transpose() * r2;
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Eigen::Vector3d axis(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  const double s = 0.5 * axis.norm();
  const double angle = std::atan2(s, c) * 180.0 / std::numbers::pi;
  return std::clamp(angle, 0.0, 180.0);
}

Eigen::Matrix3d axis_angle_to_rotation(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  if (theta < 1e-300) {
    return Eigen::Matrix3d::Identity();
  }
  return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

bool is_rotation(const Eigen::Matrix3d& r, double tol) {
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace guidesynth
