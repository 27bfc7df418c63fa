#pragma once

// Shared numeric geometry: rotations, rigid motions, camera poses, the two
// projection maps and midpoint triangulation. Everything here is a pure
// function of its arguments.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "multiframe/error.hpp"

namespace mf {

using Point3 = Eigen::Vector3d;
using ImagePoint = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

/// Proper orthonormal 3x3 matrix. Construction validates the invariant.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Throws ErrorKind::input when `m` is not orthonormal with det +1 within `tol`.
  static Rotation from_matrix(const Mat3& m, double tol = 1e-9) {
    if (!m.allFinite()) fail(ErrorKind::input, "rotation has non-finite entries");
    const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
    const double det = m.determinant();
    if (ortho > tol || std::abs(det - 1.0) > tol)
      fail(ErrorKind::input, "matrix is not a proper rotation (orthogonality error " +
                                 std::to_string(ortho) + ", det " + std::to_string(det) + ")");
    return Rotation(m);
  }

  /// Projects an arbitrary matrix onto the nearest proper rotation (SVD).
  static Rotation nearest(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0) u.col(2) *= -1.0;
    return Rotation(u * v.transpose());
  }

  static Rotation identity() { return Rotation(); }

  const Mat3& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Rotation inverse() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
  Point3 operator*(const Point3& p) const { return m_ * p; }

  /// Geodesic angle (radians) between this rotation and `o`.
  double angle_to(const Rotation& o) const {
    const Mat3 d = m_.transpose() * o.m_;
    const double c = (d.trace() - 1.0) / 2.0;
    const double s = Point3(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)).norm() / 2.0;
    return std::atan2(s, c);
  }

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

/// Rodrigues rotation. `axis` must be a unit vector within 1e-9.
inline Rotation rotation_from_axis_angle(const Point3& axis, double angle) {
  if (!axis.allFinite() || std::abs(axis.norm() - 1.0) > 1e-9)
    fail(ErrorKind::input, "rotation axis must be a unit vector");
  const Mat3 m = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  return Rotation::nearest(m);
}

struct RigidMotion {
  Rotation rotation;
  Point3 translation = Point3::Zero();

  static RigidMotion identity() { return {}; }

  RigidMotion inverse() const {
    const Rotation rt = rotation.inverse();
    return {rt, -(rt * translation)};
  }
  /// (this ∘ o)(p) = this(o(p))
  RigidMotion operator*(const RigidMotion& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }
};

/// p ↦ R·p + t
inline Point3 apply_motion(const RigidMotion& m, const Point3& p) {
  return m.rotation * p + m.translation;
}

/// A projection plane with an orthonormal in-plane basis and either a finite
/// focal point (central projection) or none (parallel projection along the
/// plane normal).
struct CameraPose {
  Point3 origin = Point3::Zero();
  Point3 u = Point3::UnitX();
  Point3 v = Point3::UnitY();
  std::optional<Point3> focal;

  static CameraPose orthographic(const Point3& origin, const Point3& u, const Point3& v) {
    CameraPose p{origin, u, v, std::nullopt};
    p.validate();
    return p;
  }
  static CameraPose perspective(const Point3& origin, const Point3& u, const Point3& v,
                                const Point3& focal) {
    CameraPose p{origin, u, v, focal};
    p.validate();
    return p;
  }
  /// Focal point at the world origin, plane z = 1, image axes along x and y.
  static CameraPose calibrated() {
    return perspective(Point3(0, 0, 1), Point3::UnitX(), Point3::UnitY(), Point3::Zero());
  }
  /// Plane z = 0 viewed along +z.
  static CameraPose orthographic_xy() {
    return orthographic(Point3::Zero(), Point3::UnitX(), Point3::UnitY());
  }

  bool is_orthographic() const { return !focal.has_value(); }
  Point3 normal() const { return u.cross(v); }
  Point3 plane_point(const ImagePoint& q) const { return origin + q.x() * u + q.y() * v; }
  ImagePoint plane_coords(const Point3& x) const {
    const Point3 d = x - origin;
    return {d.dot(u), d.dot(v)};
  }

  void validate(double tol = 1e-9) const {
    if (!origin.allFinite() || !u.allFinite() || !v.allFinite())
      fail(ErrorKind::input, "camera pose has non-finite entries");
    if (std::abs(u.norm() - 1.0) > tol || std::abs(v.norm() - 1.0) > tol ||
        std::abs(u.dot(v)) > tol)
      fail(ErrorKind::input, "camera plane basis is not orthonormal");
    if (focal) {
      if (!focal->allFinite()) fail(ErrorKind::input, "focal point is not finite");
      if (std::abs((*focal - origin).dot(normal())) <= tol)
        fail(ErrorKind::input, "focal point lies in the projection plane");
    }
  }
};

struct Ray {
  Point3 origin;
  Point3 direction;  ///< unit

  Point3 at(double t) const { return origin + t * direction; }
};

inline ImagePoint project_orthographic(const Point3& p, const CameraPose& pose) {
  if (!pose.is_orthographic()) fail(ErrorKind::input, "orthographic projection needs an orthographic pose");
  return pose.plane_coords(p);
}

/// Signed distance of `p` from the focal point, measured along the plane
/// normal oriented towards the plane.
inline double perspective_depth(const Point3& p, const CameraPose& pose) {
  const Point3 n = pose.normal();
  const double side = (pose.origin - *pose.focal).dot(n) > 0 ? 1.0 : -1.0;
  return side * (p - *pose.focal).dot(n);
}

/// Intersection of the line (focal, p) with the plane, without a depth-sign
/// check. Used for epipoles, whose focal points may lie behind the camera.
inline ImagePoint project_central(const Point3& p, const CameraPose& pose) {
  if (pose.is_orthographic()) fail(ErrorKind::input, "central projection needs a perspective pose");
  const Point3 n = pose.normal();
  const Point3& f = *pose.focal;
  const double denom = (p - f).dot(n);
  const double scale = std::max(1.0, (p - f).norm());
  if (std::abs(denom) <= 1e-14 * scale)
    fail(ErrorKind::degenerate, "line through focal point is parallel to the projection plane");
  const double s = (pose.origin - f).dot(n) / denom;
  return pose.plane_coords(f + s * (p - f));
}

inline ImagePoint project_perspective(const Point3& p, const CameraPose& pose) {
  if (pose.is_orthographic()) fail(ErrorKind::input, "perspective projection needs a perspective pose");
  if (!(perspective_depth(p, pose) > 0.0))
    fail(ErrorKind::degenerate, "point has zero or negative depth");
  return project_central(p, pose);
}

/// Projects with whichever model the pose carries.
inline ImagePoint project(const Point3& p, const CameraPose& pose) {
  return pose.is_orthographic() ? project_orthographic(p, pose) : project_perspective(p, pose);
}

/// Perspective: from the focal point through the plane point. Orthographic:
/// through the plane point along the plane normal (focal point at infinity).
inline Ray ray_through(const ImagePoint& q, const CameraPose& pose) {
  const Point3 x = pose.plane_point(q);
  if (pose.is_orthographic()) return {x, pose.normal().normalized()};
  return {*pose.focal, (x - *pose.focal).normalized()};
}

struct Triangulation {
  Point3 point;
  double gap = 0.0;  ///< length of the shortest segment joining the rays
};

/// Midpoint of the common perpendicular of two lines. Near-parallel lines
/// (sine of the angle below `parallel_tol`) are rejected.
inline Triangulation triangulate_midpoint(const Ray& r1, const Ray& r2, double parallel_tol = 1e-10) {
  const Point3 d1 = r1.direction.normalized();
  const Point3 d2 = r2.direction.normalized();
  const double b = d1.dot(d2);
  const double sin2 = 1.0 - b * b;
  if (d1.cross(d2).norm() < parallel_tol || sin2 <= 0.0)
    fail(ErrorKind::degenerate, "rays are parallel; triangulation undefined");
  const Point3 w0 = r1.origin - r2.origin;
  const double d = d1.dot(w0);
  const double e = d2.dot(w0);
  const double s = (b * e - d) / sin2;
  const double t = (e - b * d) / sin2;
  const Point3 p1 = r1.origin + s * d1;
  const Point3 p2 = r2.origin + t * d2;
  return {(p1 + p2) / 2.0, (p1 - p2).norm()};
}

/// Oriented line in the image plane.
struct Line2 {
  ImagePoint point;
  ImagePoint direction;  ///< unit

  static Line2 through(const ImagePoint& a, const ImagePoint& b) {
    const ImagePoint d = b - a;
    if (d.norm() == 0.0) fail(ErrorKind::degenerate, "line through coincident points");
    return {a, d.normalized()};
  }
  /// Signed distance, positive on the left of the direction.
  double signed_distance(const ImagePoint& q) const {
    const ImagePoint r = q - point;
    return direction.x() * r.y() - direction.y() * r.x();
  }
};

inline double cross2(const ImagePoint& a, const ImagePoint& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Intersection of two image lines; rejects lines whose directions differ by
/// less than `parallel_tol` (sine of the angle).
inline ImagePoint intersect(const Line2& a, const Line2& b, double parallel_tol = 1e-10) {
  const double den = cross2(a.direction, b.direction);
  if (std::abs(den) < parallel_tol) fail(ErrorKind::degenerate, "image lines are parallel");
  const double t = cross2(b.point - a.point, b.direction) / den;
  return a.point + t * a.direction;
}

}  // namespace mf
