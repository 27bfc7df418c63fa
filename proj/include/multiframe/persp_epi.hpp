#pragma once

// Two-frame calibrated perspective: bilinear depth-free constraint, linear
// composite matrix, rotation/translation candidates and depth recovery.
//
// Camera: focal point at the origin, image plane z = 1. A point seen at
// (x1, y1) and (x2, y2) satisfies Z2 m2 = Z1 A m1 + t with m = (x, y, 1).

#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "multiframe/scene.hpp"

namespace mf {

struct Correspondence {
  ImagePoint m1, m2;
};

inline Point3 homogeneous(const ImagePoint& q) { return {q.x(), q.y(), 1.0}; }

inline Mat3 skew(const Point3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

/// Rotation taking direction `d` onto +z. Identity when `d` is already there.
inline Rotation rotation_to_axis(const Point3& d) {
  const Point3 u = d.normalized();
  const Point3 axis = u.cross(Point3::UnitZ());
  const double s = axis.norm();
  const double c = u.z();
  if (s == 0.0) {
    if (c > 0) return Rotation::identity();
    fail(ErrorKind::degenerate, "direction points away from the image plane");
  }
  return rotation_from_axis_angle(axis / s, std::atan2(s, c));
}

/// Re-projects an image point after turning the camera by `q`.
inline ImagePoint rotate_image(const ImagePoint& p, const Rotation& q) {
  const Point3 r = q * homogeneous(p);
  if (std::abs(r.z()) < 1e-12 * r.norm()) fail(ErrorKind::degenerate, "point leaves the turned image plane");
  return {r.x() / r.z(), r.y() / r.z()};
}

struct NormalizedPair {
  std::vector<Correspondence> points;
  std::size_t distinguished = 0;
  Rotation q1, q2;  ///< virtual camera turns applied to frame 1 and frame 2 rays

  Correspondence restore(const Correspondence& c) const {
    return {rotate_image(c.m1, q1.inverse()), rotate_image(c.m2, q2.inverse())};
  }
};

inline NormalizedPair normalize_distinguished(const std::vector<Correspondence>& pts, std::size_t index) {
  if (index >= pts.size()) fail(ErrorKind::input, "distinguished point missing");
  NormalizedPair n;
  n.distinguished = index;
  n.q1 = rotation_to_axis(homogeneous(pts[index].m1));
  n.q2 = rotation_to_axis(homogeneous(pts[index].m2));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i == index) {
      n.points.push_back({ImagePoint::Zero(), ImagePoint::Zero()});
      continue;
    }
    n.points.push_back({rotate_image(pts[i].m1, n.q1), rotate_image(pts[i].m2, n.q2)});
  }
  return n;
}

/// (x2, y2, 1) E (x1, y1, 1)^T
inline double elimination_constraint(const Mat3& e, const Correspondence& c) {
  return homogeneous(c.m2).dot(e * homogeneous(c.m1));
}

struct CompositeMatrix {
  Mat3 e = Mat3::Zero();        ///< unit Frobenius norm
  double residual = 0.0;        ///< smallest singular value of the stacked system
  Eigen::Vector3d singular;     ///< singular values of e, descending
  int rank = 0;
};

struct CompositeOptions {
  int min_points = 9;
  double rank_tol = 1e-10;
};

inline Eigen::Matrix<double, 1, 9> constraint_row(const Correspondence& c) {
  const Point3 a = homogeneous(c.m1), b = homogeneous(c.m2);
  Eigen::Matrix<double, 1, 9> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(3 * i + j) = b(i) * a(j);
  return r;
}

inline CompositeMatrix solve_composite(const std::vector<Correspondence>& pts, const CompositeOptions& opt = {}) {
  const int n = static_cast<int>(pts.size());
  if (n < opt.min_points)
    fail(ErrorKind::input, "linear solve needs at least " + std::to_string(opt.min_points) + " points, got " +
                               std::to_string(n));
  Eigen::MatrixXd a(std::max(n, 9), 9);
  a.setZero();
  for (int i = 0; i < n; ++i) {
    if (!pts[i].m1.allFinite() || !pts[i].m2.allFinite()) fail(ErrorKind::input, "non-finite image coordinate");
    a.row(i) = constraint_row(pts[i]);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  CompositeMatrix out;
  for (int i = 0; i < 9; ++i) out.rank += s(i) > opt.rank_tol * std::max(s(0), 1e-300) ? 1 : 0;
  if (out.rank < 8)
    fail(ErrorKind::rank_deficient, "stacked system has rank " + std::to_string(out.rank) + " < 8");
  const Eigen::Matrix<double, 9, 1> v = svd.matrixV().col(8);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.e(i, j) = v(3 * i + j);
  Eigen::Index r, c;
  out.e.cwiseAbs().maxCoeff(&r, &c);
  if (out.e(r, c) < 0) out.e = -out.e;
  out.e /= out.e.norm();
  out.residual = s(8);
  out.singular = Eigen::JacobiSVD<Mat3>(out.e).singularValues();
  return out;
}

/// Closest matrix with singular values (1, 1, 0)/sqrt(2).
inline Mat3 project_essential(const Mat3& e) {
  Eigen::JacobiSVD<Mat3> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d d(1.0, 1.0, 0.0);
  return svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose() / std::sqrt(2.0);
}

struct MotionCandidate {
  Rotation rotation;
  Point3 translation;  ///< unit
};

inline std::vector<MotionCandidate> decompose(const Mat3& e, double tol = 1e-6) {
  Eigen::JacobiSVD<Mat3> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d s = svd.singularValues();
  if (!(s(0) > 0) || (s(0) - s(1)) > tol * s(0) || s(2) > tol * s(0))
    fail(ErrorKind::not_essential, "singular values (" + std::to_string(s(0)) + ", " + std::to_string(s(1)) +
                                       ", " + std::to_string(s(2)) + ") are not of the form (a, a, 0)");
  Mat3 u = svd.matrixU(), v = svd.matrixV();
  if (u.determinant() < 0) u.col(2) = -u.col(2);
  if (v.determinant() < 0) v.col(2) = -v.col(2);
  Mat3 w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Rotation ra = Rotation::nearest(u * w * v.transpose());
  const Rotation rb = Rotation::nearest(u * w.transpose() * v.transpose());
  const Point3 t = u.col(2).normalized();
  return {{ra, t}, {ra, -t}, {rb, t}, {rb, -t}};
}

struct PointDepth {
  double z1 = 0.0, z2 = 0.0;
  bool singular = false;  ///< rays (nearly) parallel, excluded from the vote
};

/// Least-squares solution of Z1 A m1 - Z2 m2 = -t.
inline PointDepth point_depth(const MotionCandidate& c, const Correspondence& p, double singular_tol = 1e-10) {
  const Point3 a = c.rotation * homogeneous(p.m1);
  const Point3 b = homogeneous(p.m2);
  PointDepth d;
  if (a.normalized().cross(b.normalized()).norm() < singular_tol) {
    d.singular = true;
    return d;
  }
  Eigen::Matrix<double, 3, 2> m;
  m.col(0) = a;
  m.col(1) = -b;
  const Eigen::Vector2d z = m.colPivHouseholderQr().solve(-c.translation);
  d.z1 = z(0);
  d.z2 = z(1);
  return d;
}

struct MotionEstimate {
  Rotation rotation;
  Point3 translation = Point3::Zero();  ///< unit direction; zero when the baseline is degenerate
  double baseline = 0.0;                ///< translation length in the unit-distance gauge
  std::vector<double> z1, z2;           ///< depths along each camera's z axis
  std::vector<bool> singular;
  bool baseline_degenerate = false;
};

struct ChiralityVote {
  std::array<int, 4> positive{};  ///< points with both depths > 0, per candidate
  int counted = 0;                ///< non-singular points
  int survivors = 0;
  int chosen = -1;
};

inline MotionEstimate recover_depths(const std::vector<MotionCandidate>& cands,
                                     const std::vector<Correspondence>& pts, ChiralityVote* vote = nullptr,
                                     double singular_tol = 1e-10) {
  ChiralityVote v;
  std::vector<std::vector<PointDepth>> depths(cands.size());
  for (std::size_t c = 0; c < cands.size() && c < 4; ++c) {
    int counted = 0;
    for (const auto& p : pts) {
      const PointDepth d = point_depth(cands[c], p, singular_tol);
      depths[c].push_back(d);
      if (d.singular) continue;
      ++counted;
      if (d.z1 > 0 && d.z2 > 0) ++v.positive[c];
    }
    v.counted = counted;
    if (counted > 0 && v.positive[c] == counted) {
      ++v.survivors;
      v.chosen = static_cast<int>(c);
    }
  }
  if (vote) *vote = v;
  if (v.survivors != 1) {
    std::string counts;
    for (std::size_t c = 0; c < cands.size() && c < 4; ++c)
      counts += (c ? ", " : "") + std::to_string(v.positive[c]) + "/" + std::to_string(v.counted);
    fail(ErrorKind::ambiguous,
         std::to_string(v.survivors) + " candidates pass the positive-depth test (votes " + counts + ")");
  }
  MotionEstimate m;
  m.rotation = cands[v.chosen].rotation;
  m.translation = cands[v.chosen].translation;
  m.baseline = 1.0;
  for (const auto& d : depths[v.chosen]) {
    m.z1.push_back(d.z1);
    m.z2.push_back(d.z2);
    m.singular.push_back(d.singular);
  }
  return m;
}

/// Rotation best aligning the unit rays of frame 1 with those of frame 2.
inline Rotation fit_ray_rotation(const std::vector<Correspondence>& pts, double* max_residual = nullptr) {
  Mat3 h = Mat3::Zero();
  for (const auto& p : pts) h += homogeneous(p.m2).normalized() * homogeneous(p.m1).normalized().transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Rotation r = Rotation::nearest(svd.matrixU() * d * svd.matrixV().transpose());
  if (max_residual) {
    *max_residual = 0.0;
    for (const auto& p : pts)
      *max_residual = std::max(*max_residual,
                               (r * homogeneous(p.m1).normalized() - homogeneous(p.m2).normalized()).norm());
  }
  return r;
}

struct PerspOptions {
  std::string distinguished;  ///< label; empty picks the first shared label
  bool allow_eight = false;
  double rank_tol = 1e-10;
  double essential_tol = 1e-6;
  double singular_tol = 1e-10;
  double pure_rotation_tol = 1e-10;
};

struct TwoFrameResult {
  MotionEstimate motion;
  std::vector<LabeledPoint> points;  ///< frame-1 camera coordinates
  std::vector<std::string> labels;
  CompositeMatrix composite;           ///< in the normalized frames
  Mat3 essential = Mat3::Zero();       ///< E = [t] A in the original frames, unit norm
  ChiralityVote vote;
  std::string distinguished;
};

inline TwoFrameResult two_frame_reconstruct(const MultiframeDataset& d, const PerspOptions& opt = {}) {
  if (d.regime != Regime::perspective_calibrated)
    fail(ErrorKind::regime_mismatch, std::string("two-frame solver needs a perspective-calibrated dataset, got ") + std::string(
                                         to_string(d.regime)));
  if (d.frames.size() != 2)
    fail(ErrorKind::input, "two-frame solver needs exactly 2 frames, got " + std::to_string(d.frames.size()));
  const Frame& f1 = d.frames[0];
  const Frame& f2 = d.frames[1];

  TwoFrameResult out;
  std::vector<Correspondence> pts;
  for (const auto& p : f1.points)
    if (const ImagePoint* q = f2.find(p.label)) {
      out.labels.push_back(p.label);
      pts.push_back({p.q, *q});
    }
  const int min_points = opt.allow_eight ? 8 : 9;
  if (static_cast<int>(pts.size()) < min_points)
    fail(ErrorKind::input, "linear two-frame solve needs at least " + std::to_string(min_points) +
                               " shared points, got " + std::to_string(pts.size()));

  out.distinguished = opt.distinguished.empty() ? out.labels.front() : opt.distinguished;
  const auto it = std::find(out.labels.begin(), out.labels.end(), out.distinguished);
  if (it == out.labels.end()) fail(ErrorKind::input, "distinguished point '" + out.distinguished + "' missing");
  const std::size_t di = static_cast<std::size_t>(it - out.labels.begin());

  double rot_res = 0.0;
  const Rotation pure = fit_ray_rotation(pts, &rot_res);
  if (rot_res < opt.pure_rotation_tol) {
    out.motion.rotation = pure;
    out.motion.baseline_degenerate = true;
    out.motion.singular.assign(pts.size(), true);
    return out;
  }

  const NormalizedPair n = normalize_distinguished(pts, di);
  out.composite = solve_composite(n.points, {min_points, opt.rank_tol});
  const Mat3 en = project_essential(out.composite.e);
  const std::vector<MotionCandidate> cn = decompose(en, opt.essential_tol);

  // Back to the original frames: A = Q2^T A' Q1, t = Q2^T t'.
  std::vector<MotionCandidate> cands;
  for (const auto& c : cn) cands.push_back({n.q2.inverse() * c.rotation * n.q1, n.q2.inverse() * c.translation});
  MotionEstimate m = recover_depths(cands, pts, &out.vote, opt.singular_tol);
  if (m.singular[di]) fail(ErrorKind::degenerate, "distinguished point lies on the baseline");

  const double scale = 1.0 / (m.z1[di] * homogeneous(pts[di].m1).norm());
  for (auto& z : m.z1) z *= scale;
  for (auto& z : m.z2) z *= scale;
  m.baseline = scale;
  out.essential = skew(m.translation) * m.rotation.matrix();
  out.essential /= out.essential.norm();
  out.motion = m;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (!m.singular[i]) out.points.push_back({out.labels[i], m.z1[i] * homogeneous(pts[i].m1)});
  return out;
}

}  // namespace mf
