#pragma once

// Three-point rigid body under orthographic projection: true edge lengths from
// the per-frame quartic constraint, partially linearized across frames, then
// per-frame depth offsets and motions.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "multiframe/geometry.hpp"

namespace mf {

/// Projected lengths a_i = |P_iQ_i|, b_i = |Q_iR_i|, c_i = |R_iP_i| plus the raw points.
struct TriangleFrameObs {
  ImagePoint P = ImagePoint::Zero(), Q = ImagePoint::Zero(), R = ImagePoint::Zero();
  double a = 0, b = 0, c = 0;

  static TriangleFrameObs from_points(const ImagePoint& p, const ImagePoint& q, const ImagePoint& r);
};

inline std::array<double, 3> edge_lengths(const ImagePoint& p, const ImagePoint& q, const ImagePoint& r) {
  if (p == q || q == r || r == p) fail(ErrorKind::degenerate, "triangle has coincident vertices");
  return {(q - p).norm(), (r - q).norm(), (p - r).norm()};
}

inline TriangleFrameObs TriangleFrameObs::from_points(const ImagePoint& p, const ImagePoint& q, const ImagePoint& r) {
  const auto l = edge_lengths(p, q, r);
  return {p, q, r, l[0], l[1], l[2]};
}

/// Which of the three depth-closure relations holds; the named position
/// carries the minus sign on (sqrt(a²-a_i²), sqrt(b²-b_i²), sqrt(c²-c_i²)).
enum class SignPattern { minus_c, minus_b, minus_a };

inline std::string_view to_string(SignPattern s) {
  switch (s) {
    case SignPattern::minus_c: return "(+,+,-)";
    case SignPattern::minus_b: return "(+,-,+)";
    case SignPattern::minus_a: return "(-,+,+)";
  }
  return "?";
}

inline std::array<int, 3> signs(SignPattern s) {
  switch (s) {
    case SignPattern::minus_c: return {1, 1, -1};
    case SignPattern::minus_b: return {1, -1, 1};
    case SignPattern::minus_a: return {-1, 1, 1};
  }
  return {1, 1, 1};
}

/// Left side of the per-frame quartic in the squared true lengths, term by term.
inline double quartic_residual(double a2, double b2, double c2, const TriangleFrameObs& o) {
  const double ai2 = o.a * o.a, bi2 = o.b * o.b, ci2 = o.c * o.c;
  return a2 * a2 + b2 * b2 + c2 * c2 - 2 * a2 * b2 - 2 * a2 * c2 - 2 * b2 * c2 + ai2 * ai2 + bi2 * bi2 + ci2 * ci2 -
         2 * ai2 * bi2 - 2 * ai2 * ci2 - 2 * bi2 * ci2 + 2 * (-ai2 + bi2 + ci2) * a2 + 2 * (ai2 - bi2 + ci2) * b2 +
         2 * (ai2 + bi2 - ci2) * c2;
}

/// Two rows coef·(a²,b²,c²) = rhs, each the difference of a frame's quartic and frame 3's.
struct LinearPair {
  Eigen::Matrix<double, 2, 3> coef = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
  std::array<bool, 2> zero_row{false, false};

  bool rank_deficient() const { return zero_row[0] || zero_row[1]; }
};

namespace detail {
// Frame-dependent part of the quartic: linear coefficients and constant.
inline void quartic_terms(const TriangleFrameObs& o, Eigen::RowVector3d& lin, double& cst) {
  const double ai2 = o.a * o.a, bi2 = o.b * o.b, ci2 = o.c * o.c;
  lin << 2 * (-ai2 + bi2 + ci2), 2 * (ai2 - bi2 + ci2), 2 * (ai2 + bi2 - ci2);
  cst = ai2 * ai2 + bi2 * bi2 + ci2 * ci2 - 2 * ai2 * bi2 - 2 * ai2 * ci2 - 2 * bi2 * ci2;
}
}  // namespace detail

inline LinearPair linearized_pair(const TriangleFrameObs& o1, const TriangleFrameObs& o2, const TriangleFrameObs& o3,
                                  double zero_tol = 0.0) {
  Eigen::RowVector3d l1, l2, l3;
  double c1, c2, c3;
  detail::quartic_terms(o1, l1, c1);
  detail::quartic_terms(o2, l2, c2);
  detail::quartic_terms(o3, l3, c3);
  LinearPair p;
  p.coef.row(0) = l1 - l3;
  p.coef.row(1) = l2 - l3;
  p.rhs << c3 - c1, c3 - c2;
  for (int r = 0; r < 2; ++r) p.zero_row[r] = p.coef.row(r).cwiseAbs().maxCoeff() <= zero_tol;
  return p;
}

struct FrameStructure {
  SignPattern pattern = SignPattern::minus_c;
  double pattern_residual = 0;  ///< |±x±y±z| for the chosen pattern
  Eigen::Vector3d depths = Eigen::Vector3d::Zero();  ///< (δ_P, δ_Q, δ_R), δ_P = 0, one reflection
};

struct TriangleSolution {
  double a = 0, b = 0, c = 0;
  std::vector<FrameStructure> frames;
  double max_quartic_residual = 0;  ///< over all frames, in scale⁴ units
};

struct Ortho3pOptions {
  double admissibility_tol = 1e-9;  ///< clamp band for a² < a_i², in scale² units
  double pattern_tol = 1e-7;        ///< closure tolerance, in scale units
  double extra_frame_tol = 1e-7;    ///< quartic residual on frames beyond the third, in scale⁴ units
  double rank_tol = 1e-10;          ///< singular-value floor of the linear pair, in scale⁴ units
};

/// Depth offsets for both reflections: |δ_Q−δ_P| = sqrt(a²−a_i²) etc., signs by pattern.
inline std::array<Eigen::Vector3d, 2> reconstruct_depths(double a, double b, double c, SignPattern pattern,
                                                         const TriangleFrameObs& o, double tol_scale2 = 0.0) {
  auto magnitude = [tol_scale2](double t, double p, const char* name) {
    const double d = t * t - p * p;
    if (d < -tol_scale2)
      fail(ErrorKind::inconsistent, std::string("true length ") + name + " is shorter than its projection");
    return std::sqrt(std::max(d, 0.0));
  };
  const double x = magnitude(a, o.a, "a"), y = magnitude(b, o.b, "b");
  magnitude(c, o.c, "c");
  const auto s = signs(pattern);
  const Eigen::Vector3d d(0.0, s[0] * x, s[0] * x + s[1] * y);
  return {d, -d};
}

namespace detail {
inline double closure(const std::array<double, 3>& m, SignPattern p) {
  const auto s = signs(p);
  return s[0] * m[0] + s[1] * m[1] + s[2] * m[2];
}
}  // namespace detail

inline std::vector<TriangleSolution> solve_triangle(const std::vector<TriangleFrameObs>& obs,
                                                    const Ortho3pOptions& opt = {}) {
  if (obs.size() < 3) fail(ErrorKind::input, "the orthographic triangle solver needs at least 3 frames");
  double scale = 0;
  for (const auto& o : obs) scale = std::max({scale, o.a, o.b, o.c});
  if (!(scale > 0) || !std::isfinite(scale)) fail(ErrorKind::degenerate, "all projected lengths vanish");

  std::vector<TriangleFrameObs> n = obs;
  for (auto& o : n) {
    o.a /= scale;
    o.b /= scale;
    o.c /= scale;
  }
  const LinearPair lp = linearized_pair(n[0], n[1], n[2]);
  Eigen::JacobiSVD<Eigen::Matrix<double, 2, 3>> svd(lp.coef, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector2d sv = svd.singularValues();
  if (sv[1] <= opt.rank_tol)
    fail(ErrorKind::rank_deficient,
         "linearized frame pair has rank < 2; depths are unobservable (e.g. in-plane motion only)");
  const Eigen::Vector3d x0 = svd.solve(lp.rhs);
  const Eigen::Vector3d dir = svd.matrixV().col(2);

  // Third frame's quartic along x0 + t·dir.
  Eigen::Matrix3d M;
  M << 1, -1, -1, -1, 1, -1, -1, -1, 1;
  const Eigen::Vector3d alpha3(n[2].a * n[2].a, n[2].b * n[2].b, n[2].c * n[2].c);
  const Eigen::Vector3d w = x0 - alpha3;
  const double qa = dir.dot(M * dir), qb = 2 * dir.dot(M * w), qc = w.dot(M * w);
  std::vector<double> roots;
  if (std::abs(qa) <= 1e-14 * (std::abs(qb) + std::abs(qc))) {
    if (std::abs(qb) > 0) roots.push_back(-qc / qb);
  } else {
    double disc = qb * qb - 4 * qa * qc;
    if (disc < 0 && disc > -1e-12 * (qb * qb + std::abs(4 * qa * qc))) disc = 0;
    if (disc >= 0) {
      const double q = -0.5 * (qb + std::copysign(std::sqrt(disc), qb));
      roots.push_back(q / qa);
      if (q != 0 && disc > 0) roots.push_back(qc / q);
    }
  }

  std::vector<TriangleSolution> out;
  for (double t : roots) {
    Eigen::Vector3d sq = x0 + t * dir;
    bool admissible = sq.allFinite();
    for (const auto& o : n) {
      const Eigen::Vector3d proj2(o.a * o.a, o.b * o.b, o.c * o.c);
      for (int k = 0; k < 3; ++k) {
        if (sq[k] < proj2[k] - opt.admissibility_tol) admissible = false;
        sq[k] = std::max(sq[k], proj2[k]);
      }
    }
    if (!admissible) continue;

    TriangleSolution s;
    s.a = std::sqrt(sq[0]) * scale;
    s.b = std::sqrt(sq[1]) * scale;
    s.c = std::sqrt(sq[2]) * scale;
    bool keep = true;
    for (std::size_t i = 0; i < n.size(); ++i) {
      const double r = std::abs(quartic_residual(sq[0], sq[1], sq[2], n[i]));
      s.max_quartic_residual = std::max(s.max_quartic_residual, r);
      if (i >= 3 && r > opt.extra_frame_tol) keep = false;
    }
    if (!keep) continue;
    for (std::size_t i = 0; i < n.size(); ++i) {
      const std::array<double, 3> m = {std::sqrt(std::max(sq[0] - n[i].a * n[i].a, 0.0)),
                                       std::sqrt(std::max(sq[1] - n[i].b * n[i].b, 0.0)),
                                       std::sqrt(std::max(sq[2] - n[i].c * n[i].c, 0.0))};
      FrameStructure fs;
      fs.pattern_residual = std::numeric_limits<double>::infinity();
      for (SignPattern p : {SignPattern::minus_c, SignPattern::minus_b, SignPattern::minus_a}) {
        const double r = std::abs(detail::closure(m, p));
        if (r < fs.pattern_residual) {
          fs.pattern_residual = r;
          fs.pattern = p;
        }
      }
      if (fs.pattern_residual > opt.pattern_tol) keep = false;
      fs.pattern_residual *= scale;
      fs.depths = reconstruct_depths(s.a, s.b, s.c, fs.pattern, obs[i], opt.admissibility_tol * scale * scale)[0];
      s.frames.push_back(fs);
    }
    if (keep) out.push_back(std::move(s));
  }
  if (out.empty()) fail(ErrorKind::no_solution, "no real admissible edge lengths");
  return out;
}

struct MotionFit {
  RigidMotion motion;
  double rms = 0;  ///< alignment residual
};

/// Best proper rigid motion taking `from` onto `to` (orthogonal decomposition
/// of the centred cross-covariance). Needs at least 3 non-collinear points.
inline MotionFit recover_motion(const std::vector<Point3>& from, const std::vector<Point3>& to) {
  if (from.size() != to.size() || from.size() < 3)
    fail(ErrorKind::input, "motion fit needs two equally sized sets of at least 3 points");
  const Eigen::Index n = static_cast<Eigen::Index>(from.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = from[static_cast<std::size_t>(i)];
    dst.col(i) = to[static_cast<std::size_t>(i)];
  }
  for (const Eigen::Matrix3Xd* m : {&src, &dst}) {
    const Eigen::Matrix3Xd c = m->colwise() - m->rowwise().mean();
    const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3Xd>(c).singularValues();
    if (sv[1] <= 1e-10 * std::max(sv[0], 1e-300)) fail(ErrorKind::degenerate, "point set is collinear; motion is ill-posed");
  }
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
  MotionFit fit;
  fit.motion.rotation = Rotation::nearest(T.topLeftCorner<3, 3>());
  fit.motion.translation = T.topRightCorner<3, 1>();
  double ss = 0;
  for (Eigen::Index i = 0; i < n; ++i) ss += (apply_motion(fit.motion, src.col(i)) - dst.col(i)).squaredNorm();
  fit.rms = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

/// Camera-frame triple (u, v, depth) for one frame and reflection sign.
inline std::vector<Point3> posed_triple(const TriangleFrameObs& o, const FrameStructure& fs, int reflection) {
  const Eigen::Vector3d d = reflection * fs.depths;
  return {Point3(o.P.x(), o.P.y(), d[0]), Point3(o.Q.x(), o.Q.y(), d[1]), Point3(o.R.x(), o.R.y(), d[2])};
}

}  // namespace mf
