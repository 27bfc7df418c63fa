#pragma once

// Four uncalibrated frames with moving focal points. Epipole-derived points
// fix the in-plane layout of F1, F2, F3 up to four angles; F4 sits on three
// skewed cones; the remaining line-intersection conditions are solved locally.
//
// Frames are indexed 0..3 in code (frame ids 1..4 in datasets). Gauge:
// F1 = 0, F2 = (1, 0, 0), F3 in z = 0 with y > 0, F4 with z > 0.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "multiframe/scene.hpp"

namespace mf {

using Vec2 = Eigen::Vector2d;

// ---------------------------------------------------------------------------
// Epipoles and derived points

struct EpipoleTable {
  std::array<std::array<std::optional<ImagePoint>, 4>, 4> f;

  /// Image of focal point j in frame i.
  const ImagePoint& operator()(int i, int j) const {
    if (i < 0 || i > 3 || j < 0 || j > 3 || i == j || !f[i][j])
      fail(ErrorKind::input, "epipole F_{" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "} missing");
    return *f[i][j];
  }

  void validate() const {
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (i != j && !(*this)(i, j).allFinite())
          fail(ErrorKind::input, "epipole F_{" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "} not finite");
  }

  static EpipoleTable from_dataset(const MultiframeDataset& d) {
    if (d.frames.size() != 4) fail(ErrorKind::input, "need exactly 4 frames, got " + std::to_string(d.frames.size()));
    EpipoleTable t;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        if (i == j) continue;
        const auto it = d.frames[i].epipoles.find(d.frames[j].id);
        if (it != d.frames[i].epipoles.end()) t.f[i][j] = it->second;
      }
    t.validate();
    return t;
  }
};

/// Intersection of line F_{i,j} a with line F_{i,k} F_{i,l}; `a` is the
/// point's image in frame i.
inline ImagePoint derived_point(const ImagePoint& a, const EpipoleTable& ep, int i, int j, int k, int l,
                                double parallel_tol = 1e-10) {
  const Line2 through_a = Line2::through(ep(i, j), a);
  const Line2 base = Line2::through(ep(i, k), ep(i, l));
  return intersect(through_a, base, parallel_tol);
}

/// Sine of the angle between the two lines of a derived-point construction.
inline double derived_point_angle(const ImagePoint& a, const EpipoleTable& ep, int i, int j, int k, int l) {
  const ImagePoint u = (a - ep(i, j)).normalized(), v = (ep(i, l) - ep(i, k)).normalized();
  return std::abs(cross2(u, v));
}

/// Line through `p` towards `q` with (along, across) coordinates.
struct LineFrame {
  Vec2 origin = Vec2::Zero();
  Vec2 e = Vec2::UnitX();
  Vec2 n = Vec2::UnitY();

  static LineFrame through(const Vec2& p, const Vec2& q) {
    const Vec2 d = q - p;
    if (!(d.norm() > 0)) fail(ErrorKind::degenerate, "line frame through coincident points");
    LineFrame f;
    f.origin = p;
    f.e = d.normalized();
    f.n = Vec2(-f.e.y(), f.e.x());
    return f;
  }
  Vec2 coords(const Vec2& x) const { return {(x - origin).dot(e), (x - origin).dot(n)}; }
};

// ---------------------------------------------------------------------------
// Measured in-image quantities

/// Everything the layout needs from the images, expressed along the epipolar
/// lines F_{1,2}F_{1,3}, F_{2,1}F_{2,3}, F_{3,1}F_{3,2} and F_{4,1}F_{4,2}.
struct Measurements {
  int label_a = 0, label_b = 1;
  std::array<LineFrame, 4> frame;      ///< line frames in images 1..4
  std::array<double, 3> d{};           ///< position of the second epipole on lines 1..3
  std::array<double, 3> sa{}, sb{};    ///< A_{1,4,23}, A_{2,4,13}, A_{3,4,12} (and B)
  std::array<Vec2, 3> c4;              ///< F_{i,4} in line frames 1..3
  Vec2 a0_213, b0_213, a1_203, b1_203, a2_103, a2_013;
  double d4 = 0, sa4 = 0, sb4 = 0;     ///< on line 4: F_{4,2}, A_{4,3,12}, B_{4,3,12}
  Vec2 c43;                            ///< F_{4,3} in line frame 4
  std::array<std::vector<Vec2>, 4> obs;  ///< every label in each line frame
};

inline Measurements measure(const std::array<std::vector<ImagePoint>, 4>& img, const EpipoleTable& ep, int a,
                            int b) {
  const int n = static_cast<int>(img[0].size());
  if (a == b || a < 0 || b < 0 || a >= n || b >= n) fail(ErrorKind::input, "invalid A/B point choice");
  Measurements m;
  m.label_a = a;
  m.label_b = b;
  m.frame[0] = LineFrame::through(ep(0, 1), ep(0, 2));
  m.frame[1] = LineFrame::through(ep(1, 0), ep(1, 2));
  m.frame[2] = LineFrame::through(ep(2, 0), ep(2, 1));
  m.frame[3] = LineFrame::through(ep(3, 0), ep(3, 1));
  m.d = {m.frame[0].coords(ep(0, 2)).x(), m.frame[1].coords(ep(1, 2)).x(), m.frame[2].coords(ep(2, 1)).x()};
  auto along = [&](int lab, int i, int j, int k, int l) { return m.frame[i].coords(derived_point(img[i][lab], ep, i, j, k, l)); };
  m.sa = {along(a, 0, 3, 1, 2).x(), along(a, 1, 3, 0, 2).x(), along(a, 2, 3, 0, 1).x()};
  m.sb = {along(b, 0, 3, 1, 2).x(), along(b, 1, 3, 0, 2).x(), along(b, 2, 3, 0, 1).x()};
  for (int i = 0; i < 3; ++i) m.c4[i] = m.frame[i].coords(ep(i, 3));
  m.a0_213 = along(a, 0, 2, 1, 3);
  m.b0_213 = along(b, 0, 2, 1, 3);
  m.a1_203 = along(a, 1, 2, 0, 3);
  m.b1_203 = along(b, 1, 2, 0, 3);
  m.a2_103 = along(a, 2, 1, 0, 3);
  m.a2_013 = along(a, 2, 0, 1, 3);
  m.d4 = m.frame[3].coords(ep(3, 1)).x();
  m.sa4 = along(a, 3, 2, 0, 1).x();
  m.sb4 = along(b, 3, 2, 0, 1).x();
  m.c43 = m.frame[3].coords(ep(3, 2));
  for (int i = 0; i < 4; ++i)
    for (const auto& q : img[i]) m.obs[i].push_back(m.frame[i].coords(q));
  for (int i = 0; i < 3; ++i)
    if (std::abs(m.c4[i].y()) < 1e-12) fail(ErrorKind::degenerate, "F_{" + std::to_string(i + 1) + ",4} lies on the line through the other two epipoles");
  if (std::abs(m.c43.y()) < 1e-12) fail(ErrorKind::degenerate, "F_{4,3} lies on the F4,1 F4,2 line");
  return m;
}

/// Conditioning score of a label as the A or B point: the smallest line
/// intersection sine over the derived points it feeds.
inline double ab_score(const std::array<std::vector<ImagePoint>, 4>& img, const EpipoleTable& ep, int lab) {
  static const int uses[][4] = {{0, 3, 1, 2}, {1, 3, 0, 2}, {2, 3, 0, 1}, {0, 2, 1, 3}, {1, 2, 0, 3},
                                {2, 1, 0, 3}, {2, 0, 1, 3}, {3, 2, 0, 1}};
  double s = std::numeric_limits<double>::infinity();
  for (const auto& u : uses) s = std::min(s, derived_point_angle(img[u[0]][lab], ep, u[0], u[1], u[2], u[3]));
  return s;
}

/// The two best-conditioned labels, best first.
inline std::pair<int, int> choose_ab(const std::array<std::vector<ImagePoint>, 4>& img, const EpipoleTable& ep) {
  const int n = static_cast<int>(img[0].size());
  if (n < 2) fail(ErrorKind::input, "need at least two points");
  std::vector<std::pair<double, int>> s;
  for (int k = 0; k < n; ++k) s.push_back({ab_score(img, ep, k), k});
  std::stable_sort(s.begin(), s.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  return {s[0].second, s[1].second};
}

// ---------------------------------------------------------------------------
// Plane F1 F2 F3 layout

inline Vec2 angle_dir(double a) { return {std::cos(a), std::sin(a)}; }

inline Vec2 intersect2(const Vec2& p1, const Vec2& d1, const Vec2& p2, const Vec2& d2) {
  Eigen::Matrix2d m;
  m.col(0) = d1;
  m.col(1) = -d2;
  if (std::abs(m.determinant()) < 1e-14 * d1.norm() * d2.norm()) fail(ErrorKind::degenerate, "parallel lines in the layout");
  const Vec2 t = m.partialPivLu().solve(p2 - p1);
  return p1 + t(0) * d1;
}

/// Line cutting three lines through `f` (directions `dirs`) at positions
/// 0, `d` and `sc` measured along it. Returns the point at position 0 and the
/// unit direction.
inline std::pair<Vec2, Vec2> place_section(const Vec2& f, const std::array<Vec2, 3>& dirs, double d, double sc) {
  const double r = sc / d;
  Eigen::Matrix2d m;
  m.col(0) = dirs[2];
  m.col(1) = -r * dirs[1];
  if (std::abs(m.determinant()) < 1e-14) fail(ErrorKind::degenerate, "section through a degenerate pencil");
  const Vec2 lam = m.partialPivLu().solve((1 - r) * dirs[0]);
  const Vec2 p0 = dirs[0], p1 = lam(1) * dirs[1];
  const double gap = (p1 - p0).norm();
  if (!(gap > 0)) fail(ErrorKind::degenerate, "section collapses to a point");
  const double k = d / gap;
  return {f + k * p0, (k * p1 - k * p0) / d};
}

/// Angles between rays: F3 F1 F2, A' F1 F2, F3 F2 F1, A' F2 F1, where A' is
/// where line F4 A meets plane F1 F2 F3.
struct AngleParams {
  std::array<double, 4> a{};
  double& operator[](int i) { return a[i]; }
  double operator[](int i) const { return a[i]; }
};

struct SpatialLayout {
  std::array<Point3, 4> focal;            ///< F1..F4 (F4 valid once located)
  std::array<Point3, 4> line_point;       ///< image position 0 on each epipolar line
  std::array<Point3, 4> line_dir;
  std::array<Point3, 4> tilt;             ///< in-plane unit normal to the line, per frame
  std::array<Point3, 4> up;               ///< axis the plane tilts towards
  std::array<double, 4> psi{};            ///< image-plane tilt about the line (frames 1..3)
  double restriction = 0;                 ///< F3-line B position mismatch
  bool has_f4 = false;
  bool has_planes = false;
};

inline Point3 lift(const Vec2& v) { return {v.x(), v.y(), 0.0}; }

inline SpatialLayout layout_from_angles(const AngleParams& ang, const Measurements& m) {
  for (int i = 0; i < 4; ++i)
    if (!(ang[i] > 0 && ang[i] < kPi))
      fail(ErrorKind::input, "angle " + std::to_string(i + 1) + " outside (0, pi)");
  if (!(ang[0] + ang[2] < kPi)) fail(ErrorKind::input, "angles at F1 and F2 do not close a triangle");
  const Vec2 f1(0, 0), f2(1, 0);
  auto mir = [](double a) { return Vec2(-std::cos(a), std::sin(a)); };
  SpatialLayout l;
  auto [p1, e1] = place_section(f1, {Vec2(1, 0), angle_dir(ang[0]), angle_dir(ang[1])}, m.d[0], m.sa[0]);
  auto [p2, e2] = place_section(f2, {Vec2(-1, 0), mir(ang[2]), mir(ang[3])}, m.d[1], m.sa[1]);
  const Vec2 f3 = intersect2(f1, angle_dir(ang[0]), f2, mir(ang[2]));
  const Vec2 xa = intersect2(f1, p1 + m.sa[0] * e1 - f1, f2, p2 + m.sa[1] * e2 - f2);
  const Vec2 xb = intersect2(f1, p1 + m.sb[0] * e1 - f1, f2, p2 + m.sb[1] * e2 - f2);
  auto [p3, e3] = place_section(f3, {f1 - f3, f2 - f3, xa - f3}, m.d[2], m.sa[2]);
  const Vec2 pb = intersect2(f3, xb - f3, p3, e3);
  l.restriction = (pb - p3).dot(e3) - m.sb[2];
  l.focal = {lift(f1), lift(f2), lift(f3), Point3::Zero()};
  l.line_point = {lift(p1), lift(p2), lift(p3), Point3::Zero()};
  l.line_dir = {lift(e1), lift(e2), lift(e3), Point3::Zero()};
  for (int i = 0; i < 3; ++i) {
    l.tilt[i] = Point3(-l.line_dir[i].y(), l.line_dir[i].x(), 0);
    l.up[i] = Point3::UnitZ();
  }
  return l;
}

// ---------------------------------------------------------------------------
// Skewed cones and F4

/// Signed membership of `x` in the cone of focal rays through the possible
/// positions of F_{i,4} as image plane i turns about its epipolar line.
inline double cone_residual(const Point3& f, const Point3& p, const Point3& e, const Vec2& c4, const Point3& x) {
  const Point3 c = p + c4.x() * e;
  const double a = (c - f).dot(e);
  const Point3 w = f - c;
  const Point3 v = (x - f).normalized();
  const double ve = v.dot(e);
  return (w * ve + a * v).norm() - std::abs(c4.y()) * std::abs(ve);
}

inline double cone_residual(const SpatialLayout& l, const Measurements& m, int i, const Point3& x) {
  return cone_residual(l.focal[i], l.line_point[i], l.line_dir[i], m.c4[i], x);
}

/// Tilt of image plane i that puts F_{i,4} on the ray towards `x`.
inline double tilt_towards(const SpatialLayout& l, const Measurements& m, int i, const Point3& x) {
  const Point3 f = l.focal[i], e = l.line_dir[i];
  const Point3 c = l.line_point[i] + m.c4[i].x() * e;
  const Point3 v = x - f;
  const Point3 y = f + (c - f).dot(e) / v.dot(e) * v;
  const Point3 d = (y - c) / m.c4[i].y();
  return std::atan2(d.z(), d.dot(l.tilt[i]));
}

/// 3-D position of a line-frame point on image plane i at tilt `psi`.
inline Point3 plane_point(const SpatialLayout& l, int i, double psi, const Vec2& sh) {
  const Point3 w = std::cos(psi) * l.tilt[i] + std::sin(psi) * l.up[i];
  return l.line_point[i] + sh.x() * l.line_dir[i] + sh.y() * w;
}

/// Coefficients (q2, q1, q0) of the cone-i quadratic along o + mu d.
inline std::array<double, 3> cone_on_line(const SpatialLayout& l, const Measurements& m, int i, const Point3& o,
                                          const Point3& d) {
  const Point3 f = l.focal[i], e = l.line_dir[i];
  const Point3 c = l.line_point[i] + m.c4[i].x() * e;
  const double a = (c - f).dot(e), h2 = m.c4[i].y() * m.c4[i].y();
  const Point3 w = f - c, v0 = o - f;
  const Point3 a0 = w * v0.dot(e) + a * v0, a1 = w * d.dot(e) + a * d;
  const double b0 = v0.dot(e), b1 = d.dot(e);
  return {a1.dot(a1) - h2 * b1 * b1, 2 * a0.dot(a1) - 2 * h2 * b0 * b1, a0.dot(a0) - h2 * b0 * b0};
}

/// Gauss-Newton on the three cone residuals.
inline std::pair<Point3, double> polish_on_cones(const SpatialLayout& l, const Measurements& m, Point3 x,
                                                 int iterations = 40) {
  auto res = [&](const Point3& p) {
    return Point3(cone_residual(l, m, 0, p), cone_residual(l, m, 1, p), cone_residual(l, m, 2, p));
  };
  for (int it = 0; it < iterations; ++it) {
    Mat3 j;
    const double h = 1e-7;
    for (int k = 0; k < 3; ++k) {
      Point3 dx = Point3::Zero();
      dx(k) = h;
      j.col(k) = (res(x + dx) - res(x - dx)) / (2 * h);
    }
    const Point3 step = j.completeOrthogonalDecomposition().solve(-res(x));
    if (!step.allFinite()) break;
    x += step;
    if (step.norm() < 1e-15) break;
  }
  return {x, res(x).norm()};
}

struct ConeCandidate {
  Point3 f4;
  double cone_residual = 0;
};

/// Candidate F4 positions: sweep the first cone, intersect each generator
/// with the second cone, keep local minima of the third cone residual,
/// polish, and mirror to z > 0.
inline std::vector<ConeCandidate> f4_candidates(const SpatialLayout& l, const Measurements& m, int samples = 720) {
  const Point3 f1 = l.focal[0], e = l.line_dir[0];
  const Point3 c = l.line_point[0] + m.c4[0].x() * e;
  const double h4 = m.c4[0].y();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::array<double, 2>> val(samples, {nan, nan});
  std::vector<std::array<Point3, 2>> pts(samples);
  for (int k = 0; k < samples; ++k) {
    const double psi = 2 * kPi * k / samples;
    const Point3 y = c + h4 * (std::cos(psi) * l.tilt[0] + std::sin(psi) * Point3::UnitZ());
    const Point3 d = y - f1;
    const auto q = cone_on_line(l, m, 1, f1, d);
    const double disc = q[1] * q[1] - 4 * q[0] * q[2];
    if (disc < 0 || std::abs(q[0]) < 1e-300) continue;
    const double sq = std::sqrt(disc);
    double mu[2] = {(-q[1] - sq) / (2 * q[0]), (-q[1] + sq) / (2 * q[0])};
    if (mu[0] > mu[1]) std::swap(mu[0], mu[1]);
    for (int b = 0; b < 2; ++b) {
      pts[k][b] = f1 + mu[b] * d;
      val[k][b] = std::abs(cone_residual(l, m, 2, pts[k][b]));
    }
  }
  std::vector<ConeCandidate> out;
  for (int b = 0; b < 2; ++b)
    for (int k = 0; k < samples; ++k) {
      const double v = val[k][b], vp = val[(k + samples - 1) % samples][b], vn = val[(k + 1) % samples][b];
      if (std::isnan(v)) continue;
      if (!(std::isnan(vp) || v <= vp) || !(std::isnan(vn) || v <= vn)) continue;
      auto [x, r] = polish_on_cones(l, m, pts[k][b]);
      if (!x.allFinite() || !std::isfinite(r)) continue;
      if (x.z() < 0) x.z() = -x.z();
      bool dup = false;
      for (const auto& o : out) dup = dup || (o.f4 - x).norm() < 1e-6;
      if (!dup) out.push_back({x, r});
    }
  std::stable_sort(out.begin(), out.end(),
                   [](const ConeCandidate& a, const ConeCandidate& b) { return a.cone_residual < b.cone_residual; });
  return out;
}

// ---------------------------------------------------------------------------
// Residuals

inline Point3 closest_midpoint(const Point3& p1, const Point3& d1, const Point3& p2, const Point3& d2) {
  const Point3 u = d1.normalized(), v = d2.normalized();
  const Point3 w0 = p1 - p2;
  const double b = u.dot(v), dd = u.dot(w0), ee = v.dot(w0), den = 1 - b * b;
  if (den < 1e-24) return (p1 + p2) / 2;
  return (p1 + ((b * ee - dd) / den) * u + p2 + ((ee - b * dd) / den) * v) / 2;
}

/// Signed shortest distance between two lines.
inline double line_gap(const Point3& p1, const Point3& d1, const Point3& p2, const Point3& d2) {
  const Point3 n = d1.cross(d2);
  const double nn = n.norm();
  if (nn < 1e-14 * d1.norm() * d2.norm()) return (p2 - p1).cross(d1.normalized()).norm();
  return (p2 - p1).dot(n / nn);
}

struct ConstraintResiduals {
  double r_conc = 0, r_12 = 0, r_13 = 0;
  double norm() const { return std::sqrt(r_conc * r_conc + r_12 * r_12 + r_13 * r_13); }
};

/// Adds F4 and places all four image planes: tilts of planes 1..3 from F4,
/// line 4 from the F1 F2 F4 pencil, tilt of plane 4 from F3.
inline SpatialLayout with_f4(SpatialLayout l, const Measurements& m, const Point3& f4) {
  l.focal[3] = f4;
  l.has_f4 = true;
  for (int i = 0; i < 3; ++i) l.psi[i] = tilt_towards(l, m, i, f4);
  const Point3 f1 = l.focal[0], f2 = l.focal[1];
  const Point3 b0 = plane_point(l, 0, l.psi[0], m.b0_213), b1 = plane_point(l, 1, l.psi[1], m.b1_203);
  const Point3 xb = closest_midpoint(f1, b0 - f1, f2, b1 - f2);
  const Point3 n = (f1 - f4).cross(f2 - f4).normalized();
  const Point3 u = (f1 - f4).normalized(), v = n.cross(u);
  auto to2 = [&](const Point3& x) { return Vec2((x - f4).dot(u), (x - f4).dot(v)); };
  auto [p4, e4] = place_section(Vec2::Zero(), {to2(f1), to2(f2), to2(xb)}, m.d4, m.sb4);
  l.line_point[3] = f4 + p4.x() * u + p4.y() * v;
  l.line_dir[3] = e4.x() * u + e4.y() * v;
  l.tilt[3] = n.cross(l.line_dir[3]).normalized();
  l.up[3] = n;
  const Point3 c = l.line_point[3] + m.c43.x() * l.line_dir[3];
  const Point3 vv = l.focal[2] - f4;
  const Point3 y = f4 + (c - f4).dot(l.line_dir[3]) / vv.dot(l.line_dir[3]) * vv;
  const Point3 d = (y - c) / m.c43.y();
  l.psi[3] = std::atan2(d.dot(n), d.dot(l.tilt[3]));
  l.has_planes = true;
  return l;
}

/// 3-D point of image coordinates `q` of frame i once all planes are placed.
inline Point3 image_to_space(const SpatialLayout& l, int i, const Vec2& sh) {
  const Point3 w = std::cos(l.psi[i]) * l.tilt[i] + std::sin(l.psi[i]) * l.up[i];
  return l.line_point[i] + sh.x() * l.line_dir[i] + sh.y() * w;
}

inline ConstraintResiduals residuals(const SpatialLayout& l, const Measurements& m) {
  if (!l.has_planes) fail(ErrorKind::input, "residuals need a layout with F4");
  const Point3 f1 = l.focal[0], f2 = l.focal[1], f3 = l.focal[2], f4 = l.focal[3];
  const Point3 a0 = plane_point(l, 0, l.psi[0], m.a0_213), a1 = plane_point(l, 1, l.psi[1], m.a1_203);
  const Point3 xa = closest_midpoint(f1, a0 - f1, f2, a1 - f2);
  const Point3 n = (f1 - f4).cross(f2 - f4).normalized();
  const Point3 u = (f1 - f4).normalized(), v = n.cross(u);
  const Point3 pa = l.line_point[3] + m.sa4 * l.line_dir[3];
  const Vec2 da = Vec2((pa - f4).dot(u), (pa - f4).dot(v)).normalized();
  const Vec2 x2((xa - f4).dot(u), (xa - f4).dot(v));
  ConstraintResiduals r;
  r.r_conc = cross2(da, x2);
  r.r_12 = line_gap(f2, a1 - f2, f3, plane_point(l, 2, l.psi[2], m.a2_103) - f3);
  r.r_13 = line_gap(f1, a0 - f1, f3, plane_point(l, 2, l.psi[2], m.a2_013) - f3);
  return r;
}

/// F3 on the cone of plane 4.
inline double cone4_residual(const SpatialLayout& l, const Measurements& m) {
  return cone_residual(l.focal[3], l.line_point[3], l.line_dir[3], m.c43, l.focal[2]);
}

enum class ResidualSet {
  frame4_pairs,  ///< frame-4 rays against frames 1 and 2
  all_pairs,     ///< rays of every frame pair
};

inline std::vector<std::pair<int, int>> residual_pairs(ResidualSet s) {
  if (s == ResidualSet::frame4_pairs) return {{3, 0}, {3, 1}};
  return {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
}

/// Cone residuals, constraint residuals, plane-4 cone, then ray gaps per label
/// and frame pair.
inline Eigen::VectorXd residual_vector(const SpatialLayout& base, const Measurements& m, const Point3& f4,
                                       ResidualSet set) {
  const SpatialLayout l = with_f4(base, m, f4);
  const auto pairs = residual_pairs(set);
  const int n = static_cast<int>(m.obs[0].size());
  Eigen::VectorXd r(7 + n * static_cast<int>(pairs.size()));
  for (int i = 0; i < 3; ++i) r(i) = cone_residual(l, m, i, f4);
  const ConstraintResiduals c = residuals(l, m);
  r(3) = c.r_conc;
  r(4) = c.r_12;
  r(5) = c.r_13;
  r(6) = cone4_residual(l, m);
  int k = 7;
  for (int lab = 0; lab < n; ++lab)
    for (const auto& [i, j] : pairs) {
      const Point3 x = image_to_space(l, i, m.obs[i][lab]), y = image_to_space(l, j, m.obs[j][lab]);
      r(k++) = line_gap(l.focal[i], x - l.focal[i], l.focal[j], y - l.focal[j]);
    }
  return r;
}

/// Largest ray gap over every label and frame pair.
inline double max_ray_gap(const SpatialLayout& l, const Measurements& m) {
  double worst = 0;
  for (std::size_t lab = 0; lab < m.obs[0].size(); ++lab)
    for (const auto& [i, j] : residual_pairs(ResidualSet::all_pairs)) {
      const Point3 x = image_to_space(l, i, m.obs[i][lab]), y = image_to_space(l, j, m.obs[j][lab]);
      worst = std::max(worst, std::abs(line_gap(l.focal[i], x - l.focal[i], l.focal[j], y - l.focal[j])));
    }
  return worst;
}

struct F4Location {
  Point3 f4;
  double cone_residual = 0;
  double frame4_residual = 0;  ///< plane-4 cone and frame-4 ray gaps
  std::vector<ConeCandidate> candidates;
};

struct LocateOptions {
  double inconsistent_tol = 1e-6;
  double ambiguity_tol = 1e-9;
  double separation = 1e-6;
};

inline double frame4_score(const SpatialLayout& l, const Measurements& m, const Point3& f4) {
  try {
    const Eigen::VectorXd r = residual_vector(l, m, f4, ResidualSet::frame4_pairs);
    const double s = r.tail(r.size() - 6).norm();
    return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

/// Gauss-Newton on the cone and frame-4 residuals with the angles held.
inline Point3 polish_f4(const SpatialLayout& l, const Measurements& m, Point3 x, int iterations = 20) {
  auto res = [&](const Point3& p) {
    Eigen::VectorXd r = residual_vector(l, m, p, ResidualSet::frame4_pairs);
    Eigen::VectorXd out(r.size() - 3);
    out << r.head<3>(), r.tail(r.size() - 6);
    return out;
  };
  Point3 best = x;
  try {
    Eigen::VectorXd r = res(x);
    double best_norm = r.norm();
    for (int it = 0; it < iterations; ++it) {
      Eigen::MatrixXd j(r.size(), 3);
      for (int k = 0; k < 3; ++k) {
        Point3 dx = Point3::Zero();
        dx(k) = 1e-7;
        j.col(k) = (res(x + dx) - res(x - dx)) / 2e-7;
      }
      const Point3 step = j.completeOrthogonalDecomposition().solve(-r);
      if (!step.allFinite()) break;
      x += step;
      r = res(x);
      if (!r.allFinite()) break;
      if (r.norm() < best_norm) {
        best = x;
        best_norm = r.norm();
      }
      if (step.norm() < 1e-15) break;
    }
  } catch (const Error&) {
  }
  return best;
}

/// Cone intersection nearest to zero; several cone-consistent points are
/// separated by the frame-4 observations.
inline F4Location locate_f4(const SpatialLayout& l, const Measurements& m, const LocateOptions& opt = {}) {
  F4Location out;
  out.candidates = f4_candidates(l, m);
  if (out.candidates.empty() || out.candidates.front().cone_residual > opt.inconsistent_tol)
    fail(ErrorKind::inconsistent, "no point lies on all three cones (best residual " +
                                      (out.candidates.empty() ? std::string("none")
                                                              : std::to_string(out.candidates.front().cone_residual)) +
                                      ")");
  std::vector<std::pair<double, const ConeCandidate*>> scored;
  for (const auto& c : out.candidates)
    if (c.cone_residual <= opt.inconsistent_tol) scored.push_back({frame4_score(l, m, c.f4), &c});
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (scored.size() > 1 && scored[1].first < opt.ambiguity_tol &&
      (scored[0].second->f4 - scored[1].second->f4).norm() > opt.separation)
    fail(ErrorKind::ambiguous, "two separated F4 positions satisfy every frame-4 constraint");
  out.f4 = polish_f4(l, m, scored.front().second->f4);
  out.cone_residual = Point3(cone_residual(l, m, 0, out.f4), cone_residual(l, m, 1, out.f4),
                             cone_residual(l, m, 2, out.f4)).norm();
  out.frame4_residual = frame4_score(l, m, out.f4);
  return out;
}

// ---------------------------------------------------------------------------
// Gauge and ground truth

/// Similarity (possibly improper) taking scene coordinates to the layout gauge.
struct GaugeMap {
  Point3 origin = Point3::Zero();
  Mat3 linear = Mat3::Identity();  ///< includes 1/scale and the z mirror
  double scale = 1.0;

  Point3 operator()(const Point3& x) const { return linear * (x - origin); }

  static GaugeMap from_focals(const std::array<Point3, 4>& f) {
    GaugeMap g;
    g.origin = f[0];
    Point3 ex = f[1] - f[0];
    g.scale = ex.norm();
    if (!(g.scale > 0)) fail(ErrorKind::degenerate, "F1 and F2 coincide");
    ex /= g.scale;
    const Point3 t = f[2] - f[0];
    const Point3 ty = t - t.dot(ex) * ex;
    if (ty.norm() < 1e-12 * g.scale) fail(ErrorKind::degenerate, "F1, F2, F3 are collinear");
    const Point3 ey = ty.normalized();
    const Point3 ez = ex.cross(ey);
    Mat3 r;
    r.row(0) = ex;
    r.row(1) = ey;
    r.row(2) = ez;
    const double sgn = (r * (f[3] - f[0])).z() >= 0 ? 1.0 : -1.0;
    g.linear = Eigen::Vector3d(1, 1, sgn).asDiagonal() * r / g.scale;
    return g;
  }
};

inline std::array<Point3, 4> truth_focals(const MultiframeDataset& d) {
  if (!d.truth || d.truth->poses.size() != 4) fail(ErrorKind::input, "dataset has no 4-pose truth");
  std::array<Point3, 4> f;
  for (int i = 0; i < 4; ++i) {
    if (!d.truth->poses[i].focal) fail(ErrorKind::input, "truth pose has no focal point");
    f[i] = *d.truth->poses[i].focal;
  }
  return f;
}

/// Angle parameters of a known configuration, with `a` the scene position of
/// the A point.
inline AngleParams angles_of(const std::array<Point3, 4>& focals, const Point3& a) {
  const GaugeMap g = GaugeMap::from_focals(focals);
  const Point3 f3 = g(focals[2]), f4 = g(focals[3]), pa = g(a);
  const Point3 dir = pa - f4;
  if (std::abs(dir.z()) < 1e-14) fail(ErrorKind::degenerate, "line F4 A is parallel to plane F1 F2 F3");
  const Point3 xa = f4 + (-f4.z() / dir.z()) * dir;
  auto wrap = [](double x) { return x < 0 ? x + kPi : x; };
  AngleParams p;
  p[0] = std::atan2(f3.y(), f3.x());
  p[1] = wrap(std::atan2(xa.y(), xa.x()));
  p[2] = std::atan2(f3.y(), 1 - f3.x());
  p[3] = wrap(std::atan2(xa.y(), 1 - xa.x()));
  return p;
}

// ---------------------------------------------------------------------------
// Problem setup

struct Uncal4fProblem {
  EpipoleTable epipoles;
  std::vector<std::string> labels;
  std::array<std::vector<ImagePoint>, 4> images;
  Measurements meas;
};

inline Uncal4fProblem make_problem(const MultiframeDataset& d, std::optional<std::pair<int, int>> ab = std::nullopt) {
  if (d.regime != Regime::perspective_uncalibrated)
    fail(ErrorKind::regime_mismatch,
         "four-frame solver needs a perspective-uncalibrated dataset, got " + std::string(to_string(d.regime)));
  Uncal4fProblem p;
  p.epipoles = EpipoleTable::from_dataset(d);
  for (const auto& q : d.frames[0].points) {
    bool all = true;
    for (int i = 1; i < 4; ++i) all = all && d.frames[i].find(q.label);
    if (all) p.labels.push_back(q.label);
  }
  if (p.labels.size() < 7)
    fail(ErrorKind::input, "four-frame solver needs at least 7 points seen in all frames, got " +
                               std::to_string(p.labels.size()));
  for (int i = 0; i < 4; ++i)
    for (const auto& lab : p.labels) p.images[i].push_back(d.frames[i].at(lab));
  const auto [a, b] = ab ? *ab : choose_ab(p.images, p.epipoles);
  p.meas = measure(p.images, p.epipoles, a, b);
  return p;
}

inline AngleParams truth_angles(const MultiframeDataset& d, const Uncal4fProblem& p) {
  const std::string& lab = p.labels[p.meas.label_a];
  for (const auto& q : d.truth->points)
    if (q.label == lab) return angles_of(truth_focals(d), q.position);
  fail(ErrorKind::input, "truth has no point '" + lab + "'");
}

// ---------------------------------------------------------------------------
// Local solve

struct SolveOptions {
  int max_iterations = 200;
  double residual_tol = 1e-8;
  double step_tol = 1e-12;
  ResidualSet residual_set = ResidualSet::frame4_pairs;
  int max_seeds = 6;
  double max_step = 1.0;  ///< cap on the step length per iteration
  bool log_height = true;
  int starts = 32;             ///< initial point plus jittered copies
  double start_radius = 0.02;  ///< relative jitter of the extra starts
  std::uint64_t start_seed = 1;
  double min_height = 1e-3;    ///< smallest admissible |F4.z| in the gauge
};

struct IterationRecord {
  int iteration = 0;
  double residual = 0;
  double step = 0;
};

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  double residual = 0;  ///< norm of the full residual vector
  double step = 0;
  ConstraintResiduals constraints;
  int seeds_tried = 0;
  int seed_used = -1;
  int start_used = -1;
  std::vector<AngleParams> roots;  ///< distinct converged admissible roots, in discovery order
  std::vector<IterationRecord> history;
  std::string message;
};

struct Uncal4fSolution {
  AngleParams angles;
  SpatialLayout layout;
  SolveReport report;
};

namespace detail {

using Vec7 = Eigen::Matrix<double, 7, 1>;

inline Eigen::VectorXd full_residual(const Vec7& z, const Measurements& m, ResidualSet set) {
  AngleParams a;
  for (int i = 0; i < 4; ++i) a[i] = z(i);
  const SpatialLayout l = layout_from_angles(a, m);
  return residual_vector(l, m, z.tail<3>(), set);
}

struct Descent {
  Vec7 z;
  double residual;
  double step;
  int iterations;
  bool converged;
  std::vector<IterationRecord> history;
};

/// Gauss-Newton with a capped step and backtracking on the residual norm.
inline Descent descend(Vec7 z, const Measurements& m, const SolveOptions& opt) {
  // Unknowns are the angles, F4.x, F4.y and log F4.z, which keeps F4 off
  // the plane F1 F2 F3 where every residual vanishes identically.
  auto to_z = [&](const Vec7& u) {
    Vec7 x = u;
    if (opt.log_height) x(6) = std::exp(u(6));
    return x;
  };
  auto eval = [&](const Vec7& u, Eigen::VectorXd& r) {
    try {
      const Vec7 x = to_z(u);
      r = full_residual(x, m, opt.residual_set);
      return r.allFinite();
    } catch (const Error&) {
      return false;
    }
  };
  Descent d{z, std::numeric_limits<double>::infinity(), 0, 0, false, {}};
  if (opt.log_height && !(z(6) > 0)) return d;
  Vec7 u = z;
  if (opt.log_height) u(6) = std::log(z(6));
  Eigen::VectorXd r;
  if (!eval(u, r)) return d;
  d.residual = r.norm();
  for (int it = 1; it <= opt.max_iterations; ++it) {
    Eigen::MatrixXd j(r.size(), 7);
    bool ok = true;
    for (int k = 0; k < 7 && ok; ++k) {
      const double h = 1e-7;
      Vec7 up = u, um = u;
      up(k) += h;
      um(k) -= h;
      Eigen::VectorXd rp, rm;
      ok = eval(up, rp) && eval(um, rm);
      if (ok) j.col(k) = (rp - rm) / (2 * h);
    }
    if (!ok) break;
    Vec7 step = j.completeOrthogonalDecomposition().solve(-r);
    if (!step.allFinite()) break;
    const double len = step.norm();
    if (len > opt.max_step) step *= opt.max_step / len;
    bool accepted = false;
    const double before = d.residual;
    for (int back = 0; back < 30; ++back) {
      Eigen::VectorXd rn;
      if (eval(u + step, rn) && rn.norm() < d.residual) {
        u += step;
        r = rn;
        d.residual = rn.norm();
        accepted = true;
        break;
      }
      step /= 2;
    }
    d.iterations = it;
    d.step = accepted ? step.norm() : 0.0;
    d.history.push_back({it, d.residual, d.step});
    if (!accepted) break;
    if (d.residual < opt.residual_tol && (d.step < opt.step_tol || d.residual > 0.5 * before)) break;
  }
  d.z = to_z(u);
  d.converged = d.residual < opt.residual_tol;
  return d;
}

}  // namespace detail

/// True when every frame sees every triangulated label on one side of its
/// focal point, and F4 stays clear of the plane of the other focal points.
inline bool layout_admissible(const SpatialLayout& l, const Measurements& m, double min_height) {
  if (!l.has_planes || !(std::abs(l.focal[3].z()) > min_height)) return false;
  std::array<int, 4> pos{}, neg{};
  for (std::size_t lab = 0; lab < m.obs[0].size(); ++lab) {
    const Point3 x0 = image_to_space(l, 0, m.obs[0][lab]), x1 = image_to_space(l, 1, m.obs[1][lab]);
    const Point3 x = closest_midpoint(l.focal[0], x0 - l.focal[0], l.focal[1], x1 - l.focal[1]);
    for (int i = 0; i < 4; ++i) {
      const double s = (x - l.focal[i]).dot(image_to_space(l, i, m.obs[i][lab]) - l.focal[i]);
      (s > 0 ? pos : neg)[i]++;
    }
  }
  for (int i = 0; i < 4; ++i)
    if (pos[i] && neg[i]) return false;
  return true;
}

namespace detail {

inline std::vector<AngleParams> start_cloud(const AngleParams& initial, int count, double radius,
                                            std::uint64_t seed) {
  std::vector<AngleParams> out{initial};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-radius, radius);
  while (static_cast<int>(out.size()) < count) {
    AngleParams a = initial;
    for (int i = 0; i < 4; ++i) a[i] *= 1 + u(rng);
    out.push_back(a);
  }
  return out;
}

}  // namespace detail

/// Local descent from a small cloud of starts around `initial`, once per F4
/// seed at each start. Among converged admissible roots the one closest to
/// `initial` wins; otherwise the lowest residual run is returned unconverged.
inline Uncal4fSolution solve_angles(const Measurements& m, const AngleParams& initial, const SolveOptions& opt = {}) {
  Uncal4fSolution best;
  best.angles = initial;
  best.report.residual = std::numeric_limits<double>::infinity();
  double best_dist = std::numeric_limits<double>::infinity();
  bool any_seed = false;
  const auto starts = detail::start_cloud(initial, std::max(1, opt.starts), opt.start_radius, opt.start_seed);
  for (std::size_t st = 0; st < starts.size(); ++st) {
    const AngleParams& a0 = starts[st];
    SpatialLayout l0;
    try {
      l0 = layout_from_angles(a0, m);
    } catch (const Error&) {
      continue;
    }
    if (st == 0) best.layout = l0;
    std::vector<std::pair<double, Point3>> ranked;
    for (const auto& s : f4_candidates(l0, m)) ranked.push_back({frame4_score(l0, m, s.f4), s.f4});
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    if (static_cast<int>(ranked.size()) > opt.max_seeds) ranked.resize(opt.max_seeds);
    any_seed = any_seed || !ranked.empty();
    for (std::size_t s = 0; s < ranked.size(); ++s) {
      ++best.report.seeds_tried;
      detail::Vec7 z;
      for (int i = 0; i < 4; ++i) z(i) = a0[i];
      z.tail<3>() = ranked[s].second;
      const detail::Descent d = detail::descend(z, m, opt);
      AngleParams ang;
      for (int i = 0; i < 4; ++i) ang[i] = d.z(i);
      SpatialLayout lay;
      bool admissible = false;
      try {
        lay = with_f4(layout_from_angles(ang, m), m, d.z.tail<3>());
        admissible = layout_admissible(lay, m, opt.min_height);
      } catch (const Error&) {
      }
      const bool ok = d.converged && admissible;
      double dist = 0;
      for (int i = 0; i < 4; ++i) dist = std::max(dist, std::abs(ang[i] - initial[i]));
      if (ok) {
        bool seen = false;
        for (const auto& r : best.report.roots) {
          double dr = 0;
          for (int i = 0; i < 4; ++i) dr = std::max(dr, std::abs(r[i] - ang[i]));
          seen = seen || dr < 1e-9;
        }
        if (!seen) best.report.roots.push_back(ang);
      }
      const bool better = ok ? (!best.report.converged || dist < best_dist - 1e-12)
                             : (!best.report.converged && d.residual < best.report.residual);
      if (!better) continue;
      best_dist = dist;
      best.angles = ang;
      best.report.converged = ok;
      best.report.iterations = d.iterations;
      best.report.residual = d.residual;
      best.report.step = d.step;
      best.report.history = d.history;
      best.report.seed_used = static_cast<int>(s);
      best.report.start_used = static_cast<int>(st);
      if (lay.has_planes) {
        best.layout = lay;
        best.report.constraints = residuals(lay, m);
      }
    }
  }
  if (!any_seed) best.report.message = "no F4 seed on the cones at the initial angles";
  else if (!best.report.converged) best.report.message = "no start reached an admissible root";
  return best;
}

// ---------------------------------------------------------------------------
// Cameras and structure

/// Camera pose of frame i in the layout gauge.
inline CameraPose layout_pose(const SpatialLayout& l, const LineFrame& f, int i) {
  if (!l.has_planes) fail(ErrorKind::input, "layout has no image planes");
  const Point3 w = std::cos(l.psi[i]) * l.tilt[i] + std::sin(l.psi[i]) * l.up[i];
  auto to3 = [&](const Vec2& sh) { return l.line_point[i] + sh.x() * l.line_dir[i] + sh.y() * w; };
  CameraPose p;
  p.origin = to3(f.coords(Vec2::Zero()));
  p.u = to3(f.coords(Vec2::UnitX())) - p.origin;
  p.v = to3(f.coords(Vec2::UnitY())) - p.origin;
  p.focal = l.focal[i];
  p.validate();
  return p;
}

inline std::array<CameraPose, 4> layout_poses(const SpatialLayout& l, const Measurements& m) {
  return {layout_pose(l, m.frame[0], 0), layout_pose(l, m.frame[1], 1), layout_pose(l, m.frame[2], 2),
          layout_pose(l, m.frame[3], 3)};
}

struct ReconstructedPoint {
  std::string label;
  Point3 position;
  double gap = 0;   ///< largest pairwise midpoint gap
  int rays = 0;
};

struct ObjectReconstruction {
  std::vector<ReconstructedPoint> points;
  std::vector<std::string> warnings;
};

/// Average of the pairwise midpoints over all usable ray pairs.
inline ObjectReconstruction reconstruct_object(const std::array<CameraPose, 4>& poses,
                                               const MultiframeDataset& d) {
  ObjectReconstruction out;
  for (const auto& q : d.frames[0].points) {
    std::vector<Ray> rays;
    for (int i = 0; i < 4 && i < static_cast<int>(d.frames.size()); ++i)
      if (const ImagePoint* x = d.frames[i].find(q.label)) rays.push_back(ray_through(*x, poses[i]));
    Point3 sum = Point3::Zero();
    int used = 0;
    double gap = 0;
    for (std::size_t a = 0; a < rays.size(); ++a)
      for (std::size_t b = a + 1; b < rays.size(); ++b) {
        try {
          const Triangulation t = triangulate_midpoint(rays[a], rays[b]);
          sum += t.point;
          gap = std::max(gap, t.gap);
          ++used;
        } catch (const Error&) {
        }
      }
    if (used == 0) {
      out.warnings.push_back("point '" + q.label + "' has fewer than 2 usable rays; omitted");
      continue;
    }
    out.points.push_back({q.label, sum / used, gap, static_cast<int>(rays.size())});
  }
  return out;
}

}  // namespace mf
