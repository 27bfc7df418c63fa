#pragma once

// Smooth curves with known poses: transfer each sample of the first image
// curve along its epipolar line onto the second image curve, then
// triangulate. Orthographic poses use parallel rays.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "multiframe/scene.hpp"

namespace mf {

/// Image in frame 2 of the ray through `d1` in frame 1.
inline Line2 epipolar_line(const ImagePoint& d1, const CameraPose& pose1, const CameraPose& pose2) {
  const Ray r = ray_through(d1, pose1);
  Point3 n;
  if (pose2.is_orthographic()) {
    n = r.direction.cross(pose2.normal());
    if (n.norm() < 1e-12) fail(ErrorKind::degenerate, "ray is parallel to the second viewing direction");
  } else {
    const Point3 w = r.origin - *pose2.focal;
    n = w.cross(r.direction);
    if (n.norm() < 1e-12 * std::max(1.0, w.norm())) fail(ErrorKind::degenerate, "second focal point lies on the ray");
  }
  // n . (O2 + a u + b v - ray origin) = 0
  const double a = n.dot(pose2.u), b = n.dot(pose2.v), c = n.dot(pose2.origin - r.origin);
  const double len = std::hypot(a, b);
  if (len < 1e-12 * n.norm()) fail(ErrorKind::degenerate, "epipolar plane is parallel to the second image plane");
  const ImagePoint normal(a / len, b / len);
  return {-c / len * normal, ImagePoint(-normal.y(), normal.x())};
}

/// Position on a polyline: segment index, parameter in [0, 1], arc length.
struct CurvePosition {
  int segment = 0;
  double t = 0;
  double arc = 0;
};

struct Transfer {
  ImagePoint point;
  CurvePosition position;
  bool ill_conditioned = false;  ///< line nearly along the crossed segment
};

struct TransferOptions {
  double band = 1e-6;         ///< near-miss band, relative to the curve extent
  double tangency = 1e-9;     ///< sine below which a crossing counts as tangent
};

inline std::vector<double> arc_lengths(const std::vector<ImagePoint>& s) {
  std::vector<double> a(s.size(), 0.0);
  for (std::size_t k = 1; k < s.size(); ++k) a[k] = a[k - 1] + (s[k] - s[k - 1]).norm();
  return a;
}

inline double curve_extent(const std::vector<ImagePoint>& s) {
  if (s.empty()) return 1.0;
  ImagePoint lo = s.front(), hi = s.front();
  for (const auto& p : s) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double e = (hi - lo).norm();
  return e > 0 ? e : 1.0;
}

/// Crossing of `line` with the polyline nearest to `previous` among those
/// not behind it.
inline Transfer transfer_point(const std::vector<ImagePoint>& curve2, const Line2& line, const CurvePosition& previous,
                               const TransferOptions& opt = {}) {
  if (curve2.size() < 2) fail(ErrorKind::input, "curve needs at least 2 samples");
  const std::vector<double> arc = arc_lengths(curve2);
  const double band = opt.band * curve_extent(curve2);
  std::optional<Transfer> best;
  for (std::size_t k = 0; k + 1 < curve2.size(); ++k) {
    const ImagePoint p = curve2[k], q = curve2[k + 1];
    const double sp = line.signed_distance(p), sq = line.signed_distance(q);
    const bool crosses = (sp <= 0 && sq >= 0) || (sp >= 0 && sq <= 0);
    if (!crosses && std::min(std::abs(sp), std::abs(sq)) > band) continue;
    const double seg = (q - p).norm();
    if (!(seg > 0)) continue;
    const double sine = std::abs(cross2(line.direction, (q - p) / seg));
    double t;
    if (std::abs(sp - sq) > 0 && crosses) t = sp / (sp - sq);
    else t = std::abs(sp) <= std::abs(sq) ? 0.0 : 1.0;
    t = std::clamp(t, 0.0, 1.0);
    const CurvePosition pos{static_cast<int>(k), t, arc[k] + t * seg};
    if (pos.arc < previous.arc - band) continue;
    if (best && pos.arc - previous.arc >= best->position.arc - previous.arc) continue;
    best = Transfer{p + t * (q - p), pos, sine < opt.tangency};
  }
  if (!best) fail(ErrorKind::no_solution, "transfer gap: epipolar line misses the second curve");
  return *best;
}

enum class SampleStatus { ok, endpoint, hole, ill_conditioned };

inline std::string_view to_string(SampleStatus s) {
  switch (s) {
    case SampleStatus::ok: return "ok";
    case SampleStatus::endpoint: return "endpoint";
    case SampleStatus::hole: return "hole";
    case SampleStatus::ill_conditioned: return "ill-conditioned";
  }
  return "unknown";
}

struct LiftedSample {
  int index = 0;               ///< sample index in the first curve
  SampleStatus status = SampleStatus::ok;
  Point3 point = Point3::Zero();  ///< valid unless hole / ill-conditioned
  double gap = 0;
  ImagePoint match = ImagePoint::Zero();  ///< D'' in frame 2
  double arc2 = 0;             ///< arc length of D'' along the second curve
  std::string message;

  bool valid() const { return status == SampleStatus::ok || status == SampleStatus::endpoint; }
};

struct SpaceCurve {
  std::string id;
  bool second_reversed = false;  ///< the second curve was swept backwards
  std::vector<LiftedSample> samples;

  int holes() const {
    return static_cast<int>(std::count_if(samples.begin(), samples.end(), [](const LiftedSample& s) { return !s.valid(); }));
  }
  double max_gap() const {
    double g = 0;
    for (const auto& s : samples)
      if (s.valid()) g = std::max(g, s.gap);
    return g;
  }
};

struct LiftOptions {
  TransferOptions transfer;
  double endpoint_tol = 1e-3;  ///< endpoint to epipolar line, relative to the curve extent
};

/// Sweeps the first curve's samples in order. The sweep direction on the
/// second curve is the one whose start lies on the epipolar line of the first
/// curve's start.
inline SpaceCurve lift_curve(const ImageCurve& c1, const ImageCurve& c2, const CameraPose& pose1,
                             const CameraPose& pose2, const LiftOptions& opt = {}) {
  if (c1.samples.size() < 2 || c2.samples.size() < 2)
    fail(ErrorKind::input, "curve '" + c1.id + "' needs at least 2 samples in both frames");
  SpaceCurve out;
  out.id = c1.id;
  std::vector<ImagePoint> s2 = c2.samples;
  const double extent = curve_extent(s2);
  const Line2 first = epipolar_line(c1.samples.front(), pose1, pose2);
  const double df = std::abs(first.signed_distance(s2.front())), db = std::abs(first.signed_distance(s2.back()));
  if (db < df) {
    std::reverse(s2.begin(), s2.end());
    out.second_reversed = true;
  }
  if (std::min(df, db) > opt.endpoint_tol * extent)
    fail(ErrorKind::inconsistent, "curve '" + c1.id + "': endpoints do not lie on each other's epipolar lines");
  const std::vector<double> arc = arc_lengths(s2);

  auto triangulate = [&](LiftedSample& s, const ImagePoint& d1) {
    try {
      const Triangulation t = triangulate_midpoint(ray_through(d1, pose1), ray_through(s.match, pose2));
      s.point = t.point;
      s.gap = t.gap;
    } catch (const Error& e) {
      s.status = SampleStatus::ill_conditioned;
      s.message = e.what();
    }
  };

  CurvePosition prev{0, 0.0, 0.0};
  const int n = static_cast<int>(c1.samples.size());
  for (int k = 0; k < n; ++k) {
    LiftedSample s;
    s.index = k;
    const ImagePoint& d1 = c1.samples[k];
    if (k == 0 || k == n - 1) {
      s.status = SampleStatus::endpoint;
      s.match = k == 0 ? s2.front() : s2.back();
      s.arc2 = k == 0 ? 0.0 : arc.back();
      triangulate(s, d1);
      out.samples.push_back(std::move(s));
      continue;
    }
    try {
      const Transfer tr = transfer_point(s2, epipolar_line(d1, pose1, pose2), prev, opt.transfer);
      s.match = tr.point;
      s.arc2 = tr.position.arc;
      if (tr.ill_conditioned) {
        s.status = SampleStatus::ill_conditioned;
        s.message = "sample " + std::to_string(k) + ": epipolar line is tangent to the second curve";
      } else {
        prev = tr.position;
        triangulate(s, d1);
      }
    } catch (const Error& e) {
      s.status = SampleStatus::hole;
      s.message = "sample " + std::to_string(k) + ": " + e.what();
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

/// Lifts every curve present in both frames, in the order of the first frame.
inline std::vector<SpaceCurve> lift_curves(const Frame& f1, const Frame& f2, const CameraPose& pose1,
                                           const CameraPose& pose2, const LiftOptions& opt = {}) {
  std::vector<SpaceCurve> out;
  for (const auto& c : f1.curves)
    if (const ImageCurve* c2 = f2.curve(c.id)) out.push_back(lift_curve(c, *c2, pose1, pose2, opt));
  return out;
}

}  // namespace mf
