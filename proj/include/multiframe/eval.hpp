#pragma once

// Scoring an estimate document against a dataset that carries truth.
// Points are aligned in the estimate's gauge first: shift-reflection and scale
// estimates live in frame-1 camera coordinates, similarity and none estimates
// in scene coordinates.

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "multiframe/dataset_io.hpp"
#include "multiframe/uncal4f.hpp"

namespace mf {

struct MetricRow {
  std::string metric;
  double value = 0;
  std::string unit;
  std::string gauge;
};

struct EvalReport {
  std::string solver;
  std::string gauge;
  std::vector<MetricRow> rows;

  const MetricRow* find(const std::string& metric) const {
    for (const auto& r : rows)
      if (r.metric == metric) return &r;
    return nullptr;
  }
  double value(const std::string& metric) const {
    const MetricRow* r = find(metric);
    if (!r) fail(ErrorKind::evaluation, "report has no metric '" + metric + "'");
    return r->value;
  }
};

/// Camera coordinates: in-plane axes then the plane normal, measured from the
/// focal point (central) or the plane origin (parallel).
struct CameraFrame {
  Mat3 basis;  ///< columns u, v, n
  Point3 center;

  explicit CameraFrame(const CameraPose& p) {
    basis.col(0) = p.u;
    basis.col(1) = p.v;
    basis.col(2) = p.normal();
    center = p.focal ? *p.focal : p.origin;
  }
  Point3 to_camera(const Point3& x) const { return basis.transpose() * (x - center); }
  Point3 to_scene(const Point3& y) const { return center + basis * y; }
};

/// Maps estimate coordinates into scene coordinates: x ↦ s·L·x + t.
struct GaugeAlignment {
  std::string kind = "none";
  Mat3 linear = Mat3::Identity();  ///< includes scale and any reflection
  Point3 shift = Point3::Zero();
  std::optional<CameraFrame> camera;  ///< set when the estimate is in camera coordinates

  Point3 operator()(const Point3& x) const {
    const Point3 y = linear * x + shift;
    return camera ? camera->to_scene(y) : y;
  }
};

namespace detail {

inline double rms(const std::vector<double>& e) {
  if (e.empty()) return 0;
  double s = 0;
  for (double x : e) s += x * x;
  return std::sqrt(s / static_cast<double>(e.size()));
}

inline double max_of(const std::vector<double>& e) {
  return e.empty() ? 0.0 : *std::max_element(e.begin(), e.end());
}

inline double direction_angle(const Point3& a, const Point3& b) {
  if (a.norm() == 0 || b.norm() == 0) return kPi;
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

inline double squared_error(const GaugeAlignment& g, const std::vector<Point3>& est, const std::vector<Point3>& truth) {
  double s = 0;
  for (std::size_t i = 0; i < est.size(); ++i) s += (g(est[i]) - truth[i]).squaredNorm();
  return s;
}

inline Eigen::Matrix3Xd columns(const std::vector<Point3>& v) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

}  // namespace detail

/// Best alignment of `est` onto `truth` (scene coordinates) within the gauge.
inline GaugeAlignment align(const std::string& gauge, const std::vector<Point3>& est, const std::vector<Point3>& truth,
                            const std::optional<CameraPose>& frame1 = std::nullopt) {
  GaugeAlignment g;
  g.kind = gauge;
  if (gauge == "none" || est.empty()) return g;
  if (est.size() != truth.size()) fail(ErrorKind::evaluation, "alignment needs matched point sets");

  if (gauge == "shift-reflection" || gauge == "scale") {
    if (!frame1) fail(ErrorKind::evaluation, "gauge '" + gauge + "' needs the truth pose of frame 1");
    g.camera = CameraFrame(*frame1);
    std::vector<Point3> t;
    for (const auto& x : truth) t.push_back(g.camera->to_camera(x));
    if (gauge == "scale") {
      double num = 0, den = 0;
      for (std::size_t i = 0; i < est.size(); ++i) {
        num += est[i].dot(t[i]);
        den += est[i].squaredNorm();
      }
      if (!(den > 0)) fail(ErrorKind::evaluation, "estimate points are all at the origin");
      g.linear = (num / den) * Mat3::Identity();
      return g;
    }
    double best = std::numeric_limits<double>::infinity();
    GaugeAlignment out = g;
    for (double sign : {1.0, -1.0}) {
      double shift = 0;
      for (std::size_t i = 0; i < est.size(); ++i) shift += t[i].z() - sign * est[i].z();
      GaugeAlignment c = g;
      c.linear = Eigen::Vector3d(1, 1, sign).asDiagonal();
      c.shift = Point3(0, 0, shift / static_cast<double>(est.size()));
      const double err = detail::squared_error(c, est, truth);
      if (err < best) {
        best = err;
        out = c;
      }
    }
    return out;
  }

  if (gauge == "similarity") {
    if (est.size() < 3) fail(ErrorKind::evaluation, "similarity alignment needs at least 3 points");
    const Eigen::Matrix3Xd dst = detail::columns(truth);
    double best = std::numeric_limits<double>::infinity();
    GaugeAlignment out = g;
    for (double sign : {1.0, -1.0}) {
      const Mat3 mirror = Eigen::Vector3d(1, 1, sign).asDiagonal();
      const Eigen::Matrix3Xd src = mirror * detail::columns(est);
      const Eigen::Matrix4d T = Eigen::umeyama(src, dst, true);
      GaugeAlignment c = g;
      c.linear = T.topLeftCorner<3, 3>() * mirror;
      c.shift = T.topRightCorner<3, 1>();
      const double err = detail::squared_error(c, est, truth);
      if (err < best) {
        best = err;
        out = c;
      }
    }
    return out;
  }
  fail(ErrorKind::evaluation, "unknown gauge '" + gauge + "'");
}

inline double point_set_diameter(const std::vector<Point3>& pts) {
  double d = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) d = std::max(d, (pts[i] - pts[j]).norm());
  return d;
}

/// Diameter of every truth point and curve sample.
inline double scene_diameter(const Truth& t) {
  std::vector<Point3> all;
  for (const auto& p : t.points) all.push_back(p.position);
  for (const auto& c : t.curves) all.insert(all.end(), c.samples.begin(), c.samples.end());
  return point_set_diameter(all);
}

struct PointMatch {
  std::vector<std::string> labels;
  std::vector<Point3> est, truth;
};

/// Estimate points paired with truth; any estimate label absent from truth is
/// an evaluation error.
inline PointMatch match_points(const Json& est, const Truth& truth) {
  PointMatch m;
  std::map<std::string, Point3> t;
  for (const auto& p : truth.points) t[p.label] = p.position;
  if (!est.contains("points") || !est["points"].is_object())
    fail(ErrorKind::evaluation, "estimate has no 'points' object");
  std::vector<std::string> missing;
  for (const auto& [label, xyz] : est["points"].items()) {
    const auto it = t.find(label);
    if (it == t.end()) {
      missing.push_back(label);
      continue;
    }
    m.labels.push_back(label);
    m.est.push_back(io::Reader::vector<3>(xyz, "estimate point '" + label + "'"));
    m.truth.push_back(it->second);
  }
  if (!missing.empty()) {
    std::string s;
    for (const auto& l : missing) s += (s.empty() ? "" : ", ") + l;
    fail(ErrorKind::evaluation, "label mismatch: estimate points not in truth: " + s);
  }
  return m;
}

struct Evaluation {
  EvalReport report;
  GaugeAlignment alignment;
  std::map<std::string, Point3> aligned;                      ///< estimate points in scene coordinates
  std::map<std::string, std::vector<std::optional<Point3>>> curves;  ///< lifted samples, aligned
};

inline Evaluation evaluate(const Json& est, const MultiframeDataset& d) {
  if (!d.truth) fail(ErrorKind::evaluation, "truth dataset carries no ground truth");
  const Truth& truth = *d.truth;
  Evaluation ev;
  EvalReport& rep = ev.report;
  rep.solver = io::Reader::string(io::Reader::field(est, "solver", "estimate"), "estimate.solver");
  rep.gauge = io::Reader::string(io::Reader::field(est, "gauge", "estimate"), "estimate.gauge");
  if (est.contains("regime") && est["regime"] != std::string(to_string(d.regime)))
    fail(ErrorKind::evaluation, "estimate regime " + est["regime"].get<std::string>() + " does not match truth regime " +
                                    std::string(to_string(d.regime)));
  const std::vector<CameraPose> poses = frame_poses(d.regime, truth);
  auto row = [&](const std::string& m, double v, const std::string& unit) { rep.rows.push_back({m, v, unit, rep.gauge}); };

  const PointMatch pm = match_points(est, truth);
  ev.alignment = align(rep.gauge, pm.est, pm.truth, poses.empty() ? std::nullopt : std::optional(poses.front()));
  std::vector<double> err;
  for (std::size_t i = 0; i < pm.est.size(); ++i) {
    const Point3 x = ev.alignment(pm.est[i]);
    ev.aligned[pm.labels[i]] = x;
    err.push_back((x - pm.truth[i]).norm());
  }
  const double diameter = scene_diameter(truth);
  row("point_count", static_cast<double>(pm.est.size()), "count");
  row("point_error_max", detail::max_of(err), "scene");
  row("point_error_rms", detail::rms(err), "scene");
  row("point_error_max_rel", diameter > 0 ? detail::max_of(err) / diameter : 0.0, "diameter");

  if (rep.solver == "ortho3p") {
    std::vector<std::string> labels = est.at("labels").get<std::vector<std::string>>();
    std::map<std::string, Point3> t;
    for (const auto& p : truth.points) t[p.label] = p.position;
    for (const auto& l : labels)
      if (!t.count(l)) fail(ErrorKind::evaluation, "label mismatch: triangle vertex '" + l + "' not in truth");
    const std::array<double, 3> tl{(t[labels[1]] - t[labels[0]]).norm(), (t[labels[2]] - t[labels[1]]).norm(),
                                   (t[labels[0]] - t[labels[2]]).norm()};
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : est.at("candidates")) {
      double e = 0;
      for (int k = 0; k < 3; ++k) e = std::max(e, std::abs(c.at("lengths")[k].get<double>() - tl[k]) / tl[k]);
      best = std::min(best, e);
    }
    row("candidate_count", static_cast<double>(est.at("candidates").size()), "count");
    row("truth_length_rel_error", best, "relative");
    row("truth_in_set", best < 1e-6 ? 1.0 : 0.0, "bool");
  } else if (rep.solver == "persp2f") {
    if (poses.size() < 2) fail(ErrorKind::evaluation, "truth has fewer than 2 frames");
    const CameraFrame c1(poses[0]), c2(poses[1]);
    const Mat3 r = c2.basis.transpose() * c1.basis;
    const Point3 t = c2.basis.transpose() * (c1.center - c2.center);
    const RigidMotion em = motion_from_json(est, "estimate");
    row("rotation_error", em.rotation.angle_to(Rotation::nearest(r)), "rad");
    row("translation_dir_error", detail::direction_angle(em.translation, t), "rad");
  } else if (rep.solver == "uncal4f") {
    const bool converged = est.at("converged").get<bool>();
    row("converged", converged ? 1 : 0, "bool");
    row("root_count", static_cast<double>(est.at("roots").size()), "count");
    const Uncal4fProblem base = make_problem(d);
    auto index = [&](const std::string& key) {
      const std::string lab = est.at(key).get<std::string>();
      const auto it = std::find(base.labels.begin(), base.labels.end(), lab);
      if (it == base.labels.end()) fail(ErrorKind::evaluation, "label mismatch: '" + lab + "' not in truth");
      return static_cast<int>(it - base.labels.begin());
    };
    const Uncal4fProblem p = make_problem(d, std::pair{index("label_a"), index("label_b")});
    const AngleParams ta = truth_angles(d, p);
    double ae = 0;
    for (int i = 0; i < 4; ++i) ae = std::max(ae, std::abs(std::remainder(est.at("angles")[i].get<double>() - ta[i], 2 * kPi)));
    row("angle_error_max", ae, "rad");
    if (converged && est.contains("focals") && pm.est.size() >= 3) {
      double fe = 0;
      for (std::size_t i = 0; i < poses.size() && i < est["focals"].size(); ++i)
        fe = std::max(fe, (ev.alignment(io::Reader::vector<3>(est["focals"][i], "focal")) - *poses[i].focal).norm());
      row("focal_error_max", fe, "scene");
    }
  }

  if (est.contains("curves")) {
    std::map<std::string, const SceneCurve*> tc;
    for (const auto& c : truth.curves) tc[c.id] = &c;
    for (const auto& c : est["curves"]) {
      const std::string id = c.at("id").get<std::string>();
      if (!tc.count(id)) fail(ErrorKind::evaluation, "label mismatch: curve '" + id + "' not in truth");
      const SceneCurve& t = *tc[id];
      std::vector<double> ce, gaps;
      int holes = 0;
      auto& lifted = ev.curves[id];
      for (const auto& s : c.at("samples")) {
        const auto k = s.at("index").get<std::size_t>();
        if (k >= t.samples.size()) fail(ErrorKind::evaluation, "curve '" + id + "' sample index out of range");
        if (s.at("point").is_null()) {
          ++holes;
          lifted.push_back(std::nullopt);
          continue;
        }
        const Point3 x = ev.alignment(io::Reader::vector<3>(s["point"], "curve sample"));
        lifted.push_back(x);
        ce.push_back((x - t.samples[k]).norm());
        gaps.push_back(s.at("gap").get<double>());
      }
      const std::string pre = "curve_" + id + "_";
      row(pre + "error_max", detail::max_of(ce), "scene");
      row(pre + "error_rms", detail::rms(ce), "scene");
      row(pre + "error_max_rel", diameter > 0 ? detail::max_of(ce) / diameter : 0.0, "diameter");
      row(pre + "gap_max", detail::max_of(gaps), "scene");
      row(pre + "holes", holes, "count");
    }
  }
  return ev;
}

inline std::string eval_csv(const EvalReport& r) {
  std::string out = "metric,value,unit,gauge\n";
  for (const auto& m : r.rows) {
    out += m.metric + ",";
    io::write_number(out, m.value);
    out += "," + m.unit + "," + m.gauge + "\n";
  }
  return out;
}

/// One SVG 1.1 document per frame: observed image features and the aligned
/// estimate reprojected through the true pose.
inline std::vector<std::string> eval_svgs(const Evaluation& ev, const MultiframeDataset& d) {
  const std::vector<CameraPose> poses = frame_poses(d.regime, *d.truth);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < d.frames.size(); ++i) {
    const Frame& f = d.frames[i];
    std::vector<std::pair<std::string, std::optional<ImagePoint>>> reproj;
    for (const auto& [label, x] : ev.aligned) {
      std::optional<ImagePoint> q;
      try {
        q = project(x, poses[i]);
      } catch (const Error&) {
      }
      reproj.emplace_back(label, q);
    }
    std::vector<std::vector<ImagePoint>> lifted;
    for (const auto& [id, samples] : ev.curves) {
      lifted.emplace_back();
      for (const auto& x : samples) {
        if (!x) continue;
        try {
          lifted.back().push_back(project(*x, poses[i]));
        } catch (const Error&) {
        }
      }
    }
    ImagePoint lo = ImagePoint::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    auto grow = [&](const ImagePoint& q) {
      lo = lo.cwiseMin(q);
      hi = hi.cwiseMax(q);
    };
    for (const auto& p : f.points) grow(p.q);
    for (const auto& c : f.curves)
      for (const auto& q : c.samples) grow(q);
    for (const auto& [l, q] : reproj)
      if (q) grow(*q);
    if (!std::isfinite(lo.x())) lo = hi = ImagePoint::Zero();
    const double span = std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1e-9});
    const double size = 600, margin = 30, s = (size - 2 * margin) / span;
    auto X = [&](const ImagePoint& q) { return margin + (q.x() - lo.x()) * s; };
    auto Y = [&](const ImagePoint& q) { return size - margin - (q.y() - lo.y()) * s; };

    std::ostringstream svg;
    svg.precision(6);
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << size << "\" height=\"" << size << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"10\" y=\"20\" font-size=\"14\">frame " << f.id << ": observed (black) vs reprojected (red)</text>\n";
    auto polyline = [&](const std::vector<ImagePoint>& v, const char* colour, const char* dash) {
      if (v.size() < 2) return;
      svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1\"" << dash << " points=\"";
      for (const auto& q : v) svg << X(q) << "," << Y(q) << " ";
      svg << "\"/>\n";
    };
    for (const auto& c : f.curves) polyline(c.samples, "black", "");
    for (const auto& c : lifted) polyline(c, "red", " stroke-dasharray=\"4,2\"");
    for (const auto& p : f.points)
      svg << "<circle cx=\"" << X(p.q) << "\" cy=\"" << Y(p.q) << "\" r=\"4\" fill=\"none\" stroke=\"black\"/>\n"
          << "<text x=\"" << X(p.q) + 6 << "\" y=\"" << Y(p.q) - 6 << "\" font-size=\"10\">" << p.label << "</text>\n";
    for (const auto& [l, q] : reproj)
      if (q) svg << "<circle cx=\"" << X(*q) << "\" cy=\"" << Y(*q) << "\" r=\"2\" fill=\"red\"/>\n";
    svg << "</svg>\n";
    out.push_back(svg.str());
  }
  return out;
}

}  // namespace mf
