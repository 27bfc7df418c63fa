#pragma once

// Synthetic rigid scenes, motion scripts, rendering into multiframe datasets,
// image noise and general-position checks.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "multiframe/dof.hpp"
#include "multiframe/geometry.hpp"

namespace mf {

struct LabeledPoint {
  std::string label;
  Point3 position = Point3::Zero();
  bool operator==(const LabeledPoint&) const = default;
};

struct SceneCurve {
  std::string id;
  std::vector<Point3> samples;  ///< endpoints are the traceable ones
  bool operator==(const SceneCurve&) const = default;
};

struct SceneSpec {
  std::vector<LabeledPoint> points;
  std::vector<SceneCurve> curves;
  std::uint64_t seed = 0;

  void validate() const {
    std::set<std::string> seen;
    for (const auto& p : points) {
      if (!p.position.allFinite()) fail(ErrorKind::input, "point '" + p.label + "' is not finite");
      if (!seen.insert(p.label).second) fail(ErrorKind::input, "duplicate point label '" + p.label + "'");
    }
    for (const auto& c : curves)
      if (c.samples.size() < 2) fail(ErrorKind::input, "curve '" + c.id + "' needs at least 2 samples");
    if (points.size() >= 3) {
      const Point3 a = points[0].position, b = points[1].position, c = points[2].position;
      const double scale = std::max({(b - a).norm(), (c - a).norm(), (c - b).norm()});
      if ((b - a).cross(c - a).norm() <= 1e-9 * scale * scale)
        fail(ErrorKind::input, "the first three labeled points are collinear");
    }
  }
};

/// Object motions (the camera is fixed by the regime) or moving camera poses.
/// Exactly one of the two lists is used.
struct MotionScript {
  std::vector<RigidMotion> motions;
  std::vector<CameraPose> poses;

  std::size_t frames() const { return poses.empty() ? motions.size() : poses.size(); }
  bool moves_camera() const { return !poses.empty(); }

  void validate(Regime regime) const {
    if (!motions.empty() && !poses.empty()) fail(ErrorKind::input, "motion script mixes motions and poses");
    if (frames() < 1) fail(ErrorKind::input, "motion script needs at least one frame");
    if (regime == Regime::perspective_uncalibrated) {
      if (poses.empty()) fail(ErrorKind::input, "the uncalibrated regime moves the camera; poses are required");
      for (const auto& p : poses) {
        p.validate();
        if (p.is_orthographic()) fail(ErrorKind::input, "uncalibrated poses need a finite focal point");
      }
    } else {
      if (motions.empty()) fail(ErrorKind::input, "object motions are required for this regime");
      const RigidMotion& m0 = motions.front();
      if ((m0.rotation.matrix() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-12 ||
          m0.translation.cwiseAbs().maxCoeff() > 1e-12)
        fail(ErrorKind::input, "the first motion must be the identity");
    }
  }
};

struct NoiseSpec {
  double sigma = 0.0;
  std::uint64_t seed = 0;
  bool operator==(const NoiseSpec&) const = default;
};

struct LabeledImagePoint {
  std::string label;
  ImagePoint q = ImagePoint::Zero();
  bool operator==(const LabeledImagePoint&) const = default;
};

struct ImageCurve {
  std::string id;
  std::vector<ImagePoint> samples;
  bool operator==(const ImageCurve&) const = default;
};

struct Frame {
  int id = 1;
  std::vector<LabeledImagePoint> points;
  std::vector<ImageCurve> curves;
  std::map<int, ImagePoint> epipoles;  ///< other frame id -> image of its focal point

  const ImagePoint* find(const std::string& label) const {
    for (const auto& p : points)
      if (p.label == label) return &p.q;
    return nullptr;
  }
  const ImagePoint& at(const std::string& label) const {
    const ImagePoint* q = find(label);
    if (!q) fail(ErrorKind::input, "frame " + std::to_string(id) + " has no point '" + label + "'");
    return *q;
  }
  const ImageCurve* curve(const std::string& cid) const {
    for (const auto& c : curves)
      if (c.id == cid) return &c;
    return nullptr;
  }
  bool operator==(const Frame&) const = default;
};

struct Truth {
  std::vector<LabeledPoint> points;
  std::vector<SceneCurve> curves;
  std::vector<RigidMotion> motions;
  std::vector<CameraPose> poses;
};

inline bool operator==(const Rotation& a, const Rotation& b) { return a.matrix() == b.matrix(); }
inline bool operator==(const RigidMotion& a, const RigidMotion& b) {
  return a.rotation == b.rotation && a.translation == b.translation;
}
inline bool operator==(const CameraPose& a, const CameraPose& b) {
  return a.origin == b.origin && a.u == b.u && a.v == b.v && a.focal == b.focal;
}
inline bool operator==(const Truth& a, const Truth& b) {
  return a.points == b.points && a.curves == b.curves && a.motions == b.motions && a.poses == b.poses;
}

struct MultiframeDataset {
  Regime regime = Regime::orthographic;
  std::vector<Frame> frames;
  std::optional<Truth> truth;
  std::optional<NoiseSpec> noise;

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    if (!frames.empty())
      for (const auto& p : frames.front().points) out.push_back(p.label);
    return out;
  }
  const Frame& frame(int id) const {
    for (const auto& f : frames)
      if (f.id == id) return f;
    fail(ErrorKind::input, "dataset has no frame " + std::to_string(id));
  }
  bool operator==(const MultiframeDataset& o) const {
    return regime == o.regime && frames == o.frames && truth == o.truth && noise == o.noise;
  }
};

/// Fixed camera used by the object-motion regimes.
inline CameraPose regime_camera(Regime r) {
  return r == Regime::orthographic ? CameraPose::orthographic_xy() : CameraPose::calibrated();
}

/// Camera pose that sees the unmoved scene exactly as the fixed camera sees
/// the scene moved by `m`.
inline CameraPose pose_seeing_motion(const CameraPose& camera, const RigidMotion& m) {
  const RigidMotion inv = m.inverse();
  CameraPose p;
  p.origin = apply_motion(inv, camera.origin);
  p.u = inv.rotation * camera.u;
  p.v = inv.rotation * camera.v;
  if (camera.focal) p.focal = apply_motion(inv, *camera.focal);
  return p;
}

/// Per-frame poses in scene coordinates (frame index 0-based).
inline std::vector<CameraPose> frame_poses(Regime r, const MotionScript& s) {
  if (s.moves_camera()) return s.poses;
  std::vector<CameraPose> out;
  for (const auto& m : s.motions) out.push_back(pose_seeing_motion(regime_camera(r), m));
  return out;
}

inline std::vector<CameraPose> frame_poses(Regime r, const Truth& t) {
  return frame_poses(r, MotionScript{t.motions, t.poses});
}

inline MultiframeDataset render(const SceneSpec& scene, const MotionScript& script, Regime regime) {
  scene.validate();
  script.validate(regime);
  const std::vector<CameraPose> poses = frame_poses(regime, script);
  MultiframeDataset d;
  d.regime = regime;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    Frame f;
    f.id = static_cast<int>(i) + 1;
    auto proj = [&](const Point3& x, const std::string& what) {
      try {
        return project(x, poses[i]);
      } catch (const Error& e) {
        fail(ErrorKind::generation, "frame " + std::to_string(f.id) + ", " + what + ": " + e.what());
      }
    };
    for (const auto& p : scene.points) f.points.push_back({p.label, proj(p.position, "point '" + p.label + "'")});
    for (const auto& c : scene.curves) {
      ImageCurve ic{c.id, {}};
      for (std::size_t k = 0; k < c.samples.size(); ++k)
        ic.samples.push_back(proj(c.samples[k], "curve '" + c.id + "' sample " + std::to_string(k)));
      f.curves.push_back(std::move(ic));
    }
    if (regime == Regime::perspective_uncalibrated)
      for (std::size_t j = 0; j < poses.size(); ++j) {
        if (j == i) continue;
        try {
          f.epipoles[static_cast<int>(j) + 1] = project_central(*poses[j].focal, poses[i]);
        } catch (const Error& e) {
          fail(ErrorKind::generation, "frame " + std::to_string(f.id) + ", epipole of frame " +
                                          std::to_string(j + 1) + ": " + e.what());
        }
      }
    d.frames.push_back(std::move(f));
  }
  d.truth = Truth{scene.points, scene.curves, script.motions, script.poses};
  return d;
}

/// Isotropic Gaussian perturbation of every point and curve sample, in frame
/// order. Epipoles and truth are left exact.
inline MultiframeDataset add_noise(const MultiframeDataset& d, const NoiseSpec& n) {
  if (!(n.sigma >= 0.0) || !std::isfinite(n.sigma)) fail(ErrorKind::input, "noise sigma must be finite and >= 0");
  MultiframeDataset out = d;
  if (n.sigma == 0.0) return out;
  std::mt19937_64 rng(n.seed);
  std::normal_distribution<double> g(0.0, n.sigma);
  for (auto& f : out.frames) {
    for (auto& p : f.points) p.q += ImagePoint(g(rng), g(rng));
    for (auto& c : f.curves)
      for (auto& s : c.samples) s += ImagePoint(g(rng), g(rng));
  }
  out.noise = n;
  return out;
}

// ---------------------------------------------------------------------------
// Scene and motion generators

inline Point3 random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Point3 v;
  do {
    v = Point3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

inline Rotation random_rotation(std::mt19937_64& rng, double max_angle = kPi) {
  std::uniform_real_distribution<double> a(0.0, max_angle);
  const Point3 axis = random_unit_vector(rng);
  return rotation_from_axis_angle(axis, a(rng));
}

/// Triangle P, Q, R with edges between 0.5 and ~3.5 and no small angle.
inline SceneSpec random_triangle(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const Point3 p(u(rng), u(rng), u(rng)), q(u(rng), u(rng), u(rng)), r(u(rng), u(rng), u(rng));
    const double ab = (q - p).norm(), bc = (r - q).norm(), ca = (p - r).norm();
    const double area2 = (q - p).cross(r - p).norm();
    if (std::min({ab, bc, ca}) < 0.5) continue;
    if (area2 < 0.25 * std::max({ab, bc, ca}) * std::max({ab, bc, ca})) continue;
    return {{{"P", p}, {"Q", q}, {"R", r}}, {}, seed};
  }
}

/// n points "P1".."Pn" uniform in a cube of half-width `half` around `center`.
inline SceneSpec random_cloud(int n, std::uint64_t seed, const Point3& center = Point3::Zero(), double half = 1.0) {
  if (n < 1) fail(ErrorKind::input, "point cloud needs at least one point");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half, half);
  SceneSpec s;
  s.seed = seed;
  for (int i = 0; i < n; ++i) s.points.push_back({"P" + std::to_string(i + 1), center + Point3(u(rng), u(rng), u(rng))});
  return s;
}

/// Circular arc of `samples` points in the plane through `center` with unit
/// normal `normal`, spanning `span` radians from direction `start_dir`.
inline SceneCurve circular_arc(const std::string& id, const Point3& center, double radius, const Point3& normal,
                               const Point3& start_dir, double span, int samples) {
  if (samples < 2) fail(ErrorKind::input, "arc needs at least 2 samples");
  const Point3 n = normal.normalized();
  const Point3 e1 = (start_dir - start_dir.dot(n) * n).normalized();
  const Point3 e2 = n.cross(e1);
  SceneCurve c{id, {}};
  for (int i = 0; i < samples; ++i) {
    const double t = span * i / (samples - 1);
    c.samples.push_back(center + radius * (std::cos(t) * e1 + std::sin(t) * e2));
  }
  return c;
}

/// Identity first, then uniformly random rotations with random translations.
inline MotionScript random_orthographic_script(int frames, std::mt19937_64& rng) {
  MotionScript s;
  s.motions.push_back(RigidMotion::identity());
  std::uniform_real_distribution<double> t(-1.0, 1.0);
  for (int i = 1; i < frames; ++i) s.motions.push_back({random_rotation(rng), Point3(t(rng), t(rng), t(rng))});
  return s;
}

/// Motions about `pivot` that keep every scene point at depth >= `min_depth`
/// in front of the calibrated camera.
inline MotionScript random_calibrated_script(const SceneSpec& scene, int frames, std::mt19937_64& rng,
                                             const Point3& pivot, double max_angle = 0.6, double max_shift = 0.8,
                                             double min_depth = 1.0) {
  MotionScript s;
  s.motions.push_back(RigidMotion::identity());
  std::uniform_real_distribution<double> t(-max_shift, max_shift);
  std::uniform_real_distribution<double> a(0.05, max_angle);
  while (static_cast<int>(s.motions.size()) < frames) {
    const Rotation r = rotation_from_axis_angle(random_unit_vector(rng), a(rng));
    const Point3 shift(t(rng), t(rng), t(rng));
    const RigidMotion m{r, pivot + shift - r * pivot};
    bool ok = true;
    for (const auto& p : scene.points) ok = ok && apply_motion(m, p.position).z() >= min_depth;
    for (const auto& c : scene.curves)
      for (const auto& x : c.samples) ok = ok && apply_motion(m, x).z() >= min_depth;
    if (ok) s.motions.push_back(m);
  }
  return s;
}

/// Cameras on a shell around `target`, each with its own focal distance and
/// principal-point offset, looking roughly at the target.
inline MotionScript random_uncalibrated_script(const SceneSpec& scene, int frames, std::mt19937_64& rng,
                                               const Point3& target = Point3::Zero(), double min_dist = 5.0,
                                               double max_dist = 8.0) {
  std::uniform_real_distribution<double> dist(min_dist, max_dist), focal(0.8, 1.5), roll(0.0, 2 * kPi);
  std::normal_distribution<double> aim(0.0, 0.3), offset(0.0, 0.1);
  MotionScript s;
  while (static_cast<int>(s.poses.size()) < frames) {
    Point3 d = random_unit_vector(rng);
    d.z() = std::abs(d.z()) + 0.3;
    d.normalize();
    const Point3 center = target + d * dist(rng);
    const Point3 fwd = (target - center + Point3(aim(rng), aim(rng), aim(rng))).normalized();
    Point3 u = fwd.cross(random_unit_vector(rng)).normalized();
    Point3 v = fwd.cross(u);
    const double ang = roll(rng);
    const Point3 ur = std::cos(ang) * u + std::sin(ang) * v, vr = -std::sin(ang) * u + std::cos(ang) * v;
    u = ur;
    v = vr;
    const Point3 origin = center + focal(rng) * fwd + offset(rng) * u + offset(rng) * v;
    const CameraPose pose = CameraPose::perspective(origin, u, v, center);
    bool ok = true;
    for (const auto& p : scene.points) ok = ok && perspective_depth(p.position, pose) > 0.5;
    for (const auto& c : scene.curves)
      for (const auto& x : c.samples) ok = ok && perspective_depth(x, pose) > 0.5;
    if (ok) s.poses.push_back(pose);
  }
  return s;
}

// ---------------------------------------------------------------------------
// General-position checks

namespace detail {
inline double frame_scale(const Frame& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.points.size(); ++i)
    for (std::size_t j = i + 1; j < f.points.size(); ++j) s = std::max(s, (f.points[i].q - f.points[j].q).norm());
  return s > 0.0 ? s : 1.0;
}
}  // namespace detail

/// Collinear point triples, coincident projections, duplicated labels and
/// curves that touch an epipolar tangency (needs truth or epipoles).
inline std::vector<std::string> validate_general_position(const MultiframeDataset& d, double rel_tol = 1e-6) {
  std::vector<std::string> warnings;
  for (const auto& f : d.frames) {
    const double scale = detail::frame_scale(f);
    const std::string fid = "frame " + std::to_string(f.id) + ": ";
    std::set<std::string> seen;
    for (const auto& p : f.points)
      if (!seen.insert(p.label).second) warnings.push_back(fid + "duplicated label '" + p.label + "'");
    const std::size_t n = std::min<std::size_t>(f.points.size(), 60);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if ((f.points[i].q - f.points[j].q).norm() <= rel_tol * scale)
          warnings.push_back(fid + "coincident projections of '" + f.points[i].label + "' and '" + f.points[j].label + "'");
        for (std::size_t k = j + 1; k < n; ++k) {
          const ImagePoint a = f.points[j].q - f.points[i].q, b = f.points[k].q - f.points[i].q;
          const double longest = std::max({a.norm(), b.norm(), (b - a).norm()});
          if (longest > rel_tol * scale && std::abs(cross2(a, b)) <= rel_tol * longest * longest)
            warnings.push_back(fid + "collinear points '" + f.points[i].label + "', '" + f.points[j].label + "', '" +
                               f.points[k].label + "'");
        }
      }
  }

  // Epipolar tangency: the curve tangent turns through the epipolar direction.
  std::vector<CameraPose> poses;
  if (d.truth) {
    try {
      poses = frame_poses(d.regime, *d.truth);
    } catch (const Error&) {
      poses.clear();
    }
  }
  for (std::size_t i = 0; i < d.frames.size(); ++i) {
    const Frame& fi = d.frames[i];
    for (std::size_t j = 0; j < d.frames.size(); ++j) {
      if (i == j) continue;
      const int jd = d.frames[j].id;
      // Epipolar direction through image point q of frame i.
      std::function<std::optional<ImagePoint>(const ImagePoint&)> epi_dir;
      if (fi.epipoles.count(jd)) {
        const ImagePoint e = fi.epipoles.at(jd);
        epi_dir = [e](const ImagePoint& q) -> std::optional<ImagePoint> { return q - e; };
      } else if (poses.size() == d.frames.size()) {
        const CameraPose& pi = poses[i];
        const CameraPose& pj = poses[j];
        if (pi.focal) {
          if (std::abs((*pj.focal - *pi.focal).dot(pi.normal())) < 1e-12) continue;
          const ImagePoint e = project_central(*pj.focal, pi);
          epi_dir = [e](const ImagePoint& q) -> std::optional<ImagePoint> { return q - e; };
        } else {
          const Point3 dir = pj.normal();
          const ImagePoint e(dir.dot(pi.u), dir.dot(pi.v));
          if (e.norm() < 1e-9) continue;
          epi_dir = [e](const ImagePoint&) -> std::optional<ImagePoint> { return e; };
        }
      } else {
        continue;
      }
      for (const auto& c : fi.curves) {
        double prev = 0.0;
        for (std::size_t k = 0; k + 1 < c.samples.size(); ++k) {
          const ImagePoint t = c.samples[k + 1] - c.samples[k];
          const auto ed = epi_dir((c.samples[k] + c.samples[k + 1]) / 2.0);
          if (!ed || t.norm() == 0.0 || ed->norm() == 0.0) continue;
          const double s = cross2(t.normalized(), ed->normalized());
          if (k > 0 && ((s > 0) != (prev > 0) || std::abs(s) < 1e-9)) {
            warnings.push_back("frame " + std::to_string(fi.id) + ": curve '" + c.id +
                               "' touches an epipolar tangency towards frame " + std::to_string(jd) + " near sample " +
                               std::to_string(k));
            break;
          }
          prev = s;
        }
      }
    }
  }
  return warnings;
}

}  // namespace mf
