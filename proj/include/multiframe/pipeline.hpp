#pragma once

// Solver dispatch for whole datasets. Every run yields an estimate document:
// labeled 3-D points in a stated gauge plus solver-specific detail (candidate
// sets, iteration history, lifted curves).

#include <cstdlib>
#include <optional>
#include <random>
#include <string>

#include "multiframe/curve_lift.hpp"
#include "multiframe/dataset_io.hpp"
#include "multiframe/ortho3p.hpp"
#include "multiframe/persp_epi.hpp"
#include "multiframe/uncal4f.hpp"

namespace mf {

/// Multiplier applied to the solvers' acceptance tolerances.
struct ToleranceProfile {
  std::string name = "default";
  double factor = 1.0;

  static ToleranceProfile named(const std::string& n) {
    if (n == "strict") return {n, 0.1};
    if (n == "default" || n.empty()) return {"default", 1.0};
    if (n == "loose") return {n, 1e3};
    fail(ErrorKind::input, "unknown tolerance profile '" + n + "' (strict, default, loose)");
  }
  /// Reads MULTIFRAME_TOLERANCE.
  static ToleranceProfile from_env() {
    const char* v = std::getenv("MULTIFRAME_TOLERANCE");
    return named(v ? v : "");
  }
};

struct GenRequest {
  std::string scene = "triangle";  ///< triangle, cloud, arc
  int points = 8;                  ///< cloud size; extra points beside an arc
  int frames = 3;
  Regime regime = Regime::orthographic;
  std::uint64_t seed = 1;
  double noise = 0;
  int samples = 100;  ///< arc samples
};

/// Deterministic synthetic dataset. Calibrated scenes sit around (0, 0, 5) in
/// front of the fixed camera; the other regimes are centred on the origin.
inline MultiframeDataset generate_dataset(const GenRequest& g) {
  if (g.frames < 1) fail(ErrorKind::input, "--frames must be >= 1");
  const Point3 center = g.regime == Regime::perspective_calibrated ? Point3(0, 0, 5) : Point3::Zero();
  SceneSpec s;
  if (g.scene == "triangle") {
    s = random_triangle(g.seed);
    for (auto& p : s.points) p.position += center;
  } else if (g.scene == "cloud") {
    s = random_cloud(g.points, g.seed, center);
  } else if (g.scene == "arc") {
    std::mt19937_64 rng(g.seed);
    const Point3 normal = random_unit_vector(rng), start = random_unit_vector(rng);
    if (g.points > 0) s = random_cloud(g.points, g.seed, center);
    s.seed = g.seed;
    s.curves.push_back(circular_arc("arc", center, 1.0, normal, start, 2.5, g.samples));
  } else {
    fail(ErrorKind::input, "unknown scene '" + g.scene + "' (triangle, cloud, arc)");
  }
  std::mt19937_64 rng(g.seed * 31 + 7);
  MotionScript m;
  switch (g.regime) {
    case Regime::orthographic: m = random_orthographic_script(g.frames, rng); break;
    case Regime::perspective_calibrated: m = random_calibrated_script(s, g.frames, rng, center); break;
    case Regime::perspective_uncalibrated: m = random_uncalibrated_script(s, g.frames, rng, center); break;
  }
  MultiframeDataset d = render(s, m, g.regime);
  return add_noise(d, NoiseSpec{g.noise, g.seed * 101 + 3});
}

struct SolveRequest {
  std::string solver = "auto";  ///< ortho3p, persp2f, uncal4f, curve, auto
  ToleranceProfile tolerance;
  // persp2f
  std::string distinguished;
  bool allow_eight = false;
  // uncal4f
  std::string init_mode = "truth-perturbed";  ///< or manual
  std::optional<std::array<double, 4>> angles;
  double perturb = 0.01;
  std::uint64_t seed = 1;
  int starts = SolveOptions{}.starts;
  // curve
  std::string poses = "from-truth";  ///< or from-solver
};

struct SolveOutcome {
  Json estimate;
  bool ok = true;
  std::string message;
};

/// Curves go to curve lifting; otherwise the regime picks the point solver
/// when the frame and point counts suit it.
inline std::string choose_solver(const MultiframeDataset& d) {
  const std::size_t points = d.frames.empty() ? 0 : d.frames.front().points.size();
  const bool curves = !d.frames.empty() && !d.frames.front().curves.empty();
  if (curves && d.frames.size() >= 2) return "curve";
  switch (d.regime) {
    case Regime::orthographic:
      if (d.frames.size() >= 3 && points >= 3) return "ortho3p";
      break;
    case Regime::perspective_calibrated:
      if (d.frames.size() == 2 && points >= 8) return "persp2f";
      break;
    case Regime::perspective_uncalibrated:
      if (d.frames.size() == 4 && points >= 7) return "uncal4f";
      break;
  }
  fail(ErrorKind::input, "no solver fits a " + std::string(to_string(d.regime)) + " dataset with " +
                             std::to_string(d.frames.size()) + " frames and " + std::to_string(points) + " points");
}

namespace detail {

inline Json points_json(const std::vector<LabeledPoint>& pts) {
  Json j = Json::object();
  for (const auto& p : pts) j[p.label] = io::vec(p.position);
  return j;
}

/// Labels seen in every frame, in first-frame order.
inline std::vector<std::string> shared_labels(const MultiframeDataset& d) {
  std::vector<std::string> out;
  if (d.frames.empty()) return out;
  for (const auto& p : d.frames.front().points) {
    bool all = true;
    for (const auto& f : d.frames) all = all && f.find(p.label);
    if (all) out.push_back(p.label);
  }
  return out;
}

inline void require_regime(const MultiframeDataset& d, Regime r, const std::string& solver) {
  if (d.regime != r)
    fail(ErrorKind::regime_mismatch, solver + " needs a " + std::string(to_string(r)) + " dataset, got " +
                                         std::string(to_string(d.regime)));
}

}  // namespace detail

struct OrthoRun {
  std::vector<std::string> labels;
  std::vector<TriangleFrameObs> obs;
  std::vector<TriangleSolution> solutions;
};

inline OrthoRun run_ortho3p(const MultiframeDataset& d, const ToleranceProfile& tol = {}) {
  detail::require_regime(d, Regime::orthographic, "ortho3p");
  OrthoRun r;
  r.labels = detail::shared_labels(d);
  if (r.labels.size() < 3) fail(ErrorKind::input, "ortho3p needs 3 points seen in every frame");
  r.labels.resize(3);
  for (const auto& f : d.frames)
    r.obs.push_back(TriangleFrameObs::from_points(f.at(r.labels[0]), f.at(r.labels[1]), f.at(r.labels[2])));
  Ortho3pOptions o;
  o.pattern_tol *= tol.factor;
  o.extra_frame_tol *= tol.factor;
  o.admissibility_tol *= tol.factor;
  r.solutions = solve_triangle(r.obs, o);
  return r;
}

/// Frame-i motions of a triangle candidate, taking frame-1 camera coordinates
/// to frame-i camera coordinates.
inline std::vector<RigidMotion> ortho_motions(const OrthoRun& r, std::size_t candidate, int reflection = 1) {
  const TriangleSolution& s = r.solutions.at(candidate);
  const auto base = posed_triple(r.obs[0], s.frames[0], reflection);
  std::vector<RigidMotion> out;
  for (std::size_t i = 0; i < r.obs.size(); ++i)
    out.push_back(i == 0 ? RigidMotion::identity()
                         : recover_motion(base, posed_triple(r.obs[i], s.frames[i], reflection)).motion);
  return out;
}

inline Json ortho3p_estimate(const OrthoRun& r) {
  Json j;
  j["solver"] = "ortho3p";
  j["regime"] = std::string(to_string(Regime::orthographic));
  j["gauge"] = "shift-reflection";
  j["labels"] = r.labels;
  Json cands = Json::array();
  for (const auto& s : r.solutions) {
    Json c;
    c["lengths"] = Json::array({s.a, s.b, s.c});
    c["max_quartic_residual"] = s.max_quartic_residual;
    Json fr = Json::array();
    for (const auto& f : s.frames)
      fr.push_back(Json{{"pattern", std::string(to_string(f.pattern))}, {"depths", io::vec(f.depths)}});
    c["frames"] = fr;
    cands.push_back(c);
  }
  j["candidates"] = cands;
  const auto triple = posed_triple(r.obs[0], r.solutions.front().frames[0], 1);
  std::vector<LabeledPoint> pts;
  for (int k = 0; k < 3; ++k) pts.push_back({r.labels[k], triple[k]});
  j["points"] = detail::points_json(pts);
  return j;
}

inline TwoFrameResult run_persp2f(const MultiframeDataset& d, const SolveRequest& req) {
  PerspOptions o;
  o.distinguished = req.distinguished;
  o.allow_eight = req.allow_eight;
  o.essential_tol *= req.tolerance.factor;
  return two_frame_reconstruct(d, o);
}

inline Json persp2f_estimate(const TwoFrameResult& r) {
  Json j;
  j["solver"] = "persp2f";
  j["regime"] = std::string(to_string(Regime::perspective_calibrated));
  j["gauge"] = "scale";
  j["distinguished"] = r.distinguished;
  j["rotation"] = io::rotation_json(r.motion.rotation);
  j["translation"] = io::vec(r.motion.translation);
  j["baseline"] = r.motion.baseline;
  j["baseline_degenerate"] = r.motion.baseline_degenerate;
  Json e = Json::array();
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) e.push_back(r.essential(a, b));
  j["essential"] = e;
  j["vote"] = Json{{"positive", Json::array({r.vote.positive[0], r.vote.positive[1], r.vote.positive[2], r.vote.positive[3]})},
                   {"counted", r.vote.counted},
                   {"survivors", r.vote.survivors},
                   {"chosen", r.vote.chosen}};
  j["points"] = detail::points_json(r.points);
  return j;
}

struct Uncal4fRun {
  Uncal4fProblem problem;
  AngleParams initial;
  Uncal4fSolution solution;
  std::optional<std::array<CameraPose, 4>> poses;
  ObjectReconstruction object;
};

inline AngleParams initial_angles(const MultiframeDataset& d, const Uncal4fProblem& p, const SolveRequest& req) {
  AngleParams a;
  if (req.init_mode == "manual") {
    if (!req.angles) fail(ErrorKind::input, "--init-mode manual needs --angles");
    a.a = *req.angles;
    return a;
  }
  if (req.init_mode != "truth-perturbed") fail(ErrorKind::input, "unknown init mode '" + req.init_mode + "'");
  if (!d.truth) fail(ErrorKind::input, "--init-mode truth-perturbed needs a dataset with truth");
  a = truth_angles(d, p);
  std::mt19937_64 rng(req.seed);
  for (int i = 0; i < 4; ++i) a[i] *= 1 + req.perturb * (rng() % 2 ? 1 : -1);
  return a;
}

inline Uncal4fRun run_uncal4f(const MultiframeDataset& d, const SolveRequest& req) {
  Uncal4fRun r;
  r.problem = make_problem(d);
  r.initial = initial_angles(d, r.problem, req);
  SolveOptions o;
  o.residual_tol *= req.tolerance.factor;
  o.starts = req.starts;
  r.solution = solve_angles(r.problem.meas, r.initial, o);
  if (r.solution.report.converged) {
    r.poses = layout_poses(r.solution.layout, r.problem.meas);
    r.object = reconstruct_object(*r.poses, d);
  }
  return r;
}

inline Json uncal4f_estimate(const Uncal4fRun& r) {
  const auto angles = [](const AngleParams& a) { return Json::array({a[0], a[1], a[2], a[3]}); };
  const SolveReport& rep = r.solution.report;
  Json j;
  j["solver"] = "uncal4f";
  j["regime"] = std::string(to_string(Regime::perspective_uncalibrated));
  j["gauge"] = "similarity";
  j["converged"] = rep.converged;
  j["label_a"] = r.problem.labels[r.problem.meas.label_a];
  j["label_b"] = r.problem.labels[r.problem.meas.label_b];
  j["initial"] = angles(r.initial);
  j["angles"] = angles(r.solution.angles);
  Json roots = Json::array();
  for (const auto& a : rep.roots) roots.push_back(angles(a));
  j["roots"] = roots;
  Json hist = Json::array();
  for (const auto& h : rep.history) hist.push_back(Json::array({h.iteration, h.residual, h.step}));
  j["report"] = Json{{"iterations", rep.iterations},
                     {"residual", rep.residual},
                     {"step", rep.step},
                     {"r_conc", rep.constraints.r_conc},
                     {"r_12", rep.constraints.r_12},
                     {"r_13", rep.constraints.r_13},
                     {"seeds_tried", rep.seeds_tried},
                     {"start_used", rep.start_used},
                     {"seed_used", rep.seed_used},
                     {"message", rep.message},
                     {"history", hist}};
  if (r.poses) {
    Json f = Json::array(), p = Json::array();
    for (const auto& pose : *r.poses) {
      f.push_back(io::vec(*pose.focal));
      p.push_back(pose_to_json(pose));
    }
    j["focals"] = f;
    j["poses"] = p;
    std::vector<LabeledPoint> pts;
    for (const auto& q : r.object.points) pts.push_back({q.label, q.position});
    j["points"] = detail::points_json(pts);
    j["warnings"] = r.object.warnings;
  } else {
    j["points"] = Json::object();
  }
  return j;
}

struct PosedFrames {
  std::vector<CameraPose> poses;
  std::string gauge;
  Json points = Json::object();
};

/// Poses for curve lifting, from ground truth or from the regime's solver.
inline PosedFrames curve_poses(const MultiframeDataset& d, const SolveRequest& req) {
  PosedFrames out;
  if (req.poses == "from-truth") {
    if (!d.truth) fail(ErrorKind::input, "--poses from-truth needs a dataset with truth");
    out.poses = frame_poses(d.regime, *d.truth);
    out.gauge = "none";
    return out;
  }
  if (req.poses != "from-solver") fail(ErrorKind::input, "unknown pose source '" + req.poses + "'");
  switch (d.regime) {
    case Regime::orthographic: {
      const OrthoRun r = run_ortho3p(d, req.tolerance);
      for (const auto& m : ortho_motions(r, 0)) out.poses.push_back(pose_seeing_motion(CameraPose::orthographic_xy(), m));
      out.gauge = "shift-reflection";
      out.points = ortho3p_estimate(r)["points"];
      break;
    }
    case Regime::perspective_calibrated: {
      const TwoFrameResult r = run_persp2f(d, req);
      const RigidMotion m{r.motion.rotation, r.motion.baseline * r.motion.translation};
      out.poses = {CameraPose::calibrated(), pose_seeing_motion(CameraPose::calibrated(), m)};
      out.gauge = "scale";
      out.points = detail::points_json(r.points);
      break;
    }
    case Regime::perspective_uncalibrated: {
      const Uncal4fRun r = run_uncal4f(d, req);
      if (!r.poses) fail(ErrorKind::no_solution, "four-frame solve did not converge: " + r.solution.report.message);
      out.poses.assign(r.poses->begin(), r.poses->end());
      out.gauge = "similarity";
      out.points = uncal4f_estimate(r)["points"];
      break;
    }
  }
  return out;
}

inline Json space_curve_json(const SpaceCurve& c) {
  Json s = Json::array();
  for (const auto& x : c.samples) {
    Json j;
    j["index"] = x.index;
    j["status"] = std::string(to_string(x.status));
    j["point"] = x.valid() ? io::vec(x.point) : Json(nullptr);
    j["gap"] = x.gap;
    j["match"] = io::vec(x.match);
    j["arc2"] = x.arc2;
    if (!x.message.empty()) j["message"] = x.message;
    s.push_back(j);
  }
  return Json{{"id", c.id}, {"second_reversed", c.second_reversed}, {"samples", s}};
}

inline Json curve_estimate(const MultiframeDataset& d, const SolveRequest& req) {
  if (d.frames.size() < 2) fail(ErrorKind::input, "curve lifting needs 2 frames");
  const PosedFrames pf = curve_poses(d, req);
  LiftOptions lo;
  lo.endpoint_tol *= req.tolerance.factor;
  Json curves = Json::array();
  for (const auto& c : lift_curves(d.frames[0], d.frames[1], pf.poses[0], pf.poses[1], lo)) curves.push_back(space_curve_json(c));
  if (curves.empty()) fail(ErrorKind::input, "no curve is present in both of the first two frames");
  Json j;
  j["solver"] = "curve";
  j["regime"] = std::string(to_string(d.regime));
  j["gauge"] = pf.gauge;
  j["poses_source"] = req.poses;
  j["points"] = pf.points;
  j["curves"] = curves;
  return j;
}

inline SolveOutcome run_solver(const MultiframeDataset& d, SolveRequest req) {
  if (req.solver == "auto") req.solver = choose_solver(d);
  SolveOutcome out;
  if (req.solver == "ortho3p") {
    out.estimate = ortho3p_estimate(run_ortho3p(d, req.tolerance));
  } else if (req.solver == "persp2f") {
    out.estimate = persp2f_estimate(run_persp2f(d, req));
  } else if (req.solver == "uncal4f") {
    detail::require_regime(d, Regime::perspective_uncalibrated, "uncal4f");
    const Uncal4fRun r = run_uncal4f(d, req);
    out.estimate = uncal4f_estimate(r);
    out.ok = r.solution.report.converged;
    if (!out.ok) out.message = "four-frame solve did not converge: " + r.solution.report.message;
  } else if (req.solver == "curve") {
    out.estimate = curve_estimate(d, req);
  } else {
    fail(ErrorKind::input, "unknown solver '" + req.solver + "'");
  }
  out.estimate["tolerance_profile"] = req.tolerance.name;
  return out;
}

}  // namespace mf
