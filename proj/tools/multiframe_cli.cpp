// multiframe: generate synthetic multiframe datasets, query feasibility,
// run the solvers and score their estimates.
//
// Exit codes: 0 success, 2 usage, 3 generation, 4 solver, 5 evaluation.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "multiframe/dof.hpp"
#include "multiframe/eval.hpp"
#include "multiframe/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 2, kGeneration = 3, kSolver = 4, kEvaluation = 5 };

struct Failure {
  int code;
  std::string message;
};

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") std::cout << text;
  else mf::write_file(path, text);
}

mf::Regime parse_model(const std::string& s) {
  try {
    return mf::regime_from_string(s);
  } catch (const mf::Error& e) {
    throw Failure{kUsage, e.what()};
  }
}

/// "n" or "lo:hi".
mf::CountRange parse_range(const std::string& s, const char* flag) {
  try {
    std::size_t used = 0;
    const auto colon = s.find(':');
    if (colon == std::string::npos) {
      const int v = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return {v, v};
    }
    const int lo = std::stoi(s.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument(s);
    const std::string rest = s.substr(colon + 1);
    const int hi = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(s);
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw Failure{kUsage, std::string(flag) + ": expected N or LO:HI, got '" + s + "'"};
  }
}

mf::MultiframeDataset load_dataset(const std::string& path, int code) {
  try {
    return mf::read_dataset(mf::read_file(path));
  } catch (const mf::Error& e) {
    throw Failure{code, path + ": " + e.what()};
  }
}

// ---------------------------------------------------------------------------

struct GenArgs {
  mf::GenRequest req;
  std::string model = "orthographic";
  std::string out;
};

int cmd_gen(GenArgs& a) {
  a.req.regime = parse_model(a.model);
  mf::MultiframeDataset d;
  try {
    d = mf::generate_dataset(a.req);
  } catch (const mf::Error& e) {
    throw Failure{e.kind() == mf::ErrorKind::input ? kUsage : kGeneration, e.what()};
  }
  emit(a.out, mf::write_dataset(d));
  return kOk;
}

struct DofArgs {
  std::string points = "0", lines = "0", frames = "1";
  std::string model = "orthographic";
};

int cmd_dof(const DofArgs& a) {
  const mf::Regime r = parse_model(a.model);
  std::vector<mf::DofVerdict> rows;
  try {
    rows = mf::verdict_table(r, parse_range(a.points, "--points"), parse_range(a.lines, "--lines"),
                             parse_range(a.frames, "--frames"));
  } catch (const mf::Error& e) {
    throw Failure{kUsage, e.what()};
  }
  if (rows.empty()) throw Failure{kUsage, "no feature counts in the requested ranges"};
  std::printf("%-26s %5s %5s %5s  %s\n", "model", "p", "s", "k", "dof/info verdict");
  for (const auto& v : rows) {
    std::printf("%-26s %5d %5d %5d  %s\n", std::string(mf::to_string(v.regime)).c_str(), v.count.p, v.count.s,
                v.count.k, v.summary().c_str());
    if (v.override_reason) std::printf("%-45s  override: %s\n", "", v.override_reason->c_str());
  }
  return kOk;
}

struct SolveArgs {
  std::string in, out;
  mf::SolveRequest req;
  std::vector<double> angles;
};

int cmd_solve(SolveArgs& a, const mf::ToleranceProfile& tol) {
  a.req.tolerance = tol;
  if (!a.angles.empty()) {
    if (a.angles.size() != 4) throw Failure{kUsage, "--angles needs 4 values"};
    a.req.angles = std::array<double, 4>{a.angles[0], a.angles[1], a.angles[2], a.angles[3]};
  }
  const mf::MultiframeDataset d = load_dataset(a.in, kUsage);
  mf::SolveOutcome o;
  try {
    o = mf::run_solver(d, a.req);
  } catch (const mf::Error& e) {
    throw Failure{kSolver, e.what()};
  }
  emit(a.out, mf::dump_json(o.estimate));
  if (!o.ok) throw Failure{kSolver, o.message};
  return kOk;
}

struct EvalArgs {
  std::string est, truth, out, svg;
};

int cmd_eval(const EvalArgs& a) {
  const mf::MultiframeDataset d = load_dataset(a.truth, kEvaluation);
  try {
    const mf::Json est = mf::parse_json(mf::read_file(a.est));
    const mf::Evaluation ev = mf::evaluate(est, d);
    emit(a.out, mf::eval_csv(ev.report));
    if (!a.svg.empty()) {
      const auto pages = mf::eval_svgs(ev, d);
      for (std::size_t i = 0; i < pages.size(); ++i)
        mf::write_file(a.svg + "_frame" + std::to_string(d.frames[i].id) + ".svg", pages[i]);
    }
  } catch (const mf::Error& e) {
    throw Failure{kEvaluation, e.what()};
  } catch (const mf::Json::exception& e) {
    throw Failure{kEvaluation, std::string("malformed estimate: ") + e.what()};
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure and motion from multiple projections: generation, feasibility, solvers, evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "multiframe 0.1.0");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Write a deterministic synthetic dataset");
  g->add_option("--scene", gen.req.scene, "triangle, cloud or arc")->check(CLI::IsMember({"triangle", "cloud", "arc"}));
  g->add_option("--points", gen.req.points, "Cloud size; extra points beside an arc")->check(CLI::NonNegativeNumber);
  g->add_option("--frames", gen.req.frames, "Frame count")->check(CLI::PositiveNumber);
  g->add_option("--model", gen.model, "orthographic, perspective_calibrated or perspective_uncalibrated");
  g->add_option("--seed", gen.req.seed, "Scene and motion seed");
  g->add_option("--noise", gen.req.noise, "Gaussian image noise sigma")->check(CLI::NonNegativeNumber);
  g->add_option("--samples", gen.req.samples, "Arc samples")->check(CLI::Range(2, 1000000));
  g->add_option("--out", gen.out, "Output path (default stdout)");

  DofArgs dof;
  auto* f = app.add_subcommand("dof", "Degrees of freedom against image information");
  f->add_option("--points", dof.points, "Traced points, N or LO:HI");
  f->add_option("--lines", dof.lines, "Traced straight lines, N or LO:HI");
  f->add_option("--frames", dof.frames, "Frames, N or LO:HI");
  f->add_option("--model", dof.model, "orthographic, perspective_calibrated or perspective_uncalibrated");

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "Run a solver on a dataset");
  s->add_option("--in", solve.in, "Dataset path")->required();
  s->add_option("--solver", solve.req.solver, "auto, ortho3p, persp2f, uncal4f or curve")
      ->check(CLI::IsMember({"auto", "ortho3p", "persp2f", "uncal4f", "curve"}));
  s->add_option("--out", solve.out, "Estimate path (default stdout)");
  s->add_option("--distinguished", solve.req.distinguished, "persp2f: label of the normalizing point");
  s->add_flag("--allow-eight", solve.req.allow_eight, "persp2f: accept exactly 8 points");
  s->add_option("--init-mode", solve.req.init_mode, "uncal4f: truth-perturbed or manual")
      ->check(CLI::IsMember({"truth-perturbed", "manual"}));
  s->add_option("--angles", solve.angles, "uncal4f: 4 initial angles (manual mode)")->expected(4);
  s->add_option("--perturb", solve.req.perturb, "uncal4f: relative perturbation of the true angles");
  s->add_option("--seed", solve.req.seed, "uncal4f: perturbation seed");
  s->add_option("--starts", solve.req.starts, "uncal4f: number of local starts")->check(CLI::PositiveNumber);
  s->add_option("--poses", solve.req.poses, "curve: from-truth or from-solver")
      ->check(CLI::IsMember({"from-truth", "from-solver"}));

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score an estimate against ground truth");
  e->add_option("--est", ev.est, "Estimate path")->required();
  e->add_option("--truth", ev.truth, "Dataset with truth")->required();
  e->add_option("--out", ev.out, "CSV path (default stdout)");
  e->add_option("--svg", ev.svg, "Write <prefix>_frame<N>.svg overlays");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    mf::ToleranceProfile tol;
    try {
      tol = mf::ToleranceProfile::from_env();
    } catch (const mf::Error& err) {
      throw Failure{kUsage, std::string("MULTIFRAME_TOLERANCE: ") + err.what()};
    }
    if (g->parsed()) return cmd_gen(gen);
    if (f->parsed()) return cmd_dof(dof);
    if (s->parsed()) return cmd_solve(solve, tol);
    if (e->parsed()) return cmd_eval(ev);
  } catch (const Failure& fl) {
    std::cerr << "multiframe: " << fl.message << "\n";
    return fl.code;
  } catch (const mf::Error& err) {
    std::cerr << "multiframe: " << err.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
