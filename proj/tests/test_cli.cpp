#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "multiframe/eval.hpp"
#include "multiframe/pipeline.hpp"

using namespace mf;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + MULTIFRAME_CLI + " " + args + " 2>/dev/null";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("multiframe_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

std::map<std::string, double> parse_csv(const std::string& text) {
  std::map<std::string, double> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "metric,value,unit,gauge");
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    out[line.substr(0, a)] = std::stod(line.substr(a + 1, b - a - 1));
  }
  return out;
}

}  // namespace

TEST_F(Cli, GenRoundTripsAndReRenders) {
  ASSERT_EQ(run("gen --scene triangle --frames 3 --model orthographic --seed 7 --out " + path("d.json")).code, 0);
  const std::string text = read_file(path("d.json"));
  const MultiframeDataset d = read_dataset(text);
  EXPECT_EQ(write_dataset(d), text);
  ASSERT_TRUE(d.truth);
  const auto poses = frame_poses(d.regime, *d.truth);
  ASSERT_EQ(d.frames.size(), 3u);
  for (std::size_t i = 0; i < d.frames.size(); ++i)
    for (const auto& p : d.truth->points) EXPECT_LT((project(p.position, poses[i]) - d.frames[i].at(p.label)).norm(), 1e-12);
}

TEST_F(Cli, GenIsDeterministic) {
  const std::string flags = "gen --scene arc --frames 2 --model perspective_calibrated --seed 11 --noise 1e-4";
  ASSERT_EQ(run(flags + " --out " + path("a.json")).code, 0);
  ASSERT_EQ(run(flags + " --out " + path("b.json")).code, 0);
  EXPECT_EQ(read_file(path("a.json")), read_file(path("b.json")));
}

TEST_F(Cli, ZeroNoiseEqualsNoNoise) {
  const CliRun a = run("gen --scene cloud --points 9 --frames 2 --model perspective_calibrated --seed 5");
  const CliRun b = run("gen --scene cloud --points 9 --frames 2 --model perspective_calibrated --seed 5 --noise 0");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST_F(Cli, GenBadFlagsAreUsageErrors) {
  EXPECT_EQ(run("gen --scene torus").code, 2);
  EXPECT_EQ(run("gen --model fisheye").code, 2);
  EXPECT_EQ(run("gen --frames 0").code, 2);
  EXPECT_EQ(run("gen --noise -1").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST_F(Cli, DofWorkedCases) {
  const CliRun a = run("dof --points 5 --frames 2 --model perspective_calibrated");
  EXPECT_EQ(a.code, 0);
  EXPECT_NE(a.out.find("20 = 20 feasible"), std::string::npos) << a.out;

  const CliRun b = run("dof --points 4 --frames 99 --model perspective_uncalibrated");
  EXPECT_EQ(b.code, 0);
  EXPECT_NE(b.out.find("infeasible"), std::string::npos) << b.out;
  EXPECT_NE(b.out.find("override:"), std::string::npos) << b.out;

  const CliRun c = run("dof --points 3 --frames 3 --model orthographic");
  EXPECT_EQ(c.code, 0);
  EXPECT_NE(c.out.find("18 = 18 feasible"), std::string::npos) << c.out;
}

TEST_F(Cli, DofRangesAndBadFlags) {
  const CliRun r = run("dof --points 3:5 --frames 2:3 --model orthographic");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1 + 6 + 3);  // header, rows, 2-frame overrides
  EXPECT_EQ(run("dof --points x --model orthographic").code, 2);
  EXPECT_EQ(run("dof --points 3 --lines 1 --model perspective_uncalibrated").code, 2);
  EXPECT_EQ(run("dof --points 3 --model nope").code, 2);
}

TEST_F(Cli, Ortho3pEndToEndContainsTruth) {
  for (int seed : {1, 2, 3}) {
    ASSERT_EQ(run("gen --scene triangle --frames 3 --model orthographic --seed " + std::to_string(seed) + " --out " +
                  path("d.json"))
                  .code,
              0);
    ASSERT_EQ(run("solve --in " + path("d.json") + " --solver ortho3p --out " + path("e.json")).code, 0);
    const Json est = parse_json(read_file(path("e.json")));
    EXPECT_GE(est["candidates"].size(), 1u);
    // independent truth lengths from the generator scene
    const SceneSpec s = random_triangle(static_cast<std::uint64_t>(seed));
    const double truth_a = (s.points[1].position - s.points[0].position).norm();
    bool found = false;
    for (const auto& c : est["candidates"])
      found = found || std::abs(c["lengths"][0].get<double>() - truth_a) < 1e-9 * truth_a;
    EXPECT_TRUE(found) << "seed " << seed;
    const CliRun ev = run("eval --est " + path("e.json") + " --truth " + path("d.json"));
    ASSERT_EQ(ev.code, 0);
    EXPECT_EQ(parse_csv(ev.out).at("truth_in_set"), 1.0);
  }
}

TEST_F(Cli, RegimeMismatchIsSolverError) {
  ASSERT_EQ(run("gen --scene cloud --points 10 --frames 3 --model orthographic --out " + path("d.json")).code, 0);
  EXPECT_EQ(run("solve --in " + path("d.json") + " --solver persp2f").code, 4);
  EXPECT_EQ(run("solve --in " + path("missing.json")).code, 2);
}

TEST_F(Cli, AutoDispatch) {
  struct Case {
    std::string gen, solver;
  };
  const std::vector<Case> cases = {
      {"--scene triangle --frames 3 --model orthographic", "ortho3p"},
      {"--scene cloud --points 10 --frames 2 --model perspective_calibrated", "persp2f"},
      {"--scene cloud --points 7 --frames 4 --model perspective_uncalibrated", "uncal4f"},
      {"--scene arc --points 0 --frames 2 --model orthographic", "curve"},
  };
  for (const auto& c : cases) {
    ASSERT_EQ(run("gen " + c.gen + " --seed 3 --out " + path("d.json")).code, 0) << c.gen;
    const CliRun r = run("solve --in " + path("d.json"));
    ASSERT_EQ(r.code, 0) << c.gen;
    EXPECT_EQ(parse_json(r.out)["solver"], c.solver);
  }
  ASSERT_EQ(run("gen --scene cloud --points 5 --frames 2 --model perspective_calibrated --out " + path("d.json")).code, 0);
  EXPECT_EQ(run("solve --in " + path("d.json")).code, 4);
}

TEST_F(Cli, EvalOfTruthIsZero) {
  for (const std::string gauge : {"none", "similarity"}) {
    ASSERT_EQ(run("gen --scene cloud --points 8 --frames 4 --model perspective_uncalibrated --seed 2 --out " + path("d.json")).code, 0);
    const MultiframeDataset d = read_dataset(read_file(path("d.json")));
    Json est;
    est["solver"] = "truth";
    est["regime"] = "perspective_uncalibrated";
    est["gauge"] = gauge;
    est["points"] = Json::object();
    for (const auto& p : d.truth->points) est["points"][p.label] = io::vec(p.position);
    write_file(path("e.json"), dump_json(est));
    const CliRun r = run("eval --est " + path("e.json") + " --truth " + path("d.json"));
    ASSERT_EQ(r.code, 0);
    for (const auto& [metric, value] : parse_csv(r.out)) {
      if (metric.find("error") != std::string::npos) EXPECT_LT(value, 1e-12) << gauge << " " << metric;
    }
  }
}

TEST_F(Cli, ReflectedOrthographicDepthsAlign) {
  ASSERT_EQ(run("gen --scene triangle --frames 3 --model orthographic --seed 9 --out " + path("d.json")).code, 0);
  ASSERT_EQ(run("solve --in " + path("d.json") + " --out " + path("e.json")).code, 0);
  Json est = parse_json(read_file(path("e.json")));
  for (auto& [label, xyz] : est["points"].items()) xyz[2] = -xyz[2].get<double>() + 3.0;
  write_file(path("r.json"), dump_json(est));
  const auto a = parse_csv(run("eval --est " + path("e.json") + " --truth " + path("d.json")).out);
  const auto b = parse_csv(run("eval --est " + path("r.json") + " --truth " + path("d.json")).out);
  EXPECT_LT(a.at("point_error_max"), 1e-12);
  EXPECT_LT(b.at("point_error_max"), 1e-12);
}

TEST_F(Cli, LabelMismatchIsEvaluationError) {
  ASSERT_EQ(run("gen --scene triangle --frames 3 --model orthographic --out " + path("d.json")).code, 0);
  ASSERT_EQ(run("solve --in " + path("d.json") + " --out " + path("e.json")).code, 0);
  Json est = parse_json(read_file(path("e.json")));
  est["points"]["Z"] = Json::array({0.0, 0.0, 0.0});
  write_file(path("bad.json"), dump_json(est));
  EXPECT_EQ(run("eval --est " + path("bad.json") + " --truth " + path("d.json")).code, 5);
  write_file(path("junk.json"), "{not json");
  EXPECT_EQ(run("eval --est " + path("junk.json") + " --truth " + path("d.json")).code, 5);
}

TEST_F(Cli, SvgOverlayPerFrame) {
  ASSERT_EQ(run("gen --scene arc --points 4 --frames 3 --model orthographic --seed 2 --out " + path("d.json")).code, 0);
  ASSERT_EQ(run("solve --in " + path("d.json") + " --out " + path("e.json")).code, 0);
  ASSERT_EQ(run("eval --est " + path("e.json") + " --truth " + path("d.json") + " --svg " + path("plot")).code, 0);
  for (int f = 1; f <= 3; ++f) {
    const std::string svg = read_file(path("plot_frame" + std::to_string(f) + ".svg"));
    EXPECT_NE(svg.find("version=\"1.1\""), std::string::npos);
    EXPECT_NE(svg.find("<polyline"), std::string::npos);
  }
}

TEST_F(Cli, Uncal4fNonConvergenceExitsWithReport) {
  ASSERT_EQ(run("gen --scene cloud --points 7 --frames 4 --model perspective_uncalibrated --seed 4 --out " + path("d.json")).code, 0);
  const CliRun r = run("solve --in " + path("d.json") + " --init-mode manual --angles 0.1 0.2 0.3 0.4 --starts 1 --out " +
                    path("e.json"));
  const Json est = parse_json(read_file(path("e.json")));
  EXPECT_EQ(r.code, est["converged"].get<bool>() ? 0 : 4);
  EXPECT_TRUE(est["report"].contains("history"));
}

TEST_F(Cli, ToleranceProfileFromEnvironment) {
  ASSERT_EQ(run("gen --scene triangle --frames 3 --out " + path("d.json")).code, 0);
  EXPECT_EQ(run("solve --in " + path("d.json"), "MULTIFRAME_TOLERANCE=nonsense").code, 2);
  const CliRun r = run("solve --in " + path("d.json"), "MULTIFRAME_TOLERANCE=strict");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(parse_json(r.out)["tolerance_profile"], "strict");
}

// Library-level dispatch and alignment checks.

TEST(Eval, ScaleGaugeRecoversUniformScale) {
  const MultiframeDataset d = generate_dataset({"cloud", 10, 2, Regime::perspective_calibrated, 3, 0, 100});
  Json est;
  est["solver"] = "scaled";
  est["gauge"] = "scale";
  est["points"] = Json::object();
  for (const auto& p : d.truth->points) est["points"][p.label] = io::vec(0.37 * p.position);  // frame-1 camera = scene
  const Evaluation ev = evaluate(est, d);
  EXPECT_LT(ev.report.value("point_error_max"), 1e-12);
}

TEST(Eval, SimilarityGaugeAcceptsMirror) {
  const MultiframeDataset d = generate_dataset({"cloud", 8, 4, Regime::perspective_uncalibrated, 6, 0, 100});
  const Rotation r = rotation_from_axis_angle(Point3(1, 2, 3).normalized(), 0.7);
  Json est;
  est["solver"] = "moved";
  est["gauge"] = "similarity";
  est["points"] = Json::object();
  for (const auto& p : d.truth->points) {
    Point3 x = 2.5 * (r * p.position) + Point3(1, -2, 0.5);
    x.x() = -x.x();
    est["points"][p.label] = io::vec(x);
  }
  EXPECT_LT(evaluate(est, d).report.value("point_error_max"), 1e-12);
}

TEST(Eval, NoiseSweepRotationErrorGrows) {
  const std::vector<double> sigmas = {0, 1e-5, 1e-4, 1e-3};
  std::vector<double> medians;
  for (double sigma : sigmas) {
    std::vector<double> errs;
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
      const MultiframeDataset d = generate_dataset({"cloud", 10, 2, Regime::perspective_calibrated, seed, sigma, 100});
      try {
        errs.push_back(evaluate(run_solver(d, {}).estimate, d).report.value("rotation_error"));
      } catch (const Error&) {
        errs.push_back(kPi);
      }
    }
    std::nth_element(errs.begin(), errs.begin() + errs.size() / 2, errs.end());
    medians.push_back(errs[errs.size() / 2]);
  }
  for (std::size_t i = 1; i < medians.size(); ++i) EXPECT_GE(medians[i], medians[i - 1]);
}
