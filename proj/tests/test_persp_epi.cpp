#include <gtest/gtest.h>

#include <algorithm>

#include "multiframe/persp_epi.hpp"
#include "test_support.hpp"

using namespace mf;

namespace {

MultiframeDataset calibrated_scene(std::uint64_t seed, int n, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  SceneSpec s = random_cloud(n, seed, Point3(0, 0, 5));
  MotionScript m = random_calibrated_script(s, 2, rng, Point3(0, 0, 5));
  for (auto& p : s.points) p.position *= scale;
  for (auto& mo : m.motions) mo.translation *= scale;
  return render(s, m, Regime::perspective_calibrated);
}

std::vector<Correspondence> correspondences(const MultiframeDataset& d) {
  std::vector<Correspondence> out;
  for (const auto& p : d.frames[0].points) out.push_back({p.q, d.frames[1].at(p.label)});
  return out;
}

// Independent construction: cross-product matrix written out entry by entry.
Mat3 truth_essential(const RigidMotion& m) {
  const Point3 t = m.translation;
  Mat3 tx;
  tx(0, 0) = 0;
  tx(0, 1) = -t(2);
  tx(0, 2) = t(1);
  tx(1, 0) = t(2);
  tx(1, 1) = 0;
  tx(1, 2) = -t(0);
  tx(2, 0) = -t(1);
  tx(2, 1) = t(0);
  tx(2, 2) = 0;
  const Mat3 e = tx * m.rotation.matrix();
  return e / e.norm();
}

double up_to_sign(const Mat3& a, const Mat3& b) { return std::min((a - b).norm(), (a + b).norm()); }

double direction_angle(const Point3& a, const Point3& b) {
  return std::atan2(a.normalized().cross(b.normalized()).norm(), a.normalized().dot(b.normalized()));
}

bool has_candidate(const std::vector<MotionCandidate>& cs, const Rotation& r, const Point3& t, double tol = 1e-9) {
  for (const auto& c : cs)
    if (c.rotation.angle_to(r) < tol && (c.translation - t.normalized()).norm() < tol) return true;
  return false;
}

}  // namespace

TEST(PerspEpi, NormalizeAlreadyCenteredIsIdentity) {
  std::vector<Correspondence> pts = {{{0, 0}, {0, 0}}, {{0.3, -0.2}, {0.1, 0.4}}};
  const NormalizedPair n = normalize_distinguished(pts, 0);
  EXPECT_EQ(n.q1.matrix(), Mat3::Identity());
  EXPECT_EQ(n.q2.matrix(), Mat3::Identity());
  EXPECT_NEAR((n.points[1].m1 - pts[1].m1).norm(), 0.0, 1e-15);
}

TEST(PerspEpi, NormalizeCentersAndRestores) {
  const auto d = calibrated_scene(3, 10);
  const auto pts = correspondences(d);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const NormalizedPair n = normalize_distinguished(pts, k);
    EXPECT_EQ(n.points[k].m1, ImagePoint::Zero());
    EXPECT_EQ(n.points[k].m2, ImagePoint::Zero());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == k) continue;
      const Correspondence back = n.restore(n.points[i]);
      EXPECT_LT((back.m1 - pts[i].m1).norm(), 1e-12);
      EXPECT_LT((back.m2 - pts[i].m2).norm(), 1e-12);
    }
    // Ray direction after the turn agrees with the turned original ray.
    const Point3 r = n.q1 * homogeneous(pts[k].m1);
    EXPECT_LT(r.normalized().cross(Point3::UnitZ()).norm(), 1e-12);
  }
  EXPECT_THROW(normalize_distinguished(pts, pts.size()), Error);
}

TEST(PerspEpi, ConstraintVanishesAtTruth) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto d = calibrated_scene(seed, 10);
    const Mat3 e = truth_essential(d.truth->motions[1]);
    for (const auto& c : correspondences(d)) EXPECT_LT(std::abs(elimination_constraint(e, c)), 1e-10);
  }
}

TEST(PerspEpi, ConstraintIsBilinear) {
  EXPECT_EQ(elimination_constraint(Mat3::Zero(), {{0.4, 0.1}, {-0.3, 2.0}}), 0.0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    Mat3 e;
    for (int i = 0; i < 9; ++i) e(i) = g(rng);
    const Correspondence c{{g(rng), g(rng)}, {g(rng), g(rng)}};
    const double k = g(rng);
    const double r = elimination_constraint(e, c);
    EXPECT_NEAR(elimination_constraint(k * e, c), k * r, 1e-12 * (1 + std::abs(k * r)));
    // Direct expansion of the sum over entries.
    double direct = 0;
    const double a[3] = {c.m1.x(), c.m1.y(), 1}, b[3] = {c.m2.x(), c.m2.y(), 1};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) direct += b[i] * e(i, j) * a[j];
    EXPECT_NEAR(r, direct, 1e-12 * (1 + std::abs(direct)));
  }
}

TEST(PerspEpi, NinePointsRecoverTruthComposite) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto d = calibrated_scene(seed, 9);
    const CompositeMatrix c = solve_composite(correspondences(d));
    EXPECT_NEAR(c.e.norm(), 1.0, 1e-14);
    EXPECT_LT(up_to_sign(c.e, truth_essential(d.truth->motions[1])), 1e-8) << "seed " << seed;
    EXPECT_NEAR(c.singular(0), c.singular(1), 1e-8);
    EXPECT_LT(c.singular(2), 1e-8);
  }
}

TEST(PerspEpi, IdenticalPointsAreRankDeficient) {
  const std::vector<Correspondence> pts(12, Correspondence{{0.1, 0.2}, {0.3, -0.1}});
  try {
    solve_composite(pts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::rank_deficient);
  }
}

TEST(PerspEpi, NoisyConstraintResidualsSmall) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto d = add_noise(calibrated_scene(seed, 20), {1e-4, seed});
    const auto pts = correspondences(d);
    const CompositeMatrix c = solve_composite(pts);
    for (const auto& p : pts) EXPECT_LT(std::abs(elimination_constraint(c.e, p)), 1e-3);
  }
}

TEST(PerspEpi, DecomposeContainsTruthAndTwistedPair) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Rotation a = mf::testing::random_rotation(rng);
    const Point3 t = mf::testing::random_unit(rng);
    const Mat3 e = truth_essential({a, t});
    const auto cs = decompose(e);
    ASSERT_EQ(cs.size(), 4u);
    for (const auto& c : cs) {
      EXPECT_NEAR(c.rotation.matrix().determinant(), 1.0, 1e-12);
      EXPECT_LT(up_to_sign(truth_essential({c.rotation, c.translation}), e), 1e-9);
    }
    EXPECT_TRUE(has_candidate(cs, a, t));
    EXPECT_TRUE(has_candidate(cs, a, -t));
    const Rotation twisted = rotation_from_axis_angle(t, kPi) * a;
    EXPECT_TRUE(has_candidate(cs, twisted, t));
    EXPECT_TRUE(has_candidate(cs, twisted, -t));

    const auto neg = decompose(-e);
    for (const auto& c : neg) EXPECT_TRUE(has_candidate(cs, c.rotation, c.translation));
  }
}

TEST(PerspEpi, PureTranslationHasIdentityCandidate) {
  const Point3 t(0.3, -0.2, 0.9);
  const auto cs = decompose(truth_essential({Rotation::identity(), t}));
  EXPECT_TRUE(has_candidate(cs, Rotation::identity(), t) || has_candidate(cs, Rotation::identity(), -t));
}

TEST(PerspEpi, DecomposeRejectsNonEssential) {
  Mat3 e = Mat3::Identity();
  try {
    decompose(e);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::not_essential);
  }
}

TEST(PerspEpi, ChiralitySelectsTruthAndMirrorIsNegative) {
  const auto d = calibrated_scene(7, 10);
  const RigidMotion m = d.truth->motions[1];
  const auto pts = correspondences(d);
  const auto cs = decompose(truth_essential(m));
  ChiralityVote vote;
  const MotionEstimate est = recover_depths(cs, pts, &vote);
  EXPECT_EQ(vote.survivors, 1);
  EXPECT_LT(est.rotation.angle_to(m.rotation), 1e-9);
  EXPECT_LT(direction_angle(est.translation, m.translation), 1e-9);

  const MotionCandidate mirror{est.rotation, -est.translation};
  for (const auto& p : pts) {
    const PointDepth z = point_depth(mirror, p);
    EXPECT_LT(z.z1, 0);
    EXPECT_LT(z.z2, 0);
  }
}

TEST(PerspEpi, PointOnBaselineIsSingular) {
  const Rotation r = rotation_from_axis_angle(Point3(0, 1, 0), 0.2);
  const Point3 t(0.1, 0.05, -0.6);
  const Point3 c2 = -(r.inverse() * t);  // second focal point in frame-1 coordinates
  const Point3 x = 2.0 * c2;              // beyond the second focal point, on the baseline
  const Point3 x2 = r * x + t;
  ASSERT_GT(x.z(), 0);
  ASSERT_GT(x2.z(), 0);
  const Correspondence c{{x.x() / x.z(), x.y() / x.z()}, {x2.x() / x2.z(), x2.y() / x2.z()}};
  EXPECT_TRUE(point_depth({r, t.normalized()}, c).singular);
}

TEST(PerspEpi, DepthsMatchTruthInUnitDistanceGauge) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto d = calibrated_scene(seed, 10);
    const TwoFrameResult r = two_frame_reconstruct(d);
    const RigidMotion m = d.truth->motions[1];
    const double g = 1.0 / d.truth->points[0].position.norm();
    for (std::size_t i = 0; i < d.truth->points.size(); ++i) {
      const Point3 x = d.truth->points[i].position;
      const double z1 = x.z() * g, z2 = apply_motion(m, x).z() * g;
      EXPECT_NEAR(r.motion.z1[i], z1, 1e-6 * z1);
      EXPECT_NEAR(r.motion.z2[i], z2, 1e-6 * z2);
      EXPECT_LT((r.points[i].position - x * g).norm(), 1e-6 * x.norm() * g);
    }
    EXPECT_NEAR(r.motion.baseline, m.translation.norm() * g, 1e-6 * m.translation.norm() * g);
  }
}

TEST(PerspEpi, TwoHundredScenesRecoverMotion) {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto d = calibrated_scene(seed, 10);
    const TwoFrameResult r = two_frame_reconstruct(d);
    const RigidMotion m = d.truth->motions[1];
    EXPECT_LT(r.motion.rotation.angle_to(m.rotation), 1e-6) << "seed " << seed;
    EXPECT_LT(direction_angle(r.motion.translation, m.translation), 1e-6) << "seed " << seed;
    EXPECT_EQ(r.vote.survivors, 1);
    for (std::size_t i = 0; i < r.motion.z1.size(); ++i) {
      EXPECT_GT(r.motion.z1[i], 0);
      EXPECT_GT(r.motion.z2[i], 0);
    }
  }
}

TEST(PerspEpi, EstimateInvariants) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto d = add_noise(calibrated_scene(seed, 12), {seed % 2 ? 0.0 : 1e-5, seed});
    const TwoFrameResult r = two_frame_reconstruct(d);
    const Mat3 a = r.motion.rotation.matrix();
    EXPECT_NEAR(a.determinant(), 1.0, 1e-9);
    EXPECT_LT((a.transpose() * a - Mat3::Identity()).norm(), 1e-9);
    const auto pts = correspondences(d);
    if (seed % 2) {
      for (const auto& p : pts)
        EXPECT_LT(std::abs(elimination_constraint(r.essential, p)),
                  1e-6 * r.essential.norm() * homogeneous(p.m1).norm() * homogeneous(p.m2).norm());
      // Reprojection of the reconstructed points.
      const CameraPose cam = CameraPose::calibrated();
      const RigidMotion rel{r.motion.rotation, r.motion.baseline * r.motion.translation};
      for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_LT((project(r.points[i].position, cam) - pts[i].m1).norm(), 1e-9);
        EXPECT_LT((project(apply_motion(rel, r.points[i].position), cam) - pts[i].m2).norm(), 1e-9);
      }
    }
  }
}

TEST(PerspEpi, ScaleGauge) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const TwoFrameResult a = two_frame_reconstruct(calibrated_scene(seed, 10, 1.0));
    const TwoFrameResult b = two_frame_reconstruct(calibrated_scene(seed, 10, 3.7));
    ASSERT_EQ(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i)
      EXPECT_LT((a.points[i].position - b.points[i].position).norm(), 1e-8);
  }
}

TEST(PerspEpi, IdentityMotionFlagsBaseline) {
  SceneSpec s = random_cloud(10, 4, Point3(0, 0, 5));
  MotionScript m;
  m.motions = {RigidMotion::identity(), RigidMotion::identity()};
  const TwoFrameResult r = two_frame_reconstruct(render(s, m, Regime::perspective_calibrated));
  EXPECT_TRUE(r.motion.baseline_degenerate);
  EXPECT_LT((r.motion.rotation.matrix() - Mat3::Identity()).norm(), 1e-8);
  EXPECT_TRUE(r.points.empty());
}

TEST(PerspEpi, PureRotationFlagsBaseline) {
  SceneSpec s = random_cloud(10, 4, Point3(0, 0, 5));
  MotionScript m;
  const Rotation rot = rotation_from_axis_angle(Point3(1, 2, 2) / 3.0, 0.1);
  m.motions = {RigidMotion::identity(), RigidMotion{rot, Point3::Zero()}};
  const TwoFrameResult r = two_frame_reconstruct(render(s, m, Regime::perspective_calibrated));
  EXPECT_TRUE(r.motion.baseline_degenerate);
  EXPECT_LT(r.motion.rotation.angle_to(rot), 1e-8);
}

TEST(PerspEpi, EightPointsNeedOverride) {
  const auto d = calibrated_scene(9, 8);
  try {
    two_frame_reconstruct(d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::input);
    EXPECT_NE(std::string(e.what()).find("at least 9"), std::string::npos);
  }
  PerspOptions o;
  o.allow_eight = true;
  const TwoFrameResult r = two_frame_reconstruct(d, o);
  EXPECT_LT(r.motion.rotation.angle_to(d.truth->motions[1].rotation), 1e-6);
}

TEST(PerspEpi, DistinguishedChoiceDoesNotChangeMotion) {
  const auto d = calibrated_scene(21, 10);
  const TwoFrameResult a = two_frame_reconstruct(d);
  PerspOptions o;
  o.distinguished = d.labels()[5];
  const TwoFrameResult b = two_frame_reconstruct(d, o);
  EXPECT_LT(a.motion.rotation.angle_to(b.motion.rotation), 1e-9);
  EXPECT_LT(direction_angle(a.motion.translation, b.motion.translation), 1e-9);
  const double ratio = a.points[5].position.norm();
  EXPECT_NEAR(b.points[5].position.norm(), 1.0, 1e-9);
  EXPECT_NEAR(b.points[0].position.norm() * ratio, 1.0, 1e-8);
  o.distinguished = "nope";
  EXPECT_THROW(two_frame_reconstruct(d, o), Error);
}

TEST(PerspEpi, RejectsWrongRegimeAndFrameCount) {
  auto d = calibrated_scene(2, 10);
  d.regime = Regime::orthographic;
  try {
    two_frame_reconstruct(d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::regime_mismatch);
  }
  d.regime = Regime::perspective_calibrated;
  d.frames.pop_back();
  EXPECT_THROW(two_frame_reconstruct(d), Error);
}
