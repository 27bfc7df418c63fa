#include <gtest/gtest.h>

#include "multiframe/geometry.hpp"
#include "test_support.hpp"

using namespace mf;
using mf::testing::random_point;
using mf::testing::random_rotation;
using mf::testing::random_unit;

namespace {

// Rodrigues expanded by hand: R = I + sin(a) K + (1 - cos(a)) K^2.
Mat3 rodrigues_oracle(const Point3& k, double a) {
  Mat3 K;
  K << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  return Mat3::Identity() + std::sin(a) * K + (1 - std::cos(a)) * K * K;
}

CameraPose generic_perspective(std::mt19937_64& rng) {
  const Point3 n = random_unit(rng);
  const auto [u, v] = mf::testing::plane_basis(n);
  const Point3 origin = random_point(rng, 2.0);
  std::uniform_real_distribution<double> f(0.5, 2.0);
  return CameraPose::perspective(origin, u, v, origin - f(rng) * n + 0.2 * u - 0.1 * v);
}

}  // namespace

TEST(Rotation, ZeroAngleIsIdentity) {
  const Rotation r = rotation_from_axis_angle(Point3(0, 0.6, 0.8), 0.0);
  EXPECT_TRUE(r.matrix().isApprox(Mat3::Identity(), 1e-15));
}

TEST(Rotation, QuarterTurnAboutZ) {
  const Point3 y = rotation_from_axis_angle(Point3::UnitZ(), kPi / 2) * Point3::UnitX();
  EXPECT_NEAR(y.x(), 0.0, 1e-15);
  EXPECT_NEAR(y.y(), 1.0, 1e-15);
  EXPECT_NEAR(y.z(), 0.0, 1e-15);
}

TEST(Rotation, NonUnitAxisRejected) {
  EXPECT_THROW(rotation_from_axis_angle(Point3(1, 1, 0), 0.3), Error);
  EXPECT_THROW(Rotation::from_matrix(2.0 * Mat3::Identity()), Error);
  Mat3 reflect = Mat3::Identity();
  reflect(2, 2) = -1;
  EXPECT_THROW(Rotation::from_matrix(reflect), Error);
}

TEST(Rotation, RandomComposeWithInverse) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Point3 axis = random_unit(rng);
    const double a = std::uniform_real_distribution<double>(-kPi, kPi)(rng);
    const Rotation r = rotation_from_axis_angle(axis, a);
    EXPECT_LT((r * r.inverse()).matrix().cwiseAbs().maxCoeff() - 1.0, 1e-12);
    EXPECT_LT(((r * r.inverse()).matrix() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((r.matrix() - rodrigues_oracle(axis, a)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((r * axis - axis).norm(), 1e-12);
    EXPECT_LT((r.matrix().transpose() * r.matrix() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(r.matrix().determinant(), 1.0, 1e-9);
  }
}

TEST(Rotation, AngleToMatchesGeneratingAngle) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const double a = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    EXPECT_NEAR(Rotation::identity().angle_to(rotation_from_axis_angle(random_unit(rng), a)), a, 1e-7);
  }
}

TEST(RigidMotion, IdentityLeavesPoints) {
  const Point3 p(0.3, -2.0, 7.0);
  EXPECT_EQ(apply_motion(RigidMotion::identity(), p), p);
}

TEST(RigidMotion, PreservesDistances) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const RigidMotion m{random_rotation(rng), random_point(rng, 5.0)};
    const Point3 p = random_point(rng, 3.0), q = random_point(rng, 3.0);
    EXPECT_NEAR((apply_motion(m, p) - apply_motion(m, q)).norm(), (p - q).norm(), 1e-12);
    EXPECT_LT((apply_motion(m.inverse(), apply_motion(m, p)) - p).norm(), 1e-12);
  }
  const RigidMotion shift{Rotation::identity(), Point3(1, 2, 3)};
  const Point3 a(0, 0, 0), b(1, 1, 1);
  EXPECT_DOUBLE_EQ((apply_motion(shift, a) - apply_motion(shift, b)).norm(), (a - b).norm());
}

TEST(RigidMotion, CompositionOrder) {
  std::mt19937_64 rng(8);
  const RigidMotion a{random_rotation(rng), random_point(rng)};
  const RigidMotion b{random_rotation(rng), random_point(rng)};
  const Point3 p = random_point(rng);
  EXPECT_LT((apply_motion(a * b, p) - apply_motion(a, apply_motion(b, p))).norm(), 1e-14);
}

TEST(Orthographic, PlaneOriginMapsToZero) {
  const CameraPose pose = CameraPose::orthographic(Point3(1, 2, 3), Point3::UnitX(), Point3::UnitZ());
  EXPECT_EQ(project_orthographic(Point3(1, 2, 3), pose), ImagePoint(0, 0));
}

TEST(Orthographic, NormalTranslationHasNoEffect) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    const auto [u, v] = mf::testing::plane_basis(random_unit(rng));
    const CameraPose pose = CameraPose::orthographic(random_point(rng), u, v);
    const Point3 p = random_point(rng, 4.0);
    const double shift = std::uniform_real_distribution<double>(-10, 10)(rng);
    EXPECT_LT((project_orthographic(p, pose) - project_orthographic(p + shift * pose.normal(), pose)).norm(),
              1e-12);
  }
}

TEST(Orthographic, HandExpandedDotProducts) {
  std::mt19937_64 rng(21);
  const auto [u, v] = mf::testing::plane_basis(random_unit(rng));
  const Point3 o = random_point(rng);
  const CameraPose pose = CameraPose::orthographic(o, u, v);
  const Point3 p = random_point(rng, 3.0);
  const double du = (p.x() - o.x()) * u.x() + (p.y() - o.y()) * u.y() + (p.z() - o.z()) * u.z();
  const double dv = (p.x() - o.x()) * v.x() + (p.y() - o.y()) * v.y() + (p.z() - o.z()) * v.z();
  const ImagePoint q = project_orthographic(p, pose);
  EXPECT_NEAR(q.x(), du, 1e-14);
  EXPECT_NEAR(q.y(), dv, 1e-14);
}

TEST(Orthographic, RejectsPerspectivePose) {
  EXPECT_THROW(project_orthographic(Point3::Zero(), CameraPose::calibrated()), Error);
  EXPECT_THROW(project_perspective(Point3(0, 0, 2), CameraPose::orthographic_xy()), Error);
}

TEST(Perspective, AxisPointMapsToCenter) {
  EXPECT_EQ(project_perspective(Point3(0, 0, 5), CameraPose::calibrated()), ImagePoint(0, 0));
}

TEST(Perspective, RatioDefinition) {
  const ImagePoint q = project_perspective(Point3(0.6, -0.4, 2.0), CameraPose::calibrated());
  EXPECT_NEAR(q.x(), 0.3, 1e-15);
  EXPECT_NEAR(q.y(), -0.2, 1e-15);
}

TEST(Perspective, NonPositiveDepthRejected) {
  const CameraPose pose = CameraPose::calibrated();
  try {
    project_perspective(Point3(1, 1, 0), pose);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate);
  }
  EXPECT_THROW(project_perspective(Point3(0, 0, -1), pose), Error);
}

TEST(Perspective, FocalInPlaneRejected) {
  EXPECT_THROW(CameraPose::perspective(Point3::Zero(), Point3::UnitX(), Point3::UnitY(), Point3(1, 1, 0)), Error);
  EXPECT_THROW(CameraPose::orthographic(Point3::Zero(), Point3::UnitX(), Point3(1, 1, 0)), Error);
}

TEST(Perspective, RayMembership) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 1000; ++i) {
    const CameraPose pose = generic_perspective(rng);
    const Point3 p = pose.plane_point(ImagePoint(0.3, -0.2)) + random_point(rng, 0.5) +
                     (pose.origin - *pose.focal).normalized() * 2.0;
    if (perspective_depth(p, pose) <= 0) continue;
    const Ray r = ray_through(project_perspective(p, pose), pose);
    // Distance from p to the ray line.
    const Point3 w = p - r.origin;
    EXPECT_LT((w - w.dot(r.direction) * r.direction).norm(), 1e-10 * std::max(1.0, w.norm()));
  }
}

TEST(Ray, CenterRayThroughPlaneOrigin) {
  const CameraPose pose = CameraPose::calibrated();
  const Ray r = ray_through(ImagePoint(0, 0), pose);
  EXPECT_EQ(r.origin, Point3::Zero());
  EXPECT_LT((r.direction - Point3::UnitZ()).norm(), 1e-15);
}

TEST(Ray, OrthographicDirectionIsNormal) {
  std::mt19937_64 rng(2);
  const auto [u, v] = mf::testing::plane_basis(random_unit(rng));
  const CameraPose pose = CameraPose::orthographic(random_point(rng), u, v);
  for (int i = 0; i < 100; ++i) {
    const Ray r = ray_through(ImagePoint(random_point(rng).head<2>()), pose);
    EXPECT_LT((r.direction - pose.normal()).norm(), 1e-15);
  }
}

TEST(Ray, RoundTripThroughProjection) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 1000; ++i) {
    const CameraPose pose = generic_perspective(rng);
    const ImagePoint q = random_point(rng, 1.5).head<2>();
    const Ray r = ray_through(q, pose);
    EXPECT_NEAR(r.direction.norm(), 1.0, 1e-12);
    const double t = std::uniform_real_distribution<double>(0.1, 20.0)(rng);
    EXPECT_LT((project_perspective(r.at(t), pose) - q).norm(), 1e-10);
  }
}

TEST(Triangulation, CommonPoint) {
  const Point3 x(1, 2, 3);
  const Ray a{Point3::Zero(), x.normalized()};
  const Ray b{Point3(4, 0, 0), (x - Point3(4, 0, 0)).normalized()};
  const Triangulation t = triangulate_midpoint(a, b);
  EXPECT_LT((t.point - x).norm(), 1e-12);
  EXPECT_LT(t.gap, 1e-12);
}

TEST(Triangulation, SkewOffset) {
  // Lines x-axis and a y-parallel line lifted by d along z.
  for (double d : {0.5, 1.0, 3.25}) {
    const Ray a{Point3(0, 0, 0), Point3::UnitX()};
    const Ray b{Point3(2, 0, d), Point3::UnitY()};
    const Triangulation t = triangulate_midpoint(a, b);
    EXPECT_NEAR(t.gap, d, 1e-14);
    EXPECT_LT((t.point - Point3(2, 0, d / 2)).norm(), 1e-14);
  }
}

TEST(Triangulation, PerturbedRays) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 1000; ++i) {
    const Point3 x = random_point(rng, 2.0);
    const Point3 o1 = random_point(rng, 5.0), o2 = random_point(rng, 5.0);
    Ray a{o1, (x - o1).normalized()};
    Ray b{o2 + 1e-8 * random_unit(rng), (x - o2).normalized()};
    if (a.direction.cross(b.direction).norm() < 1e-3) continue;
    EXPECT_LE(triangulate_midpoint(a, b).gap, 1e-7);
  }
}

TEST(Triangulation, ParallelRejected) {
  const Ray a{Point3::Zero(), Point3::UnitX()};
  const Ray b{Point3(0, 1, 0), Point3::UnitX()};
  EXPECT_THROW(triangulate_midpoint(a, b), Error);
}

TEST(Line2, IntersectionAndDistance) {
  const Line2 a = Line2::through(ImagePoint(0, 0), ImagePoint(2, 0));
  const Line2 b = Line2::through(ImagePoint(1, -1), ImagePoint(1, 3));
  EXPECT_LT((intersect(a, b) - ImagePoint(1, 0)).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(a.signed_distance(ImagePoint(5, 2)), 2.0);
  EXPECT_DOUBLE_EQ(a.signed_distance(ImagePoint(5, -2)), -2.0);
  EXPECT_THROW(intersect(a, Line2::through(ImagePoint(0, 1), ImagePoint(1, 1))), Error);
  EXPECT_THROW(Line2::through(ImagePoint(1, 1), ImagePoint(1, 1)), Error);
}
