#pragma once

#include <random>

#include "multiframe/geometry.hpp"

namespace mf::testing {

inline Point3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Point3 v;
  do {
    v = Point3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

inline Point3 random_point(std::mt19937_64& rng, double half = 1.0) {
  std::uniform_real_distribution<double> u(-half, half);
  return {u(rng), u(rng), u(rng)};
}

inline Rotation random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> a(0.0, kPi);
  return rotation_from_axis_angle(random_unit(rng), a(rng));
}

/// Unit orthonormal pair (u, v) with u x v = n.
inline std::pair<Point3, Point3> plane_basis(const Point3& n) {
  const Point3 t = std::abs(n.x()) < 0.9 ? Point3::UnitX() : Point3::UnitY();
  const Point3 u = n.cross(t).normalized();
  return {u, n.cross(u)};
}

}  // namespace mf::testing
