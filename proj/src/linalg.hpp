#pragma once

#include <Eigen/Dense>

namespace coneflow {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;

/// Minkowski product on R^3_1 with signature (+,+,-); e3 is the future
/// timelike axis.
inline double mink(const Vec3& a, const Vec3& b) {
  return a.x() * b.x() + a.y() * b.y() - a.z() * b.z();
}

inline Vec3 lift(const Vec2& xi, double e3 = 0.0) { return {xi.x(), xi.y(), e3}; }

inline const Vec3 kE3{0.0, 0.0, 1.0};

inline double cross2(const Vec2& a, const Vec2& b) {
  return a.x() * b.y() - a.y() * b.x();
}

}  // namespace coneflow
