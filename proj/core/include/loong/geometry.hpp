#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace loong {

inline constexpr double kPi = 3.14159265358979323846;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec3i = Eigen::Vector3i;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Quaternions are stored [w, x, y, z], Hamilton convention, body->world.
namespace quat {

inline Vec4 identity() { return Vec4(1, 0, 0, 0); }

inline Vec4 multiply(const Vec4& a, const Vec4& b) {
  return Vec4(a(0) * b(0) - a(1) * b(1) - a(2) * b(2) - a(3) * b(3),
              a(0) * b(1) + a(1) * b(0) + a(2) * b(3) - a(3) * b(2),
              a(0) * b(2) - a(1) * b(3) + a(2) * b(0) + a(3) * b(1),
              a(0) * b(3) + a(1) * b(2) - a(2) * b(1) + a(3) * b(0));
}

inline Vec4 conjugate(const Vec4& q) { return Vec4(q(0), -q(1), -q(2), -q(3)); }

inline Vec4 normalized(const Vec4& q) { return q / q.norm(); }

// Left multiplication matrix: multiply(q, r) == leftMat(q) * r.
inline Mat4 leftMat(const Vec4& q) {
  Mat4 m;
  m << q(0), -q(1), -q(2), -q(3),
       q(1),  q(0), -q(3),  q(2),
       q(2),  q(3),  q(0), -q(1),
       q(3), -q(2),  q(1),  q(0);
  return m;
}

// Right multiplication matrix: multiply(q, r) == rightMat(r) * q.
inline Mat4 rightMat(const Vec4& r) {
  Mat4 m;
  m << r(0), -r(1), -r(2), -r(3),
       r(1),  r(0),  r(3), -r(2),
       r(2), -r(3),  r(0),  r(1),
       r(3),  r(2), -r(1),  r(0);
  return m;
}

// Homogeneous rotation matrix, degree-2 polynomial in q. Equals the rotation
// matrix when |q| = 1 and scales as |q|^2 otherwise, which keeps it smooth for
// linearization off the unit sphere.
inline Mat3 rotationMatrix(const Vec4& q) {
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  Mat3 r;
  r << w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z;
  return r;
}

inline Vec3 rotate(const Vec4& q, const Vec3& v) { return rotationMatrix(q) * v; }

// Jacobian of rotationMatrix(q) * a with respect to q (3x4).
inline Eigen::Matrix<double, 3, 4> rotateJacobianQ(const Vec4& q, const Vec3& a) {
  const double w = q(0);
  const Vec3 qv(q(1), q(2), q(3));
  Eigen::Matrix<double, 3, 4> jac;
  jac.col(0) = 2.0 * (w * a + qv.cross(a));
  // d/dqv of (w^2 - qv.qv) a + 2 (qv.a) qv + 2 w qv x a
  jac.rightCols<3>() =
      2.0 * (-a * qv.transpose() + qv * a.transpose() + qv.dot(a) * Mat3::Identity() - w * skew(a));
  return jac;
}

// q composed with a small body-frame rotation vector (exact exponential map).
inline Vec4 boxplus(const Vec4& q, const Vec3& dphi) {
  const double angle = dphi.norm();
  Vec4 dq;
  if (angle < 1e-12) {
    dq << 1.0, 0.5 * dphi;
  } else {
    dq << std::cos(0.5 * angle), std::sin(0.5 * angle) / angle * dphi;
  }
  return multiply(q, dq);
}

}  // namespace quat

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p, double margin = 0.0) const {
    return (p.array() >= min.array() - margin).all() && (p.array() <= max.array() + margin).all();
  }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
};

// Closest point on segment [a, b] to p.
inline Vec3 closestPointOnSegment(const Vec3& a, const Vec3& b, const Vec3& p) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 < 1e-18) return a;
  const double t = std::clamp(ab.dot(p - a) / len2, 0.0, 1.0);
  return a + t * ab;
}

}  // namespace loong
