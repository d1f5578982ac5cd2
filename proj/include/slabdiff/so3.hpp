#pragma once

#include "slabdiff/common.hpp"

#include <cmath>

namespace slabdiff {

// Axis-angle (Euler vector) math. Euler vectors are the external rotation
// parameterization everywhere in the library; rotation matrices are used
// internally for application and composition.

inline Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

/// Rodrigues formula: exp of an Euler vector.
inline Mat3 rotation_from_euler(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 k = skew(w);
  if (theta < 1e-8) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  return Mat3::Identity() + k * (std::sin(theta) / theta) +
         k * k * ((1.0 - std::cos(theta)) / theta2);
}

/// Log map, angle in [0, pi].
inline Vec3 euler_from_rotation(const Mat3& r) {
  double cos_theta = 0.5 * (r.trace() - 1.0);
  cos_theta = std::clamp(cos_theta, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  const Vec3 v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < 1e-8) return 0.5 * v;
  if (theta > kPi - 1e-6) {
    // Near pi the antisymmetric part degenerates; recover the axis from the
    // symmetric part R + I = 2 axis axis^T + (cos term).
    Mat3 s = 0.5 * (r + Mat3::Identity());
    int k = 0;
    s.diagonal().maxCoeff(&k);
    Vec3 axis = s.col(k);
    axis /= std::sqrt(std::max(s(k, k), 1e-300));
    axis.normalize();
    // Fix the sign with the antisymmetric part when it is not exactly zero.
    if (axis.dot(v) < 0.0) axis = -axis;
    return theta * axis;
  }
  return (0.5 * theta / std::sin(theta)) * v;
}

/// Wrap an Euler vector into canonical form: magnitude in [0, pi], with
/// (2pi - w, -axis) identified with (w, axis).
inline Vec3 canonicalize_euler(const Vec3& w) {
  double theta = w.norm();
  if (theta < 1e-300) return Vec3::Zero();
  const Vec3 axis = w / theta;
  theta = std::fmod(theta, 2.0 * kPi);
  if (theta < 0.0) theta += 2.0 * kPi;
  if (theta > kPi) return (theta - 2.0 * kPi) * axis;  // |.| = 2pi - theta, axis flipped
  return theta * axis;
}

/// Euler vector of "apply `first`, then `second`" (matrix product
/// R(second) * R(first)), canonicalized.
inline Vec3 compose_euler(const Vec3& second, const Vec3& first) {
  return euler_from_rotation(rotation_from_euler(second) * rotation_from_euler(first));
}

}  // namespace slabdiff
