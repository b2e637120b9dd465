#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <random>

namespace splatwalk {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
/// Unit quaternion, (w, x, y, z), right-handed, acting on column vectors.
using Quat = Eigen::Quaterniond;

template <typename T>
using Vec3T = Eigen::Matrix<T, 3, 1>;
template <typename T>
using QuatT = Eigen::Quaternion<T>;

inline constexpr double kPi = 3.14159265358979323846;

/// Rigid motion x -> R x + t with R stored as a quaternion.
template <typename T>
struct RigidTransform {
  QuatT<T> rotation = QuatT<T>(T(1), T(0), T(0), T(0));
  Vec3T<T> translation = Vec3T<T>(T(0), T(0), T(0));

  Vec3T<T> apply(const Vec3T<T>& x) const { return rotation * x + translation; }

  /// (*this) ∘ inner: apply inner first.
  RigidTransform compose(const RigidTransform& inner) const {
    RigidTransform out;
    out.rotation = rotation * inner.rotation;
    out.translation = rotation * inner.translation + translation;
    return out;
  }
};

/// Exponential map from a rotation vector to a unit quaternion. Uses a series
/// near zero so that it stays differentiable for autodiff scalars.
template <typename T>
QuatT<T> quat_exp(const Vec3T<T>& omega) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta2 = omega.squaredNorm();
  T w;
  T k;  // sin(theta/2) / theta
  if (theta2 < T(1e-8)) {
    w = T(1) - theta2 / T(8) + theta2 * theta2 / T(384);
    k = T(0.5) - theta2 / T(48) + theta2 * theta2 / T(3840);
  } else {
    const T theta = sqrt(theta2);
    w = cos(theta / T(2));
    k = sin(theta / T(2)) / theta;
  }
  return QuatT<T>(w, k * omega.x(), k * omega.y(), k * omega.z());
}

inline Quat axis_angle(const Vec3& axis, double angle) {
  return Quat(Eigen::AngleAxisd(angle, axis.normalized()));
}

/// Flip sign so that w >= 0 (canonical hemisphere).
inline Quat canonical_hemisphere(const Quat& q) {
  return q.w() < 0.0 ? Quat(-q.w(), -q.x(), -q.y(), -q.z()) : q;
}

/// Platform-independent uniform double in [0, 1).
inline double unit_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_double(rng);
}

/// Standard normal via Box-Muller, reproducible across standard libraries.
inline double gaussian_sample(std::mt19937_64& rng) {
  double u1 = unit_double(rng);
  while (u1 <= 0.0) u1 = unit_double(rng);
  const double u2 = unit_double(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

inline Quat random_rotation(std::mt19937_64& rng) {
  Eigen::Vector4d v;
  for (int i = 0; i < 4; ++i) v[i] = gaussian_sample(rng);
  v.normalize();
  return Quat(v[0], v[1], v[2], v[3]);
}

inline Vec3 random_unit_vector(std::mt19937_64& rng) {
  Vec3 v(gaussian_sample(rng), gaussian_sample(rng), gaussian_sample(rng));
  return v.normalized();
}

}  // namespace splatwalk
