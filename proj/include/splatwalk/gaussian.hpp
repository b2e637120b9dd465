#pragma once

#include <splatwalk/error.hpp>
#include <splatwalk/math.hpp>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace splatwalk {

/// One anisotropic 3D Gaussian. All attributes are stored post-activation:
/// scale in meters, opacity in (0,1), color as linear RGB in [0,1].
struct Gaussian3D {
  Vec3 center = Vec3::Zero();
  Vec3 scale = Vec3::Ones();
  Quat rotation = Quat::Identity();
  double opacity = 0.5;
  Vec3 color = Vec3::Constant(0.5);
};

/// Quaternions whose squared norm is already within this of 1 are kept as-is,
/// which makes float round trips through PLY a fixed point.
inline constexpr double kUnitQuatSlack = 4.0 * std::numeric_limits<float>::epsilon();

/// Validates and normalizes. Throws DataError when an invariant cannot hold.
inline Gaussian3D make_gaussian(const Vec3& center, const Vec3& scale, const Quat& rotation, double opacity,
                                const Vec3& color) {
  if (!center.allFinite()) throw DataError("non-finite Gaussian center");
  if (!scale.allFinite() || (scale.array() <= 0.0).any()) throw DataError("Gaussian scale must be positive and finite");
  if (!rotation.coeffs().allFinite()) throw DataError("non-finite Gaussian rotation");
  const double n2 = rotation.squaredNorm();
  if (!(n2 > 0.0)) throw DataError("zero-norm Gaussian rotation");
  if (!std::isfinite(opacity) || opacity <= 0.0 || opacity >= 1.0) throw DataError("Gaussian opacity must lie in (0,1)");
  if (!color.allFinite()) throw DataError("non-finite Gaussian color");
  Gaussian3D g;
  g.center = center;
  g.scale = scale;
  g.rotation = std::abs(n2 - 1.0) <= kUnitQuatSlack ? rotation : rotation.normalized();
  g.opacity = opacity;
  g.color = color.cwiseMax(0.0).cwiseMin(1.0);
  return g;
}

/// R(q) diag(s^2) R(q)^T.
inline Mat3 covariance(const Gaussian3D& g) {
  const Mat3 r = g.rotation.normalized().toRotationMatrix();
  const Mat3 m = r * g.scale.asDiagonal();
  Mat3 cov;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) cov(i, j) = cov(j, i) = m.row(i).dot(m.row(j));
  return cov;
}

/// Immutable, ordered collection of Gaussians (a scene or one body frame).
class GaussianSet {
 public:
  GaussianSet() = default;
  explicit GaussianSet(std::vector<Gaussian3D> gaussians) : gaussians_(std::move(gaussians)) {}

  std::size_t size() const noexcept { return gaussians_.size(); }
  bool empty() const noexcept { return gaussians_.empty(); }
  const Gaussian3D& operator[](std::size_t i) const { return gaussians_[i]; }
  const std::vector<Gaussian3D>& items() const noexcept { return gaussians_; }
  auto begin() const noexcept { return gaussians_.begin(); }
  auto end() const noexcept { return gaussians_.end(); }

  std::vector<Vec3> centers() const {
    std::vector<Vec3> out;
    out.reserve(gaussians_.size());
    for (const auto& g : gaussians_) out.push_back(g.center);
    return out;
  }

  /// Same Gaussians with replaced centers.
  GaussianSet with_centers(const std::vector<Vec3>& centers) const {
    if (centers.size() != gaussians_.size()) throw ArgumentError("center count does not match set size");
    std::vector<Gaussian3D> out = gaussians_;
    for (std::size_t i = 0; i < out.size(); ++i) out[i].center = centers[i];
    return GaussianSet(std::move(out));
  }

  /// Applies x -> R x + t to every center and rotation.
  GaussianSet transformed(const Mat3& rotation, const Vec3& translation = Vec3::Zero()) const {
    const Quat q(rotation);
    std::vector<Gaussian3D> out = gaussians_;
    for (auto& g : out) {
      g.center = rotation * g.center + translation;
      g.rotation = (q * g.rotation).normalized();
    }
    return GaussianSet(std::move(out));
  }

  static GaussianSet concat(const GaussianSet& a, const GaussianSet& b) {
    std::vector<Gaussian3D> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return GaussianSet(std::move(out));
  }

 private:
  std::vector<Gaussian3D> gaussians_;
};

}  // namespace splatwalk
