#pragma once

#include <splatwalk/error.hpp>
#include <splatwalk/gaussian.hpp>
#include <splatwalk/math.hpp>
#include <splatwalk/point_index.hpp>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace splatwalk {

/// Gaussians with opacity >= tau_alpha, in their original order.
inline GaussianSet cull_by_opacity(const GaussianSet& set, double tau_alpha) {
  if (!(tau_alpha >= 0.0 && tau_alpha < 1.0)) throw ArgumentError("opacity threshold must lie in [0,1)");
  std::vector<Gaussian3D> kept;
  for (const auto& g : set)
    if (g.opacity >= tau_alpha) kept.push_back(g);
  if (kept.empty()) throw EmptySceneError("no Gaussians survive opacity culling at threshold " + std::to_string(tau_alpha));
  return GaussianSet(std::move(kept));
}

/// World -> aligned rotation whose third row is the up axis: the direction of
/// least variance of the centers. The sign of up follows the mean camera up
/// when camera_ups is non-empty; otherwise it puts the densest height slab
/// (one tenth of the height range) in the lower half.
inline Mat3 pca_align(std::span<const Vec3> centers, std::span<const Vec3> camera_ups = {}) {
  if (centers.size() < 3) throw DegeneracyError("PCA alignment needs at least three centers");
  Vec3 mean = Vec3::Zero();
  for (const auto& c : centers) mean += c;
  mean /= static_cast<double>(centers.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& c : centers) cov += (c - mean) * (c - mean).transpose();
  cov /= static_cast<double>(centers.size());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  if (eig.info() != Eigen::Success) throw DegeneracyError("eigen-decomposition of center covariance failed");
  const Vec3 ev = eig.eigenvalues();  // ascending
  if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2]) throw DegeneracyError("centers are collinear or coincident");

  Vec3 up = eig.eigenvectors().col(0);
  Vec3 major = eig.eigenvectors().col(2);
  if (!camera_ups.empty()) {
    Vec3 mean_up = Vec3::Zero();
    for (const auto& u : camera_ups) mean_up += u;
    if (mean_up.dot(up) < 0.0) up = -up;
  } else {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& c : centers) {
      lo = std::min(lo, c.dot(up));
      hi = std::max(hi, c.dot(up));
    }
    if (hi > lo) {
      std::array<std::size_t, 10> bins{};
      for (const auto& c : centers) {
        const auto b = static_cast<std::size_t>(std::min(9.0, std::floor(10.0 * (c.dot(up) - lo) / (hi - lo))));
        ++bins[b];
      }
      const auto densest = static_cast<std::size_t>(std::max_element(bins.begin(), bins.end()) - bins.begin());
      if (densest >= 5) up = -up;
    }
  }
  Mat3 r;
  r.row(0) = major.transpose();
  r.row(2) = up.transpose();
  r.row(1) = up.cross(major).transpose();
  return r;
}

/// Nearest-rank percentile (q in [0,1]) of the values.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ArgumentError("percentile of an empty sequence");
  const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(values.size() - 1)));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

/// Opacity-filtered scene centers expressed in the up-aligned frame.
struct AlignedScene {
  Mat3 rotation = Mat3::Identity();  // world -> aligned
  double floor_height = 0.0;
  std::vector<Vec3> centers;            // aligned frame
  std::vector<std::size_t> source_index;  // index into the unfiltered set
  std::shared_ptr<const PointIndex3> index;

  Vec3 to_aligned(const Vec3& world) const { return rotation * world; }
  Vec3 to_world(const Vec3& aligned) const { return rotation.transpose() * aligned; }
};

/// Builds the aligned scene for a known rotation. The floor is the 2nd
/// percentile of aligned heights.
inline AlignedScene make_aligned_scene(const GaussianSet& scene, double tau_alpha, const Mat3& rotation) {
  AlignedScene out;
  out.rotation = rotation;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (scene[i].opacity >= tau_alpha) {
      out.centers.push_back(rotation * scene[i].center);
      out.source_index.push_back(i);
    }
  }
  if (out.centers.empty()) throw EmptySceneError("no Gaussians survive opacity culling at threshold " + std::to_string(tau_alpha));
  std::vector<double> z;
  z.reserve(out.centers.size());
  for (const auto& c : out.centers) z.push_back(c.z());
  out.floor_height = percentile(std::move(z), 0.02);
  out.index = std::make_shared<const PointIndex3>(out.centers);
  return out;
}

/// Cull, align, estimate the floor, and index the remaining centers.
inline AlignedScene analyze_scene(const GaussianSet& scene, double tau_alpha, std::span<const Vec3> camera_ups = {}) {
  const GaussianSet kept = cull_by_opacity(scene, tau_alpha);
  const auto centers = kept.centers();
  return make_aligned_scene(scene, tau_alpha, pca_align(centers, camera_ups));
}

inline nlohmann::json alignment_to_json(const AlignedScene& s) {
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rot.push_back({s.rotation(r, 0), s.rotation(r, 1), s.rotation(r, 2)});
  return {{"rotation", rot}, {"floor_height", s.floor_height}, {"filtered_count", s.centers.size()}};
}

inline Mat3 rotation_from_json(const nlohmann::json& j) {
  Mat3 r;
  try {
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) r(i, k) = j.at("rotation").at(i).at(k).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed alignment sidecar: ") + e.what());
  }
  if (!((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-6))
    throw FormatError("alignment rotation is not orthonormal");
  return r;
}

struct NearestCenter {
  std::size_t index;
  double distance;
};

/// Exact nearest filtered center (aligned frame); ties go to the smaller index.
inline NearestCenter nearest_center(const Vec3& x, const AlignedScene& scene) {
  if (!scene.index || scene.index->empty()) throw EmptySceneError("nearest_center on an empty scene");
  const auto hit = scene.index->nearest(x);
  return {hit->index, hit->distance};
}

/// Soft nearest-neighbour distance field over a fixed center set.
struct DistanceFieldParams {
  double beta = 50.0;
  std::shared_ptr<const PointIndex3> index;
  /// Terms further than nearest + tail/beta are dropped (each is below
  /// exp(-tail) relative to the nearest). tail <= 0 sums every center.
  double tail = 20.0;

  DistanceFieldParams() = default;
  DistanceFieldParams(double beta_, std::shared_ptr<const PointIndex3> index_, double tail_ = 20.0)
      : beta(beta_), index(std::move(index_)), tail(tail_) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ArgumentError("soft-distance beta must be positive");
    if (!index || index->empty()) throw EmptySceneError("distance field needs at least one center");
  }
};

struct SoftDistance {
  double value;
  Vec3 gradient;
};

/// d(x) = -(1/beta) log sum_j exp(-beta |x - mu_j|), evaluated with the
/// nearest distance factored out, and its gradient sum_j w_j (x - mu_j)/|x - mu_j|.
/// Terms with |x - mu_j| < 1e-9 contribute no direction.
inline SoftDistance soft_distance_with_grad(const Vec3& x, const DistanceFieldParams& f) {
  const auto& idx = *f.index;
  const double nearest = idx.nearest(x)->distance;
  double sum = 0.0;
  Vec3 g = Vec3::Zero();
  auto accumulate = [&](std::size_t j, double d2) {
    const double d = std::sqrt(d2);
    const double w = std::exp(-f.beta * (d - nearest));
    sum += w;
    if (d >= 1e-9) g += (w / d) * (x - idx.point(j));
  };
  if (f.tail > 0.0) {
    idx.for_each_within(x, nearest + f.tail / f.beta, accumulate);
  } else {
    for (std::size_t j = 0; j < idx.size(); ++j) accumulate(j, (x - idx.point(j)).squaredNorm());
  }
  return {nearest - std::log(sum) / f.beta, g / sum};
}

inline double soft_distance(const Vec3& x, const DistanceFieldParams& f) { return soft_distance_with_grad(x, f).value; }
inline Vec3 soft_distance_grad(const Vec3& x, const DistanceFieldParams& f) {
  return soft_distance_with_grad(x, f).gradient;
}

}  // namespace splatwalk
