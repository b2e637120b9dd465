#pragma once

#include <splatwalk/camera.hpp>
#include <splatwalk/error.hpp>
#include <splatwalk/gaussian.hpp>
#include <splatwalk/parallel.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <tuple>
#include <vector>

namespace splatwalk {

struct RenderOptions {
  double near_plane = 0.01;
  /// Isotropic screen-space dilation added to every projected covariance (px^2).
  double dilation = 0.3;
  /// Contributions whose Gaussian exponent falls below this are dropped.
  double cutoff_exponent = -12.0;
  double max_alpha = 0.999;
  double transmittance_floor = 1e-4;
  bool early_exit = true;
  /// Cull splats whose projected center is further than this outside the image (px).
  /// Negative means half the larger image side.
  double cull_margin = -1.0;
  int tile_size = 16;
  Vec3 background = Vec3::Zero();
};

/// A Gaussian projected to the image plane.
struct Splat2D {
  Vec2 center = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
  Mat2 conic = Mat2::Identity();  // cov^-1
  double depth = 0.0;
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  std::size_t source = 0;
  /// Pixels further than this from center always fall under the cutoff.
  double radius = 0.0;
};

/// Linear RGB image plus accumulated alpha, row-major from the top-left pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;
  std::vector<double> alpha;

  Image() = default;
  Image(int w, int h)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0.0), alpha(static_cast<std::size_t>(w) * h, 0.0) {}

  Vec3 pixel(int x, int y) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    return Vec3(rgb[i], rgb[i + 1], rgb[i + 2]);
  }
  double pixel_alpha(int x, int y) const { return alpha[static_cast<std::size_t>(y) * width + x]; }
};

/// Perspective projection with the affine (Jacobian) covariance approximation.
/// Returns nullopt when the Gaussian is culled.
inline std::optional<Splat2D> project_gaussian(const Gaussian3D& g, const Camera& cam, const RenderOptions& opt = {}) {
  const Vec3 p = cam.to_camera(g.center);
  if (!(p.z() > opt.near_plane)) return std::nullopt;
  const double inv_z = 1.0 / p.z();
  Splat2D s;
  s.center = Vec2(cam.fx * p.x() * inv_z + cam.cx, cam.fy * p.y() * inv_z + cam.cy);
  const double margin = opt.cull_margin >= 0.0 ? opt.cull_margin : 0.5 * std::max(cam.width, cam.height);
  if (s.center.x() < -margin || s.center.x() > cam.width + margin || s.center.y() < -margin ||
      s.center.y() > cam.height + margin)
    return std::nullopt;

  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx * inv_z, 0.0, -cam.fx * p.x() * inv_z * inv_z,  //
      0.0, cam.fy * inv_z, -cam.fy * p.y() * inv_z * inv_z;
  const Mat3 cov_cam = cam.rotation * covariance(g) * cam.rotation.transpose();
  s.cov = jac * cov_cam * jac.transpose();
  s.cov(0, 1) = s.cov(1, 0) = 0.5 * (s.cov(0, 1) + s.cov(1, 0));
  s.cov += opt.dilation * Mat2::Identity();
  const double det = s.cov.determinant();
  if (!(det > 1e-12) || !std::isfinite(det)) return std::nullopt;
  s.conic << s.cov(1, 1) / det, -s.cov(0, 1) / det, -s.cov(1, 0) / det, s.cov(0, 0) / det;

  const double mid = 0.5 * (s.cov(0, 0) + s.cov(1, 1));
  const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
  s.radius = std::sqrt(std::max(0.0, -2.0 * opt.cutoff_exponent) * lambda_max);
  s.depth = p.z();
  s.opacity = g.opacity;
  s.color = g.color;
  return s;
}

/// alpha * exp(-0.5 d^T cov^-1 d), zero beyond the cutoff, clamped below max_alpha.
inline double effective_opacity(const Splat2D& s, const Vec2& u, const RenderOptions& opt = {}) {
  const Vec2 d = u - s.center;
  const double power = -0.5 * d.dot(s.conic * d);
  if (power < opt.cutoff_exponent) return 0.0;
  return std::min(opt.max_alpha, s.opacity * std::exp(power));
}

/// Projects every Gaussian and returns the survivors ordered front to back,
/// ties broken by the index in the input set.
inline std::vector<Splat2D> project_and_sort(const GaussianSet& scene, const Camera& cam, const RenderOptions& opt = {}) {
  std::vector<Splat2D> splats;
  splats.reserve(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (auto s = project_gaussian(scene[i], cam, opt)) {
      s->source = i;
      splats.push_back(*s);
    }
  }
  std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
    return std::tie(a.depth, a.source) < std::tie(b.depth, b.source);
  });
  return splats;
}

/// Front-to-back compositing of one pixel over an ordered splat sequence.
/// Returns (color, accumulated alpha).
template <typename IndexRange, typename Lookup>
std::pair<Vec3, double> composite_pixel(const Vec2& u, const IndexRange& order, Lookup&& splat_at,
                                        const RenderOptions& opt) {
  Vec3 c = Vec3::Zero();
  double transmittance = 1.0;
  for (auto idx : order) {
    const Splat2D& s = splat_at(idx);
    const double a = effective_opacity(s, u, opt);
    if (a <= 0.0) continue;
    c += transmittance * a * s.color;
    transmittance *= 1.0 - a;
    if (opt.early_exit && transmittance < opt.transmittance_floor) break;
  }
  return {c + transmittance * opt.background, 1.0 - transmittance};
}

/// Tile-binned CPU rasterizer; tiles render in parallel.
inline Image render(const GaussianSet& scene, const Camera& cam, const RenderOptions& opt = {}) {
  if (cam.width <= 0 || cam.height <= 0) throw ArgumentError("render needs a positive camera resolution");
  if (opt.tile_size <= 0) throw ArgumentError("tile size must be positive");
  cam.validate();
  const auto splats = project_and_sort(scene, cam, opt);
  const int ts = opt.tile_size;
  const int tiles_x = (cam.width + ts - 1) / ts;
  const int tiles_y = (cam.height + ts - 1) / ts;
  std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (std::size_t k = 0; k < splats.size(); ++k) {
    const auto& s = splats[k];
    // Pixel x is reached iff |x + 0.5 - cx| <= radius.
    const double x0 = std::floor(s.center.x() - s.radius - 0.5), x1 = std::ceil(s.center.x() + s.radius - 0.5);
    const double y0 = std::floor(s.center.y() - s.radius - 0.5), y1 = std::ceil(s.center.y() + s.radius - 0.5);
    if (x1 < 0 || y1 < 0 || x0 > cam.width - 1 || y0 > cam.height - 1) continue;
    const int tx0 = static_cast<int>(std::max(0.0, x0)) / ts;
    const int tx1 = static_cast<int>(std::min(double(cam.width - 1), x1)) / ts;
    const int ty0 = static_cast<int>(std::max(0.0, y0)) / ts;
    const int ty1 = static_cast<int>(std::min(double(cam.height - 1), y1)) / ts;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(k));
  }

  Image img(cam.width, cam.height);
  parallel_for(bins.size(), [&](std::size_t t) {
    const int tx = static_cast<int>(t % tiles_x), ty = static_cast<int>(t / tiles_x);
    const auto& bin = bins[t];
    auto lookup = [&](std::uint32_t k) -> const Splat2D& { return splats[k]; };
    for (int y = ty * ts; y < std::min(cam.height, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(cam.width, (tx + 1) * ts); ++x) {
        const auto [c, a] = composite_pixel(Vec2(x + 0.5, y + 0.5), bin, lookup, opt);
        const std::size_t i = static_cast<std::size_t>(y) * cam.width + x;
        img.rgb[3 * i] = c.x();
        img.rgb[3 * i + 1] = c.y();
        img.rgb[3 * i + 2] = c.z();
        img.alpha[i] = a;
      }
    }
  });
  return img;
}

/// Frame t renders scene ∪ bodies[t] through cams[t].
inline std::vector<Image> render_sequence(const GaussianSet& scene, const std::vector<GaussianSet>& bodies,
                                          const std::vector<Camera>& cams, const RenderOptions& opt = {}) {
  if (bodies.size() != cams.size()) throw ArgumentError("render_sequence needs one camera per body frame");
  std::vector<Image> frames;
  frames.reserve(cams.size());
  for (std::size_t t = 0; t < cams.size(); ++t) frames.push_back(render(GaussianSet::concat(scene, bodies[t]), cams[t], opt));
  return frames;
}

}  // namespace splatwalk
