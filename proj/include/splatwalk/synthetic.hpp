#pragma once

// Procedural scenes for tests and the bundled demo.

#include <splatwalk/gaussian.hpp>

#include <cstdint>
#include <random>
#include <vector>

namespace splatwalk {

/// Axis-aligned lattice of isotropic Gaussians.
inline void add_lattice(std::vector<Gaussian3D>& out, const Vec3& lo, const Vec3& hi, double spacing, const Vec3& color,
                        double opacity = 0.9) {
  const Eigen::Vector3i n = ((hi - lo) / spacing).array().floor().cast<int>() + 1;
  for (int i = 0; i < n.x(); ++i)
    for (int j = 0; j < n.y(); ++j)
      for (int k = 0; k < n.z(); ++k) {
        Gaussian3D g;
        g.center = lo + spacing * Vec3(i, j, k);
        g.scale = Vec3::Constant(0.6 * spacing);
        g.opacity = opacity;
        g.color = color;
        out.push_back(g);
      }
}

/// Floor made of `layers` lattice sheets spaced like the lattice, the top one
/// at z = top.
inline GaussianSet floor_slab(const Vec2& lo, const Vec2& hi, double top, double spacing, int layers,
                              const Vec3& color = Vec3(0.55, 0.5, 0.45)) {
  std::vector<Gaussian3D> out;
  add_lattice(out, Vec3(lo.x(), lo.y(), top - spacing * (layers - 1)), Vec3(hi.x(), hi.y(), top + 1e-9), spacing, color);
  return GaussianSet(std::move(out));
}

/// Hollow box shell (all six faces) sampled on a lattice.
inline void add_box_shell(std::vector<Gaussian3D>& out, const Vec3& lo, const Vec3& hi, double spacing, const Vec3& color) {
  std::vector<Gaussian3D> solid;
  add_lattice(solid, lo, hi, spacing, color);
  const double eps = 0.5 * spacing;
  for (const auto& g : solid) {
    const Vec3& c = g.center;
    const bool face = (c - lo).minCoeff() < eps || (hi - c).minCoeff() < eps;
    if (face) out.push_back(g);
  }
}

struct SyntheticRoomOptions {
  double size = 6.0;         // square room side, meters
  double wall_height = 2.4;
  double spacing = 0.06;
  int floor_layers = 1;
  std::size_t floaters = 400;  // low-opacity clutter that culling removes
  std::uint64_t seed = 7;
};

/// Square room centred on the origin, z up, floor top at z = 0: perimeter
/// walls, a box obstacle, a table and a stool, plus translucent floaters.
inline GaussianSet synthetic_room(const SyntheticRoomOptions& opt = {}) {
  std::vector<Gaussian3D> out;
  const double h = 0.5 * opt.size, s = opt.spacing;
  add_lattice(out, Vec3(-h, -h, -s * (opt.floor_layers - 1)), Vec3(h, h, 1e-9), s, Vec3(0.55, 0.5, 0.45));
  const Vec3 wall(0.8, 0.8, 0.75);
  add_lattice(out, Vec3(-h, -h, s), Vec3(h, -h + 1e-9, opt.wall_height), s, wall);
  add_lattice(out, Vec3(-h, h, s), Vec3(h, h + 1e-9, opt.wall_height), s, wall);
  add_lattice(out, Vec3(-h, -h + s, s), Vec3(-h + 1e-9, h - s, opt.wall_height), s, wall);
  add_lattice(out, Vec3(h, -h + s, s), Vec3(h + 1e-9, h - s, opt.wall_height), s, wall);
  // Box obstacle in the middle of the room.
  add_box_shell(out, Vec3(-0.4, -0.9, s), Vec3(0.4, 0.3, 0.9), s, Vec3(0.2, 0.35, 0.7));
  // Table: top plate and four legs.
  add_lattice(out, Vec3(1.4, 1.2, 0.72), Vec3(2.2, 1.8, 0.72 + 1e-9), s, Vec3(0.5, 0.3, 0.15));
  for (double x : {1.45, 2.15})
    for (double y : {1.25, 1.75}) add_lattice(out, Vec3(x, y, s), Vec3(x + 1e-9, y + 1e-9, 0.66), s, Vec3(0.4, 0.25, 0.1));
  // Stool.
  add_box_shell(out, Vec3(-2.0, 1.3, s), Vec3(-1.6, 1.7, 0.45), s, Vec3(0.7, 0.2, 0.2));
  std::mt19937_64 rng(opt.seed);
  for (std::size_t i = 0; i < opt.floaters; ++i) {
    Gaussian3D g;
    g.center = Vec3(uniform(rng, -h, h), uniform(rng, -h, h), uniform(rng, 0.2, opt.wall_height));
    g.scale = Vec3::Constant(0.05);
    g.opacity = 0.02;
    g.color = Vec3(0.9, 0.9, 0.9);
    out.push_back(g);
  }
  return GaussianSet(std::move(out));
}

}  // namespace splatwalk
