#pragma once

#include <splatwalk/error.hpp>
#include <splatwalk/image_io.hpp>
#include <splatwalk/math.hpp>
#include <splatwalk/parallel.hpp>
#include <splatwalk/point_index.hpp>
#include <splatwalk/scene_field.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace splatwalk {

constexpr double kSqrt2 = 1.4142135623730951;

/// Grid coordinate: row follows aligned y, col follows aligned x.
struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct HeightBand {
  double z_min = 0.15;
  double z_max = 1.8;
};

/// Top-down binary walkability grid in the aligned frame.
struct WalkMap {
  int rows = 0;
  int cols = 0;
  Vec2 origin = Vec2::Zero();  // corner of cell (0,0)
  double cell = 0.05;
  double tau = 0.25;
  HeightBand band;
  double floor_height = 0.0;
  /// Set when no center fell inside the obstacle band.
  bool band_empty = false;
  std::vector<std::uint8_t> cells;  // row-major, 1 = walkable

  bool in_bounds(const Cell& c) const { return c.row >= 0 && c.col >= 0 && c.row < rows && c.col < cols; }
  std::size_t linear(const Cell& c) const { return static_cast<std::size_t>(c.row) * cols + c.col; }
  bool walkable(const Cell& c) const { return in_bounds(c) && cells[linear(c)] != 0; }

  Vec2 cell_to_world(const Cell& c) const {
    return Vec2(origin.x() + (c.col + 0.5) * cell, origin.y() + (c.row + 0.5) * cell);
  }
  Cell world_to_cell(const Vec2& p) const {
    const double col = std::floor((p.x() - origin.x()) / cell);
    const double row = std::floor((p.y() - origin.y()) / cell);
    auto clamp_int = [](double v) {
      return static_cast<int>(std::clamp(v, -1.0e9, 1.0e9));
    };
    return {clamp_int(row), clamp_int(col)};
  }
  bool walkable_at(const Vec2& p) const { return walkable(world_to_cell(p)); }
};

/// Marks a cell walkable iff the horizontal distance from its center to the
/// nearest center inside the obstacle band exceeds tau. The grid covers the
/// bounding box of all scene centers padded by 2 tau.
inline WalkMap build_walkmap(const AlignedScene& scene, double cell, double tau, HeightBand band = {}) {
  if (!(cell > 0.0) || !std::isfinite(cell)) throw ArgumentError("walkmap cell size must be positive");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ArgumentError("walkmap clearance must be non-negative");
  if (!(band.z_max >= band.z_min)) throw ArgumentError("walkmap height band is empty");
  if (scene.centers.empty()) throw EmptySceneError("walkmap needs at least one scene center");

  Vec2 lo(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  std::vector<Vec2> obstacles;
  for (const auto& c : scene.centers) {
    lo = lo.cwiseMin(c.head<2>());
    hi = hi.cwiseMax(c.head<2>());
    const double h = c.z() - scene.floor_height;
    if (h >= band.z_min && h <= band.z_max) obstacles.push_back(c.head<2>());
  }
  WalkMap map;
  map.cell = cell;
  map.tau = tau;
  map.band = band;
  map.floor_height = scene.floor_height;
  map.origin = lo - Vec2::Constant(2.0 * tau);
  const Vec2 extent = hi - lo + Vec2::Constant(4.0 * tau);
  const double cols = std::max(1.0, std::ceil(extent.x() / cell));
  const double rows = std::max(1.0, std::ceil(extent.y() / cell));
  if (cols * rows > 1.0e8) throw ArgumentError("walkmap would exceed 1e8 cells; increase the cell size");
  map.cols = static_cast<int>(cols);
  map.rows = static_cast<int>(rows);
  map.cells.assign(static_cast<std::size_t>(map.rows) * map.cols, 1);
  map.band_empty = obstacles.empty();
  if (map.band_empty) return map;

  const PointIndex2 index(std::move(obstacles));
  parallel_for(static_cast<std::size_t>(map.rows), [&](std::size_t r) {
    for (int c = 0; c < map.cols; ++c) {
      const Cell cc{static_cast<int>(r), c};
      if (index.nearest(map.cell_to_world(cc))->distance <= tau) map.cells[map.linear(cc)] = 0;
    }
  });
  return map;
}

struct Path {
  std::vector<Cell> cells;
  std::vector<Vec2> waypoints;
  double cost = 0.0;
};

struct AStarResult {
  std::optional<Path> path;  // empty when the goal is unreachable
  std::size_t expanded = 0;
};

namespace detail {

inline double octile(const Cell& a, const Cell& b) {
  const int dx = std::abs(a.col - b.col), dy = std::abs(a.row - b.row);
  return (std::max(dx, dy) - std::min(dx, dy)) + kSqrt2 * std::min(dx, dy);
}

/// Cost of an 8-connected cell chain as n_orth + n_diag * sqrt(2).
inline double chain_cost(const std::vector<Cell>& cells) {
  std::size_t orth = 0, diag = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const bool d = cells[i].row != cells[i - 1].row && cells[i].col != cells[i - 1].col;
    (d ? diag : orth) += 1;
  }
  return static_cast<double>(orth) + kSqrt2 * static_cast<double>(diag);
}

}  // namespace detail

/// Neighbours reachable in one move: 8-connected, diagonals only when both
/// orthogonal cells they pass are walkable.
template <typename Fn>
void for_each_move(const WalkMap& map, const Cell& c, Fn&& fn) {
  static constexpr int kDr[8] = {-1, 1, 0, 0, -1, -1, 1, 1};
  static constexpr int kDc[8] = {0, 0, -1, 1, -1, 1, -1, 1};
  for (int k = 0; k < 8; ++k) {
    const Cell n{c.row + kDr[k], c.col + kDc[k]};
    if (!map.walkable(n)) continue;
    if (k >= 4 && (!map.walkable({c.row + kDr[k], c.col}) || !map.walkable({c.row, c.col + kDc[k]}))) continue;
    fn(n, k >= 4 ? kSqrt2 : 1.0);
  }
}

/// Optimal 8-connected path; ties in the open list break by (f, h, row-major index).
inline AStarResult astar(const WalkMap& map, const Cell& start, const Cell& goal) {
  if (!map.in_bounds(start) || !map.in_bounds(goal)) throw ArgumentError("A* endpoints must lie inside the map");
  if (!map.walkable(start)) throw ArgumentError("A* start cell is blocked");
  if (!map.walkable(goal)) throw ArgumentError("A* goal cell is blocked");

  const std::size_t n = map.cells.size();
  std::vector<double> g(n, std::numeric_limits<double>::infinity());
  std::vector<std::int64_t> parent(n, -1);
  std::vector<std::uint8_t> closed(n, 0);
  using Entry = std::tuple<double, double, std::size_t>;  // f, h, index
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;
  const std::size_t s = map.linear(start), t = map.linear(goal);
  g[s] = 0.0;
  open.emplace(detail::octile(start, goal), detail::octile(start, goal), s);

  AStarResult result;
  while (!open.empty()) {
    const auto [f, h, idx] = open.top();
    open.pop();
    if (closed[idx]) continue;
    closed[idx] = 1;
    ++result.expanded;
    if (idx == t) break;
    const Cell c{static_cast<int>(idx / map.cols), static_cast<int>(idx % map.cols)};
    for_each_move(map, c, [&](const Cell& nb, double step) {
      const std::size_t j = map.linear(nb);
      if (closed[j]) return;
      const double ng = g[idx] + step;
      if (ng < g[j]) {
        g[j] = ng;
        parent[j] = static_cast<std::int64_t>(idx);
        const double nh = detail::octile(nb, goal);
        open.emplace(ng + nh, nh, j);
      }
    });
  }
  if (!closed[t]) return result;

  Path path;
  for (std::int64_t i = static_cast<std::int64_t>(t); i >= 0; i = parent[static_cast<std::size_t>(i)])
    path.cells.push_back({static_cast<int>(i / map.cols), static_cast<int>(i % map.cols)});
  std::reverse(path.cells.begin(), path.cells.end());
  path.cost = detail::chain_cost(path.cells);
  for (const auto& c : path.cells) path.waypoints.push_back(map.cell_to_world(c));
  result.path = std::move(path);
  return result;
}

/// Cells whose closed squares the segment between the two cell centers touches.
/// A segment through a grid corner touches both cells beside that corner.
inline std::vector<Cell> supercover_line(const Cell& a, const Cell& b) {
  const int dx = b.col - a.col, dy = b.row - a.row;
  const int nx = std::abs(dx), ny = std::abs(dy);
  const int sx = dx > 0 ? 1 : -1, sy = dy > 0 ? 1 : -1;
  std::vector<Cell> out{a};
  Cell p = a;
  for (int ix = 0, iy = 0; ix < nx || iy < ny;) {
    const std::int64_t decision =
        static_cast<std::int64_t>(1 + 2 * ix) * ny - static_cast<std::int64_t>(1 + 2 * iy) * nx;
    if (decision == 0) {
      out.push_back({p.row, p.col + sx});
      out.push_back({p.row + sy, p.col});
      p.col += sx;
      p.row += sy;
      ++ix;
      ++iy;
    } else if (decision < 0) {
      p.col += sx;
      ++ix;
    } else {
      p.row += sy;
      ++iy;
    }
    out.push_back(p);
  }
  return out;
}

inline bool line_of_sight(const WalkMap& map, const Cell& a, const Cell& b) {
  for (const auto& c : supercover_line(a, b))
    if (!map.walkable(c)) return false;
  return true;
}

/// Greedy shortcutting: from each kept cell jump to the furthest later path
/// cell still in line of sight.
inline Path simplify_path(const Path& path, const WalkMap& map) {
  if (path.cells.size() <= 2) {
    Path out = path;
    out.waypoints.clear();
    for (const auto& c : out.cells) out.waypoints.push_back(map.cell_to_world(c));
    return out;
  }
  Path out;
  out.cost = path.cost;
  std::size_t i = 0;
  out.cells.push_back(path.cells.front());
  while (i + 1 < path.cells.size()) {
    std::size_t j = path.cells.size() - 1;
    while (j > i + 1 && !line_of_sight(map, path.cells[i], path.cells[j])) --j;
    out.cells.push_back(path.cells[j]);
    i = j;
  }
  for (const auto& c : out.cells) out.waypoints.push_back(map.cell_to_world(c));
  return out;
}

/// N x N sample of the map on a lattice centered at pos and rotated by
/// heading (radians, counter-clockwise from +x). Entry (r, c) sits at local
/// offset ((c - h), (r - h)) * cell with h = (N-1)/2; off-map samples are 0.
inline std::vector<std::uint8_t> egocentric_map(const WalkMap& map, const Vec2& pos, double heading, int n) {
  if (n <= 0 || n % 2 == 0) throw ArgumentError("egocentric map size must be a positive odd integer");
  const int h = (n - 1) / 2;
  const double cs = std::cos(heading), sn = std::sin(heading);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n) * n, 0);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double lx = (c - h) * map.cell, ly = (r - h) * map.cell;
      const Vec2 p = pos + Vec2(cs * lx - sn * ly, sn * lx + cs * ly);
      out[static_cast<std::size_t>(r) * n + c] = map.walkable_at(p) ? 1 : 0;
    }
  }
  return out;
}

inline nlohmann::json walkmap_sidecar(const WalkMap& map) {
  return {{"origin", {map.origin.x(), map.origin.y()}},
          {"cell", map.cell},
          {"tau", map.tau},
          {"band", {map.band.z_min, map.band.z_max}},
          {"floor_height", map.floor_height},
          {"rows", map.rows},
          {"cols", map.cols},
          {"band_empty", map.band_empty}};
}

/// PGM rows are written top-down in increasing grid row order.
inline void save_walkmap(const WalkMap& map, const std::filesystem::path& pgm, const std::filesystem::path& sidecar) {
  GrayImage img;
  img.width = map.cols;
  img.height = map.rows;
  img.pixels.resize(map.cells.size());
  std::transform(map.cells.begin(), map.cells.end(), img.pixels.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
  write_pgm(img, pgm);
  write_file_bytes(sidecar, walkmap_sidecar(map).dump(2) + "\n");
}

inline WalkMap load_walkmap(const std::filesystem::path& pgm, const std::filesystem::path& sidecar) {
  const GrayImage img = read_pgm(pgm);
  WalkMap map;
  try {
    const auto j = nlohmann::json::parse(read_file_bytes(sidecar));
    map.origin = Vec2(j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>());
    map.cell = j.at("cell").get<double>();
    map.tau = j.at("tau").get<double>();
    map.band = {j.at("band").at(0).get<double>(), j.at("band").at(1).get<double>()};
    map.floor_height = j.at("floor_height").get<double>();
    map.band_empty = j.value("band_empty", false);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed walkmap sidecar: ") + e.what());
  }
  if (!(map.cell > 0.0)) throw FormatError("walkmap sidecar cell size must be positive");
  map.rows = img.height;
  map.cols = img.width;
  map.cells.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    if (img.pixels[i] != 0 && img.pixels[i] != 255) throw FormatError("walkmap PGM must be binary (0 or 255)");
    map.cells[i] = img.pixels[i] ? 1 : 0;
  }
  return map;
}

inline nlohmann::json path_to_json(const Path& path) {
  nlohmann::json wps = nlohmann::json::array();
  for (const auto& w : path.waypoints) wps.push_back({w.x(), w.y()});
  return {{"cost", path.cost}, {"waypoints", wps}};
}

/// Nearest walkable cell to c by grid distance (ties toward row-major order);
/// nullopt when the map has no walkable cell within max_radius cells.
inline std::optional<Cell> nearest_walkable(const WalkMap& map, const Cell& c, int max_radius) {
  std::optional<Cell> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (int r = 0; r <= max_radius; ++r) {
    for (int dr = -r; dr <= r; ++dr) {
      for (int dc = -r; dc <= r; ++dc) {
        if (std::max(std::abs(dr), std::abs(dc)) != r) continue;
        const Cell n{c.row + dr, c.col + dc};
        if (!map.walkable(n)) continue;
        const double d = std::hypot(dr, dc);
        if (d < best_d || (d == best_d && map.linear(n) < map.linear(*best))) {
          best_d = d;
          best = n;
        }
      }
    }
    // Any cell in a later ring is at least r+1 away.
    if (best && best_d <= r + 1) break;
  }
  return best;
}

}  // namespace splatwalk
