#include <catch_amalgamated.hpp>

#include <splatwalk/nav_plan.hpp>

#include "oracles.hpp"
#include "test_support.hpp"

#include <random>

using namespace splatwalk;
using namespace splatwalk::testing;
using Catch::Approx;

namespace {

WalkMap grid(int rows, int cols, double cell = 1.0) {
  WalkMap m;
  m.rows = rows;
  m.cols = cols;
  m.cell = cell;
  m.cells.assign(static_cast<std::size_t>(rows) * cols, 1);
  return m;
}

WalkMap random_grid(std::mt19937_64& rng, int rows, int cols, double density) {
  WalkMap m = grid(rows, cols);
  for (auto& c : m.cells) c = unit_double(rng) < density ? 0 : 1;
  return m;
}

Cell random_free_cell(std::mt19937_64& rng, const WalkMap& m) {
  for (;;) {
    const Cell c{static_cast<int>(rng() % m.rows), static_cast<int>(rng() % m.cols)};
    if (m.walkable(c)) return c;
  }
}

AlignedScene scene_from(std::vector<Vec3> centers, double floor = 0.0) {
  AlignedScene s;
  s.centers = std::move(centers);
  s.floor_height = floor;
  for (std::size_t i = 0; i < s.centers.size(); ++i) s.source_index.push_back(i);
  s.index = std::make_shared<const PointIndex3>(s.centers);
  return s;
}

void check_path_valid(const WalkMap& m, const Path& p, const Cell& start, const Cell& goal) {
  REQUIRE_FALSE(p.cells.empty());
  REQUIRE(p.cells.front() == start);
  REQUIRE(p.cells.back() == goal);
  for (std::size_t i = 0; i < p.cells.size(); ++i) {
    REQUIRE(m.walkable(p.cells[i]));
    if (i == 0) continue;
    const int dr = p.cells[i].row - p.cells[i - 1].row, dc = p.cells[i].col - p.cells[i - 1].col;
    REQUIRE(std::max(std::abs(dr), std::abs(dc)) == 1);
    if (dr != 0 && dc != 0) {
      REQUIRE(m.walkable({p.cells[i - 1].row + dr, p.cells[i - 1].col}));
      REQUIRE(m.walkable({p.cells[i - 1].row, p.cells[i - 1].col + dc}));
    }
  }
}

}  // namespace

TEST_CASE("cell and world coordinates invert", "[walkmap]") {
  WalkMap m = grid(7, 9, 0.05);
  m.origin = Vec2(-1.3, 2.7);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) REQUIRE(m.world_to_cell(m.cell_to_world({r, c})) == Cell{r, c});
  CHECK(m.world_to_cell(m.origin - Vec2(0.01, 0.0)).col == -1);
  CHECK_FALSE(m.walkable_at(Vec2(100, 100)));
}

TEST_CASE("walkmap around a single obstacle", "[walkmap]") {
  // The out-of-band center fixes the bounding box so (0,0) is a cell center.
  const double cell = 0.25;
  const auto scene = scene_from({Vec3(0, 0, 1.0), Vec3(-0.125, -0.125, 0.0)});
  const auto m = build_walkmap(scene, cell, cell);
  const Cell c = m.world_to_cell(Vec2(0, 0));
  REQUIRE((m.cell_to_world(c) - Vec2(0, 0)).norm() == 0.0);
  CHECK_FALSE(m.walkable(c));
  // The orthogonal ring sits exactly at distance tau, which is not "> tau".
  CHECK_FALSE(m.walkable({c.row + 1, c.col}));
  CHECK_FALSE(m.walkable({c.row - 1, c.col}));
  CHECK_FALSE(m.walkable({c.row, c.col + 1}));
  CHECK_FALSE(m.walkable({c.row, c.col - 1}));
  CHECK(m.walkable({c.row + 1, c.col + 1}));
  CHECK(m.walkable({c.row - 1, c.col - 1}));
  CHECK(m.walkable({c.row + 2, c.col}));
  CHECK_FALSE(m.band_empty);
  // Bounds: bbox [-0.125, 0] padded by 2 tau on each side.
  CHECK(m.origin.isApprox(Vec2(-0.625, -0.625)));
  CHECK(m.cols == 5);
}

TEST_CASE("empty obstacle band gives an all-walkable map", "[walkmap]") {
  const auto scene = scene_from({Vec3(0, 0, 0), Vec3(1, 1, 0.05), Vec3(2, 0, 3.0)});
  const auto m = build_walkmap(scene, 0.1, 0.2);
  CHECK(m.band_empty);
  CHECK(std::all_of(m.cells.begin(), m.cells.end(), [](auto v) { return v == 1; }));
  CHECK_THROWS_AS(build_walkmap(scene, 0.0, 0.2), ArgumentError);
  CHECK_THROWS_AS(build_walkmap(scene, 0.1, -1.0), ArgumentError);
}

TEST_CASE("walkmap equals linear-scan thresholding", "[walkmap][property]") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec3> pts;
    const int n = 1 + static_cast<int>(rng() % 300);
    for (int i = 0; i < n; ++i) pts.emplace_back(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -0.2, 2.2));
    const auto scene = scene_from(pts, uniform(rng, -0.1, 0.1));
    const double cell = uniform(rng, 0.04, 0.2), tau = uniform(rng, 0.0, 0.4);
    const auto m = build_walkmap(scene, cell, tau);
    REQUIRE(m.cells == oracle::walkmap_cells(scene, m));
  }
}

TEST_CASE("walkmap is monotone in clearance", "[walkmap][property]") {
  std::mt19937_64 rng(103);
  std::vector<Vec3> pts;
  for (int i = 0; i < 200; ++i) pts.emplace_back(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, 0.2, 1.5));
  pts.emplace_back(-3, -3, 0);
  pts.emplace_back(3, 3, 0);
  const auto scene = scene_from(pts);
  // Fixed bounds: pad with the largest tau through an explicit out-of-band frame.
  WalkMap prev;
  for (double tau : {0.05, 0.1, 0.2, 0.3}) {
    auto m = build_walkmap(scene, 0.1, tau);
    if (!prev.cells.empty()) {
      for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) {
          const Vec2 w = m.cell_to_world({r, c});
          const Cell pc = prev.world_to_cell(w);
          if (prev.in_bounds(pc) && !prev.walkable(pc)) REQUIRE_FALSE(m.walkable({r, c}));
        }
    }
    prev = m;
  }
}

TEST_CASE("A* closed forms", "[astar]") {
  const WalkMap open = grid(5, 5);
  const auto r = astar(open, {0, 0}, {4, 4});
  REQUIRE(r.path);
  CHECK(r.path->cost == 4 * kSqrt2);
  CHECK(r.path->cost == Approx(5.657).margin(1e-3));
  CHECK(r.path->cells.size() == 5);

  const auto same = astar(open, {2, 2}, {2, 2});
  REQUIRE(same.path);
  CHECK(same.path->cells.size() == 1);
  CHECK(same.path->cost == 0.0);

  WalkMap walled = grid(7, 7);
  for (int r2 = 2; r2 <= 4; ++r2)
    for (int c = 2; c <= 4; ++c)
      if (r2 != 3 || c != 3) walled.cells[walled.linear({r2, c})] = 0;
  CHECK_FALSE(astar(walled, {0, 0}, {3, 3}).path);
  CHECK_THROWS_AS(astar(walled, {2, 2}, {0, 0}), ArgumentError);
  CHECK_THROWS_AS(astar(walled, {0, 0}, {9, 0}), ArgumentError);
}

TEST_CASE("A* does not cut corners", "[astar]") {
  WalkMap m = grid(2, 2);
  m.cells[m.linear({0, 1})] = 0;
  m.cells[m.linear({1, 0})] = 0;
  CHECK_FALSE(astar(m, {0, 0}, {1, 1}).path);
  m.cells[m.linear({0, 1})] = 1;
  const auto r = astar(m, {0, 0}, {1, 1});
  REQUIRE(r.path);
  CHECK(r.path->cost == 2.0);
}

TEST_CASE("A* is optimal against Dijkstra", "[astar][property]") {
  std::mt19937_64 rng(107);
  int reachable = 0, unreachable = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = random_grid(rng, 32, 32, 0.1 + 0.3 * unit_double(rng));
    const Cell s = random_free_cell(rng, m), g = random_free_cell(rng, m);
    const auto a = astar(m, s, g);
    const auto d = oracle::dijkstra(m, s, g);
    REQUIRE(a.path.has_value() == d.reachable);
    if (!d.reachable) {
      ++unreachable;
      continue;
    }
    ++reachable;
    REQUIRE(a.path->cost == d.cost);
    REQUIRE(a.expanded <= d.expanded);
    check_path_valid(m, *a.path, s, g);
  }
  CHECK(reachable > 100);
  CHECK(unreachable > 0);
}

TEST_CASE("A* is deterministic", "[astar]") {
  std::mt19937_64 rng(109);
  const auto m = random_grid(rng, 40, 40, 0.2);
  const Cell s = random_free_cell(rng, m), g = random_free_cell(rng, m);
  const auto a = astar(m, s, g), b = astar(m, s, g);
  REQUIRE(a.path.has_value() == b.path.has_value());
  if (a.path) CHECK(a.path->cells == b.path->cells);
}

TEST_CASE("supercover line touches exactly the closed squares it meets", "[simplify][property]") {
  std::mt19937_64 rng(113);
  for (int trial = 0; trial < 2000; ++trial) {
    const Cell a{static_cast<int>(rng() % 12), static_cast<int>(rng() % 12)};
    const Cell b{static_cast<int>(rng() % 12), static_cast<int>(rng() % 12)};
    auto line = supercover_line(a, b);
    std::vector<std::size_t> got;
    for (const auto& c : line) got.push_back(static_cast<std::size_t>(c.row) * 12 + c.col);
    std::sort(got.begin(), got.end());
    got.erase(std::unique(got.begin(), got.end()), got.end());
    std::vector<std::size_t> expected;
    for (int r = 0; r < 12; ++r)
      for (int c = 0; c < 12; ++c)
        if (oracle::segment_touches_cell(a, b, {r, c})) expected.push_back(static_cast<std::size_t>(r) * 12 + c);
    REQUIRE(got == expected);
  }
}

TEST_CASE("simplify_path closed forms", "[simplify]") {
  const WalkMap m = grid(3, 10);
  const auto r = astar(m, {1, 0}, {1, 9});
  REQUIRE(r.path);
  const auto s = simplify_path(*r.path, m);
  CHECK(s.cells.size() == 2);
  CHECK(s.waypoints.size() == 2);
  CHECK(s.cost == r.path->cost);

  const auto single = astar(m, {1, 1}, {1, 1});
  CHECK(simplify_path(*single.path, m).cells == single.path->cells);
}

TEST_CASE("simplified paths never cross blocked cells", "[simplify][property]") {
  std::mt19937_64 rng(127);
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const auto m = random_grid(rng, 24, 24, 0.25);
    const Cell s = random_free_cell(rng, m), g = random_free_cell(rng, m);
    const auto r = astar(m, s, g);
    if (!r.path) continue;
    ++checked;
    const auto simp = simplify_path(*r.path, m);
    REQUIRE(simp.cells.front() == s);
    REQUIRE(simp.cells.back() == g);
    REQUIRE(simp.cells.size() <= r.path->cells.size());
    for (const auto& c : simp.cells)
      REQUIRE(std::find(r.path->cells.begin(), r.path->cells.end(), c) != r.path->cells.end());
    for (std::size_t i = 1; i < simp.cells.size(); ++i)
      for (int rr = 0; rr < m.rows; ++rr)
        for (int cc = 0; cc < m.cols; ++cc)
          if (oracle::segment_touches_cell(simp.cells[i - 1], simp.cells[i], {rr, cc})) REQUIRE(m.walkable({rr, cc}));
  }
  CHECK(checked > 60);
}

TEST_CASE("egocentric map sampling", "[egocentric]") {
  std::mt19937_64 rng(131);
  WalkMap m = random_grid(rng, 21, 21, 0.3);
  m.cell = 0.1;
  m.origin = Vec2(-1.05, -1.05);
  const Cell center{10, 10};
  m.cells[m.linear(center)] = 1;
  const Vec2 pos = m.cell_to_world(center);

  const auto ego = egocentric_map(m, pos, 0.0, 7);
  CHECK(ego[3 * 7 + 3] == 1);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 7; ++c) REQUIRE(ego[static_cast<std::size_t>(r) * 7 + c] == m.cells[m.linear({7 + r, 7 + c})]);

  const auto outside = egocentric_map(m, Vec2(50, 50), 0.3, 9);
  CHECK(std::all_of(outside.begin(), outside.end(), [](auto v) { return v == 0; }));

  // Off-map samples near the border read as blocked.
  const auto edge = egocentric_map(m, m.cell_to_world({0, 0}), 0.0, 5);
  CHECK(edge[0] == 0);

  CHECK_THROWS_AS(egocentric_map(m, pos, 0.0, 4), ArgumentError);
}

TEST_CASE("egocentric quarter turn is a transpose-flip", "[egocentric][property]") {
  std::mt19937_64 rng(137);
  for (int trial = 0; trial < 20; ++trial) {
    WalkMap m = random_grid(rng, 31, 31, 0.4);
    m.cell = 0.05;
    m.origin = Vec2(uniform(rng, -1, 1), uniform(rng, -1, 1));
    const Vec2 pos = m.cell_to_world({static_cast<int>(rng() % 31), static_cast<int>(rng() % 31)});
    const int n = 11;
    const auto e0 = egocentric_map(m, pos, 0.0, n);
    const auto e90 = egocentric_map(m, pos, kPi / 2, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        REQUIRE(e90[static_cast<std::size_t>(r) * n + c] == e0[static_cast<std::size_t>(c) * n + (n - 1 - r)]);
  }
}

TEST_CASE("walkmap PGM and sidecar round trip", "[walkmap][io]") {
  std::mt19937_64 rng(139);
  WalkMap m = random_grid(rng, 13, 17, 0.3);
  m.cell = 0.05;
  m.origin = Vec2(-0.3, 0.7);
  m.band = {0.1, 1.7};
  TempDir dir("walkmap");
  save_walkmap(m, dir.path / "m.pgm", dir.path / "m.json");
  const auto back = load_walkmap(dir.path / "m.pgm", dir.path / "m.json");
  CHECK(back.cells == m.cells);
  CHECK(back.rows == 13);
  CHECK(back.cols == 17);
  CHECK(back.origin == m.origin);
  CHECK(back.cell == m.cell);
  const auto bytes = read_file_bytes(dir.path / "m.pgm");
  CHECK(bytes.substr(0, 3) == "P5\n");
  write_file_bytes(dir.path / "bad.json", "{\"cell\": 1}");
  CHECK_THROWS_AS(load_walkmap(dir.path / "m.pgm", dir.path / "bad.json"), FormatError);
}

TEST_CASE("nearest walkable cell", "[walkmap]") {
  WalkMap m = grid(5, 5);
  std::fill(m.cells.begin(), m.cells.end(), 0);
  CHECK_FALSE(nearest_walkable(m, {2, 2}, 3));
  m.cells[m.linear({4, 4})] = 1;
  m.cells[m.linear({2, 4})] = 1;
  CHECK(*nearest_walkable(m, {2, 2}, 3) == Cell{2, 4});
}
