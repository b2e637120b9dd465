#include <catch_amalgamated.hpp>

#include <splatwalk/body.hpp>
#include <splatwalk/motion.hpp>

#include "oracles.hpp"
#include "test_support.hpp"

#include <random>

using namespace splatwalk;
using namespace splatwalk::testing;
using Catch::Approx;

namespace {

const SkinnedBody& body() {
  static const SkinnedBody b = make_test_body(1.8);
  return b;
}

Pose random_pose(std::mt19937_64& rng, std::size_t joints, double angle = 0.6) {
  Pose p = Pose::identity(joints);
  p.root_translation = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -0.2, 0.2));
  for (auto& q : p.rotations) q = axis_angle(random_unit_vector(rng), uniform(rng, -angle, angle));
  return p;
}

WalkMap open_map(double size = 10.0, double cell = 0.05) {
  WalkMap m;
  m.cell = cell;
  m.cols = m.rows = static_cast<int>(size / cell);
  m.origin = Vec2(-0.5 * size, -0.5 * size);
  m.cells.assign(static_cast<std::size_t>(m.rows) * m.cols, 1);
  return m;
}

// Direct evaluation of the contact rule on a scalar height signal.
std::vector<bool> reference_flags(const std::vector<double>& z, double tau_v, double tau_a) {
  std::vector<bool> f(z.size());
  for (std::size_t t = 2; t < z.size(); ++t) {
    const double v = z[t] - z[t - 1];
    const double a = v - (z[t - 1] - z[t - 2]);
    f[t] = std::fabs(v) < tau_v && a < tau_a;
  }
  f[0] = f[1] = f[2];
  return f;
}

}  // namespace

TEST_CASE("test body construction contract", "[body]") {
  const auto& b = body();
  CHECK(b.skeleton.size() == 16);
  CHECK(b.canonical.size() == 2000);
  double zmin = 1e9, zmax = -1e9;
  for (const auto& g : b.canonical) {
    zmin = std::min(zmin, g.center.z());
    zmax = std::max(zmax, g.center.z());
  }
  CHECK(zmax - zmin >= 1.75);
  CHECK(zmax - zmin <= 1.85);
  CHECK(zmin == Approx(0.0).margin(1e-9));
  for (Eigen::Index k = 0; k < b.weights.rows(); ++k) {
    REQUIRE(std::abs(b.weights.row(k).sum() - 1.0) <= 1e-6);
    REQUIRE(b.weights.row(k).minCoeff() >= 0.0);
    REQUIRE((b.weights.row(k).array() != 0.0).count() <= 4);
  }
  CHECK(std::abs(b.marker("left_foot").position.z() - zmin) <= 0.02);
  CHECK(std::abs(b.marker("right_foot").position.z() - zmin) <= 0.02);
  CHECK(b.marker("left_hand").position.y() > 0.0);
  CHECK_THROWS_AS(b.marker("tail"), ArgumentError);
  CHECK_THROWS_AS(make_test_body(0.0), ArgumentError);

  const auto small = make_test_body(1.2);
  double smin = 1e9, smax = -1e9;
  for (const auto& g : small.canonical) {
    smin = std::min(smin, g.center.z());
    smax = std::max(smax, g.center.z());
  }
  CHECK(smax - smin == Approx(1.2).epsilon(1e-12));
}

TEST_CASE("test body is deterministic", "[body]") {
  const auto a = make_test_body(1.8), b2 = make_test_body(1.8);
  CHECK(serialize_splat_ply(a.canonical) == serialize_splat_ply(b2.canonical));
  CHECK(a.weights == b2.weights);
}

TEST_CASE("weight lifting follows the nearest template point", "[body][lift]") {
  Eigen::MatrixXd tw(3, 2);
  tw << 1, 0, 0, 1, 0.5, 0.5;
  const std::vector<Vec3> templ = {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 2, 0)};
  std::vector<Gaussian3D> gs(3);
  gs[0].center = Vec3(2, 0, 0);
  gs[1].center = Vec3(1, 0, 0);  // equidistant from 0 and 1
  gs[2].center = Vec3(0.1, 1.9, 0);
  const auto w = lift_weights(GaussianSet(gs), templ, tw);
  CHECK(w.row(0) == tw.row(1));
  CHECK(w.row(1) == tw.row(0));
  CHECK(w.row(2) == tw.row(2));

  std::mt19937_64 rng(201);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec3> pts;
    Eigen::MatrixXd rows(200, 4);
    for (int i = 0; i < 200; ++i) {
      pts.push_back(Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)));
      Eigen::Vector4d r(unit_double(rng), unit_double(rng), unit_double(rng), unit_double(rng));
      rows.row(i) = r.transpose() / r.sum();
    }
    const auto set = random_set(rng, 300, 1.0);
    const auto lifted = lift_weights(set, pts, rows);
    for (std::size_t k = 0; k < set.size(); ++k) {
      const auto ref = oracle::nearest(pts, set[k].center).first;
      REQUIRE(lifted.row(static_cast<Eigen::Index>(k)) == rows.row(static_cast<Eigen::Index>(ref)));
      REQUIRE(std::abs(lifted.row(static_cast<Eigen::Index>(k)).sum() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("identity pose is an exact fixed point", "[lbs]") {
  const auto& b = body();
  const auto posed = pose_body(b, Pose::identity(16));
  for (std::size_t k = 0; k < posed.size(); ++k) {
    REQUIRE(posed[k].center == b.canonical[k].center);
    REQUIRE(posed[k].scale == b.canonical[k].scale);
    REQUIRE(posed[k].opacity == b.canonical[k].opacity);
    REQUIRE(posed[k].color == b.canonical[k].color);
  }
}

TEST_CASE("root translation shifts every center", "[lbs]") {
  const auto& b = body();
  Pose p = Pose::identity(16);
  p.root_translation = Vec3(1, 0, 0);
  const auto posed = pose_body(b, p);
  for (std::size_t k = 0; k < posed.size(); ++k)
    REQUIRE((posed[k].center - (b.canonical[k].center + Vec3(1, 0, 0))).cwiseAbs().maxCoeff() <= 1e-12);

  std::mt19937_64 rng(203);
  for (int trial = 0; trial < 10; ++trial) {
    Pose a = Pose::identity(16), c = Pose::identity(16), ac = Pose::identity(16);
    a.root_translation = Vec3(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3));
    c.root_translation = Vec3(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3));
    ac.root_translation = a.root_translation + c.root_translation;
    // Posing with t then t' on the already-posed set.
    const auto twice = skin_gaussians(pose_body(b, a), b.weights, world_transforms(b.skeleton, c));
    const auto once = pose_body(b, ac);
    for (std::size_t k = 0; k < once.size(); ++k) REQUIRE((twice[k].center - once[k].center).norm() <= 1e-9);
  }
}

TEST_CASE("blended translation lands at the midpoint", "[lbs]") {
  std::vector<Gaussian3D> gs(1);
  gs[0].center = Vec3(0.25, -0.5, 1.0);
  Eigen::MatrixXd w(1, 2);
  w << 0.5, 0.5;
  std::vector<RigidTransform<double>> tf(2);
  tf[1].translation = Vec3(0, 0, 1);
  const auto out = skin_gaussians(GaussianSet(gs), w, tf);
  CHECK(out[0].center == Vec3(0.25, -0.5, 1.5));
  CHECK(out[0].rotation.coeffs() == Quat::Identity().coeffs());
  CHECK_THROWS_AS(pose_body(body(), Pose::identity(3)), ArgumentError);
}

TEST_CASE("LBS matches the weighted sum of joint transforms", "[lbs][property]") {
  const auto& b = body();
  std::mt19937_64 rng(205);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose p = random_pose(rng, 16);
    const auto tf = world_transforms(b.skeleton, p);
    // Independent hierarchy composition with rotation matrices.
    std::vector<Mat3> rot(16);
    std::vector<Vec3> tr(16);
    for (int j = 0; j < 16; ++j) {
      const Mat3 r = p.rotations[j].toRotationMatrix();
      const Vec3 t = b.skeleton.rest[j] - r * b.skeleton.rest[j];
      const int par = b.skeleton.parents[j];
      if (par < 0) {
        rot[j] = r;
        tr[j] = t + p.root_translation;
      } else {
        rot[j] = rot[par] * r;
        tr[j] = rot[par] * t + tr[par];
      }
    }
    const auto posed = pose_body(b, p);
    for (std::size_t k = 0; k < posed.size(); k += 7) {
      Vec3 ref = Vec3::Zero();
      for (int j = 0; j < 16; ++j) ref += b.weights(static_cast<Eigen::Index>(k), j) * (rot[j] * b.canonical[k].center + tr[j]);
      REQUIRE((posed[k].center - ref).norm() < 1e-12);
      REQUIRE(std::abs(posed[k].rotation.norm() - 1.0) < 1e-12);
      REQUIRE(posed[k].scale == b.canonical[k].scale);
    }
    for (int j = 0; j < 16; ++j) REQUIRE((tf[j].apply(Vec3(0.1, 0.2, 0.3)) - (rot[j] * Vec3(0.1, 0.2, 0.3) + tr[j])).norm() < 1e-12);
  }
}

TEST_CASE("contact index lifting", "[contacts]") {
  const auto& b = body();
  const auto idx = lift_contact_indices(b, "left_foot");
  CHECK(idx.size() == 12);
  const auto centers = b.canonical.centers();
  const auto ref = oracle::k_nearest(centers, b.marker("left_foot").position, 12);
  CHECK(idx == ref);
  CHECK(lift_contact_indices(b, "pelvis", 1).front() == oracle::nearest(centers, b.marker("pelvis").position).first);
  CHECK(lift_contact_indices(b, "pelvis", b.canonical.size()).size() == b.canonical.size());
  CHECK_THROWS_AS(lift_contact_indices(b, "nose"), ArgumentError);

  SkinnedBody copy = b;
  copy.markers[0].position = b.canonical[17].center;
  CHECK(lift_contact_indices(copy, copy.markers[0].name).front() == 17);
}

TEST_CASE("contact detection closed forms", "[contacts]") {
  std::vector<Vec3> still(10, Vec3(1, 2, 0.3));
  const auto f = contact_flags(still, 0.01, 0.005);
  CHECK(std::all_of(f.begin(), f.end(), [](bool b) { return b; }));
  std::vector<Vec3> rising;
  for (int t = 0; t < 10; ++t) rising.push_back(Vec3(0, 0, 0.1 * t));
  const auto g = contact_flags(rising, 0.01, 0.005);
  CHECK(std::none_of(g.begin(), g.end(), [](bool b) { return b; }));
  CHECK_THROWS_AS(contact_flags(std::vector<Vec3>(2), 0.01, 0.005), ArgumentError);
}

TEST_CASE("contact detection equals the formula on sine gaits", "[contacts][property]") {
  std::mt19937_64 rng(207);
  for (int trial = 0; trial < 50; ++trial) {
    const double period = uniform(rng, 10, 40), lift = uniform(rng, 0.02, 0.15), phase = uniform(rng, 0, 6.3);
    std::vector<double> z;
    std::vector<Vec3> p;
    for (int t = 0; t < 120; ++t) {
      const double h = lift * std::max(0.0, std::sin(2 * kPi * t / period + phase));
      z.push_back(h);
      p.push_back(Vec3(0.04 * t, 0.0, h));
    }
    REQUIRE(contact_flags(p, 0.01, 0.005) == reference_flags(z, 0.01, 0.005));
  }
}

TEST_CASE("contacts ignore horizontal rigid motion", "[contacts][property]") {
  const auto& b = body();
  const auto map = open_map();
  const auto clip = follow_waypoints(b, {Vec2(-2, -1), Vec2(1, 0.5), Vec2(2, 2)}, map, 30.0);
  const auto base = detect_contacts(b, clip, b.marker_names());
  std::mt19937_64 rng(209);
  for (int trial = 0; trial < 5; ++trial) {
    const double yaw = uniform(rng, -kPi, kPi);
    const Vec3 shift(uniform(rng, -5, 5), uniform(rng, -5, 5), 0.0);
    // Trajectory level.
    for (const auto& name : b.marker_names()) {
      auto tr = track(b, clip, name);
      for (auto& p : tr) p = axis_angle(Vec3::UnitZ(), yaw) * p + shift;
      REQUIRE(contact_flags(tr, 0.01, 0.005) == base.at(name));
    }
    // Clip level: rotate and shift the root.
    MotionClip moved = clip;
    const Quat qz = axis_angle(Vec3::UnitZ(), yaw);
    const Vec3 pivot = b.skeleton.rest[0];
    for (auto& p : moved.poses) {
      p.rotations[0] = qz * p.rotations[0];
      p.root_translation = qz * (p.root_translation + pivot) - pivot + shift;
    }
    REQUIRE(detect_contacts(b, moved, b.marker_names()) == base);
  }
  CHECK_THROWS_AS(detect_contacts(b, clip, {"tail"}), ArgumentError);
}

TEST_CASE("waypoint following closed forms", "[locomotion]") {
  const auto& b = body();
  const auto map = open_map();
  const auto standing = follow_waypoints(b, {Vec2(0.3, 0.2)}, map, 30.0);
  REQUIRE(standing.size() == 1);
  const auto foot = marker_position(b, "left_foot", standing.poses[0]);
  CHECK(std::min(foot.z(), marker_position(b, "right_foot", standing.poses[0]).z()) == Approx(map.floor_height).margin(1e-12));

  const auto walk = follow_waypoints(b, {Vec2(0, 0), Vec2(2.4, 0)}, map, 30.0);
  const double duration = walk.poses.back().time - walk.poses.front().time;
  CHECK(std::abs(duration - 2.0) <= 1.0 / 30.0 + 1e-9);
  const auto pelvis = track(b, walk, "pelvis");
  CHECK((pelvis.back().head<2>() - Vec2(2.4, 0)).norm() < 0.05);
  CHECK((pelvis.back() - pelvis[pelvis.size() - 2]).norm() * 30.0 < 0.05);
  for (std::size_t t = 1; t < pelvis.size(); ++t) CHECK((pelvis[t] - pelvis[t - 1]).head<2>().norm() <= 1.2 / 30.0 + 1e-9);

  WalkMap blocked = map;
  blocked.cells[blocked.linear(blocked.world_to_cell(Vec2(1, 1)))] = 0;
  CHECK_THROWS_AS(follow_waypoints(b, {Vec2(0, 0), Vec2(1, 1)}, blocked, 30.0), ArgumentError);
  CHECK_THROWS_AS(follow_waypoints(b, {}, map, 30.0), ArgumentError);
}

TEST_CASE("turns respect the rate cap", "[locomotion]") {
  const auto& b = body();
  const auto map = open_map();
  const auto clip = follow_waypoints(b, {Vec2(0, 0), Vec2(1, 0), Vec2(0, 0.05)}, map, 30.0);
  for (std::size_t t = 1; t < clip.size(); ++t)
    REQUIRE(std::abs(wrap_angle(pose_heading(clip.poses[t]) - pose_heading(clip.poses[t - 1]))) <= kPi / 30.0 + 1e-9);
}

TEST_CASE("planned walks stay on walkable cells", "[locomotion][property]") {
  const auto& b = body();
  std::mt19937_64 rng(211);
  int walked = 0;
  for (int trial = 0; trial < 12; ++trial) {
    WalkMap m = open_map(6.0, 0.1);
    for (int k = 0; k < 12; ++k) {
      const int r0 = static_cast<int>(rng() % m.rows), c0 = static_cast<int>(rng() % m.cols);
      for (int r = r0; r < std::min(m.rows, r0 + 6); ++r)
        for (int c = c0; c < std::min(m.cols, c0 + 6); ++c) m.cells[m.linear({r, c})] = 0;
    }
    Cell s{static_cast<int>(rng() % m.rows), static_cast<int>(rng() % m.cols)};
    Cell g{static_cast<int>(rng() % m.rows), static_cast<int>(rng() % m.cols)};
    if (!m.walkable(s) || !m.walkable(g)) continue;
    const auto r = astar(m, s, g);
    if (!r.path) continue;
    const auto simp = simplify_path(*r.path, m);
    const auto clip = follow_waypoints(b, simp.waypoints, m, 30.0);
    ++walked;
    const auto pelvis = track(b, clip, "pelvis");
    for (const auto& p : pelvis) REQUIRE(m.walkable_at(p.head<2>()));
    CHECK((pelvis.back().head<2>() - simp.waypoints.back()).norm() < 0.05);
    for (std::size_t t = 1; t < clip.size(); ++t) REQUIRE(clip.poses[t].time > clip.poses[t - 1].time);
  }
  CHECK(walked >= 5);
}

TEST_CASE("seeded walks start exactly at the seed", "[locomotion]") {
  const auto& b = body();
  const auto map = open_map();
  const auto first = follow_waypoints(b, {Vec2(0, 0), Vec2(1, 0)}, map, 30.0);
  LocomotionOptions opt;
  opt.seed = first.poses.back();
  const Vec2 start = first.poses.back().root_translation.head<2>() + b.skeleton.rest[0].head<2>();
  const auto second = follow_waypoints(b, {start, Vec2(1, 1.5)}, map, 30.0, opt);
  CHECK(second.poses[0].root_translation == first.poses.back().root_translation);
  for (std::size_t j = 0; j < 16; ++j) CHECK(second.poses[0].rotations[j].coeffs() == first.poses.back().rotations[j].coeffs());
  const auto joined = concatenate(first, second);
  CHECK(joined.size() == first.size() + second.size());
  for (std::size_t t = 1; t < joined.size(); ++t) CHECK(joined.poses[t].time - joined.poses[t - 1].time == Approx(1.0 / 30.0));
}

TEST_CASE("motion clip JSON round trip", "[clip][io]") {
  const auto& b = body();
  auto clip = follow_waypoints(b, {Vec2(0, 0), Vec2(1, 0.3)}, open_map(), 24.0);
  clip.contacts = detect_contacts(b, clip, {"left_foot", "right_foot"});
  TempDir dir("clip");
  save_clip(clip, dir.path / "c.json");
  const auto back = load_clip(dir.path / "c.json");
  REQUIRE(back.size() == clip.size());
  CHECK(back.fps == 24.0);
  CHECK(back.contacts == clip.contacts);
  for (std::size_t t = 0; t < clip.size(); ++t) {
    REQUIRE(back.poses[t].root_translation == clip.poses[t].root_translation);
    REQUIRE(back.poses[t].time == clip.poses[t].time);
    for (std::size_t j = 0; j < 16; ++j) REQUIRE(back.poses[t].rotations[j].coeffs() == clip.poses[t].rotations[j].coeffs());
  }
  write_file_bytes(dir.path / "bad.json", R"({"fps": 30, "joint_names": ["a"], "frames": [{"time": 0, "root": [0,0], "rotations": []}]})");
  CHECK_THROWS_AS(load_clip(dir.path / "bad.json"), FormatError);
  write_file_bytes(dir.path / "bad2.json", "{not json");
  CHECK_THROWS_AS(load_clip(dir.path / "bad2.json"), FormatError);
}
