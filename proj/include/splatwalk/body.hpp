#pragma once

#include <splatwalk/error.hpp>
#include <splatwalk/gaussian.hpp>
#include <splatwalk/math.hpp>
#include <splatwalk/parallel.hpp>
#include <splatwalk/point_index.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace splatwalk {

/// Joint hierarchy with rest positions. Rest frames are world aligned, so a
/// joint's rest transform is a pure translation to its rest position.
struct Skeleton {
  std::vector<std::string> names;
  std::vector<int> parents;  // -1 for the root; parents precede children
  std::vector<Vec3> rest;

  std::size_t size() const { return names.size(); }

  int index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ArgumentError("unknown joint '" + name + "'");
    return static_cast<int>(it - names.begin());
  }

  void validate() const {
    if (names.empty() || parents.size() != names.size() || rest.size() != names.size())
      throw ArgumentError("skeleton arrays disagree in length");
    int roots = 0;
    for (std::size_t b = 0; b < parents.size(); ++b) {
      if (parents[b] < 0) ++roots;
      else if (parents[b] >= static_cast<int>(b)) throw ArgumentError("skeleton parents must precede children");
    }
    if (roots != 1 || parents[0] != -1) throw ArgumentError("skeleton needs exactly one root at index 0");
  }
};

/// Local joint rotations relative to rest plus a root translation.
struct Pose {
  Vec3 root_translation = Vec3::Zero();
  std::vector<Quat> rotations;
  double time = 0.0;

  static Pose identity(std::size_t joints) {
    Pose p;
    p.rotations.assign(joints, Quat::Identity());
    return p;
  }
};

struct Marker {
  std::string name;
  Vec3 position = Vec3::Zero();    // canonical
  Eigen::VectorXd weights;         // one entry per joint
};

/// Canonical Gaussians skinned to a skeleton.
struct SkinnedBody {
  Skeleton skeleton;
  GaussianSet canonical;
  Eigen::MatrixXd weights;  // gaussians x joints, rows sum to 1
  std::vector<Marker> markers;

  const Marker& marker(const std::string& name) const {
    for (const auto& m : markers)
      if (m.name == name) return m;
    throw ArgumentError("unknown contact marker '" + name + "'");
  }
  std::vector<std::string> marker_names() const {
    std::vector<std::string> out;
    for (const auto& m : markers) out.push_back(m.name);
    return out;
  }
};

/// World transform of every joint: T_b = T_parent(b) ∘ L_b with
/// L_b(x) = q_b (x - rest_b) + rest_b, and the root pre-translated.
template <typename T>
std::vector<RigidTransform<T>> world_transforms(const Skeleton& sk, const Vec3T<T>& root_translation,
                                                const std::vector<QuatT<T>>& local) {
  if (local.size() != sk.size()) throw ArgumentError("pose joint count does not match the skeleton");
  std::vector<RigidTransform<T>> out(sk.size());
  for (std::size_t b = 0; b < sk.size(); ++b) {
    RigidTransform<T> l;
    l.rotation = local[b];
    const Vec3T<T> rest = sk.rest[b].template cast<T>();
    l.translation = rest - local[b] * rest;
    if (sk.parents[b] < 0) {
      RigidTransform<T> root;
      root.translation = root_translation;
      out[b] = root.compose(l);
    } else {
      out[b] = out[static_cast<std::size_t>(sk.parents[b])].compose(l);
    }
  }
  return out;
}

inline std::vector<RigidTransform<double>> world_transforms(const Skeleton& sk, const Pose& pose) {
  return world_transforms<double>(sk, pose.root_translation, pose.rotations);
}

/// x + sum_b w_b (T_b(x) - x); equal to sum_b w_b T_b(x) for stochastic rows
/// and exact at the identity pose.
template <typename T, typename Weights>
Vec3T<T> skin_point(const Vec3& x, const Weights& w, const std::vector<RigidTransform<T>>& tf) {
  const Vec3T<T> xc = x.template cast<T>();
  Vec3T<T> disp(T(0), T(0), T(0));
  for (Eigen::Index b = 0; b < w.size(); ++b) {
    if (w[b] == 0.0) continue;
    disp += T(w[b]) * (tf[static_cast<std::size_t>(b)].apply(xc) - xc);
  }
  return xc + disp;
}

/// Normalized weighted quaternion sum, each bone flipped into the hemisphere
/// of the largest-weight bone.
template <typename Weights>
Quat blend_rotation(const Weights& w, const std::vector<RigidTransform<double>>& tf) {
  Eigen::Index top = 0;
  for (Eigen::Index b = 1; b < w.size(); ++b)
    if (w[b] > w[top]) top = b;
  const Quat& ref = tf[static_cast<std::size_t>(top)].rotation;
  Eigen::Vector4d acc = Eigen::Vector4d::Zero();
  for (Eigen::Index b = 0; b < w.size(); ++b) {
    if (w[b] == 0.0) continue;
    const Quat& q = tf[static_cast<std::size_t>(b)].rotation;
    const double s = q.coeffs().dot(ref.coeffs()) < 0.0 ? -1.0 : 1.0;
    acc += s * w[b] * q.coeffs();
  }
  Quat out;
  out.coeffs() = acc / acc.norm();
  return out;
}

/// LBS with explicit joint transforms.
inline GaussianSet skin_gaussians(const GaussianSet& canonical, const Eigen::MatrixXd& weights,
                                  const std::vector<RigidTransform<double>>& tf) {
  if (weights.rows() != static_cast<Eigen::Index>(canonical.size()) ||
      weights.cols() != static_cast<Eigen::Index>(tf.size()))
    throw ArgumentError("weight matrix shape does not match Gaussians x joints");
  std::vector<Gaussian3D> out(canonical.items());
  parallel_for(out.size(), [&](std::size_t k) {
    const auto row = weights.row(static_cast<Eigen::Index>(k));
    out[k].center = skin_point<double>(canonical[k].center, row, tf);
    Quat q = blend_rotation(row, tf) * canonical[k].rotation;
    if (std::abs(q.squaredNorm() - 1.0) > kUnitQuatSlack) q.normalize();
    out[k].rotation = q;
  });
  return GaussianSet(std::move(out));
}

inline GaussianSet pose_body(const SkinnedBody& body, const Pose& pose) {
  if (pose.rotations.size() != body.skeleton.size()) throw ArgumentError("pose joint count does not match the body");
  return skin_gaussians(body.canonical, body.weights, world_transforms(body.skeleton, pose));
}

inline std::vector<Vec3> joint_positions(const Skeleton& sk, const Pose& pose) {
  const auto tf = world_transforms(sk, pose);
  std::vector<Vec3> out;
  for (std::size_t b = 0; b < sk.size(); ++b) out.push_back(tf[b].apply(sk.rest[b]));
  return out;
}

inline Vec3 marker_position(const SkinnedBody& body, const std::string& name, const Pose& pose) {
  const auto& m = body.marker(name);
  return skin_point<double>(m.position, m.weights, world_transforms(body.skeleton, pose));
}

/// Each Gaussian takes the weight row of its nearest template point
/// (ties to the smaller template index).
inline Eigen::MatrixXd lift_weights(const GaussianSet& canonical, const std::vector<Vec3>& template_points,
                                    const Eigen::MatrixXd& template_weights) {
  if (template_points.empty()) throw ArgumentError("weight lifting needs template points");
  if (template_weights.rows() != static_cast<Eigen::Index>(template_points.size()))
    throw ArgumentError("template weights must have one row per template point");
  const PointIndex3 index(template_points);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(canonical.size()), template_weights.cols());
  for (std::size_t k = 0; k < canonical.size(); ++k)
    out.row(static_cast<Eigen::Index>(k)) =
        template_weights.row(static_cast<Eigen::Index>(index.nearest(canonical[k].center)->index));
  return out;
}

/// The K canonical Gaussians nearest the marker, ordered by (distance, index).
inline std::vector<std::size_t> lift_contact_indices(const SkinnedBody& body, const std::string& marker,
                                                     std::size_t k = 12) {
  const auto& m = body.marker(marker);
  const PointIndex3 index(body.canonical.centers());
  std::vector<std::size_t> out;
  for (const auto& hit : index.k_nearest(m.position, k)) out.push_back(hit.index);
  return out;
}

namespace detail {

struct Capsule {
  Vec3 a, b;
  double radius;
  Vec3 color;
};

struct BoneSegment {
  Vec3 a, b;
  int blend_child;  // joint whose rest position is b, or -1
};

inline double segment_param(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double l2 = ab.squaredNorm();
  return l2 > 0.0 ? std::clamp((p - a).dot(ab) / l2, 0.0, 1.0) : 0.0;
}

/// Nearest bone segment with linear blending into the parent near the
/// segment start and into the continuing child near its end.
inline Eigen::VectorXd segment_weights(const Vec3& p, const Skeleton& sk, const std::vector<BoneSegment>& segs) {
  constexpr double kBlend = 0.15;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < segs.size(); ++b) {
    const double s = segment_param(p, segs[b].a, segs[b].b);
    const double d = (p - (segs[b].a + s * (segs[b].b - segs[b].a))).norm();
    if (d < best_d) {
      best_d = d;
      best = b;
    }
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sk.size()));
  const double s = segment_param(p, segs[best].a, segs[best].b);
  const auto b = static_cast<Eigen::Index>(best);
  w[b] = 1.0;
  if (s < kBlend && sk.parents[best] >= 0) {
    const double wp = 0.5 * (1.0 - s / kBlend);
    w[sk.parents[best]] = wp;
    w[b] = 1.0 - wp;
  } else if (s > 1.0 - kBlend && segs[best].blend_child >= 0) {
    const double wc = 0.5 * (s - (1.0 - kBlend)) / kBlend;
    w[segs[best].blend_child] = wc;
    w[b] = 1.0 - wc;
  }
  return w;
}

/// Uniform point on the capsule surface and its outward normal.
inline std::pair<Vec3, Vec3> sample_capsule(const Capsule& c, std::mt19937_64& rng) {
  const Vec3 axis = c.b - c.a;
  const double len = axis.norm();
  const Vec3 dir = len > 0.0 ? Vec3(axis / len) : Vec3::UnitZ();
  const Vec3 u = (std::abs(dir.z()) < 0.9 ? dir.cross(Vec3::UnitZ()) : dir.cross(Vec3::UnitX())).normalized();
  const Vec3 v = dir.cross(u);
  const double side = 2.0 * kPi * c.radius * len, caps = 4.0 * kPi * c.radius * c.radius;
  if (unit_double(rng) * (side + caps) < side) {
    const double phi = 2.0 * kPi * unit_double(rng);
    const Vec3 n = std::cos(phi) * u + std::sin(phi) * v;
    return {c.a + unit_double(rng) * axis + c.radius * n, n};
  }
  Vec3 n = random_unit_vector(rng);
  const Vec3 base = n.dot(dir) >= 0.0 ? c.b : c.a;
  return {base + c.radius * n, n};
}

inline double capsule_area(const Capsule& c) {
  return 2.0 * kPi * c.radius * (c.b - c.a).norm() + 4.0 * kPi * c.radius * c.radius;
}

}  // namespace detail

/// Procedural capsule human: 16 joints, about 2000 surface Gaussians, facing
/// +x with its left side toward +y, feet on z = 0, head top at z = height.
inline SkinnedBody make_test_body(double height = 1.8, std::size_t gaussian_count = 2000) {
  if (!(height > 0.0) || !std::isfinite(height)) throw ArgumentError("body height must be positive");
  if (gaussian_count < 100) throw ArgumentError("test body needs at least 100 Gaussians");

  SkinnedBody body;
  Skeleton& sk = body.skeleton;
  sk.names = {"pelvis",     "spine",       "chest",       "head",     "left_shoulder", "left_elbow",
              "left_wrist", "right_shoulder", "right_elbow", "right_wrist", "left_hip",  "left_knee",
              "left_ankle", "right_hip",   "right_knee",  "right_ankle"};
  sk.parents = {-1, 0, 1, 2, 2, 4, 5, 2, 7, 8, 0, 10, 11, 0, 13, 14};
  sk.rest = {{0, 0, 0.95},    {0, 0, 1.10},     {0, 0, 1.35},     {0, 0, 1.52},     {0, 0.20, 1.45}, {0, 0.20, 1.17},
             {0, 0.20, 0.92}, {0, -0.20, 1.45}, {0, -0.20, 1.17}, {0, -0.20, 0.92}, {0, 0.10, 0.92}, {0, 0.10, 0.50},
             {0, 0.10, 0.09}, {0, -0.10, 0.92}, {0, -0.10, 0.50}, {0, -0.10, 0.09}};

  const Vec3 skin(0.80, 0.60, 0.50), shirt(0.20, 0.35, 0.70), pants(0.25, 0.25, 0.32), shoe(0.10, 0.10, 0.10);
  const std::vector<detail::BoneSegment> segs = {
      {sk.rest[0], sk.rest[1], 1},           {sk.rest[1], sk.rest[2], 2},
      {sk.rest[2], sk.rest[3], 3},           {sk.rest[3], Vec3(0, 0, 1.72), -1},
      {sk.rest[4], sk.rest[5], 5},           {sk.rest[5], sk.rest[6], 6},
      {sk.rest[6], Vec3(0, 0.20, 0.80), -1}, {sk.rest[7], sk.rest[8], 8},
      {sk.rest[8], sk.rest[9], 9},           {sk.rest[9], Vec3(0, -0.20, 0.80), -1},
      {sk.rest[10], sk.rest[11], 11},        {sk.rest[11], sk.rest[12], 12},
      {sk.rest[12], Vec3(0.16, 0.10, 0.04), -1}, {sk.rest[13], sk.rest[14], 14},
      {sk.rest[14], sk.rest[15], 15},        {sk.rest[15], Vec3(0.16, -0.10, 0.04), -1}};
  const std::vector<detail::Capsule> capsules = {
      {Vec3(0, -0.10, 0.93), Vec3(0, 0.10, 0.93), 0.11, pants},  // hips
      {Vec3(0, 0, 0.98), Vec3(0, 0, 1.35), 0.14, shirt},         // torso
      {Vec3(0, -0.16, 1.45), Vec3(0, 0.16, 1.45), 0.07, shirt},  // shoulders
      {Vec3(0, 0, 1.50), Vec3(0, 0, 1.56), 0.05, skin},          // neck
      {Vec3(0.01, 0, 1.62), Vec3(0.01, 0, 1.70), 0.10, skin},    // head
  };
  std::vector<detail::Capsule> all = capsules;
  for (double side : {1.0, -1.0}) {
    const double y = 0.20 * side, yl = 0.10 * side;
    all.push_back({Vec3(0, y, 1.45), Vec3(0, y, 1.17), 0.045, shirt});
    all.push_back({Vec3(0, y, 1.17), Vec3(0, y, 0.92), 0.04, skin});
    all.push_back({Vec3(0, y, 0.90), Vec3(0, y, 0.82), 0.035, skin});
    all.push_back({Vec3(0, yl, 0.90), Vec3(0, yl, 0.50), 0.07, pants});
    all.push_back({Vec3(0, yl, 0.50), Vec3(0, yl, 0.10), 0.05, pants});
    all.push_back({Vec3(-0.03, yl, 0.05), Vec3(0.15, yl, 0.05), 0.05, shoe});
  }
  std::vector<double> cdf;
  double total = 0.0;
  for (const auto& c : all) cdf.push_back(total += detail::capsule_area(c));

  std::mt19937_64 rng(0x5157a1cULL);
  auto pick = [&]() {
    const double u = unit_double(rng) * total;
    return static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
  };
  std::vector<Gaussian3D> gs;
  gs.reserve(gaussian_count);
  for (std::size_t i = 0; i < gaussian_count; ++i) {
    const auto& cap = all[std::min(pick(), all.size() - 1)];
    const auto [p, n] = detail::sample_capsule(cap, rng);
    Gaussian3D g;
    g.center = p;
    g.scale = Vec3(0.022, 0.022, 0.007);
    g.rotation = Quat::FromTwoVectors(Vec3::UnitZ(), n);
    g.opacity = 0.95;
    g.color = cap.color * (0.9 + 0.1 * unit_double(rng));
    gs.push_back(g);
  }
  std::vector<Vec3> templ;
  for (std::size_t i = 0; i < 2 * gaussian_count; ++i) templ.push_back(detail::sample_capsule(all[std::min(pick(), all.size() - 1)], rng).first);

  // Uniform rescale so the centers span z in [0, height].
  double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
  for (const auto& g : gs) {
    zmin = std::min(zmin, g.center.z());
    zmax = std::max(zmax, g.center.z());
  }
  const double k = height / (zmax - zmin);
  auto fit = [&](const Vec3& p) { return Vec3(p.x() * k, p.y() * k, (p.z() - zmin) * k); };
  for (auto& g : gs) {
    g.center = fit(g.center);
    g.scale *= k;
  }
  for (auto& t : templ) t = fit(t);
  for (auto& r : sk.rest) r = fit(r);
  std::vector<detail::BoneSegment> fitted = segs;
  for (auto& s : fitted) {
    s.a = fit(s.a);
    s.b = fit(s.b);
  }

  Eigen::MatrixXd tw(static_cast<Eigen::Index>(templ.size()), static_cast<Eigen::Index>(sk.size()));
  for (std::size_t i = 0; i < templ.size(); ++i) tw.row(static_cast<Eigen::Index>(i)) = detail::segment_weights(templ[i], sk, fitted);
  body.canonical = GaussianSet(std::move(gs));
  body.weights = lift_weights(body.canonical, templ, tw);

  auto one_hot = [&](int joint) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sk.size()));
    w[joint] = 1.0;
    return w;
  };
  body.markers = {{"left_foot", fit(Vec3(0.06, 0.10, 0.0)), one_hot(12)},
                  {"right_foot", fit(Vec3(0.06, -0.10, 0.0)), one_hot(15)},
                  {"pelvis", sk.rest[0], one_hot(0)},
                  {"left_hand", fit(Vec3(0, 0.20, 0.80)), one_hot(6)},
                  {"right_hand", fit(Vec3(0, -0.20, 0.80)), one_hot(9)}};
  sk.validate();
  return body;
}

}  // namespace splatwalk
