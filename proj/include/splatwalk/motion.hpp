#pragma once

#include <splatwalk/body.hpp>
#include <splatwalk/error.hpp>
#include <splatwalk/math.hpp>
#include <splatwalk/nav_plan.hpp>
#include <splatwalk/ply.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace splatwalk {

/// Fixed-rate pose sequence with per-marker contact flags.
struct MotionClip {
  double fps = 30.0;
  std::vector<std::string> joint_names;
  std::vector<Pose> poses;
  std::map<std::string, std::vector<bool>> contacts;

  std::size_t size() const { return poses.size(); }
  bool empty() const { return poses.empty(); }

  void validate() const {
    if (!(fps > 0.0) || !std::isfinite(fps)) throw ArgumentError("clip fps must be positive");
    for (std::size_t t = 0; t < poses.size(); ++t) {
      if (poses[t].rotations.size() != joint_names.size()) throw ArgumentError("clip pose joint count mismatch");
      if (t > 0 && !(poses[t].time > poses[t - 1].time)) throw ArgumentError("clip timestamps must increase");
    }
    for (const auto& [name, flags] : contacts)
      if (flags.size() != poses.size()) throw ArgumentError("contact flags for '" + name + "' do not match frames");
  }
};

/// Positions of a marker (or, failing that, a joint) over the clip.
inline std::vector<Vec3> track(const SkinnedBody& body, const MotionClip& clip, const std::string& name) {
  const bool is_marker = std::any_of(body.markers.begin(), body.markers.end(), [&](const Marker& m) { return m.name == name; });
  const int joint = is_marker ? -1 : body.skeleton.index_of(name);
  std::vector<Vec3> out;
  out.reserve(clip.size());
  for (const auto& pose : clip.poses) {
    const auto tf = world_transforms(body.skeleton, pose);
    if (is_marker) {
      const auto& m = body.marker(name);
      out.push_back(skin_point<double>(m.position, m.weights, tf));
    } else {
      out.push_back(tf[static_cast<std::size_t>(joint)].apply(body.skeleton.rest[static_cast<std::size_t>(joint)]));
    }
  }
  return out;
}

/// Contact flags from backward differences of the vertical coordinate:
/// |v_t| < tau_v and a_t < tau_a, in meters per frame (squared). The first
/// two frames copy frame 2.
inline std::vector<bool> contact_flags(const std::vector<Vec3>& positions, double tau_v, double tau_a) {
  if (positions.size() < 3) throw ArgumentError("contact detection needs at least three frames");
  std::vector<bool> out(positions.size());
  for (std::size_t t = 2; t < positions.size(); ++t) {
    const double v = positions[t].z() - positions[t - 1].z();
    const double v_prev = positions[t - 1].z() - positions[t - 2].z();
    out[t] = std::abs(v) < tau_v && (v - v_prev) < tau_a;
  }
  out[0] = out[1] = out[2];
  return out;
}

inline std::map<std::string, std::vector<bool>> detect_contacts(const SkinnedBody& body, const MotionClip& clip,
                                                                const std::vector<std::string>& names,
                                                                double tau_v = 0.01, double tau_a = 0.005) {
  std::map<std::string, std::vector<bool>> out;
  for (const auto& n : names) out[n] = contact_flags(track(body, clip, n), tau_v, tau_a);
  return out;
}

inline nlohmann::json clip_to_json(const MotionClip& clip) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& p : clip.poses) {
    nlohmann::json rots = nlohmann::json::array();
    for (const auto& q : p.rotations) rots.push_back({q.w(), q.x(), q.y(), q.z()});
    frames.push_back({{"time", p.time},
                      {"root", {p.root_translation.x(), p.root_translation.y(), p.root_translation.z()}},
                      {"rotations", rots}});
  }
  nlohmann::json contacts = nlohmann::json::object();
  for (const auto& [name, flags] : clip.contacts) {
    nlohmann::json f = nlohmann::json::array();
    for (bool b : flags) f.push_back(b ? 1 : 0);
    contacts[name] = f;
  }
  return {{"fps", clip.fps}, {"joint_names", clip.joint_names}, {"frames", frames}, {"contacts", contacts}};
}

inline MotionClip clip_from_json(const nlohmann::json& j) {
  MotionClip clip;
  try {
    clip.fps = j.at("fps").get<double>();
    clip.joint_names = j.at("joint_names").get<std::vector<std::string>>();
    for (const auto& f : j.at("frames")) {
      Pose p;
      p.time = f.at("time").get<double>();
      const auto& r = f.at("root");
      p.root_translation = Vec3(r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>());
      for (const auto& q : f.at("rotations")) {
        Quat qq(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(), q.at(3).get<double>());
        if (!(qq.norm() > 0.0) || !qq.coeffs().allFinite()) throw FormatError("clip rotation is not a valid quaternion");
        if (std::abs(qq.squaredNorm() - 1.0) > kUnitQuatSlack) qq.normalize();
        p.rotations.push_back(qq);
      }
      if (!p.root_translation.allFinite() || !std::isfinite(p.time)) throw FormatError("clip frame has non-finite values");
      clip.poses.push_back(std::move(p));
    }
    if (j.contains("contacts"))
      for (const auto& [name, flags] : j.at("contacts").items()) {
        std::vector<bool> v;
        for (const auto& b : flags) v.push_back(b.get<int>() != 0);
        clip.contacts[name] = std::move(v);
      }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed motion clip: ") + e.what());
  }
  try {
    clip.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  return clip;
}

inline void save_clip(const MotionClip& clip, const std::filesystem::path& path) {
  write_file_bytes(path, clip_to_json(clip).dump(1) + "\n");
}

inline MotionClip load_clip(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("motion clip is not valid JSON: ") + e.what());
  }
  return clip_from_json(j);
}

/// Appends b after a, shifting b's timestamps so frame spacing stays 1/fps.
inline MotionClip concatenate(const MotionClip& a, const MotionClip& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.fps != b.fps || a.joint_names != b.joint_names) throw ArgumentError("clips differ in fps or joints");
  MotionClip out = a;
  const double t0 = a.poses.back().time + 1.0 / a.fps;
  for (std::size_t i = 0; i < b.poses.size(); ++i) {
    Pose p = b.poses[i];
    p.time = t0 + static_cast<double>(i) / a.fps;
    out.poses.push_back(std::move(p));
  }
  for (auto& [name, flags] : out.contacts) {
    const auto it = b.contacts.find(name);
    if (it != b.contacts.end()) flags.insert(flags.end(), it->second.begin(), it->second.end());
    else flags.resize(out.poses.size(), false);
  }
  for (const auto& [name, flags] : b.contacts)
    if (!out.contacts.count(name)) {
      std::vector<bool> f(a.poses.size(), false);
      f.insert(f.end(), flags.begin(), flags.end());
      out.contacts[name] = std::move(f);
    }
  return out;
}

inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

/// Heading (yaw about +z) of the root rotation's forward (+x) axis.
inline double pose_heading(const Pose& p) {
  const Vec3 f = p.rotations.at(0) * Vec3::UnitX();
  return std::atan2(f.y(), f.x());
}

struct LocomotionOptions {
  double speed = 1.2;          // m/s
  double turn_rate = kPi;      // rad/s
  double corner_radius = 0.5;  // initial Bezier cut distance at corners (m)
  double stride = 1.3;         // meters per gait cycle
  double ramp = 0.3;           // gait amplitude ramp length (m)
  int blend_frames = 8;        // frames to blend out of a seed pose
  std::optional<Pose> seed;    // continue from this pose (first frame equals it)
};

namespace detail {

struct Polyline {
  std::vector<Vec2> pts;
  std::vector<double> s;  // cumulative arc length

  double length() const { return s.empty() ? 0.0 : s.back(); }

  void push(const Vec2& p) {
    if (!pts.empty() && (p - pts.back()).norm() == 0.0) return;
    s.push_back(pts.empty() ? 0.0 : s.back() + (p - pts.back()).norm());
    pts.push_back(p);
  }

  Vec2 at(double arc) const {
    if (pts.size() == 1 || arc <= 0.0) return pts.front();
    if (arc >= s.back()) return pts.back();
    const auto i = static_cast<std::size_t>(std::upper_bound(s.begin(), s.end(), arc) - s.begin());
    const double f = (arc - s[i - 1]) / (s[i] - s[i - 1]);
    return pts[i - 1] + f * (pts[i] - pts[i - 1]);
  }

  Vec2 tangent(double arc) const {
    if (pts.size() < 2) return Vec2::UnitX();
    auto i = static_cast<std::size_t>(std::upper_bound(s.begin(), s.end(), arc) - s.begin());
    i = std::clamp<std::size_t>(i, 1, pts.size() - 1);
    return (pts[i] - pts[i - 1]).normalized();
  }
};

inline void push_segment(Polyline& pl, const Vec2& a, const Vec2& b, double step) {
  const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / step)));
  for (int i = 1; i <= n; ++i) pl.push(a + (b - a) * (static_cast<double>(i) / n));
}

/// Waypoint polyline with each interior corner replaced by a quadratic Bezier
/// whose cut distance is halved until every sample is walkable.
inline Polyline rounded_path(const std::vector<Vec2>& wps, const WalkMap& map, double radius) {
  constexpr double kStep = 0.01;
  auto walkable = [&](const Polyline& pl, std::size_t from) {
    for (std::size_t i = from; i < pl.pts.size(); ++i)
      if (!map.walkable_at(pl.pts[i])) return false;
    return true;
  };
  Polyline pl;
  pl.push(wps.front());
  Vec2 cursor = wps.front();
  for (std::size_t i = 1; i + 1 < wps.size(); ++i) {
    const Vec2 in = wps[i] - wps[i - 1], out = wps[i + 1] - wps[i];
    const double cut_max = std::min({radius, 0.5 * in.norm(), 0.5 * out.norm()});
    bool done = false;
    for (double cut = cut_max; cut >= 1e-3 && in.norm() > 0.0 && out.norm() > 0.0; cut *= 0.5) {
      Polyline trial = pl;
      const std::size_t from = trial.pts.size();
      const Vec2 a = wps[i] - cut * in.normalized(), b = wps[i] + cut * out.normalized();
      push_segment(trial, cursor, a, kStep);
      const int n = std::max(2, static_cast<int>(std::ceil(2.0 * cut / kStep)));
      for (int k = 1; k <= n; ++k) {
        const double t = static_cast<double>(k) / n;
        trial.push((1 - t) * (1 - t) * a + 2 * (1 - t) * t * wps[i] + t * t * b);
      }
      if (walkable(trial, from)) {
        pl = std::move(trial);
        cursor = b;
        done = true;
        break;
      }
    }
    if (!done) {
      const std::size_t from = pl.pts.size();
      push_segment(pl, cursor, wps[i], kStep);
      if (!walkable(pl, from)) throw ArgumentError("waypoint polyline crosses a blocked cell");
      cursor = wps[i];
    }
  }
  const std::size_t from = pl.pts.size();
  push_segment(pl, cursor, wps.back(), kStep);
  if (!walkable(pl, from)) throw ArgumentError("waypoint polyline crosses a blocked cell");
  return pl;
}

inline Quat pitch(double forward) { return axis_angle(Vec3::UnitY(), -forward); }

/// Local joint rotations of the procedural gait at phase phi and amplitude amp.
inline std::vector<Quat> gait_rotations(const Skeleton& sk, double heading, double phi, double amp) {
  std::vector<Quat> q(sk.size(), Quat::Identity());
  const double s = std::sin(phi);
  q[0] = axis_angle(Vec3::UnitZ(), heading);
  q[2] = axis_angle(Vec3::UnitZ(), -0.08 * amp * s);
  q[10] = pitch(0.40 * amp * s);
  q[13] = pitch(-0.40 * amp * s);
  q[11] = pitch(-0.55 * amp * std::max(0.0, std::sin(phi + 0.5 * kPi)));
  q[14] = pitch(-0.55 * amp * std::max(0.0, std::sin(phi - 0.5 * kPi)));
  q[12] = pitch(-0.15 * amp * s);
  q[15] = pitch(0.15 * amp * s);
  q[4] = pitch(-0.30 * amp * s);
  q[7] = pitch(0.30 * amp * s);
  q[5] = pitch(0.25 * amp);
  q[8] = pitch(0.25 * amp);
  return q;
}

/// Root height that rests the lower foot marker on the floor.
inline double grounded_root_z(const SkinnedBody& body, Pose pose, double floor) {
  pose.root_translation.z() = 0.0;
  const double z = std::min(marker_position(body, "left_foot", pose).z(), marker_position(body, "right_foot", pose).z());
  return floor - z;
}

inline Quat nlerp(const Quat& a, const Quat& b, double t) {
  const double s = a.coeffs().dot(b.coeffs()) < 0.0 ? -1.0 : 1.0;
  Quat q;
  q.coeffs() = ((1.0 - t) * a.coeffs() + t * s * b.coeffs()).normalized();
  return q;
}

}  // namespace detail

/// Deterministic locomotion along the waypoints: the root follows a rounded
/// polyline at capped speed, turning in place when the heading change per
/// frame would exceed the turn-rate cap; a phase-driven gait animates limbs.
/// A final duplicate frame brings the clip to rest.
inline MotionClip follow_waypoints(const SkinnedBody& body, const std::vector<Vec2>& waypoints, const WalkMap& map,
                                   double fps = 30.0, const LocomotionOptions& opt = {}) {
  if (waypoints.empty()) throw ArgumentError("follow_waypoints needs at least one waypoint");
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ArgumentError("fps must be positive");
  if (!(opt.speed > 0.0) || !(opt.turn_rate > 0.0)) throw ArgumentError("speed and turn rate must be positive");
  for (std::size_t i = 0; i < waypoints.size(); ++i)
    if (!map.walkable_at(waypoints[i])) throw ArgumentError("waypoint " + std::to_string(i) + " lies in a blocked cell");

  const auto path = detail::rounded_path(waypoints, map, opt.corner_radius);
  const double length = path.length();
  const double dt = 1.0 / fps;
  const double max_turn = opt.turn_rate * dt;
  const auto& sk = body.skeleton;

  MotionClip clip;
  clip.fps = fps;
  clip.joint_names = sk.names;

  double heading = opt.seed ? pose_heading(*opt.seed) : std::atan2(path.tangent(0.0).y(), path.tangent(0.0).x());
  const int moving_steps = length > 0.0 ? std::max(1, static_cast<int>(std::ceil(length / (opt.speed * dt) - 1e-9))) : 0;
  const double step = moving_steps > 0 ? length / moving_steps : 0.0;

  double arc = 0.0;
  int taken = 0;
  auto make_pose = [&](double a, double h) {
    const double amp = std::clamp(std::min(a, length - a) / opt.ramp, 0.0, 1.0);
    Pose p;
    p.rotations = detail::gait_rotations(sk, h, 2.0 * kPi * a / opt.stride, amp);
    const Vec2 xy = path.at(a);
    p.root_translation = Vec3(xy.x() - sk.rest[0].x(), xy.y() - sk.rest[0].y(), 0.0);
    p.root_translation.z() = detail::grounded_root_z(body, p, map.floor_height);
    return p;
  };

  std::vector<Pose> poses;
  poses.push_back(make_pose(0.0, heading));
  for (int guard = 0; taken < moving_steps && guard < 100000; ++guard) {
    const Vec2 t = path.tangent(arc + 0.5 * step);
    const double want = std::atan2(t.y(), t.x());
    const double diff = wrap_angle(want - heading);
    if (std::abs(diff) > max_turn) {
      heading = wrap_angle(heading + std::copysign(max_turn, diff));
    } else {
      heading = want;
      ++taken;
      arc = taken == moving_steps ? length : taken * step;
    }
    poses.push_back(make_pose(arc, heading));
  }
  if (poses.size() > 1) poses.push_back(poses.back());

  if (opt.seed) {
    if (opt.seed->rotations.size() != sk.size()) throw ArgumentError("seed pose joint count mismatch");
    const int n = std::max(1, opt.blend_frames);
    for (std::size_t i = 0; i < poses.size() && static_cast<int>(i) < n; ++i) {
      const double t = static_cast<double>(i) / n;
      Pose& p = poses[i];
      for (std::size_t b = 1; b < sk.size(); ++b) p.rotations[b] = detail::nlerp(opt.seed->rotations[b], p.rotations[b], t);
      p.root_translation.z() = (1.0 - t) * opt.seed->root_translation.z() + t * p.root_translation.z();
      if (i == 0) p = *opt.seed;
    }
  }
  for (std::size_t i = 0; i < poses.size(); ++i) poses[i].time = static_cast<double>(i) * dt;
  clip.poses = std::move(poses);
  return clip;
}

}  // namespace splatwalk
