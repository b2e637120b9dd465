#pragma once

// Staged driver: analyze -> animate -> refine -> render. Each stage reads its
// inputs from the output directory, writes its artifacts atomically and
// records a stamp keyed on the SHA-256 of every input plus its parameters.

#include <splatwalk/body.hpp>
#include <splatwalk/body_io.hpp>
#include <splatwalk/camera.hpp>
#include <splatwalk/contact_refine.hpp>
#include <splatwalk/hash.hpp>
#include <splatwalk/image_io.hpp>
#include <splatwalk/motion.hpp>
#include <splatwalk/nav_plan.hpp>
#include <splatwalk/ply.hpp>
#include <splatwalk/render.hpp>
#include <splatwalk/scene_field.hpp>
#include <splatwalk/synthetic.hpp>
#include <splatwalk/transition.hpp>

#include <nlohmann/json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace splatwalk {

namespace fs = std::filesystem;

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnreachableGoalError : public Error {
 public:
  UnreachableGoalError(std::size_t goal, const std::string& why)
      : Error("goal " + std::to_string(goal) + " is unreachable: " + why), goal_(goal) {}
  std::size_t goal() const noexcept { return goal_; }

 private:
  std::size_t goal_;
};

/// Earlier-stage artifacts missing or out of date.
class StaleArtifactError : public Error {
 public:
  using Error::Error;
};

enum ExitCode : int { kExitOk = 0, kExitGeneric = 1, kExitEmptyScene = 2, kExitUnreachable = 3, kExitMalformed = 4 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const EmptySceneError*>(&e) || dynamic_cast<const DegeneracyError*>(&e)) return kExitEmptyScene;
  if (dynamic_cast<const UnreachableGoalError*>(&e)) return kExitUnreachable;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const FormatError*>(&e) || dynamic_cast<const DataError*>(&e))
    return kExitMalformed;
  return kExitGeneric;
}

struct GoalSpec {
  std::string action = "walk";
  Vec3 position = Vec3::Zero();  // world coordinates
};

/// What an action drives and how close locomotion stops before handing over.
struct ActionPreset {
  std::string anchor;
  double approach;
  /// Keep the anchor at its standing height instead of the goal height.
  bool keep_height;
};

inline ActionPreset action_preset(const std::string& action) {
  if (action == "walk") return {"pelvis", 0.3, true};
  if (action == "sit") return {"pelvis", 0.4, false};
  if (action == "grab") return {"right_hand", 0.45, false};
  throw ConfigError("unknown action '" + action + "' (expected walk, sit or grab)");
}

struct PipelineConfig {
  fs::path scene, cameras, output = "out";
  /// External body file; empty means the procedural body of body_height.
  fs::path body_file;
  double body_height = 1.8;
  std::optional<Vec3> start;  // world coordinates
  std::vector<GoalSpec> goals;

  double tau_alpha = 0.3;
  double cell = 0.05;
  double tau = 0.25;
  HeightBand band;
  double beta = 50.0;

  double fps = 30.0;
  double speed = 1.2;
  double turn_rate = kPi;
  int transition_frames = 30;
  TransitionWeights transition;
  double r_body = 0.1;
  double contact_tau_v = 0.01;
  double contact_tau_a = 0.005;

  RefineWeights refine;
  double separation = 0.05;
  bool per_gaussian = false;
  std::vector<std::string> refine_markers = {"left_foot", "right_foot"};
  int contact_k = 12;

  /// Overrides every camera's resolution (intrinsics are scaled to match).
  std::optional<std::pair<int, int>> resolution;
  Vec3 background = Vec3::Zero();

  fs::path out(const std::string& name) const { return output / name; }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

inline Vec3 json_vec3(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(what + " must be a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace detail

/// Parses a configuration document. Relative paths resolve against `base`.
inline PipelineConfig config_from_json(const nlohmann::json& j, const fs::path& base = {}) {
  using detail::read_opt;
  PipelineConfig c;
  try {
    detail::check_keys(j, {"scene", "cameras", "output", "body", "start", "goals", "analysis", "field", "motion", "refine", "render"},
                       "config");
    auto path = [&](const char* key) { return j.contains(key) ? base / j.at(key).get<std::string>() : fs::path(); };
    c.scene = path("scene");
    c.cameras = path("cameras");
    if (j.contains("output")) c.output = base / j.at("output").get<std::string>();
    if (j.contains("body")) {
      const auto& b = j.at("body");
      detail::check_keys(b, {"height", "file"}, "body");
      read_opt(b, "height", c.body_height);
      if (b.contains("file")) c.body_file = base / b.at("file").get<std::string>();
    }
    if (j.contains("start")) {
      const auto& s = j.at("start");
      c.start = detail::json_vec3(s, "start");
    }
    if (j.contains("goals")) {
      for (const auto& g : j.at("goals")) {
        detail::check_keys(g, {"action", "position"}, "goal");
        GoalSpec spec;
        read_opt(g, "action", spec.action);
        spec.position = detail::json_vec3(g.at("position"), "goal position");
        c.goals.push_back(spec);
      }
    }
    if (j.contains("analysis")) {
      const auto& a = j.at("analysis");
      detail::check_keys(a, {"tau_alpha", "cell", "tau", "band"}, "analysis");
      read_opt(a, "tau_alpha", c.tau_alpha);
      read_opt(a, "cell", c.cell);
      read_opt(a, "tau", c.tau);
      if (a.contains("band")) c.band = {a.at("band").at(0).get<double>(), a.at("band").at(1).get<double>()};
    }
    if (j.contains("field")) {
      detail::check_keys(j.at("field"), {"beta"}, "field");
      read_opt(j.at("field"), "beta", c.beta);
    }
    if (j.contains("motion")) {
      const auto& m = j.at("motion");
      detail::check_keys(m, {"fps", "speed", "turn_rate", "transition_frames", "lambda_v", "lambda_start", "lambda_coll",
                             "lambda_s", "r_body", "contact_tau_v", "contact_tau_a"},
                         "motion");
      read_opt(m, "fps", c.fps);
      read_opt(m, "speed", c.speed);
      read_opt(m, "turn_rate", c.turn_rate);
      read_opt(m, "transition_frames", c.transition_frames);
      read_opt(m, "lambda_v", c.transition.stop);
      read_opt(m, "lambda_start", c.transition.start);
      read_opt(m, "lambda_coll", c.transition.coll);
      read_opt(m, "lambda_s", c.transition.smooth);
      read_opt(m, "r_body", c.r_body);
      read_opt(m, "contact_tau_v", c.contact_tau_v);
      read_opt(m, "contact_tau_a", c.contact_tau_a);
    }
    if (j.contains("refine")) {
      const auto& r = j.at("refine");
      detail::check_keys(r, {"lambda_s", "lambda_d", "lambda_r", "lambda_t", "r", "per_gaussian", "markers", "k"}, "refine");
      read_opt(r, "lambda_s", c.refine.snap);
      read_opt(r, "lambda_d", c.refine.distance);
      read_opt(r, "lambda_r", c.refine.magnitude);
      read_opt(r, "lambda_t", c.refine.temporal);
      read_opt(r, "r", c.separation);
      read_opt(r, "per_gaussian", c.per_gaussian);
      read_opt(r, "markers", c.refine_markers);
      read_opt(r, "k", c.contact_k);
    }
    if (j.contains("render")) {
      const auto& r = j.at("render");
      detail::check_keys(r, {"resolution", "background"}, "render");
      if (r.contains("resolution")) c.resolution = std::make_pair(r.at("resolution").at(0).get<int>(), r.at("resolution").at(1).get<int>());
      if (r.contains("background")) c.background = detail::json_vec3(r.at("background"), "background");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j, path.parent_path());
}

enum class Stage { analyze, animate, refine, render };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::analyze: return "analyze";
    case Stage::animate: return "animate";
    case Stage::refine: return "refine";
    case Stage::render: return "render";
  }
  return "?";
}

/// Range checks and file existence for everything `stage` will read. Runs
/// before any output is touched.
inline void validate_config(const PipelineConfig& c, Stage stage) {
  auto need_file = [](const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string(what) + " path is not set");
    if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " file does not exist: " + p.string());
  };
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive");
  };
  need_file(c.scene, "scene");
  if (c.output.empty()) throw ConfigError("output directory is not set");
  if (!(c.tau_alpha >= 0.0 && c.tau_alpha < 1.0)) throw ConfigError("tau_alpha must lie in [0, 1)");
  positive(c.cell, "cell size");
  if (!(c.tau >= 0.0)) throw ConfigError("clearance tau must be non-negative");
  if (!(c.band.z_min < c.band.z_max)) throw ConfigError("obstacle band must have z_min < z_max");
  if (stage == Stage::analyze) return;

  positive(c.beta, "beta");
  positive(c.fps, "fps");
  positive(c.speed, "speed");
  positive(c.turn_rate, "turn rate");
  positive(c.body_height, "body height");
  if (c.transition_frames < 2) throw ConfigError("transition_frames must be at least 2");
  if (c.transition.stop < 0 || c.transition.start < 0 || c.transition.coll < 0 || c.transition.smooth < 0)
    throw ConfigError("transition weights must be non-negative");
  if (!(c.r_body >= 0.0)) throw ConfigError("r_body must be non-negative");
  positive(c.contact_tau_v, "contact_tau_v");
  if (!std::isfinite(c.contact_tau_a)) throw ConfigError("contact_tau_a must be finite");
  if (c.goals.empty()) throw ConfigError("at least one goal is required");
  for (const auto& g : c.goals) {
    action_preset(g.action);
    if (!g.position.allFinite()) throw ConfigError("goal positions must be finite");
  }
  if (!c.body_file.empty()) need_file(c.body_file, "body");
  if (stage == Stage::animate) return;

  if (c.refine.snap < 0 || c.refine.distance < 0 || c.refine.magnitude < 0 || c.refine.temporal < 0)
    throw ConfigError("refine weights must be non-negative");
  positive(c.separation, "separation radius r");
  if (c.contact_k < 1) throw ConfigError("contact k must be at least 1");
  if (c.refine_markers.empty()) throw ConfigError("refine needs at least one marker");
  if (stage == Stage::refine) return;

  need_file(c.cameras, "cameras");
  if (c.resolution && (c.resolution->first <= 0 || c.resolution->second <= 0))
    throw ConfigError("render resolution must be positive");
  // Parsing the trajectory here makes a malformed file fail before any write.
  load_camera_trajectory(c.cameras);
}

/// Exclusive ownership of the output directory for one process.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".splatwalk.lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw IoError("output directory is locked by another run: " + path_.string());
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto n = ::write(fd_, pid.data(), pid.size());  // informational only
  }
  ~OutputLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
inline void atomic_write(const fs::path& path, std::string_view bytes) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  write_file_bytes(tmp, bytes);
  fs::rename(tmp, path);
}

struct StageReport {
  Stage stage;
  bool cache_hit = false;
  std::vector<fs::path> outputs;
};

namespace detail {

inline fs::path stamp_path(const PipelineConfig& c, Stage s) { return c.output / ".cache" / (std::string(stage_name(s)) + ".json"); }

/// Stamp key: hash of the stage name, named input hashes and parameters.
inline std::string stage_key(Stage s, const nlohmann::json& inputs, const nlohmann::json& params) {
  const nlohmann::json j = {{"stage", stage_name(s)}, {"inputs", inputs}, {"params", params}};
  return sha256_hex(j.dump());
}

/// Outputs recorded by a valid stamp, if the stamp matches `key` and every
/// output is still present with its recorded hash.
inline std::optional<std::vector<fs::path>> stamp_outputs(const PipelineConfig& c, Stage s, const std::string& key) {
  const fs::path sp = stamp_path(c, s);
  if (!fs::is_regular_file(sp)) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(read_file_bytes(sp));
    if (j.at("key").get<std::string>() != key) return std::nullopt;
    std::vector<fs::path> out;
    for (const auto& [name, hash] : j.at("outputs").items()) {
      const fs::path p = c.output / name;
      if (!fs::is_regular_file(p) || file_sha256(p) != hash.get<std::string>()) return std::nullopt;
      out.push_back(p);
    }
    return out;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline void write_stamp(const PipelineConfig& c, Stage s, const std::string& key, const std::vector<fs::path>& outputs) {
  nlohmann::json files = nlohmann::json::object();
  for (const auto& p : outputs) files[fs::relative(p, c.output).generic_string()] = file_sha256(p);
  atomic_write(stamp_path(c, s), nlohmann::json({{"key", key}, {"outputs", files}}).dump(1) + "\n");
}

inline nlohmann::json hashes(const std::vector<std::pair<std::string, fs::path>>& files) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, p] : files) j[name] = file_sha256(p);
  return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage keys. Each one hashes the files the stage reads, so a downstream stage
// can recompute its upstream key and refuse stale artifacts.

inline std::string analyze_key(const PipelineConfig& c) {
  std::vector<std::pair<std::string, fs::path>> in = {{"scene", c.scene}};
  if (!c.cameras.empty() && fs::is_regular_file(c.cameras)) in.emplace_back("cameras", c.cameras);
  const nlohmann::json params = {{"tau_alpha", c.tau_alpha}, {"cell", c.cell}, {"tau", c.tau}, {"band", {c.band.z_min, c.band.z_max}}};
  return detail::stage_key(Stage::analyze, detail::hashes(in), params);
}

inline nlohmann::json body_params(const PipelineConfig& c) {
  if (!c.body_file.empty()) return {{"file", file_sha256(c.body_file)}};
  return {{"height", c.body_height}};
}

inline std::string animate_key(const PipelineConfig& c) {
  nlohmann::json goals = nlohmann::json::array();
  for (const auto& g : c.goals) goals.push_back({{"action", g.action}, {"position", detail::vec_json(g.position)}});
  const nlohmann::json params = {
      {"body", body_params(c)},
      {"start", c.start ? detail::vec_json(*c.start) : nlohmann::json()},
      {"goals", goals},
      {"beta", c.beta},
      {"fps", c.fps},
      {"speed", c.speed},
      {"turn_rate", c.turn_rate},
      {"transition_frames", c.transition_frames},
      {"weights", {c.transition.stop, c.transition.start, c.transition.coll, c.transition.smooth}},
      {"r_body", c.r_body},
      {"contact", {c.contact_tau_v, c.contact_tau_a}}};
  const auto in = detail::hashes({{"scene", c.scene},
                                  {"alignment", c.out("alignment.json")},
                                  {"walkmap", c.out("walkmap.pgm")},
                                  {"walkmap_sidecar", c.out("walkmap.json")}});
  return detail::stage_key(Stage::animate, in, params);
}

inline std::string refine_key(const PipelineConfig& c) {
  const nlohmann::json params = {
      {"body", body_params(c)},
      {"beta", c.beta},
      {"weights", {c.refine.snap, c.refine.distance, c.refine.magnitude, c.refine.temporal}},
      {"r", c.separation},
      {"per_gaussian", c.per_gaussian},
      {"markers", c.refine_markers},
      {"k", c.contact_k}};
  const auto in = detail::hashes({{"scene", c.scene}, {"alignment", c.out("alignment.json")}, {"clip", c.out("clip.json")}});
  return detail::stage_key(Stage::refine, in, params);
}

inline std::string render_key(const PipelineConfig& c) {
  const nlohmann::json params = {
      {"resolution", c.resolution ? nlohmann::json({c.resolution->first, c.resolution->second}) : nlohmann::json()},
      {"background", detail::vec_json(c.background)},
      {"body", body_params(c)},
      {"refine", refine_key(c)}};
  const auto in = detail::hashes({{"scene", c.scene},
                                  {"cameras", c.cameras},
                                  {"alignment", c.out("alignment.json")},
                                  {"clip", c.out("clip.json")},
                                  {"refine", c.out("refine.json")}});
  return detail::stage_key(Stage::render, in, params);
}

namespace detail {

/// Throws unless the stage's stamp matches what its key would be now.
inline void require_current(const PipelineConfig& c, Stage s) {
  std::string key;
  try {
    switch (s) {
      case Stage::analyze: key = analyze_key(c); break;
      case Stage::animate: key = animate_key(c); break;
      case Stage::refine: key = refine_key(c); break;
      case Stage::render: key = render_key(c); break;
    }
  } catch (const IoError&) {
    throw StaleArtifactError(std::string(stage_name(s)) + " artifacts are missing; run '" + stage_name(s) + "' first");
  }
  if (!stamp_outputs(c, s, key))
    throw StaleArtifactError(std::string(stage_name(s)) + " artifacts are missing or out of date; run '" + stage_name(s) +
                             "' first");
}

inline SkinnedBody make_body(const PipelineConfig& c) {
  return c.body_file.empty() ? make_test_body(c.body_height) : load_body(c.body_file);
}

struct AnalyzedScene {
  GaussianSet scene;
  AlignedScene aligned;
};

inline AnalyzedScene reload_scene(const PipelineConfig& c) {
  AnalyzedScene out;
  out.scene = load_splat_ply(c.scene);
  nlohmann::json a;
  try {
    a = nlohmann::json::parse(read_file_bytes(c.out("alignment.json")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed alignment sidecar: ") + e.what());
  }
  out.aligned = make_aligned_scene(out.scene, c.tau_alpha, rotation_from_json(a));
  return out;
}

/// Drops the last `cut` meters of a polyline.
inline std::vector<Vec2> trim_polyline_end(std::vector<Vec2> pts, double cut) {
  while (cut > 0.0 && pts.size() >= 2) {
    const Vec2 a = pts[pts.size() - 2], b = pts.back();
    const double len = (b - a).norm();
    if (len > cut) {
      pts.back() = b + (a - b) * (cut / len);
      break;
    }
    cut -= len;
    pts.pop_back();
  }
  return pts;
}

inline Vec3 pelvis_position(const SkinnedBody& body, const Pose& p) {
  return world_transforms(body.skeleton, p)[0].apply(body.skeleton.rest[0]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

inline StageReport cmd_analyze(const PipelineConfig& c, std::ostream& log = std::cout) {
  validate_config(c, Stage::analyze);
  const GaussianSet scene = load_splat_ply(c.scene);
  std::vector<Vec3> ups;
  if (!c.cameras.empty() && fs::is_regular_file(c.cameras))
    for (const auto& cam : load_camera_trajectory(c.cameras)) ups.push_back(cam.up_direction());
  OutputLock lock(c.output);
  StageReport report{Stage::analyze, false, {}};
  const std::string key = analyze_key(c);
  if (auto hit = detail::stamp_outputs(c, Stage::analyze, key)) {
    log << "analyze: cache hit\n";
    report.cache_hit = true;
    report.outputs = *hit;
    return report;
  }
  const AlignedScene aligned = analyze_scene(scene, c.tau_alpha, ups);
  const WalkMap map = build_walkmap(aligned, c.cell, c.tau, c.band);
  nlohmann::json a = alignment_to_json(aligned);
  a["kept"] = aligned.centers.size();
  a["total"] = scene.size();
  atomic_write(c.out("alignment.json"), a.dump(1) + "\n");
  save_walkmap(map, c.out("walkmap.pgm.tmp"), c.out("walkmap.json.tmp"));
  fs::rename(c.out("walkmap.pgm.tmp"), c.out("walkmap.pgm"));
  fs::rename(c.out("walkmap.json.tmp"), c.out("walkmap.json"));
  report.outputs = {c.out("alignment.json"), c.out("walkmap.pgm"), c.out("walkmap.json")};
  detail::write_stamp(c, Stage::analyze, key, report.outputs);
  std::size_t free = 0;
  for (auto v : map.cells) free += v;
  log << "analyze: kept " << aligned.centers.size() << " of " << scene.size() << " Gaussians, floor at "
      << aligned.floor_height << ", walkmap " << map.cols << "x" << map.rows << " (" << free << " walkable)\n";
  return report;
}

/// Result of planning one goal, kept for the plan sidecar.
struct GoalPlan {
  std::string action, anchor;
  Vec3 target = Vec3::Zero();  // aligned frame
  std::vector<Vec2> waypoints;
  std::size_t first_frame = 0, locomotion_frames = 0, transition_frames = 0;
  TransitionLoss initial, final;
  double junction_start = 0.0;
};

struct AnimationResult {
  MotionClip clip;
  std::vector<GoalPlan> goals;
};

/// Plans and synthesizes the whole motion in the aligned frame.
inline AnimationResult synthesize_motion(const PipelineConfig& c, const SkinnedBody& body, const AlignedScene& aligned,
                                         const WalkMap& map) {
  // Collision field over obstacle-band centers only, so the floor never counts.
  std::vector<Vec3> band;
  for (const auto& p : aligned.centers) {
    const double h = p.z() - aligned.floor_height;
    if (h >= c.band.z_min && h <= c.band.z_max) band.push_back(p);
  }
  std::optional<DistanceFieldParams> field;
  if (!band.empty()) field.emplace(c.beta, std::make_shared<const PointIndex3>(band));

  const int search = static_cast<int>(std::ceil(1.0 / map.cell));
  Vec2 here;
  if (c.start) {
    here = aligned.to_aligned(*c.start).head<2>();
  } else {
    here = map.origin + 0.5 * Vec2(map.cols * map.cell, map.rows * map.cell);
  }
  if (!map.walkable_at(here)) {
    const auto snapped = nearest_walkable(map, map.world_to_cell(here), search);
    if (!snapped) throw UnreachableGoalError(0, "no walkable cell near the start position");
    here = map.cell_to_world(*snapped);
  }

  AnimationResult out;
  std::optional<Pose> seed;
  LocomotionOptions loco;
  loco.speed = c.speed;
  loco.turn_rate = c.turn_rate;
  for (std::size_t gi = 0; gi < c.goals.size(); ++gi) {
    const auto& goal = c.goals[gi];
    const ActionPreset preset = action_preset(goal.action);
    const Vec3 g = aligned.to_aligned(goal.position);
    GoalPlan plan;
    plan.action = goal.action;
    plan.anchor = preset.anchor;

    Cell target = map.world_to_cell(g.head<2>());
    if (!map.walkable(target)) {
      const auto t = nearest_walkable(map, target, search);
      if (!t) throw UnreachableGoalError(gi, "no walkable cell within 1 m of the goal");
      target = *t;
    }
    Cell from = map.world_to_cell(here);
    if (!map.walkable(from)) {
      const auto f = nearest_walkable(map, from, search);
      if (!f) throw UnreachableGoalError(gi, "no walkable cell near the current position");
      from = *f;
      here = map.cell_to_world(from);
    }
    const auto route = astar(map, from, target);
    if (!route.path) throw UnreachableGoalError(gi, "no collision-free path on the walkability map");
    std::vector<Vec2> wps = simplify_path(*route.path, map).waypoints;
    wps.front() = here;
    const double cut = std::max(0.0, preset.approach - (map.cell_to_world(target) - g.head<2>()).norm());
    wps = detail::trim_polyline_end(wps, cut);
    plan.waypoints = wps;

    loco.seed = seed;
    MotionClip walk = follow_waypoints(body, wps, map, c.fps, loco);
    plan.first_frame = out.clip.size();
    plan.locomotion_frames = walk.size();
    out.clip = concatenate(out.clip, walk);

    const Pose end = out.clip.poses.back();
    Vec3 target3 = g;
    if (preset.keep_height) target3.z() = skin_point<double>(anchor_point(body, preset.anchor).position,
                                                             anchor_point(body, preset.anchor).weights,
                                                             world_transforms(body.skeleton, end)).z();
    plan.target = target3;
    TransitionProblem prob = make_transition_problem(body, end, target3, preset.anchor, c.transition_frames, c.fps);
    prob.weights = c.transition;
    prob.r_body = c.r_body;
    const MotionClip init = hold_pose(end, body.skeleton.names, c.transition_frames, c.fps);
    const auto tr = optimize_transition(prob, field ? &*field : nullptr, init);
    plan.initial = tr.initial;
    plan.final = tr.final;
    plan.transition_frames = tr.clip.size();
    const Pose& first = tr.clip.poses.front();
    plan.junction_start = (first.root_translation - end.root_translation).squaredNorm();
    for (std::size_t j = 0; j < first.rotations.size(); ++j)
      plan.junction_start += (first.rotations[j].coeffs() - end.rotations[j].coeffs()).squaredNorm();
    out.clip = concatenate(out.clip, tr.clip);
    seed = out.clip.poses.back();
    here = detail::pelvis_position(body, *seed).head<2>();
    out.goals.push_back(plan);
  }
  out.clip.contacts = detect_contacts(body, out.clip, body.marker_names(), c.contact_tau_v, c.contact_tau_a);
  out.clip.validate();
  return out;
}

inline StageReport cmd_animate(const PipelineConfig& c, std::ostream& log = std::cout) {
  validate_config(c, Stage::animate);
  OutputLock lock(c.output);
  detail::require_current(c, Stage::analyze);
  StageReport report{Stage::animate, false, {}};
  const std::string key = animate_key(c);
  if (auto hit = detail::stamp_outputs(c, Stage::animate, key)) {
    log << "animate: cache hit\n";
    report.cache_hit = true;
    report.outputs = *hit;
    return report;
  }
  const auto scene = detail::reload_scene(c);
  const WalkMap map = load_walkmap(c.out("walkmap.pgm"), c.out("walkmap.json"));
  const SkinnedBody body = detail::make_body(c);
  const AnimationResult anim = synthesize_motion(c, body, scene.aligned, map);

  nlohmann::json goals = nlohmann::json::array();
  for (const auto& g : anim.goals) {
    nlohmann::json wps = nlohmann::json::array();
    for (const auto& w : g.waypoints) wps.push_back({w.x(), w.y()});
    auto loss = [](const TransitionLoss& l) {
      return nlohmann::json{{"reach", l.reach}, {"stop", l.stop}, {"start", l.start}, {"coll", l.coll}, {"smooth", l.smooth}, {"total", l.total}};
    };
    goals.push_back({{"action", g.action},
                     {"anchor", g.anchor},
                     {"target", detail::vec_json(g.target)},
                     {"waypoints", wps},
                     {"first_frame", g.first_frame},
                     {"locomotion_frames", g.locomotion_frames},
                     {"transition_frames", g.transition_frames},
                     {"transition_initial", loss(g.initial)},
                     {"transition_final", loss(g.final)},
                     {"junction_start", g.junction_start}});
  }
  atomic_write(c.out("clip.json"), clip_to_json(anim.clip).dump(1) + "\n");
  atomic_write(c.out("plan.json"), nlohmann::json({{"frame", "aligned"}, {"goals", goals}}).dump(1) + "\n");
  report.outputs = {c.out("clip.json"), c.out("plan.json")};
  detail::write_stamp(c, Stage::animate, key, report.outputs);
  log << "animate: " << anim.clip.size() << " frames for " << anim.goals.size() << " goal(s)\n";
  for (std::size_t i = 0; i < anim.goals.size(); ++i)
    log << "  goal " << i << " (" << anim.goals[i].action << "): reach error "
        << std::sqrt(anim.goals[i].final.reach) << " m, transition loss " << anim.goals[i].initial.total << " -> "
        << anim.goals[i].final.total << "\n";
  return report;
}

/// Posed frames and the refinement problem for a clip, in the aligned frame.
inline RefineProblem build_refine_problem(const PipelineConfig& c, const SkinnedBody& body, const AlignedScene& aligned,
                                          const MotionClip& clip) {
  RefineProblem p;
  p.field = DistanceFieldParams(c.beta, aligned.index);
  p.skin_weights = body.weights;
  p.weights = c.refine;
  p.separation = c.separation;
  p.per_gaussian = c.per_gaussian;
  p.frames.resize(clip.size());
  parallel_for(clip.size(), [&](std::size_t t) { p.frames[t] = pose_body(body, clip.poses[t]); });
  for (const auto& m : c.refine_markers) {
    const auto it = clip.contacts.find(m);
    if (it == clip.contacts.end()) throw ConfigError("clip has no contact flags for marker '" + m + "'");
    p.contacts.push_back({m, lift_contact_indices(body, m, static_cast<std::size_t>(c.contact_k)), it->second});
  }
  return p;
}

inline StageReport cmd_refine(const PipelineConfig& c, std::ostream& log = std::cout) {
  validate_config(c, Stage::refine);
  OutputLock lock(c.output);
  detail::require_current(c, Stage::analyze);
  detail::require_current(c, Stage::animate);
  StageReport report{Stage::refine, false, {}};
  const std::string key = refine_key(c);
  if (auto hit = detail::stamp_outputs(c, Stage::refine, key)) {
    log << "refine: cache hit\n";
    report.cache_hit = true;
    report.outputs = *hit;
    return report;
  }
  const auto scene = detail::reload_scene(c);
  const SkinnedBody body = detail::make_body(c);
  const MotionClip clip = load_clip(c.out("clip.json"));
  const RefineProblem prob = build_refine_problem(c, body, scene.aligned, clip);
  const RefineResult r = refine(prob);
  const auto masks = contact_region_masks(prob);
  const auto before = penetration_report(prob.frames, prob.field, c.separation, masks);
  const auto after = penetration_report(r.frames, prob.field, c.separation, masks);
  const nlohmann::json j = {{"translations", translations_to_json(r)},
                            {"objective", {r.initial_objective, r.final_objective}},
                            {"iterations", r.stats.iterations},
                            {"penetration_before", before},
                            {"penetration_after", after}};
  atomic_write(c.out("refine.json"), j.dump(1) + "\n");
  report.outputs = {c.out("refine.json")};
  detail::write_stamp(c, Stage::refine, key, report.outputs);
  std::size_t b = 0, a = 0;
  for (auto v : before) b += v;
  for (auto v : after) a += v;
  log << "refine: objective " << r.initial_objective << " -> " << r.final_objective << ", penetrating samples " << b
      << " -> " << a << "\n";
  return report;
}

/// Refined body frames in world coordinates, rebuilt from the clip and the
/// stored translations.
inline std::vector<GaussianSet> refined_world_frames(const PipelineConfig& c, const SkinnedBody& body,
                                                     const AlignedScene& aligned, const MotionClip& clip,
                                                     const nlohmann::json& refine_doc) {
  const RefineProblem prob = build_refine_problem(c, body, aligned, clip);
  const auto groups = detail::make_groups(prob);
  std::vector<std::vector<Vec3>> tr(groups.size(), std::vector<Vec3>(clip.size(), Vec3::Zero()));
  try {
    const auto& arr = refine_doc.at("translations");
    if (arr.size() != groups.size() * clip.size()) throw FormatError("refine translations do not match the clip");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& e = arr[i];
      tr[i / clip.size()][e.at("frame").get<std::size_t>()] =
          Vec3(e.at("T").at(0).get<double>(), e.at("T").at(1).get<double>(), e.at("T").at(2).get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed refine sidecar: ") + e.what());
  }
  auto frames = apply_translations(prob, groups, tr);
  const Mat3 back = aligned.rotation.transpose();
  const Quat qback(back);
  for (auto& f : frames) {
    std::vector<Gaussian3D> gs(f.begin(), f.end());
    for (auto& g : gs) {
      g.center = back * g.center;
      g.rotation = qback * g.rotation;
    }
    f = GaussianSet(std::move(gs));
  }
  return frames;
}

/// Clip frame shown by camera i of n: spread evenly over the clip.
inline std::size_t camera_frame(std::size_t i, std::size_t cameras, std::size_t frames) {
  if (cameras <= 1 || frames <= 1) return 0;
  return static_cast<std::size_t>(std::llround(static_cast<double>(i) * static_cast<double>(frames - 1) /
                                               static_cast<double>(cameras - 1)));
}

inline std::vector<Camera> render_cameras(const PipelineConfig& c) {
  auto cams = load_camera_trajectory(c.cameras);
  if (c.resolution) {
    for (auto& cam : cams) {
      const double sx = static_cast<double>(c.resolution->first) / cam.width;
      const double sy = static_cast<double>(c.resolution->second) / cam.height;
      cam.fx *= sx;
      cam.cx *= sx;
      cam.fy *= sy;
      cam.cy *= sy;
      cam.width = c.resolution->first;
      cam.height = c.resolution->second;
    }
  }
  return cams;
}

inline std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu.png", i);
  return buf;
}

inline StageReport cmd_render(const PipelineConfig& c, std::ostream& log = std::cout) {
  validate_config(c, Stage::render);
  const auto cams = render_cameras(c);
  OutputLock lock(c.output);
  detail::require_current(c, Stage::analyze);
  detail::require_current(c, Stage::animate);
  detail::require_current(c, Stage::refine);
  StageReport report{Stage::render, false, {}};
  const std::string key = render_key(c);
  if (auto hit = detail::stamp_outputs(c, Stage::render, key)) {
    log << "render: cache hit\n";
    report.cache_hit = true;
    report.outputs = *hit;
    return report;
  }
  const auto scene = detail::reload_scene(c);
  const SkinnedBody body = detail::make_body(c);
  const MotionClip clip = load_clip(c.out("clip.json"));
  nlohmann::json refine_doc;
  try {
    refine_doc = nlohmann::json::parse(read_file_bytes(c.out("refine.json")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed refine sidecar: ") + e.what());
  }
  const auto frames = refined_world_frames(c, body, scene.aligned, clip, refine_doc);
  std::vector<GaussianSet> shown;
  for (std::size_t i = 0; i < cams.size(); ++i) shown.push_back(frames[camera_frame(i, cams.size(), frames.size())]);
  RenderOptions opt;
  opt.background = c.background;
  const auto images = render_sequence(scene.scene, shown, cams, opt);
  const fs::path dir = c.out("frames");
  fs::create_directories(dir);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const fs::path p = dir / frame_name(i);
    write_png(images[i], p.string() + ".tmp");
    fs::rename(p.string() + ".tmp", p);
    report.outputs.push_back(p);
  }
  // Frames left over from a longer trajectory would be stale.
  for (std::size_t i = images.size();; ++i) {
    const fs::path p = dir / frame_name(i);
    if (!fs::exists(p)) break;
    fs::remove(p);
  }
  detail::write_stamp(c, Stage::render, key, report.outputs);
  log << "render: wrote " << images.size() << " frame(s) to " << dir.string() << "\n";
  return report;
}

inline std::vector<StageReport> cmd_pipeline(const PipelineConfig& c, std::ostream& log = std::cout) {
  validate_config(c, Stage::render);
  return {cmd_analyze(c, log), cmd_animate(c, log), cmd_refine(c, log), cmd_render(c, log)};
}

/// Writes the bundled demo: a synthetic room, an orbit of cameras and a
/// config with a walk goal followed by a grab at the table.
inline fs::path write_synthetic_demo(const fs::path& dir, std::size_t cameras = 3, int width = 160, int height = 120) {
  fs::create_directories(dir);
  save_splat_ply(synthetic_room(), dir / "scene.ply");
  std::vector<Camera> cams;
  for (std::size_t i = 0; i < cameras; ++i) {
    const double a = cameras > 1 ? static_cast<double>(i) / static_cast<double>(cameras - 1) : 0.5;
    const Vec3 eye(-2.7, -2.7 + 1.6 * a, 2.1);
    cams.push_back(Camera::look_at(eye, Vec3(1.0, -0.6, 0.5), Vec3::UnitZ(), 0.6 * width, width, height));
  }
  save_camera_trajectory(cams, dir / "cameras.json");
  const nlohmann::json config = {
      {"scene", "scene.ply"},
      {"cameras", "cameras.json"},
      {"output", "out"},
      {"body", {{"height", 1.7}}},
      {"start", {-1.5, -1.8, 0.0}},
      {"goals",
       {{{"action", "walk"}, {"position", {1.5, -1.5, 0.0}}}, {{"action", "grab"}, {"position", {1.8, 1.1, 0.85}}}}},
      {"render", {{"background", {0.85, 0.85, 0.88}}}}};
  atomic_write(dir / "config.json", config.dump(1) + "\n");
  return dir / "config.json";
}

}  // namespace splatwalk
