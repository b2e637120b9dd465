// splatwalk: analyze a splat scene, animate a body through it, refine contacts
// and render the composite.

#include <splatwalk/pipeline.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

namespace sw = splatwalk;

namespace {

struct Overrides {
  std::string config, scene, cameras, output, body;
  std::optional<double> body_height, tau_alpha, cell, tau, band_min, band_max, beta, fps, speed, turn_rate;
  std::optional<int> transition_frames, k;
  std::optional<double> lambda_v, lambda_start, lambda_coll, lambda_smooth, r_body;
  std::optional<double> lambda_s, lambda_d, lambda_r, lambda_t, r;
  std::vector<double> start;
  std::vector<std::string> goals;
  std::string resolution;
  bool per_gaussian = false;
};

void add_flags(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config, "JSON config file");
  app->add_option("--scene", o.scene, "scene PLY");
  app->add_option("--cameras", o.cameras, "camera trajectory JSON");
  app->add_option("-o,--output", o.output, "output directory");
  app->add_option("--body", o.body, "body JSON (default: procedural body)");
  app->add_option("--body-height", o.body_height, "procedural body height (m)");
  app->add_option("--start", o.start, "start position x y z (world)")->expected(3);
  app->add_option("--goal", o.goals, "goal as action:x,y,z (repeatable; replaces config goals)");
  app->add_option("--tau-alpha", o.tau_alpha, "opacity culling threshold");
  app->add_option("--cell", o.cell, "walkmap cell size (m)");
  app->add_option("--tau", o.tau, "walkmap clearance (m)");
  app->add_option("--band-min", o.band_min, "obstacle band lower height (m)");
  app->add_option("--band-max", o.band_max, "obstacle band upper height (m)");
  app->add_option("--beta", o.beta, "soft distance sharpness");
  app->add_option("--fps", o.fps);
  app->add_option("--speed", o.speed, "walking speed (m/s)");
  app->add_option("--turn-rate", o.turn_rate, "max yaw rate (rad/s)");
  app->add_option("--transition-frames", o.transition_frames);
  app->add_option("--lambda-v", o.lambda_v);
  app->add_option("--lambda-start", o.lambda_start);
  app->add_option("--lambda-coll", o.lambda_coll);
  app->add_option("--lambda-smooth", o.lambda_smooth);
  app->add_option("--r-body", o.r_body);
  app->add_option("--lambda-s", o.lambda_s, "refine snap weight");
  app->add_option("--lambda-d", o.lambda_d, "refine distance weight");
  app->add_option("--lambda-r", o.lambda_r, "refine magnitude weight");
  app->add_option("--lambda-t", o.lambda_t, "refine temporal weight");
  app->add_option("--r", o.r, "refine separation radius (m)");
  app->add_option("--k", o.k, "Gaussians lifted per contact marker");
  app->add_flag("--per-gaussian", o.per_gaussian, "one refinement translation per Gaussian");
  app->add_option("--resolution", o.resolution, "render resolution WxH");
}

sw::GoalSpec parse_goal(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw sw::ConfigError("goal must look like action:x,y,z, got '" + text + "'");
  sw::GoalSpec g;
  g.action = text.substr(0, colon);
  std::string rest = text.substr(colon + 1);
  for (char& ch : rest)
    if (ch == ',') ch = ' ';
  std::istringstream in(rest);
  double x, y, z;
  if (!(in >> x >> y >> z) || !(in >> std::ws).eof()) throw sw::ConfigError("goal position must be x,y,z in '" + text + "'");
  g.position = sw::Vec3(x, y, z);
  return g;
}

sw::PipelineConfig resolve(const Overrides& o) {
  sw::PipelineConfig c = o.config.empty() ? sw::PipelineConfig{} : sw::load_config(o.config);
  if (!o.scene.empty()) c.scene = o.scene;
  if (!o.cameras.empty()) c.cameras = o.cameras;
  if (!o.output.empty()) c.output = o.output;
  if (!o.body.empty()) c.body_file = o.body;
  if (o.body_height) {
    c.body_height = *o.body_height;
    if (o.body.empty()) c.body_file.clear();
  }
  if (o.start.size() == 3) c.start = sw::Vec3(o.start[0], o.start[1], o.start[2]);
  if (!o.goals.empty()) {
    c.goals.clear();
    for (const auto& g : o.goals) c.goals.push_back(parse_goal(g));
  }
  auto set = [](auto& dst, const auto& src) {
    if (src) dst = *src;
  };
  set(c.tau_alpha, o.tau_alpha);
  set(c.cell, o.cell);
  set(c.tau, o.tau);
  set(c.band.z_min, o.band_min);
  set(c.band.z_max, o.band_max);
  set(c.beta, o.beta);
  set(c.fps, o.fps);
  set(c.speed, o.speed);
  set(c.turn_rate, o.turn_rate);
  set(c.transition_frames, o.transition_frames);
  set(c.transition.stop, o.lambda_v);
  set(c.transition.start, o.lambda_start);
  set(c.transition.coll, o.lambda_coll);
  set(c.transition.smooth, o.lambda_smooth);
  set(c.r_body, o.r_body);
  set(c.refine.snap, o.lambda_s);
  set(c.refine.distance, o.lambda_d);
  set(c.refine.magnitude, o.lambda_r);
  set(c.refine.temporal, o.lambda_t);
  set(c.separation, o.r);
  set(c.contact_k, o.k);
  if (o.per_gaussian) c.per_gaussian = true;
  if (!o.resolution.empty()) {
    int w = 0, h = 0;
    char x = 0;
    std::istringstream in(o.resolution);
    if (!(in >> w >> x >> h) || (x != 'x' && x != 'X')) throw sw::ConfigError("resolution must look like 640x480");
    c.resolution = std::make_pair(w, h);
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Animate a skinned Gaussian body inside a Gaussian splat scene."};
  app.require_subcommand(1);
  Overrides o;
  std::string synth_dir;
  std::size_t synth_cameras = 3;

  auto* analyze = app.add_subcommand("analyze", "align the scene and build the walkability map");
  auto* animate = app.add_subcommand("animate", "plan and synthesize motion for every goal");
  auto* refine = app.add_subcommand("refine", "refine body Gaussians at contacts");
  auto* render = app.add_subcommand("render", "render the composite along the camera trajectory");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage");
  for (auto* sub : {analyze, animate, refine, render, pipeline}) add_flags(sub, o);
  auto* synth = app.add_subcommand("synth-scene", "write the synthetic demo room, cameras and config");
  synth->add_option("dir", synth_dir, "output directory")->required();
  synth->add_option("--cameras", synth_cameras, "number of cameras")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sw::kExitMalformed;
  }

  try {
    if (synth->parsed()) {
      const auto path = sw::write_synthetic_demo(synth_dir, synth_cameras);
      std::cout << "wrote " << path.string() << "\n";
      return sw::kExitOk;
    }
    const sw::PipelineConfig c = resolve(o);
    if (analyze->parsed()) sw::cmd_analyze(c);
    if (animate->parsed()) sw::cmd_animate(c);
    if (refine->parsed()) sw::cmd_refine(c);
    if (render->parsed()) sw::cmd_render(c);
    if (pipeline->parsed()) sw::cmd_pipeline(c);
    return sw::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sw::exit_code_for(e);
  }
}
