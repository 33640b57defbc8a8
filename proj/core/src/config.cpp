#include "grasplearn/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "grasplearn/errors.hpp"

namespace grasp {

namespace {

using nlohmann::json;

constexpr double kDeg = 3.14159265358979323846 / 180.0;

// Strict object reader: every key must be consumed exactly once.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }

  ~StrictObject() = default;

  template <typename T>
  void read(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;  // keep default
    seen_.insert(key);
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: bad value type at '" + path_ + "." + key + "'");
    }
  }

  void read_degrees(const char* key, double& out_radians) {
    double deg = out_radians / kDeg;
    read(key, deg);
    out_radians = deg * kDeg;
  }

  bool has(const char* key) const { return j_.find(key) != j_.end(); }

  const json* child(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("config: unknown key '" + path_ + "." + it.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_run(const json& j, RunConfig& cfg) {
  StrictObject o(j, "run");
  o.read("n_env", cfg.n_env);
  o.read("n_trial", cfg.n_trial);
  o.read("n_obj", cfg.n_obj);
  std::string mode = mode_name(cfg.mode);
  o.read("mode", mode);
  cfg.mode = mode_from_name(mode);
  o.read("seed", cfg.seed);
  std::string kind = sim::object_kind_name(cfg.object_kind);
  o.read("object_kind", kind);
  cfg.object_kind = sim::object_kind_from_name(kind);
  o.read("optimum_design", cfg.optimum_design);
  o.read("design_offset_cm", cfg.design_offset_cm);
  o.read("threads", cfg.threads);
  o.read("episode_attempt_cap", cfg.episode_attempt_cap);
  o.read("state_every", cfg.state_every);
  o.read("eval_scenes_per_count", cfg.eval_scenes_per_count);
  o.read("eval_max_objects", cfg.eval_max_objects);
  o.finish();
  if (cfg.n_env < 1 || cfg.n_trial < 1 || cfg.n_obj < 1) {
    throw ConfigError("config: run counts must be >= 1");
  }
  if (cfg.optimum_design != "center" && cfg.optimum_design != "left" && cfg.optimum_design != "right") {
    throw ConfigError("config: run.optimum_design must be center, left or right");
  }
  if (cfg.threads < 1) throw ConfigError("config: run.threads must be >= 1");
  if (cfg.episode_attempt_cap < cfg.n_obj) {
    throw ConfigError("config: run.episode_attempt_cap must allow at least n_obj attempts");
  }
}

void parse_scene(const json& j, sim::SceneConfig& cfg) {
  StrictObject o(j, "scene");
  o.read("workspace_cm", cfg.workspace);
  o.read("object_length_cm", cfg.object_length);
  o.read("object_radius_cm", cfg.object_radius);
  o.read("bulge_radius_cm", cfg.bulge_radius);
  o.read("clearance_cm", cfg.clearance);
  o.read("max_place_attempts", cfg.max_place_attempts);
  o.read("p_tol_cm", cfg.p_tol);
  o.read_degrees("a_tol_deg", cfg.a_tol);
  o.finish();
  if (cfg.object_length <= 2 * cfg.object_radius) {
    throw ConfigError("config: scene.object_length_cm must exceed twice the radius");
  }
  if (cfg.workspace <= cfg.object_length) throw ConfigError("config: scene.workspace_cm too small");
  if (cfg.p_tol <= 0 || cfg.a_tol <= 0) throw ConfigError("config: scene tolerances must be positive");
}

void parse_render(const json& j, sim::RenderConfig& cfg) {
  StrictObject o(j, "render");
  o.read("top_resolution", cfg.top_resolution);
  o.read("side_resolution", cfg.side_resolution);
  o.read("side_span_cm", cfg.side_span);
  o.read("noise_amplitude", cfg.noise_amplitude);
  o.read("jitter_px", cfg.jitter_px);
  o.finish();
  if (cfg.top_resolution < 32 || cfg.side_resolution < 32) {
    throw ConfigError("config: render resolutions must be >= 32");
  }
}

void parse_detector(const json& j, det::DetectorConfig& cfg) {
  StrictObject o(j, "detector");
  o.read("channels", cfg.channels);
  o.read("grid1_box_px", cfg.grid1_box_px);
  o.read("grid2_box_px", cfg.grid2_box_px);
  o.read("gt_box_cm", cfg.gt_box_cm);
  o.read("match_iou", cfg.match_iou);
  o.read("conf_min", cfg.conf_min);
  o.read("nms_iou", cfg.nms_iou);
  o.read("loc_weight", cfg.loc_weight);
  o.read("conf_weight", cfg.conf_weight);
  o.read("theta_weight", cfg.theta_weight);
  o.read("score_weight", cfg.score_weight);
  std::string rank = cfg.alpha_rank_background ? "background" : "object";
  o.read("alpha_rank", rank);
  if (rank == "background") {
    cfg.alpha_rank_background = true;
  } else if (rank == "object") {
    cfg.alpha_rank_background = false;
  } else {
    throw ConfigError("config: detector.alpha_rank must be object or background");
  }
  o.read("hard_negative_ratio", cfg.hard_negative_ratio);
  o.read("learning_rate", cfg.adam.lr);
  o.read("batch", cfg.batch);
  o.read("steps_per_trial", cfg.steps_per_trial);
  o.read("warmup_steps", cfg.warmup_steps);
  o.read("negative_fraction", cfg.negative_fraction);
  o.finish();
  if (cfg.batch < 1 || cfg.steps_per_trial < 0 || cfg.warmup_steps < 0) {
    throw ConfigError("config: detector batch/step counts invalid");
  }
}

void parse_evaluator(const json& j, eval::EvaluatorConfig& cfg) {
  StrictObject o(j, "evaluator");
  o.read("margin", cfg.margin);
  o.read("squared_hinge", cfg.squared_hinge);
  o.read("pixel_threshold", cfg.pixel_threshold);
  o.read("count_threshold_frac", cfg.count_threshold_frac);
  o.read("score_floor", cfg.score_floor);
  o.read("sigma_floor", cfg.sigma_floor);
  o.read("learning_rate", cfg.adam.lr);
  o.read("batch_pairs", cfg.batch_pairs);
  o.read("steps_per_trial", cfg.steps_per_trial);
  o.read("train_on_presample_pairs", cfg.train_on_presample_pairs);
  if (const json* p = o.child("pretrain")) {
    StrictObject po(*p, "evaluator.pretrain");
    po.read("optimum_count", cfg.pretrain.optimum_count);
    po.read("suboptimum_count", cfg.pretrain.suboptimum_count);
    po.read("optimum_along_jitter_cm", cfg.pretrain.optimum_along_jitter);
    po.read_degrees("optimum_angle_jitter_deg", cfg.pretrain.optimum_angle_jitter);
    po.read("sub_along_min_cm", cfg.pretrain.sub_along_min);
    po.read("sub_along_max_cm", cfg.pretrain.sub_along_max);
    po.read_degrees("sub_angle_min_deg", cfg.pretrain.sub_angle_min);
    po.read_degrees("sub_angle_max_deg", cfg.pretrain.sub_angle_max);
    po.read("max_steps", cfg.pretrain.max_steps);
    po.read("min_steps", cfg.pretrain.min_steps);
    po.read("batch_pairs", cfg.pretrain.batch_pairs);
    po.read("separation_target", cfg.pretrain.separation_target);
    po.finish();
  }
  o.finish();
  if (cfg.margin <= 0) throw ConfigError("config: evaluator.margin must be positive");
  if (cfg.score_floor <= 0 || cfg.score_floor > 1) {
    throw ConfigError("config: evaluator.score_floor must be in (0,1]");
  }
}

}  // namespace

std::string mode_name(Mode m) { return m == Mode::proposed ? "proposed" : "baseline"; }

Mode mode_from_name(const std::string& name) {
  if (name == "proposed") return Mode::proposed;
  if (name == "baseline") return Mode::baseline;
  throw ConfigError("unknown mode '" + name + "' (expected proposed or baseline)");
}

double RunConfig::optimum_offset() const {
  if (optimum_design == "left") return -design_offset_cm;
  if (optimum_design == "right") return design_offset_cm;
  return 0.0;
}

Config default_config() { return Config{}; }

Config parse_config_text(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: malformed JSON");
  Config cfg;
  StrictObject root(j, "");
  if (const json* p = root.child("run")) parse_run(*p, cfg.run);
  if (const json* p = root.child("scene")) parse_scene(*p, cfg.scene);
  if (const json* p = root.child("render")) parse_render(*p, cfg.render);
  if (const json* p = root.child("detector")) parse_detector(*p, cfg.detector);
  if (const json* p = root.child("evaluator")) parse_evaluator(*p, cfg.evaluator);
  root.finish();
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

std::string config_to_json_text(const Config& cfg) {
  json j;
  j["run"] = {{"n_env", cfg.run.n_env},
              {"n_trial", cfg.run.n_trial},
              {"n_obj", cfg.run.n_obj},
              {"mode", mode_name(cfg.run.mode)},
              {"seed", cfg.run.seed},
              {"object_kind", sim::object_kind_name(cfg.run.object_kind)},
              {"optimum_design", cfg.run.optimum_design},
              {"design_offset_cm", cfg.run.design_offset_cm},
              {"threads", cfg.run.threads},
              {"episode_attempt_cap", cfg.run.episode_attempt_cap},
              {"state_every", cfg.run.state_every},
              {"eval_scenes_per_count", cfg.run.eval_scenes_per_count},
              {"eval_max_objects", cfg.run.eval_max_objects}};
  j["scene"] = {{"workspace_cm", cfg.scene.workspace},
                {"object_length_cm", cfg.scene.object_length},
                {"object_radius_cm", cfg.scene.object_radius},
                {"bulge_radius_cm", cfg.scene.bulge_radius},
                {"clearance_cm", cfg.scene.clearance},
                {"max_place_attempts", cfg.scene.max_place_attempts},
                {"p_tol_cm", cfg.scene.p_tol},
                {"a_tol_deg", cfg.scene.a_tol / kDeg}};
  j["render"] = {{"top_resolution", cfg.render.top_resolution},
                 {"side_resolution", cfg.render.side_resolution},
                 {"side_span_cm", cfg.render.side_span},
                 {"noise_amplitude", cfg.render.noise_amplitude},
                 {"jitter_px", cfg.render.jitter_px}};
  j["detector"] = {{"channels", cfg.detector.channels},
                   {"grid1_box_px", cfg.detector.grid1_box_px},
                   {"grid2_box_px", cfg.detector.grid2_box_px},
                   {"gt_box_cm", cfg.detector.gt_box_cm},
                   {"match_iou", cfg.detector.match_iou},
                   {"conf_min", cfg.detector.conf_min},
                   {"nms_iou", cfg.detector.nms_iou},
                   {"loc_weight", cfg.detector.loc_weight},
                   {"conf_weight", cfg.detector.conf_weight},
                   {"theta_weight", cfg.detector.theta_weight},
                   {"score_weight", cfg.detector.score_weight},
                   {"alpha_rank", cfg.detector.alpha_rank_background ? "background" : "object"},
                   {"hard_negative_ratio", cfg.detector.hard_negative_ratio},
                   {"learning_rate", cfg.detector.adam.lr},
                   {"batch", cfg.detector.batch},
                   {"steps_per_trial", cfg.detector.steps_per_trial},
                   {"warmup_steps", cfg.detector.warmup_steps},
                   {"negative_fraction", cfg.detector.negative_fraction}};
  j["evaluator"] = {{"margin", cfg.evaluator.margin},
                    {"squared_hinge", cfg.evaluator.squared_hinge},
                    {"pixel_threshold", cfg.evaluator.pixel_threshold},
                    {"count_threshold_frac", cfg.evaluator.count_threshold_frac},
                    {"score_floor", cfg.evaluator.score_floor},
                    {"sigma_floor", cfg.evaluator.sigma_floor},
                    {"learning_rate", cfg.evaluator.adam.lr},
                    {"batch_pairs", cfg.evaluator.batch_pairs},
                    {"steps_per_trial", cfg.evaluator.steps_per_trial},
                    {"train_on_presample_pairs", cfg.evaluator.train_on_presample_pairs},
                    {"pretrain",
                     {{"optimum_count", cfg.evaluator.pretrain.optimum_count},
                      {"suboptimum_count", cfg.evaluator.pretrain.suboptimum_count},
                      {"optimum_along_jitter_cm", cfg.evaluator.pretrain.optimum_along_jitter},
                      {"optimum_angle_jitter_deg", cfg.evaluator.pretrain.optimum_angle_jitter / kDeg},
                      {"sub_along_min_cm", cfg.evaluator.pretrain.sub_along_min},
                      {"sub_along_max_cm", cfg.evaluator.pretrain.sub_along_max},
                      {"sub_angle_min_deg", cfg.evaluator.pretrain.sub_angle_min / kDeg},
                      {"sub_angle_max_deg", cfg.evaluator.pretrain.sub_angle_max / kDeg},
                      {"max_steps", cfg.evaluator.pretrain.max_steps},
                      {"min_steps", cfg.evaluator.pretrain.min_steps},
                      {"batch_pairs", cfg.evaluator.pretrain.batch_pairs},
                      {"separation_target", cfg.evaluator.pretrain.separation_target}}}};
  return j.dump(2) + "\n";
}

void write_config_echo(const Config& cfg, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw StateError("cannot open for writing: " + path);
  os << config_to_json_text(cfg);
}

}  // namespace grasp
