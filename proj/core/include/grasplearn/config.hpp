#pragma once

#include <cstdint>
#include <string>

#include "grasplearn/detector.hpp"
#include "grasplearn/evaluator.hpp"
#include "grasplearn/render.hpp"
#include "grasplearn/scene.hpp"

namespace grasp {

enum class Mode { proposed, baseline };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& name);

struct RunConfig {
  int n_env = 50;
  int n_trial = 5;
  int n_obj = 5;
  Mode mode = Mode::proposed;
  uint64_t seed = 1;
  sim::ObjectKind object_kind = sim::ObjectKind::cylinder;
  // Optimum design: where on the object the designed grasp sits.
  std::string optimum_design = "center";  // center | left | right
  double design_offset_cm = 3.0;
  int threads = 2;
  int episode_attempt_cap = 200;
  int state_every = 10;  // resumable-state interval in episodes; 0 disables
  int eval_scenes_per_count = 20;
  int eval_max_objects = 5;

  double optimum_offset() const;
};

struct Config {
  RunConfig run;
  sim::SceneConfig scene;
  sim::RenderConfig render;
  det::DetectorConfig detector;
  eval::EvaluatorConfig evaluator;
};

Config default_config();

// Strict JSON parsing: unknown keys anywhere are rejected; values are
// validated against basic invariants.
Config parse_config_text(const std::string& json_text);
Config load_config(const std::string& path);
std::string config_to_json_text(const Config& cfg);
void write_config_echo(const Config& cfg, const std::string& path);

}  // namespace grasp
