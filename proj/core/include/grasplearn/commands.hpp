#pragma once

#include <optional>
#include <string>

namespace grasp::cli {

struct PretrainArgs {
  std::string config_path;  // optional: empty = built-in defaults
  std::string run_dir;
  std::optional<uint64_t> seed;
  std::optional<std::string> optimum_design;  // center | left | right
  bool dump_images = false;
};

struct TrainArgs {
  std::string config_path;
  std::string run_dir;
  std::optional<uint64_t> seed;
  std::optional<std::string> mode;  // proposed | baseline
  bool resume = false;
};

struct EvaluateArgs {
  std::string run_dir;
  std::string config_path;  // optional override; default = run dir echo
  std::string condition = "both";  // 1 | 2 | both
};

struct ExportFeaturesArgs {
  std::string run_dir;
  std::string config_path;  // optional override
  int probes_per_group = 60;
};

struct ReplayArgs {
  std::string run_dir;
  std::string config_path;  // optional override
};

// Each command returns a process exit code (see errors.hpp) and reports
// problems on stderr.
int cmd_pretrain(const PretrainArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_evaluate(const EvaluateArgs& args);
int cmd_export_features(const ExportFeaturesArgs& args);
int cmd_replay(const ReplayArgs& args);

}  // namespace grasp::cli
