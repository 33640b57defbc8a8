// Command line front end: pretrain / train / evaluate / export-features /
// replay subcommands over a run directory.

#include <CLI11.hpp>

#include <optional>
#include <string>

#include "grasplearn/commands.hpp"
#include "grasplearn/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"grasplearn: online self-supervised grasp-position learning in a 2-D simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir = "run";
  std::optional<uint64_t> seed;

  grasp::cli::PretrainArgs pretrain_args;
  grasp::cli::TrainArgs train_args;
  grasp::cli::EvaluateArgs eval_args;
  grasp::cli::ExportFeaturesArgs export_args;
  grasp::cli::ReplayArgs replay_args;

  auto add_common = [&](CLI::App* cmd, bool with_config = true) {
    if (with_config) {
      cmd->add_option("--config", config_path, "JSON config file")
          ->envname("GRASPLEARN_CONFIG")
          ->check(CLI::ExistingFile);
    }
    cmd->add_option("--run", run_dir, "run directory")->envname("GRASPLEARN_RUN");
    cmd->add_option("--seed", seed, "master seed override")->envname("GRASPLEARN_SEED");
  };

  CLI::App* pretrain = app.add_subcommand(
      "pretrain", "generate the designed pre-samples and pretrain the evaluator");
  add_common(pretrain);
  std::string design;
  pretrain->add_option("--optimum-offset", design,
                       "optimum grasp design: center, left or right")
      ->check(CLI::IsMember({"center", "left", "right"}));
  pretrain->add_flag("--dump-images", pretrain_args.dump_images,
                     "write pre-sample renders as PPM files");

  CLI::App* train = app.add_subcommand("train", "run the online self-supervised training loop");
  add_common(train);
  std::string mode;
  train->add_option("--mode", mode, "training mode: proposed or baseline")
      ->check(CLI::IsMember({"proposed", "baseline"}));
  train->add_flag("--resume", train_args.resume, "resume from the last saved state");

  CLI::App* evaluate = app.add_subcommand("evaluate", "success-rate table on fresh scenes");
  add_common(evaluate);
  evaluate->add_option("--condition", eval_args.condition, "evaluation condition: 1, 2 or both")
      ->check(CLI::IsMember({"1", "2", "both"}));

  CLI::App* export_features =
      app.add_subcommand("export-features", "embed probe grasps and write CSV + SVG scatter");
  add_common(export_features);
  export_features->add_option("--probes-per-group", export_args.probes_per_group,
                              "probe grasps per group");

  CLI::App* replay = app.add_subcommand("replay", "re-execute a run report against the simulator");
  add_common(replay);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Configuration-class failure: bad flags, missing files, usage.
    const int rc = app.exit(e);
    return rc == 0 ? 0 : grasp::kExitConfig;
  }

  if (pretrain->parsed()) {
    pretrain_args.config_path = config_path;
    pretrain_args.run_dir = run_dir;
    pretrain_args.seed = seed;
    if (!design.empty()) pretrain_args.optimum_design = design;
    return grasp::cli::cmd_pretrain(pretrain_args);
  }
  if (train->parsed()) {
    train_args.config_path = config_path;
    train_args.run_dir = run_dir;
    train_args.seed = seed;
    if (!mode.empty()) train_args.mode = mode;
    return grasp::cli::cmd_train(train_args);
  }
  if (evaluate->parsed()) {
    eval_args.run_dir = run_dir;
    eval_args.config_path = config_path;
    return grasp::cli::cmd_evaluate(eval_args);
  }
  if (export_features->parsed()) {
    export_args.run_dir = run_dir;
    export_args.config_path = config_path;
    return grasp::cli::cmd_export_features(export_args);
  }
  if (replay->parsed()) {
    replay_args.run_dir = run_dir;
    replay_args.config_path = config_path;
    return grasp::cli::cmd_replay(replay_args);
  }
  return grasp::kExitConfig;
}
