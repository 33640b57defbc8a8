#include "grasplearn/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "grasplearn/config.hpp"
#include "grasplearn/errors.hpp"
#include "grasplearn/orchestrator.hpp"
#include "grasplearn/svg.hpp"

namespace grasp::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

int guard(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const StateError& e) {
    std::cerr << "state error: " << e.what() << "\n";
    return kExitState;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

Config load_or_default(const std::string& config_path) {
  if (config_path.empty()) return default_config();
  return load_config(config_path);
}

// Loads the effective config of an existing run directory, preferring an
// explicit override path.
Config run_dir_config(const std::string& run_dir, const std::string& override_path) {
  if (!override_path.empty()) return load_config(override_path);
  const fs::path echo = fs::path(run_dir) / "config.echo.json";
  if (!fs::exists(echo)) {
    throw StateError("run directory has no config.echo.json (looked at " + echo.string() +
                     "); pass an explicit config");
  }
  return load_config(echo.string());
}

struct PresampleArtifacts {
  fs::path dir, tensors, meta, embedder, report, echo;

  explicit PresampleArtifacts(const std::string& run_dir) {
    dir = fs::path(run_dir) / "presamples";
    tensors = dir / "presamples.bin";
    meta = dir / "meta.json";
    embedder = dir / "embedder.bin";
    report = dir / "pretrain_report.json";
    echo = dir / "config.echo.json";
  }

  bool complete() const {
    return fs::exists(tensors) && fs::exists(meta) && fs::exists(embedder);
  }
};

}  // namespace

int cmd_pretrain(const PretrainArgs& args) {
  return guard([&] {
    Config cfg = load_or_default(args.config_path);
    if (args.seed) cfg.run.seed = *args.seed;
    if (args.optimum_design) {
      cfg.run.optimum_design = *args.optimum_design;
      if (cfg.run.optimum_design != "center" && cfg.run.optimum_design != "left" &&
          cfg.run.optimum_design != "right") {
        throw ConfigError("optimum design must be center, left or right");
      }
    }
    PresampleArtifacts artifacts(args.run_dir);
    fs::create_directories(artifacts.dir);
    write_config_echo(cfg, artifacts.echo.string());

    eval::PreSampleSet set =
        eval::generate_presamples(cfg.scene, cfg.render, cfg.evaluator, cfg.run.object_kind,
                                  cfg.run.optimum_offset(), cfg.run.seed);
    eval::EmbedderNet net(cfg.render.side_resolution, cfg.evaluator.adam,
                          derive_seed(cfg.run.seed, "embedder-init"));
    const eval::PretrainReport report =
        eval::pretrain(set, net, cfg.evaluator, cfg.render, cfg.run.seed, cfg.run.threads);

    eval::save_presamples(set, artifacts.tensors.string(), artifacts.meta.string());
    nn::TensorFile emb;
    net.pack(emb, true);
    emb.save(artifacts.embedder.string());

    nlohmann::json jr = {{"steps", report.steps},
                         {"intra_optimum", report.separation.intra_optimum},
                         {"inter_class", report.separation.inter_class},
                         {"separation_ratio", report.separation.ratio},
                         {"sigma", report.sigma},
                         {"samples", set.samples.size()},
                         {"optimum_design", cfg.run.optimum_design}};
    std::ofstream os(artifacts.report);
    os << jr.dump(2) << "\n";

    if (args.dump_images) {
      const fs::path img_dir = artifacts.dir / "images";
      fs::create_directories(img_dir);
      for (size_t i = 0; i < set.samples.size(); ++i) {
        const auto& s = set.samples[i];
        const std::string stem = (s.optimum ? "optimum_" : "suboptimum_") + std::to_string(i);
        sim::write_ppm(s.top_image, (img_dir / (stem + "_top.ppm")).string());
        sim::write_ppm(s.side_image, (img_dir / (stem + "_side.ppm")).string());
      }
    }

    std::cout << "pretrained on " << set.samples.size() << " pre-samples in " << report.steps
              << " steps; separation ratio " << report.separation.ratio << ", sigma " << report.sigma
              << "\n";
  });
}

int cmd_train(const TrainArgs& args) {
  return guard([&] {
    PresampleArtifacts artifacts(args.run_dir);
    Config cfg;
    if (!args.config_path.empty()) {
      cfg = load_config(args.config_path);
    } else if (fs::exists(artifacts.echo)) {
      cfg = load_config(artifacts.echo.string());
    } else {
      cfg = default_config();
    }
    if (args.seed) cfg.run.seed = *args.seed;
    if (args.mode) cfg.run.mode = mode_from_name(*args.mode);

    if (!artifacts.complete()) {
      throw StateError("run directory '" + args.run_dir +
                       "' has no pre-sample artifacts; run the pretrain command first");
    }

    run::TrainingState state(cfg);
    state.presamples = eval::load_presamples(artifacts.tensors.string(), artifacts.meta.string());
    {
      const nn::TensorFile emb = nn::TensorFile::load(artifacts.embedder.string());
      state.embedder.unpack(emb, true);
    }

    const fs::path state_bin = fs::path(args.run_dir) / "checkpoints" / "state.bin";
    const fs::path state_meta = fs::path(args.run_dir) / "checkpoints" / "state.json";
    if (args.resume) {
      if (!fs::exists(state_bin) || !fs::exists(state_meta)) {
        throw StateError("--resume requested but no saved state under " +
                         (fs::path(args.run_dir) / "checkpoints").string());
      }
      run::load_training_state(state, state_bin.string(), state_meta.string());
      std::cout << "resuming after episode " << state.episodes_done << "\n";
    }

    const run::RunReport report = run::run_training(state, args.run_dir);
    std::cout << "run complete: " << report.counters.successes << " successes in "
              << report.counters.trials << " trials over " << report.episodes.size()
              << " episodes; detector steps " << report.counters.detector_steps
              << ", evaluator steps " << report.counters.evaluator_steps << "\n";
    if (report.counters.aborted_episodes > 0) {
      std::cout << "warning: " << report.counters.aborted_episodes
                << " episode(s) hit the attempt cap\n";
    }
  });
}

int cmd_evaluate(const EvaluateArgs& args) {
  return guard([&] {
    if (args.condition != "1" && args.condition != "2" && args.condition != "both") {
      throw ConfigError("condition must be 1, 2 or both");
    }
    Config cfg = run_dir_config(args.run_dir, args.config_path);
    const fs::path ckpt = fs::path(args.run_dir) / "checkpoints" / "detector.bin";
    if (!fs::exists(ckpt)) {
      throw StateError("no detector checkpoint at " + ckpt.string());
    }
    det::DetectorNet detector(cfg.render.top_resolution, cfg.scene.workspace, cfg.detector,
                              derive_seed(cfg.run.seed, "detector-init"));
    detector.unpack(nn::TensorFile::load(ckpt.string()), false);

    const run::EvalTable table = run::evaluate(detector, cfg);

    const bool show1 = args.condition != "2";
    const bool show2 = args.condition != "1";
    std::cout << "objects  trials";
    if (show1) std::cout << "  cond1_rate";
    if (show2) std::cout << "  cond2_rate";
    std::cout << "\n";
    auto print_row = [&](const std::string& label, int trials, double r1, double r2) {
      std::cout << label << "  " << trials;
      if (show1) std::cout << "  " << r1;
      if (show2) std::cout << "  " << r2;
      std::cout << "\n";
    };
    for (const auto& row : table.rows) {
      print_row(std::to_string(row.objects), row.trials, row.rate1(), row.rate2());
    }
    print_row("all", table.total_trials, table.rate1(), table.rate2());

    const fs::path csv = fs::path(args.run_dir) / "evaluation.csv";
    std::ofstream os(csv, std::ios::trunc);
    if (!os) throw StateError("cannot open for writing: " + csv.string());
    os << run::eval_table_csv(table);
  });
}

int cmd_export_features(const ExportFeaturesArgs& args) {
  return guard([&] {
    Config cfg = run_dir_config(args.run_dir, args.config_path);
    PresampleArtifacts artifacts(args.run_dir);
    if (!artifacts.complete()) {
      throw StateError("run directory has no pre-sample artifacts; run the pretrain command first");
    }
    eval::PreSampleSet presamples =
        eval::load_presamples(artifacts.tensors.string(), artifacts.meta.string());
    eval::EmbedderNet net(cfg.render.side_resolution, cfg.evaluator.adam,
                          derive_seed(cfg.run.seed, "embedder-init"));
    const fs::path trained = fs::path(args.run_dir) / "checkpoints" / "embedder.bin";
    const fs::path source = fs::exists(trained) ? trained : artifacts.embedder;
    net.unpack(nn::TensorFile::load(source.string()), false);

    // Probe grasps: center, slightly-left and distant-right groups, embedded
    // and scored against the optimum anchor.
    struct Probe {
      int group;
      double along, angle;
    };
    std::vector<Probe> probes;
    Rng rng(derive_seed(cfg.run.seed, "feature-probes"));
    const double seg_limit = cfg.scene.object_length / 2.0 - cfg.scene.object_radius - 0.25;
    for (int g = 0; g < 3; ++g) {
      const double center = g == 0 ? 0.0 : (g == 1 ? -2.0 : 4.0);
      for (int i = 0; i < args.probes_per_group; ++i) {
        Probe p;
        p.group = g;
        p.along = std::clamp(center + rng.uniform(-0.75, 0.75), -seg_limit, seg_limit);
        p.angle = rng.uniform(-2.0, 2.0) * kPi / 180.0;
        probes.push_back(p);
      }
    }

    sim::SimObject prototype;
    prototype.kind = cfg.run.object_kind;
    prototype.length = cfg.scene.object_length;
    prototype.radius = cfg.scene.object_radius;
    prototype.bulge = cfg.scene.bulge_radius;

    eval::OptimumCache cache;
    const fs::path csv_path = fs::path(args.run_dir) / "features.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw StateError("cannot open for writing: " + csv_path.string());
    csv << "# grasplearn features v1\n";
    csv << "probe_id,group,v1,v2,true_along_error,true_angle_error,S\n";
    std::vector<ScatterPoint> points;
    for (size_t i = 0; i < probes.size(); ++i) {
      const Probe& p = probes[i];
      const nn::Tensor img = sim::render_side_errors(prototype, p.along, p.angle, cfg.render);
      const eval::Embedding e = net.embed(img);
      const double s = eval::grasp_score(img, presamples, net, cfg.evaluator, &cache);
      csv << i << "," << p.group << "," << e.v[0] << "," << e.v[1] << "," << p.along << ","
          << p.angle << "," << s << "\n";
      points.push_back({e.v[0], e.v[1], p.group});
    }
    write_scatter_svg((fs::path(args.run_dir) / "features.svg").string(), points,
                      {{"center grasp", "#3465a4"},
                       {"slightly left", "#4e9a06"},
                       {"distant right", "#cc0000"}},
                      "embedding space of side-view grasps");
    std::cout << "exported " << probes.size() << " probes to " << csv_path.string() << "\n";
  });
}

int cmd_replay(const ReplayArgs& args) {
  return guard([&] {
    Config cfg = run_dir_config(args.run_dir, args.config_path);
    const fs::path report_path = fs::path(args.run_dir) / "report.jsonl";
    const run::RunReport report = run::read_run_report(report_path.string());

    size_t verified = 0, mismatches = 0;
    size_t cursor = 0;
    for (const run::EpisodeRecord& episode : report.episodes) {
      sim::Scene scene = sim::reset_scene(cfg.run.n_obj, cfg.run.object_kind, episode.scene_seed,
                                          cfg.scene, cfg.run.optimum_offset());
      for (; cursor < report.trials.size() &&
             report.trials[cursor].episode == episode.episode;
           ++cursor) {
        const run::TrialRecord& t = report.trials[cursor];
        auto [outcome, next] = sim::execute_grasp(scene, t.pose, cfg.scene);
        bool ok = outcome.success == t.success;
        if (ok && outcome.success && t.errors) {
          ok = outcome.errors->along_axis == t.errors->along_axis &&
               outcome.errors->perpendicular == t.errors->perpendicular &&
               outcome.errors->angle == t.errors->angle;
        }
        if (!ok) {
          ++mismatches;
          std::cerr << "mismatch at trial " << t.trial_index << " (episode " << t.episode << ")\n";
        } else {
          ++verified;
        }
        if (outcome.success) scene = std::move(next);
      }
    }
    std::cout << "replay verified " << verified << " trials";
    if (mismatches) std::cout << ", " << mismatches << " mismatches";
    std::cout << "\n";
    if (mismatches) throw NumericError("replay found " + std::to_string(mismatches) + " mismatches");
  });
}

}  // namespace grasp::cli
