#include "grasplearn/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "grasplearn/errors.hpp"
#include "grasplearn/render.hpp"

namespace grasp::run {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

sim::GraspPose select_trial(const std::vector<det::Candidate>& candidates, int attempts_so_far,
                            const Config& cfg, Rng& rng, int* rank_used, bool* random_pose) {
  if (rank_used) *rank_used = -1;
  if (random_pose) *random_pose = false;
  if (attempts_so_far < cfg.run.n_trial &&
      attempts_so_far < static_cast<int>(candidates.size())) {
    if (rank_used) *rank_used = attempts_so_far;
    return candidates[attempts_so_far].pose;
  }
  if (random_pose) *random_pose = true;
  return {rng.uniform(0, cfg.scene.workspace), rng.uniform(0, cfg.scene.workspace),
          rng.uniform(0, kPi)};
}

TrainingState::TrainingState(const Config& config)
    : cfg(config),
      detector(config.render.top_resolution, config.scene.workspace, config.detector,
               derive_seed(config.run.seed, "detector-init")),
      embedder(config.render.side_resolution, config.evaluator.adam,
               derive_seed(config.run.seed, "embedder-init")),
      negatives(200),
      trial_rng(derive_seed(config.run.seed, "trials")),
      det_rng(derive_seed(config.run.seed, "detector-batches")),
      eval_rng(derive_seed(config.run.seed, "evaluator-batches")) {
  report.seed = config.run.seed;
  report.mode = mode_name(config.run.mode);
}

void TrainingState::seed_datasets() {
  if (presamples.samples.empty()) throw StateError("seed_datasets: pre-sample set is empty");
  eval::OptimumCache cache;
  for (const eval::PreSample& s : presamples.samples) {
    double score = 1.0;
    if (cfg.run.mode == Mode::proposed) {
      score = eval::grasp_score(s.side_image, presamples, embedder, cfg.evaluator, &cache);
      ++report.counters.grasp_score_calls;
    }
    data::TrialSample trial;
    trial.top_image = s.top_image;
    trial.pose = s.pose;
    trial.success = true;
    trial.score = score;
    trial.scene_object_count = 1;
    trial.trial_index = next_trial_index++;
    d1.add(std::move(trial));
    d2.add({s.side_image, next_trial_index - 1, s.optimum ? 0 : 1});
  }
}

namespace {

std::vector<det::DetectorNet::TrainSample> build_detector_batch(TrainingState& state) {
  const Config& cfg = state.cfg;
  std::vector<det::DetectorNet::TrainSample> batch;
  batch.reserve(cfg.detector.batch);
  for (int b = 0; b < cfg.detector.batch; ++b) {
    const bool use_negative = !state.negatives.empty() &&
                              state.det_rng.uniform() < cfg.detector.negative_fraction;
    det::DetectorNet::TrainSample sample;
    if (use_negative) {
      const auto& entry = state.negatives.at(state.det_rng.index(state.negatives.size()));
      sample.image = sim::augment(entry.image, state.det_rng, cfg.render);
      sample.has_gt = false;
      sample.S = 1.0;
      sample.K = cfg.run.mode == Mode::baseline ? 0 : std::max(0, entry.object_count - 1);
    } else {
      const auto& trial = state.d1.samples()[state.det_rng.index(state.d1.size())];
      sample.image = sim::augment(trial.top_image, state.det_rng, cfg.render);
      sample.has_gt = true;
      sample.pose = trial.pose;
      sample.S = cfg.run.mode == Mode::baseline ? 1.0 : trial.score;
      sample.K = cfg.run.mode == Mode::baseline ? 0 : std::max(0, trial.scene_object_count - 1);
    }
    batch.push_back(std::move(sample));
  }
  return batch;
}

// Post-trial (or warmup) detector burst; returns the mean total loss.
double detector_burst(TrainingState& state, int steps) {
  if (steps <= 0 || state.d1.empty()) return 0.0;
  double mean = 0;
  for (int s = 0; s < steps; ++s) {
    auto batch = build_detector_batch(state);
    const auto result = state.detector.train_step(batch, state.cfg.run.threads);
    ++state.report.counters.detector_steps;
    state.report.counters.damped_anchor_events += result.damped_events;
    mean += result.mean_total / steps;
    state.log.detector_step(state.detector.steps_taken(), result.mean_l_pos,
                            result.mean_weighted_neg, result.mean_total, result.mean_S,
                            result.mean_K);
    if (result.skipped) state.log.note("detector: " + result.diagnostic);
  }
  return mean;
}

double evaluator_burst(TrainingState& state, int steps) {
  if (steps <= 0 || state.d2.size() < 2) return 0.0;
  double mean = 0;
  for (int s = 0; s < steps; ++s) {
    const auto result = eval::train_pairs(state.embedder, state.d2, state.cfg.evaluator,
                                          state.cfg.render, state.eval_rng, state.cfg.run.threads);
    ++state.report.counters.evaluator_steps;
    mean += result.mean_loss / steps;
    state.log.evaluator_step(state.embedder.steps_taken(), result.mean_loss);
    if (result.skipped) state.log.note("evaluator: " + result.diagnostic);
  }
  return mean;
}

}  // namespace

void TrainingState::warmup_detector() {
  detector_burst(*this, cfg.detector.warmup_steps);
}

EpisodeRecord run_episode(TrainingState& state, int episode_index,
                          const CandidateProvider& provider) {
  const Config& cfg = state.cfg;
  if (cfg.run.mode == Mode::proposed && state.presamples.samples.empty()) {
    throw StateError("run_episode requires a pretrained evaluator and pre-samples");
  }
  const uint64_t scene_seed = derive_seed(cfg.run.seed, "scene", static_cast<uint64_t>(episode_index));
  sim::Scene scene = sim::reset_scene(cfg.run.n_obj, cfg.run.object_kind, scene_seed, cfg.scene,
                                      cfg.run.optimum_offset());

  EpisodeRecord record;
  record.episode = episode_index;
  record.scene_seed = scene_seed;

  eval::OptimumCache score_cache;
  int remaining = scene.object_count();
  int attempts_since_success = 0;
  while (remaining > 0) {
    if (record.trials >= cfg.run.episode_attempt_cap) {
      record.aborted = true;
      ++state.report.counters.aborted_episodes;
      state.log.note("episode " + std::to_string(episode_index) + " aborted at attempt cap");
      break;
    }
    const nn::Tensor top_image = sim::render_top(scene, cfg.render);
    const std::vector<det::Candidate> candidates =
        provider ? provider(scene, top_image) : state.detector.predict(top_image);
    int rank_used = -1;
    bool random_pose = false;
    const sim::GraspPose pose =
        select_trial(candidates, attempts_since_success, cfg, state.trial_rng, &rank_used, &random_pose);
    if (attempts_since_success < cfg.run.n_trial) ++attempts_since_success;

    auto [outcome, next_scene] = sim::execute_grasp(scene, pose, cfg.scene);
    TrialRecord trial;
    trial.episode = episode_index;
    trial.trial_index = state.next_trial_index++;
    trial.pose = pose;
    trial.success = outcome.success;
    trial.rank_used = rank_used;
    trial.random_pose = random_pose;
    trial.object_count = scene.object_count();
    ++record.trials;
    ++state.report.counters.trials;

    if (outcome.success) {
      const nn::Tensor side_image = sim::render_side(scene, outcome, cfg.render);
      double score = 1.0;
      if (cfg.run.mode == Mode::proposed) {
        score = eval::grasp_score(side_image, state.presamples, state.embedder, cfg.evaluator,
                                  &score_cache);
        ++state.report.counters.grasp_score_calls;
      }
      trial.score = score;
      trial.errors = outcome.errors;

      data::TrialSample d1_sample;
      d1_sample.top_image = top_image;
      d1_sample.pose = pose;
      d1_sample.success = true;
      d1_sample.score = score;
      d1_sample.scene_object_count = scene.object_count();
      d1_sample.trial_index = trial.trial_index;
      state.d1.add(std::move(d1_sample));
      state.d2.add({side_image, trial.trial_index, -1});

      scene = std::move(next_scene);
      --remaining;
      attempts_since_success = 0;
      ++record.successes;
      ++state.report.counters.successes;

      trial.detector_loss = detector_burst(state, cfg.detector.steps_per_trial);
      if (cfg.run.mode == Mode::proposed) {
        trial.evaluator_loss = evaluator_burst(state, cfg.evaluator.steps_per_trial);
      }
    } else {
      state.negatives.add(top_image, scene.object_count());
    }
    state.report.trials.push_back(trial);
  }
  state.report.episodes.push_back(record);
  return record;
}

RunReport run_training(TrainingState& state, const std::string& run_dir) {
  namespace fs = std::filesystem;
  const Config& cfg = state.cfg;
  const bool persist = !run_dir.empty();
  if (persist) {
    fs::create_directories(fs::path(run_dir) / "checkpoints");
    write_config_echo(cfg, (fs::path(run_dir) / "config.echo.json").string());
    state.log = TrainingLog((fs::path(run_dir) / "training_log.jsonl").string());
  }

  const int start_episode = state.episodes_done;
  if (start_episode == 0) {
    if (state.d1.empty()) state.seed_datasets();
    state.warmup_detector();
  }

  for (int episode = start_episode; episode < cfg.run.n_env; ++episode) {
    EpisodeRecord record = run_episode(state, episode);
    if (cfg.run.mode == Mode::proposed) {
      record.rescored = eval::rescore_dataset(state.d1, state.d2, state.presamples, state.embedder,
                                              cfg.evaluator);
      state.report.counters.grasp_score_calls += static_cast<int64_t>(record.rescored);
      state.report.episodes.back().rescored = record.rescored;
    }
    state.episodes_done = episode + 1;
    if (persist && cfg.run.state_every > 0 && (episode + 1) % cfg.run.state_every == 0 &&
        episode + 1 < cfg.run.n_env) {
      save_training_state(state, (fs::path(run_dir) / "checkpoints" / "state.bin").string(),
                          (fs::path(run_dir) / "checkpoints" / "state.json").string());
    }
  }

  if (persist) {
    nn::TensorFile det_file;
    state.detector.pack(det_file, false);
    det_file.save((fs::path(run_dir) / "checkpoints" / "detector.bin").string());
    nn::TensorFile emb_file;
    state.embedder.pack(emb_file, false);
    emb_file.save((fs::path(run_dir) / "checkpoints" / "embedder.bin").string());
    write_run_report(state.report, (fs::path(run_dir) / "report.jsonl").string());
  }
  return state.report;
}

EvalTable evaluate(const det::DetectorNet& detector, const Config& cfg,
                   const CandidateProvider& provider) {
  EvalTable table;
  for (int n = 1; n <= cfg.run.eval_max_objects; ++n) {
    EvalRow row;
    row.objects = n;
    for (int s = 0; s < cfg.run.eval_scenes_per_count; ++s) {
      const uint64_t seed =
          derive_seed(cfg.run.seed, "eval-scene", static_cast<uint64_t>(n) * 1000 + s);
      const sim::Scene scene =
          sim::reset_scene(n, cfg.run.object_kind, seed, cfg.scene, cfg.run.optimum_offset());
      const nn::Tensor image = sim::render_top(scene, cfg.render);
      const std::vector<det::Candidate> candidates =
          provider ? provider(scene, image) : detector.predict(image);
      sim::GraspPose pose;
      if (!candidates.empty()) {
        pose = candidates.front().pose;
      } else {
        Rng rng(derive_seed(seed, "eval-fallback"));
        pose = {rng.uniform(0, cfg.scene.workspace), rng.uniform(0, cfg.scene.workspace),
                rng.uniform(0, kPi)};
      }
      const auto [outcome, next] = sim::execute_grasp(scene, pose, cfg.scene);
      ++row.trials;
      row.cond1 += sim::oracle_eval(outcome, 1) ? 1 : 0;
      row.cond2 += sim::oracle_eval(outcome, 2) ? 1 : 0;
    }
    table.total_trials += row.trials;
    table.total_cond1 += row.cond1;
    table.total_cond2 += row.cond2;
    table.rows.push_back(row);
  }
  return table;
}

std::string eval_table_csv(const EvalTable& table) {
  std::ostringstream os;
  os << "# grasplearn evaluation v1\n";
  os << "objects,trials,cond1_successes,cond2_successes,cond1_rate,cond2_rate\n";
  auto emit = [&os](const std::string& label, int trials, int c1, int c2) {
    os << label << "," << trials << "," << c1 << "," << c2 << ",";
    os << (trials ? static_cast<double>(c1) / trials : 0.0) << ",";
    os << (trials ? static_cast<double>(c2) / trials : 0.0) << "\n";
  };
  for (const EvalRow& row : table.rows) {
    emit(std::to_string(row.objects), row.trials, row.cond1, row.cond2);
  }
  emit("all", table.total_trials, table.total_cond1, table.total_cond2);
  return os.str();
}

namespace {

nn::Tensor stack_images(const std::vector<const nn::Tensor*>& images) {
  if (images.empty()) return nn::Tensor({1});
  std::vector<int> shape = images[0]->shape;
  shape.insert(shape.begin(), static_cast<int>(images.size()));
  nn::Tensor out(shape);
  const size_t stride = images[0]->data.size();
  for (size_t i = 0; i < images.size(); ++i) {
    std::copy(images[i]->data.begin(), images[i]->data.end(), out.data.begin() + i * stride);
  }
  return out;
}

std::vector<nn::Tensor> unstack_images(const nn::Tensor& stacked) {
  std::vector<nn::Tensor> out;
  if (stacked.shape.size() < 2) return out;
  std::vector<int> shape(stacked.shape.begin() + 1, stacked.shape.end());
  const size_t stride = static_cast<size_t>(nn::shape_size(shape));
  for (int i = 0; i < stacked.shape[0]; ++i) {
    nn::Tensor t(shape);
    std::copy(stacked.data.begin() + i * stride, stacked.data.begin() + (i + 1) * stride,
              t.data.begin());
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

void save_training_state(const TrainingState& state, const std::string& tensor_path,
                         const std::string& meta_path) {
  nn::TensorFile file;
  state.detector.pack(file, true);
  state.embedder.pack(file, true);

  nlohmann::json meta;
  meta["version"] = 1;
  meta["episodes_done"] = state.episodes_done;
  meta["next_trial_index"] = state.next_trial_index;
  meta["sigma"] = state.presamples.sigma;
  meta["rng"] = {{"trial", state.trial_rng.serialize()},
                 {"detector", state.det_rng.serialize()},
                 {"evaluator", state.eval_rng.serialize()}};

  std::vector<const nn::Tensor*> d1_images;
  meta["d1"] = nlohmann::json::array();
  for (const auto& s : state.d1.samples()) {
    d1_images.push_back(&s.top_image);
    meta["d1"].push_back({{"x", s.pose.x},
                          {"y", s.pose.y},
                          {"theta", s.pose.theta},
                          {"success", s.success},
                          {"score", s.score},
                          {"objects", s.scene_object_count},
                          {"t", s.trial_index}});
  }
  file.put("state.d1.images", stack_images(d1_images));

  std::vector<const nn::Tensor*> d2_images;
  meta["d2"] = nlohmann::json::array();
  for (const auto& e : state.d2.entries()) {
    d2_images.push_back(&e.side_image);
    meta["d2"].push_back({{"t", e.trial_index}, {"class", e.presample_class}});
  }
  file.put("state.d2.images", stack_images(d2_images));

  std::vector<const nn::Tensor*> neg_images;
  meta["negatives"] = nlohmann::json::array();
  for (size_t i = 0; i < state.negatives.size(); ++i) {
    neg_images.push_back(&state.negatives.at(i).image);
    meta["negatives"].push_back({{"objects", state.negatives.at(i).object_count}});
  }
  if (!neg_images.empty()) file.put("state.negatives.images", stack_images(neg_images));

  // Report so far (so a resumed run reproduces the full report).
  const std::string report_path = tensor_path + ".report";
  write_run_report(state.report, report_path);
  meta["report_file"] = report_path;

  file.save(tensor_path);
  std::ofstream os(meta_path, std::ios::trunc);
  if (!os) throw StateError("cannot open for writing: " + meta_path);
  os << meta.dump() << "\n";
}

void load_training_state(TrainingState& state, const std::string& tensor_path,
                         const std::string& meta_path) {
  std::ifstream is(meta_path);
  if (!is) throw StateError("missing training state metadata: " + meta_path);
  nlohmann::json meta = nlohmann::json::parse(is, nullptr, false);
  if (meta.is_discarded()) throw StateError("malformed training state metadata: " + meta_path);
  const nn::TensorFile file = nn::TensorFile::load(tensor_path);

  state.detector.unpack(file, true);
  state.embedder.unpack(file, true);
  state.episodes_done = meta.at("episodes_done").get<int>();
  state.next_trial_index = 0;
  state.presamples.sigma = meta.at("sigma").get<double>();
  state.trial_rng.deserialize(meta.at("rng").at("trial").get<std::string>());
  state.det_rng.deserialize(meta.at("rng").at("detector").get<std::string>());
  state.eval_rng.deserialize(meta.at("rng").at("evaluator").get<std::string>());

  state.d1 = data::DetectionDataset();
  auto d1_images = unstack_images(file.get("state.d1.images"));
  const auto& d1_meta = meta.at("d1");
  for (size_t i = 0; i < d1_images.size(); ++i) {
    data::TrialSample s;
    s.top_image = std::move(d1_images[i]);
    s.pose = {d1_meta[i].at("x").get<double>(), d1_meta[i].at("y").get<double>(),
              d1_meta[i].at("theta").get<double>()};
    s.success = d1_meta[i].at("success").get<bool>();
    s.score = d1_meta[i].at("score").get<double>();
    s.scene_object_count = d1_meta[i].at("objects").get<int>();
    s.trial_index = d1_meta[i].at("t").get<int64_t>();
    state.d1.add(std::move(s));
  }

  state.d2 = data::PairDataset();
  auto d2_images = unstack_images(file.get("state.d2.images"));
  const auto& d2_meta = meta.at("d2");
  for (size_t i = 0; i < d2_images.size(); ++i) {
    state.d2.add({std::move(d2_images[i]), d2_meta[i].at("t").get<int64_t>(),
                  d2_meta[i].at("class").get<int>()});
  }

  state.negatives = data::NegativePool(200);
  if (file.contains("state.negatives.images")) {
    auto neg_images = unstack_images(file.get("state.negatives.images"));
    const auto& neg_meta = meta.at("negatives");
    for (size_t i = 0; i < neg_images.size(); ++i) {
      state.negatives.add(std::move(neg_images[i]), neg_meta[i].at("objects").get<int>());
    }
  }

  state.next_trial_index = meta.at("next_trial_index").get<int64_t>();
  state.report = read_run_report(meta.at("report_file").get<std::string>());
}

}  // namespace grasp::run
