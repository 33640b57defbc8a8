#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "grasplearn/config.hpp"
#include "grasplearn/dataset.hpp"
#include "grasplearn/detector.hpp"
#include "grasplearn/evaluator.hpp"
#include "grasplearn/report.hpp"

namespace grasp::run {

// Seam for tests: produce ranked grasp candidates for a scene's top image.
// The default provider is DetectorNet::predict on a parameter snapshot.
using CandidateProvider =
    std::function<std::vector<det::Candidate>(const sim::Scene&, const nn::Tensor& top_image)>;

// Trial selection: ranked candidates while attempts_so_far stays below the
// trial budget (falling back to a random pose when the list is exhausted),
// uniform random poses afterwards.
sim::GraspPose select_trial(const std::vector<det::Candidate>& candidates, int attempts_so_far,
                            const Config& cfg, Rng& rng, int* rank_used = nullptr,
                            bool* random_pose = nullptr);

// Everything live during one training run.
struct TrainingState {
  explicit TrainingState(const Config& cfg);

  Config cfg;
  det::DetectorNet detector;
  eval::EmbedderNet embedder;
  eval::PreSampleSet presamples;
  data::DetectionDataset d1;
  data::PairDataset d2;
  data::NegativePool negatives;
  Rng trial_rng;
  Rng det_rng;
  Rng eval_rng;
  int64_t next_trial_index = 0;
  int episodes_done = 0;
  RunReport report;
  TrainingLog log;  // optional; default-constructed writes nothing

  // Seeds D1/D2 with the designed pre-samples (scores via the evaluator in
  // proposed mode, 1.0 in baseline mode).
  void seed_datasets();
  void warmup_detector();
};

// One environment pass: place objects, pick until the workspace is empty
// (or the attempt cap trips), training after every success.
EpisodeRecord run_episode(TrainingState& state, int episode_index,
                          const CandidateProvider& provider = {});

// Full pipeline: seed datasets, warm up, run n_env episodes with per-episode
// rescoring, write checkpoints/report/logs into run_dir (when non-empty).
RunReport run_training(TrainingState& state, const std::string& run_dir);

struct EvalRow {
  int objects = 0;
  int trials = 0;
  int cond1 = 0;
  int cond2 = 0;

  double rate1() const { return trials ? static_cast<double>(cond1) / trials : 0; }
  double rate2() const { return trials ? static_cast<double>(cond2) / trials : 0; }
};

struct EvalTable {
  std::vector<EvalRow> rows;
  int total_trials = 0;
  int total_cond1 = 0;
  int total_cond2 = 0;

  double rate1() const { return total_trials ? static_cast<double>(total_cond1) / total_trials : 0; }
  double rate2() const { return total_trials ? static_cast<double>(total_cond2) / total_trials : 0; }
};

// Evaluation protocol: for each object count 1..eval_max_objects, run
// eval_scenes_per_count fresh scenes; in each, execute the top-scored
// candidate once and judge under both conditions.
EvalTable evaluate(const det::DetectorNet& detector, const Config& cfg,
                   const CandidateProvider& provider = {});

std::string eval_table_csv(const EvalTable& table);

// Resumable state (tensor container + JSON sidecar).
void save_training_state(const TrainingState& state, const std::string& tensor_path,
                         const std::string& meta_path);
void load_training_state(TrainingState& state, const std::string& tensor_path,
                         const std::string& meta_path);

}  // namespace grasp::run
