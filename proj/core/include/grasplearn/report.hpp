#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "grasplearn/scene.hpp"

namespace grasp::run {

struct TrialRecord {
  int episode = 0;
  int64_t trial_index = 0;
  sim::GraspPose pose;
  bool success = false;
  std::optional<double> score;  // S, successes only
  std::optional<sim::GraspErrors> errors;
  int rank_used = -1;       // candidate rank consumed, -1 for random pose
  bool random_pose = false;
  int object_count = 0;     // objects present before the attempt
  double detector_loss = 0; // mean total loss of the post-trial burst
  double evaluator_loss = 0;
};

struct EpisodeRecord {
  int episode = 0;
  uint64_t scene_seed = 0;
  int trials = 0;
  int successes = 0;
  bool aborted = false;
  size_t rescored = 0;
};

struct RunCounters {
  int64_t trials = 0;
  int64_t successes = 0;
  int64_t detector_steps = 0;
  int64_t evaluator_steps = 0;
  int64_t grasp_score_calls = 0;
  int64_t damped_anchor_events = 0;
  int64_t aborted_episodes = 0;
};

struct RunReport {
  uint64_t seed = 0;
  std::string mode;
  std::vector<TrialRecord> trials;
  std::vector<EpisodeRecord> episodes;
  RunCounters counters;
};

// JSON-lines serialization: one header line, one line per trial, one per
// episode, one summary line. Deterministic byte-for-byte for equal content.
void write_run_report(const RunReport& report, const std::string& path);
RunReport read_run_report(const std::string& path);

// Incremental JSON-lines training log.
class TrainingLog {
 public:
  TrainingLog() = default;
  explicit TrainingLog(const std::string& path);
  bool open() const { return static_cast<bool>(out_); }

  void detector_step(int64_t step, double l_pos, double weighted_neg, double total, double mean_s,
                     double mean_k);
  void evaluator_step(int64_t step, double loss);
  void note(const std::string& event);

 private:
  std::shared_ptr<std::ofstream> out_;
};

}  // namespace grasp::run
