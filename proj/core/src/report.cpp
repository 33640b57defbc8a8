#include "grasplearn/report.hpp"

#include <fstream>
#include <memory>

#include <nlohmann/json.hpp>

#include "grasplearn/errors.hpp"

namespace grasp::run {

using nlohmann::json;

void write_run_report(const RunReport& report, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw StateError("cannot open for writing: " + path);
  json header = {{"type", "run"}, {"version", 1}, {"seed", report.seed}, {"mode", report.mode}};
  os << header.dump() << "\n";
  for (const TrialRecord& t : report.trials) {
    json j = {{"type", "trial"},
              {"episode", t.episode},
              {"t", t.trial_index},
              {"x", t.pose.x},
              {"y", t.pose.y},
              {"theta", t.pose.theta},
              {"success", t.success},
              {"rank", t.rank_used},
              {"random", t.random_pose},
              {"objects", t.object_count},
              {"det_loss", t.detector_loss},
              {"eval_loss", t.evaluator_loss}};
    if (t.score) j["S"] = *t.score;
    if (t.errors) {
      j["along_err"] = t.errors->along_axis;
      j["perp_err"] = t.errors->perpendicular;
      j["angle_err"] = t.errors->angle;
    }
    os << j.dump() << "\n";
  }
  for (const EpisodeRecord& e : report.episodes) {
    json j = {{"type", "episode"}, {"episode", e.episode},   {"scene_seed", e.scene_seed},
              {"trials", e.trials}, {"successes", e.successes}, {"aborted", e.aborted},
              {"rescored", e.rescored}};
    os << j.dump() << "\n";
  }
  json summary = {{"type", "summary"},
                  {"trials", report.counters.trials},
                  {"successes", report.counters.successes},
                  {"detector_steps", report.counters.detector_steps},
                  {"evaluator_steps", report.counters.evaluator_steps},
                  {"grasp_score_calls", report.counters.grasp_score_calls},
                  {"damped_anchor_events", report.counters.damped_anchor_events},
                  {"aborted_episodes", report.counters.aborted_episodes}};
  os << summary.dump() << "\n";
  if (!os) throw StateError("write failed: " + path);
}

RunReport read_run_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw StateError("cannot open run report: " + path);
  RunReport report;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw StateError("malformed run report line in " + path);
    const std::string type = j.at("type").get<std::string>();
    if (type == "run") {
      report.seed = j.at("seed").get<uint64_t>();
      report.mode = j.at("mode").get<std::string>();
    } else if (type == "trial") {
      TrialRecord t;
      t.episode = j.at("episode").get<int>();
      t.trial_index = j.at("t").get<int64_t>();
      t.pose = {j.at("x").get<double>(), j.at("y").get<double>(), j.at("theta").get<double>()};
      t.success = j.at("success").get<bool>();
      t.rank_used = j.at("rank").get<int>();
      t.random_pose = j.at("random").get<bool>();
      t.object_count = j.at("objects").get<int>();
      t.detector_loss = j.at("det_loss").get<double>();
      t.evaluator_loss = j.at("eval_loss").get<double>();
      if (j.contains("S")) t.score = j.at("S").get<double>();
      if (j.contains("along_err")) {
        t.errors = sim::GraspErrors{j.at("along_err").get<double>(), j.at("perp_err").get<double>(),
                                    j.at("angle_err").get<double>()};
      }
      report.trials.push_back(t);
    } else if (type == "episode") {
      EpisodeRecord e;
      e.episode = j.at("episode").get<int>();
      e.scene_seed = j.at("scene_seed").get<uint64_t>();
      e.trials = j.at("trials").get<int>();
      e.successes = j.at("successes").get<int>();
      e.aborted = j.at("aborted").get<bool>();
      e.rescored = j.at("rescored").get<size_t>();
      report.episodes.push_back(e);
    } else if (type == "summary") {
      report.counters.trials = j.at("trials").get<int64_t>();
      report.counters.successes = j.at("successes").get<int64_t>();
      report.counters.detector_steps = j.at("detector_steps").get<int64_t>();
      report.counters.evaluator_steps = j.at("evaluator_steps").get<int64_t>();
      report.counters.grasp_score_calls = j.at("grasp_score_calls").get<int64_t>();
      report.counters.damped_anchor_events = j.at("damped_anchor_events").get<int64_t>();
      report.counters.aborted_episodes = j.at("aborted_episodes").get<int64_t>();
    } else {
      throw StateError("unknown record type '" + type + "' in " + path);
    }
  }
  return report;
}

TrainingLog::TrainingLog(const std::string& path) : out_(std::make_shared<std::ofstream>(path, std::ios::trunc)) {
  if (!*out_) throw StateError("cannot open for writing: " + path);
}

void TrainingLog::detector_step(int64_t step, double l_pos, double weighted_neg, double total,
                                double mean_s, double mean_k) {
  if (!out_) return;
  json j = {{"net", "detector"}, {"step", step},     {"L_pos", l_pos},
            {"L_neg", weighted_neg}, {"total", total}, {"S", mean_s},
            {"K", mean_k}};
  *out_ << j.dump() << "\n";
}

void TrainingLog::evaluator_step(int64_t step, double loss) {
  if (!out_) return;
  json j = {{"net", "evaluator"}, {"step", step}, {"loss", loss}};
  *out_ << j.dump() << "\n";
}

void TrainingLog::note(const std::string& event) {
  if (!out_) return;
  json j = {{"net", "run"}, {"event", event}};
  *out_ << j.dump() << "\n";
}

}  // namespace grasp::run
