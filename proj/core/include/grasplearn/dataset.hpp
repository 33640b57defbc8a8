#pragma once

#include <cstdint>
#include <vector>

#include "grasplearn/scene.hpp"
#include "grasplearn/tensor.hpp"

namespace grasp::data {

// One grasp trial as stored for detector training. Successful entries carry
// a grasp score; images are immutable once added.
struct TrialSample {
  nn::Tensor top_image;
  sim::GraspPose pose;
  bool success = false;
  double score = 1.0;  // S, meaningful only for successes
  int scene_object_count = 0;
  int64_t trial_index = 0;
};

// Append-only detector dataset (successful trials plus the designed
// pre-sample entries). Scores are rewritable only through the rescoring
// pass; everything else is fixed at append time.
class DetectionDataset {
 public:
  void add(TrialSample s);
  const std::vector<TrialSample>& samples() const { return samples_; }
  size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  void set_score(size_t i, double s);

 private:
  std::vector<TrialSample> samples_;
  int64_t last_trial_index_ = -1;
};

// Side-view images of successful trials and pre-samples, paired on the fly
// for contrastive training.
class PairDataset {
 public:
  struct Entry {
    nn::Tensor side_image;
    int64_t trial_index = 0;
    int presample_class = -1;  // -1 trial, 0 optimum pre-sample, 1 sub-optimum pre-sample
  };

  void add(Entry e);
  const std::vector<Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Entry* find_trial(int64_t trial_index) const;

 private:
  std::vector<Entry> entries_;
};

// Bounded pool of failed-trial images used as extra pure-negative detector
// samples. Oldest entries are overwritten once the pool is full.
class NegativePool {
 public:
  struct Entry {
    nn::Tensor image;
    int object_count = 0;
  };

  explicit NegativePool(size_t capacity = 200) : capacity_(capacity) {}

  void add(nn::Tensor image, int object_count);
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Entry& at(size_t i) const { return entries_[i]; }
  size_t capacity() const { return capacity_; }

 private:
  std::vector<Entry> entries_;
  size_t capacity_;
  size_t next_ = 0;
};

}  // namespace grasp::data
