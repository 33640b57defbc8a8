#include "grasplearn/dataset.hpp"

#include "grasplearn/errors.hpp"

namespace grasp::data {

void DetectionDataset::add(TrialSample s) {
  if (s.trial_index <= last_trial_index_) {
    throw StateError("detection dataset: trial indices must be strictly increasing");
  }
  if (s.success && (s.score <= 0.0 || s.score > 1.0)) {
    throw StateError("detection dataset: successful sample needs a score in (0,1]");
  }
  last_trial_index_ = s.trial_index;
  samples_.push_back(std::move(s));
}

void DetectionDataset::set_score(size_t i, double s) {
  if (i >= samples_.size()) throw StateError("detection dataset: score index out of range");
  if (!samples_[i].success) throw StateError("detection dataset: only successes carry scores");
  samples_[i].score = s;
}

void PairDataset::add(Entry e) { entries_.push_back(std::move(e)); }

const PairDataset::Entry* PairDataset::find_trial(int64_t trial_index) const {
  for (const Entry& e : entries_) {
    if (e.trial_index == trial_index) return &e;
  }
  return nullptr;
}

void NegativePool::add(nn::Tensor image, int object_count) {
  if (capacity_ == 0) return;
  if (entries_.size() < capacity_) {
    entries_.push_back({std::move(image), object_count});
  } else {
    entries_[next_] = {std::move(image), object_count};
    next_ = (next_ + 1) % capacity_;
  }
}

}  // namespace grasp::data
