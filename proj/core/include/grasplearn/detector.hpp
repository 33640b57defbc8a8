#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "grasplearn/adam.hpp"
#include "grasplearn/anchors.hpp"
#include "grasplearn/checkpoint.hpp"
#include "grasplearn/layers.hpp"
#include "grasplearn/scene.hpp"
#include "grasplearn/tensor.hpp"

namespace grasp::det {

// Raw per-anchor head output: 4 location offsets, 2 class logits
// (background, grasping-position), 2 rotation components (sin 2theta,
// cos 2theta), 1 score logit.
inline constexpr int kAnchorChannels = 9;
using AnchorRaw = std::array<double, kAnchorChannels>;

struct DetectorConfig {
  std::vector<int> channels{12, 24, 32, 48};  // backbone widths
  double grid1_box_px = 12.0;
  double grid2_box_px = 20.0;
  double gt_box_cm = 6.0;   // ground-truth grasp box side
  double match_iou = 0.5;
  double conf_min = 0.3;
  double nms_iou = 0.45;
  // Unit term weights of the positive loss; kept configurable.
  double loc_weight = 1.0;
  double conf_weight = 1.0;
  double theta_weight = 1.0;
  double score_weight = 1.0;
  // Rank damped negatives by grasping-position probability (default) or by
  // background probability (the literal alternative, for ablation).
  bool alpha_rank_background = false;
  int hard_negative_ratio = 3;
  nn::AdamConfig adam{};
  int batch = 8;
  int steps_per_trial = 12;
  int warmup_steps = 300;
  double negative_fraction = 0.25;  // share of batch slots offered to failed-trial images
};

// Damping coefficients for negatives ranked by descending confidence:
// 0.5*(1-conf)^2 for ranks 1..K, 1.0 beyond. If K exceeds the list, all
// entries are damped and *overflow is set.
std::vector<double> alpha_coefficients(const std::vector<double>& conf_ranked_desc, int K,
                                       bool* overflow = nullptr);

struct NegativeTerm {
  int anchor_index = 0;
  double conf = 0;   // ranking confidence of this negative
  double alpha = 1;  // damping coefficient applied
  double contribution = 0;
};

struct LossBreakdown {
  double l_pos = 0;        // positive feedback term, before the S weighting
  double weighted_neg = 0; // sum of alpha-weighted negative terms
  double total = 0;        // S*l_pos + weighted_neg
  double S = 1;
  int K = 0;
  int n_pos = 0;
  bool no_positives = false;
  bool damping_overflow = false;
  int damped_count = 0;  // negatives with alpha < 1
  std::vector<NegativeTerm> negatives;  // in rank order
};

// Per-sample supervision.
struct SampleTarget {
  bool has_gt = false;
  GroundTruthBox gt{};  // valid when has_gt
  double S = 1.0;
  int K = 0;
};

// Score-weighted multibox loss over one sample's raw anchor outputs.
// Positive anchors contribute smooth-L1 on location offsets, cross-entropy
// toward the grasping-position class, smooth-L1 on the rotation pair and a
// squared error of the predicted score toward S; the sum is weighted by S.
// Negatives contribute cross-entropy toward background, hard-mined to
// hard_negative_ratio times the positive count, each scaled by its damping
// coefficient. S and the coefficients are treated as constants by the
// gradient. If grad_raw is non-null it receives d(total)/d(raw).
LossBreakdown multibox_loss(const AnchorSet& anchors, const std::vector<AnchorRaw>& raw,
                            const MatchAssignment& assignment, const SampleTarget& target,
                            const DetectorConfig& cfg, std::vector<AnchorRaw>* grad_raw);

// Anchor-grid grasp detector: a small convolutional trunk over the top-view
// image with two prediction heads at 1/8 and 1/16 resolution.
class DetectorNet {
 public:
  DetectorNet(int image_px, double workspace_cm, const DetectorConfig& cfg, uint64_t init_seed);

  const AnchorSet& anchor_set() const { return anchors_; }
  const DetectorConfig& config() const { return cfg_; }
  double px_per_cm() const { return px_per_cm_; }
  int image_px() const { return image_px_; }

  // Raw head outputs gathered per anchor (inference path, thread-safe).
  std::vector<AnchorRaw> raw_outputs(const nn::Tensor& image) const;

  // Decoded, confidence-filtered, suppressed candidates sorted by predicted
  // score (ties broken by anchor index).
  std::vector<Candidate> predict(const nn::Tensor& image) const;

  GroundTruthBox gt_from_pose(const sim::GraspPose& pose) const;

  struct TrainSample {
    nn::Tensor image;
    bool has_gt = false;
    sim::GraspPose pose{};  // valid when has_gt
    double S = 1.0;
    int K = 0;
  };

  struct StepResult {
    double mean_total = 0;
    double mean_l_pos = 0;
    double mean_weighted_neg = 0;
    double mean_S = 0;
    double mean_K = 0;
    int damped_events = 0;
    bool skipped = false;
    std::string diagnostic;
    std::vector<LossBreakdown> per_sample;
  };

  // One forward/backward/Adam step over the batch (gradient of the batch
  // mean). A non-finite loss skips the update and reports the diagnostic.
  StepResult train_step(const std::vector<TrainSample>& batch, int threads = 1);

  int64_t steps_taken() const { return adam_trunk_.step_count(); }

  void pack(nn::TensorFile& file, bool with_optimizer) const;
  void unpack(const nn::TensorFile& file, bool with_optimizer);

 private:
  struct Forward;
  void forward_raw(const nn::Tensor& image, std::vector<AnchorRaw>& raw, Forward* rec) const;

  DetectorConfig cfg_;
  int image_px_ = 0;
  double px_per_cm_ = 1;
  AnchorSet anchors_;
  int grid1_cells_ = 0, grid2_cells_ = 0;
  nn::Network trunk_, deep_, head1_, head2_;
  nn::Adam adam_trunk_, adam_deep_, adam_head1_, adam_head2_;
};

}  // namespace grasp::det
