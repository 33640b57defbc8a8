#pragma once

#include <vector>

#include "grasplearn/geometry.hpp"
#include "grasplearn/scene.hpp"

namespace grasp::det {

// One default box, in pixels of the top-view image.
struct Anchor {
  double cx = 0, cy = 0, w = 0, h = 0;
  int grid = 0;  // which feature grid this anchor belongs to
};

struct GridSpec {
  int cells = 0;      // cells per side
  double box_px = 0;  // default box side
};

// Fixed anchor tiling over the top image: one default box per cell of each
// grid, listed grid by grid in row-major cell order.
class AnchorSet {
 public:
  AnchorSet() = default;
  AnchorSet(int image_px, const std::vector<GridSpec>& grids);

  size_t size() const { return anchors_.size(); }
  const Anchor& operator[](size_t i) const { return anchors_[i]; }
  const std::vector<Anchor>& all() const { return anchors_; }
  const std::vector<GridSpec>& grids() const { return grids_; }
  int image_px() const { return image_px_; }

 private:
  std::vector<Anchor> anchors_;
  std::vector<GridSpec> grids_;
  int image_px_ = 0;
};

// Offset encoding between a box (center + size, px) and an anchor.
struct BoxEncoding {
  double dx = 0, dy = 0, dw = 0, dh = 0;
};

BoxEncoding encode_box(double cx, double cy, double w, double h, const Anchor& anchor);
// Inverse of encode_box. dw/dh are clamped to +-6 before exponentiation so
// untrained outputs cannot overflow; encodings produced by encode_box are far
// inside the clamp.
void decode_box(const BoxEncoding& enc, const Anchor& anchor, double& cx, double& cy, double& w,
                double& h);

// Ground-truth grasp box: a square of side `box_px` centered on the grasp
// point, rotated to the gripper angle.
struct GroundTruthBox {
  double cx = 0, cy = 0;  // px
  double box_px = 0;
  double theta = 0;
};

struct MatchAssignment {
  std::vector<bool> positive;
  int best_anchor = -1;  // always positive (forced match)
  int positive_count = 0;

  static MatchAssignment all_negative(size_t n_anchors);
};

// Anchors with axis-aligned IoU >= iou_threshold against the ground truth's
// bounding rectangle are positive; the best-IoU anchor is forced positive
// regardless (ties resolved toward the lowest anchor index). Throws
// ConfigError if the box center lies outside the image.
MatchAssignment match_ground_truth(const AnchorSet& anchors, const GroundTruthBox& gt,
                                   double iou_threshold = 0.5);

// A decoded, scored grasp candidate.
struct Candidate {
  sim::GraspPose pose;      // cm
  double score = 0;         // predicted grasp score s
  double conf = 0;          // grasping-position class probability
  sim::RotatedRect box_px;  // decoded box, pixels
  int anchor_index = 0;
};

// Greedy non-maximum suppression on rotated-box IoU. Input order defines
// priority (callers sort by score descending, anchor index ascending).
std::vector<Candidate> nms_rotated(const std::vector<Candidate>& sorted, double iou_threshold);

}  // namespace grasp::det
