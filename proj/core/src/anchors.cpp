#include "grasplearn/anchors.hpp"

#include <algorithm>
#include <cmath>

#include "grasplearn/errors.hpp"

namespace grasp::det {

AnchorSet::AnchorSet(int image_px, const std::vector<GridSpec>& grids)
    : grids_(grids), image_px_(image_px) {
  if (grids.empty()) throw ConfigError("anchor set needs at least one grid");
  for (size_t g = 0; g < grids.size(); ++g) {
    const GridSpec& spec = grids[g];
    if (spec.cells <= 0 || spec.box_px <= 0) throw ConfigError("anchor grid cells/box must be positive");
    const double cell = static_cast<double>(image_px) / spec.cells;
    for (int r = 0; r < spec.cells; ++r) {
      for (int c = 0; c < spec.cells; ++c) {
        anchors_.push_back({(c + 0.5) * cell, (r + 0.5) * cell, spec.box_px, spec.box_px,
                            static_cast<int>(g)});
      }
    }
  }
}

BoxEncoding encode_box(double cx, double cy, double w, double h, const Anchor& anchor) {
  return {(cx - anchor.cx) / anchor.w, (cy - anchor.cy) / anchor.h, std::log(w / anchor.w),
          std::log(h / anchor.h)};
}

void decode_box(const BoxEncoding& enc, const Anchor& anchor, double& cx, double& cy, double& w,
                double& h) {
  cx = anchor.cx + enc.dx * anchor.w;
  cy = anchor.cy + enc.dy * anchor.h;
  w = anchor.w * std::exp(std::clamp(enc.dw, -6.0, 6.0));
  h = anchor.h * std::exp(std::clamp(enc.dh, -6.0, 6.0));
}

MatchAssignment MatchAssignment::all_negative(size_t n_anchors) {
  MatchAssignment m;
  m.positive.assign(n_anchors, false);
  return m;
}

MatchAssignment match_ground_truth(const AnchorSet& anchors, const GroundTruthBox& gt,
                                   double iou_threshold) {
  if (gt.cx < 0 || gt.cy < 0 || gt.cx >= anchors.image_px() || gt.cy >= anchors.image_px()) {
    throw ConfigError("ground-truth box center outside the image; sample rejected");
  }
  // Axis-aligned bounding rectangle of the rotated square.
  const double half =
      (std::fabs(std::cos(gt.theta)) + std::fabs(std::sin(gt.theta))) * gt.box_px / 2.0;
  const sim::Aabb gt_box{gt.cx - half, gt.cy - half, gt.cx + half, gt.cy + half};

  MatchAssignment m;
  m.positive.assign(anchors.size(), false);
  double best_iou = -1.0;
  for (size_t i = 0; i < anchors.size(); ++i) {
    const Anchor& a = anchors[i];
    const sim::Aabb ab{a.cx - a.w / 2, a.cy - a.h / 2, a.cx + a.w / 2, a.cy + a.h / 2};
    const double iou = sim::aabb_iou(gt_box, ab);
    if (iou >= iou_threshold) m.positive[i] = true;
    if (iou > best_iou) {
      best_iou = iou;
      m.best_anchor = static_cast<int>(i);
    }
  }
  m.positive[m.best_anchor] = true;
  for (bool p : m.positive) m.positive_count += p ? 1 : 0;
  return m;
}

std::vector<Candidate> nms_rotated(const std::vector<Candidate>& sorted, double iou_threshold) {
  std::vector<Candidate> kept;
  std::vector<bool> suppressed(sorted.size(), false);
  for (size_t i = 0; i < sorted.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(sorted[i]);
    for (size_t j = i + 1; j < sorted.size(); ++j) {
      if (suppressed[j]) continue;
      if (sim::rotated_rect_iou(sorted[i].box_px, sorted[j].box_px) > iou_threshold) {
        suppressed[j] = true;
      }
    }
  }
  return kept;
}

}  // namespace grasp::det
