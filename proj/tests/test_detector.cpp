#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "grasplearn/anchors.hpp"
#include "grasplearn/detector.hpp"
#include "grasplearn/errors.hpp"
#include "grasplearn/render.hpp"
#include "helpers.hpp"

using namespace grasp;
using namespace grasp::det;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Fully independent reference implementation of the unweighted multibox loss
// (S = 1, no damping): smooth-L1 location + rotation, cross-entropy
// classification, squared score error, negatives hard-mined to ratio 3.
double reference_unweighted_multibox(const AnchorSet& anchors, const std::vector<AnchorRaw>& raw,
                                     const std::vector<bool>& positive, const GroundTruthBox& gt,
                                     bool has_gt) {
  auto sl1 = [](double d) { return std::abs(d) < 1 ? d * d / 2 : std::abs(d) - 0.5; };
  auto probs = [](const AnchorRaw& a) {
    const double m = std::max(a[4], a[5]);
    const double e4 = std::exp(a[4] - m), e5 = std::exp(a[5] - m);
    return std::pair<double, double>{e4 / (e4 + e5), e5 / (e4 + e5)};
  };
  double total = 0;
  int n_pos = 0;
  for (size_t i = 0; i < raw.size(); ++i) {
    if (!positive[i]) continue;
    ++n_pos;
    const Anchor& a = anchors[i];
    const double tx = (gt.cx - a.cx) / a.w;
    const double ty = (gt.cy - a.cy) / a.h;
    const double tw = std::log(gt.box_px / a.w);
    const double th = std::log(gt.box_px / a.h);
    total += sl1(raw[i][0] - tx) + sl1(raw[i][1] - ty) + sl1(raw[i][2] - tw) + sl1(raw[i][3] - th);
    total += -std::log(probs(raw[i]).second);
    total += sl1(raw[i][6] - std::sin(2 * gt.theta)) + sl1(raw[i][7] - std::cos(2 * gt.theta));
    const double s = 1.0 / (1.0 + std::exp(-raw[i][8]));
    total += (s - 1.0) * (s - 1.0);  // S = 1 in baseline mode
  }
  (void)has_gt;
  // Negatives: rank by object probability, keep 3 per positive (min 3).
  std::vector<std::pair<double, int>> negs;
  for (size_t i = 0; i < raw.size(); ++i) {
    if (!positive[i]) negs.push_back({probs(raw[i]).second, static_cast<int>(i)});
  }
  std::sort(negs.begin(), negs.end(), [](auto& a, auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  const size_t keep = std::min(negs.size(), static_cast<size_t>(3 * std::max(n_pos, 1)));
  for (size_t k = 0; k < keep; ++k) {
    total += -std::log(probs(raw[negs[k].second]).first);
  }
  return total;
}

AnchorSet small_anchors() { return AnchorSet(32, {{4, 4.0}, {2, 7.0}}); }

std::vector<AnchorRaw> random_raw(size_t n, Rng& rng, double scale = 2.0) {
  std::vector<AnchorRaw> raw(n);
  for (auto& a : raw)
    for (double& v : a) v = rng.uniform(-scale, scale);
  return raw;
}

DetectorConfig quick_cfg() {
  DetectorConfig cfg;
  cfg.channels = {4, 6, 8, 10};
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("detector");

TEST_CASE("anchors tile the image: every point within sqrt(2) cells of a center") {
  const AnchorSet anchors(96, {{12, 12.0}, {6, 20.0}});
  CHECK(anchors.size() == 144 + 36);
  const double cell = 96.0 / 12.0;
  double worst = 0;
  for (double y = 0; y < 96; y += 0.5) {
    for (double x = 0; x < 96; x += 0.5) {
      double best = 1e9;
      for (const Anchor& a : anchors.all()) {
        best = std::min(best, std::hypot(a.cx - x, a.cy - y));
      }
      worst = std::max(worst, best);
    }
  }
  CHECK(worst <= std::sqrt(2.0) * cell);
}

TEST_CASE("box encode/decode round trip is exact to 1e-9") {
  Rng rng(50);
  const AnchorSet anchors = small_anchors();
  for (int i = 0; i < 500; ++i) {
    const Anchor& a = anchors[rng.index(anchors.size())];
    const double cx = rng.uniform(0, 32), cy = rng.uniform(0, 32);
    const double w = rng.uniform(2.0, 12.0), h = rng.uniform(2.0, 12.0);
    const BoxEncoding enc = encode_box(cx, cy, w, h, a);
    double dx, dy, dw, dh;
    decode_box(enc, a, dx, dy, dw, dh);
    CHECK(std::abs(dx - cx) < 1e-9);
    CHECK(std::abs(dy - cy) < 1e-9);
    CHECK(std::abs(dw - w) < 1e-9);
    CHECK(std::abs(dh - h) < 1e-9);
  }
}

TEST_CASE("matching: centred equal-size ground truth takes its anchor with IoU 1") {
  const AnchorSet anchors = small_anchors();
  const Anchor& a = anchors[5];
  const GroundTruthBox gt{a.cx, a.cy, a.w, 0.0};
  const MatchAssignment m = match_ground_truth(anchors, gt);
  CHECK(m.positive[5]);
  CHECK(m.best_anchor == 5);
}

TEST_CASE("matching: the best anchor is forced positive even below threshold") {
  const AnchorSet anchors = small_anchors();
  // A tiny box between anchors: IoU < 0.5 everywhere.
  const GroundTruthBox gt{8.0, 8.0, 1.0, 0.3};
  const MatchAssignment m = match_ground_truth(anchors, gt);
  CHECK(m.positive_count >= 1);
  CHECK(m.positive[m.best_anchor]);
  int count = 0;
  for (bool p : m.positive) count += p ? 1 : 0;
  CHECK(count == m.positive_count);
}

TEST_CASE("matching equals a brute-force IoU oracle on 1000 random instances") {
  Rng rng(51);
  const AnchorSet anchors = small_anchors();
  for (int iter = 0; iter < 1000; ++iter) {
    const GroundTruthBox gt{rng.uniform(1, 31), rng.uniform(1, 31), rng.uniform(2, 10),
                            rng.uniform(0, kPi)};
    const MatchAssignment m = match_ground_truth(anchors, gt);

    // Oracle: direct IoU computation per anchor.
    const double half = (std::abs(std::cos(gt.theta)) + std::abs(std::sin(gt.theta))) * gt.box_px / 2;
    double best_iou = -1;
    int best_idx = -1;
    std::vector<bool> want(anchors.size(), false);
    for (size_t i = 0; i < anchors.size(); ++i) {
      const Anchor& a = anchors[i];
      const double ix = std::max(
          0.0, std::min(gt.cx + half, a.cx + a.w / 2) - std::max(gt.cx - half, a.cx - a.w / 2));
      const double iy = std::max(
          0.0, std::min(gt.cy + half, a.cy + a.h / 2) - std::max(gt.cy - half, a.cy - a.h / 2));
      const double inter = ix * iy;
      const double uni = 4 * half * half + a.w * a.h - inter;
      const double iou = uni > 0 ? inter / uni : 0.0;
      if (iou >= 0.5) want[i] = true;
      if (iou > best_iou) {
        best_iou = iou;
        best_idx = static_cast<int>(i);
      }
    }
    want[best_idx] = true;
    REQUIRE(m.positive == want);
    REQUIRE(m.best_anchor == best_idx);
  }
}

TEST_CASE("matching rejects a ground truth outside the image") {
  const AnchorSet anchors = small_anchors();
  CHECK_THROWS_AS(match_ground_truth(anchors, {40.0, 8.0, 4.0, 0.0}), ConfigError);
}

TEST_CASE("damping coefficients follow the quadratic falloff exactly") {
  bool overflow = false;
  const std::vector<double> alpha = alpha_coefficients({1.0, 0.5, 0.0, 0.9}, 3, &overflow);
  CHECK(!overflow);
  CHECK(alpha[0] == 0.0);        // conf 1.0 -> 0
  CHECK(alpha[1] == 0.125);      // conf 0.5 -> 1/8
  CHECK(alpha[2] == 0.5);        // conf 0.0 -> 1/2
  CHECK(alpha[3] == 1.0);        // beyond K
  CHECK(alpha_coefficients({0.3, 0.3}, 0, nullptr) == std::vector<double>{1.0, 1.0});
}

TEST_CASE("damping is monotone in confidence and bounded") {
  Rng rng(52);
  for (int i = 0; i < 200; ++i) {
    const double lo = rng.uniform(0, 1), hi = rng.uniform(0, 1);
    const double a = std::max(lo, hi), b = std::min(lo, hi);
    const auto alpha = alpha_coefficients({a, b}, 2, nullptr);
    CHECK(alpha[0] <= alpha[1]);  // higher conf damped harder
    for (double v : alpha) {
      CHECK(v >= 0.0);
      CHECK(v <= 0.5);
    }
  }
}

TEST_CASE("damping overflow: K beyond the pool damps everything and flags it") {
  bool overflow = false;
  const auto alpha = alpha_coefficients({0.8, 0.2}, 5, &overflow);
  CHECK(overflow);
  for (double v : alpha) CHECK(v < 1.0);
}

TEST_CASE("baseline reduction: S=1, K=0 equals the independent oracle to 1e-12") {
  Rng rng(53);
  const AnchorSet anchors = small_anchors();
  DetectorConfig cfg = quick_cfg();
  int checked = 0;
  for (int iter = 0; iter < 100; ++iter) {
    const std::vector<AnchorRaw> raw = random_raw(anchors.size(), rng, 3.0);
    const GroundTruthBox gt{rng.uniform(2, 30), rng.uniform(2, 30), rng.uniform(3, 9),
                            rng.uniform(0, kPi)};
    const MatchAssignment m = match_ground_truth(anchors, gt);
    SampleTarget target;
    target.has_gt = true;
    target.gt = gt;
    target.S = 1.0;
    target.K = 0;
    const LossBreakdown got = multibox_loss(anchors, raw, m, target, cfg, nullptr);
    const double want = reference_unweighted_multibox(anchors, raw, m.positive, gt, true);
    REQUIRE(testutil::rel_err(got.total, want, 1e-12) <= 1e-12);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("S = 0 removes every positive term") {
  Rng rng(54);
  const AnchorSet anchors = small_anchors();
  const DetectorConfig cfg = quick_cfg();
  const std::vector<AnchorRaw> raw = random_raw(anchors.size(), rng);
  const GroundTruthBox gt{16.0, 16.0, 5.0, 0.7};
  const MatchAssignment m = match_ground_truth(anchors, gt);
  SampleTarget target{true, gt, 0.0, 0};
  std::vector<AnchorRaw> grad;
  const LossBreakdown b = multibox_loss(anchors, raw, m, target, cfg, &grad);
  CHECK(b.total == doctest::Approx(b.weighted_neg).epsilon(1e-15));
  CHECK(b.l_pos > 0);  // positive terms still reported, just weighted to zero
  // Gradient of every positive anchor's non-conf channels is exactly zero.
  for (size_t i = 0; i < grad.size(); ++i) {
    if (!m.positive[i]) continue;
    for (int c : {0, 1, 2, 3, 6, 7, 8}) CHECK(grad[i][c] == 0.0);
  }
}

TEST_CASE("hand-computed two-negative composition with K = 1") {
  // One positive with near-perfect predictions, two negatives with object
  // confidence 0.9 and 0.1, K = 1:
  //   total = S*L_pos + alpha1*CE(0.9 negative) + 1.0*CE(0.1 negative)
  //   alpha1 = 0.5*(1-0.9)^2 = 0.005
  const AnchorSet anchors(8, {{1, 4.0}});  // wait: single-cell grid => 1 anchor
  (void)anchors;
  // Build a 3-anchor set via a 1x3 arrangement: use a custom grid of 3 cells.
  const AnchorSet three(12, {{1, 6.0}});
  REQUIRE(three.size() == 1);
  // Use a 2-grid set with 1 + 4 anchors and craft 1 positive + 2 confident
  // negatives among the rest.
  const AnchorSet set(16, {{1, 8.0}, {2, 6.0}});
  REQUIRE(set.size() == 5);

  DetectorConfig cfg = quick_cfg();
  std::vector<AnchorRaw> raw(set.size());
  // Anchor 0: the positive, perfect predictions.
  const GroundTruthBox gt{set[0].cx, set[0].cy, set[0].w, 0.25};
  raw[0][0] = raw[0][1] = raw[0][2] = raw[0][3] = 0.0;
  raw[0][4] = std::log(1e-9);
  raw[0][5] = std::log(1.0 - 1e-9);
  raw[0][6] = std::sin(2 * gt.theta);
  raw[0][7] = std::cos(2 * gt.theta);
  raw[0][8] = 40.0;  // sigmoid ~= 1 = S
  // Negatives with controlled object probability via direct log-prob logits.
  auto set_conf = [&](AnchorRaw& a, double p_obj) {
    a[4] = std::log(1.0 - p_obj);
    a[5] = std::log(p_obj);
  };
  set_conf(raw[1], 0.9);
  set_conf(raw[2], 0.1);
  set_conf(raw[3], 1e-12);
  set_conf(raw[4], 1e-12);

  MatchAssignment m = MatchAssignment::all_negative(set.size());
  m.positive[0] = true;
  m.best_anchor = 0;
  m.positive_count = 1;

  SampleTarget target{true, gt, 1.0, 1};
  const LossBreakdown b = multibox_loss(set, raw, m, target, cfg, nullptr);

  const double alpha1 = 0.5 * 0.1 * 0.1;
  const double want_neg = alpha1 * -std::log(0.1) + 1.0 * -std::log(0.9) + 1.0 * -std::log(1.0 - 1e-12);
  CHECK(b.weighted_neg == doctest::Approx(want_neg).epsilon(1e-9));
  CHECK(b.l_pos == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(b.total == doctest::Approx(want_neg).epsilon(1e-6));
  REQUIRE(b.negatives.size() == 3);  // 3x positives pool
  CHECK(b.negatives[0].alpha == doctest::Approx(alpha1).epsilon(1e-12));
  CHECK(b.negatives[1].alpha == 1.0);
  CHECK(b.damped_count == 1);
}

TEST_CASE("zero positives: loss is negatives-only and flagged") {
  Rng rng(55);
  const AnchorSet anchors = small_anchors();
  const DetectorConfig cfg = quick_cfg();
  const std::vector<AnchorRaw> raw = random_raw(anchors.size(), rng);
  SampleTarget target;
  target.has_gt = false;
  target.K = 2;
  const LossBreakdown b = multibox_loss(anchors, raw, MatchAssignment::all_negative(anchors.size()),
                                        target, cfg, nullptr);
  CHECK(b.no_positives);
  CHECK(b.l_pos == 0.0);
  CHECK(b.total == doctest::Approx(b.weighted_neg));
  CHECK(b.negatives.size() == 3);  // ratio * max(positives, 1)
}

TEST_CASE("loss gradients pass finite differences through both weighting paths") {
  Rng rng(56);
  const AnchorSet anchors(16, {{2, 6.0}});  // 4 anchors keeps FD cheap
  DetectorConfig cfg = quick_cfg();
  for (int scenario = 0; scenario < 2; ++scenario) {
    std::vector<AnchorRaw> raw = random_raw(anchors.size(), rng, 1.5);
    const GroundTruthBox gt{rng.uniform(3, 13), rng.uniform(3, 13), 5.0, rng.uniform(0, kPi)};
    const MatchAssignment m = match_ground_truth(anchors, gt);
    SampleTarget target;
    target.has_gt = true;
    target.gt = gt;
    target.S = scenario == 0 ? 0.37 : 1.0;  // S-weighting path
    target.K = scenario == 0 ? 0 : 2;       // damping path
    std::vector<AnchorRaw> grad;
    multibox_loss(anchors, raw, m, target, cfg, &grad);

    // Flatten raw for the finite-difference probe. The damping coefficients
    // and rank order are data-dependent; keep perturbations tiny so the rank
    // ordering is stable, and treat alpha as locally constant (matching the
    // detached-weight contract).
    for (size_t i = 0; i < raw.size(); ++i) {
      for (int c = 0; c < kAnchorChannels; ++c) {
        const double h = 1e-7;
        const double saved = raw[i][c];
        auto loss_at = [&](double v) {
          raw[i][c] = v;
          // Freeze damping at the original coefficients by querying the
          // breakdown and recomputing the weighted sum with original alphas:
          // simplest faithful probe is the loss itself; alpha changes are
          // second-order in h.
          const LossBreakdown b = multibox_loss(anchors, raw, m, target, cfg, nullptr);
          return b.total;
        };
        const double up = loss_at(saved + h);
        const double dn = loss_at(saved - h);
        raw[i][c] = saved;
        const double numeric = (up - dn) / (2 * h);
        CHECK(testutil::rel_err(grad[i][c], numeric, 1e-5) < 1e-4);
      }
    }
  }
}

TEST_CASE("rotated IoU agrees with Monte-Carlo area sampling") {
  Rng rng(57);
  for (int iter = 0; iter < 60; ++iter) {
    sim::RotatedRect a{{rng.uniform(4, 12), rng.uniform(4, 12)}, rng.uniform(2, 8),
                       rng.uniform(2, 8), rng.uniform(0, kPi)};
    sim::RotatedRect b{{rng.uniform(4, 12), rng.uniform(4, 12)}, rng.uniform(2, 8),
                       rng.uniform(2, 8), rng.uniform(0, kPi)};
    const double got = sim::rotated_rect_iou(a, b);

    // Sample a bounding window.
    auto inside = [](const sim::RotatedRect& r, sim::Vec2 p) {
      const sim::Vec2 d = p - r.center;
      const double c = std::cos(r.angle), s = std::sin(r.angle);
      const double lx = d.x * c + d.y * s;
      const double ly = -d.x * s + d.y * c;
      return std::abs(lx) <= r.w / 2 && std::abs(ly) <= r.h / 2;
    };
    int inter = 0, uni = 0;
    const int grid = 220;
    for (int gy = 0; gy < grid; ++gy) {
      for (int gx = 0; gx < grid; ++gx) {
        const sim::Vec2 p{16.0 * (gx + 0.5) / grid, 16.0 * (gy + 0.5) / grid};
        const bool ia = inside(a, p), ib = inside(b, p);
        inter += (ia && ib) ? 1 : 0;
        uni += (ia || ib) ? 1 : 0;
      }
    }
    const double want = uni > 0 ? static_cast<double>(inter) / uni : 0.0;
    CHECK(std::abs(got - want) < 0.03);
  }
}

TEST_CASE("nms equals an independently-written greedy reference on 1000 instances") {
  Rng rng(58);
  for (int iter = 0; iter < 1000; ++iter) {
    const int n = 1 + static_cast<int>(rng.index(12));
    std::vector<Candidate> cands;
    for (int i = 0; i < n; ++i) {
      Candidate c;
      c.score = rng.uniform(0, 1);
      c.anchor_index = i;
      c.box_px = {{rng.uniform(2, 14), rng.uniform(2, 14)}, rng.uniform(2, 6), rng.uniform(2, 6),
                  rng.uniform(0, kPi)};
      cands.push_back(c);
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.anchor_index < b.anchor_index;
    });
    const auto got = nms_rotated(cands, 0.45);

    // Reference: repeatedly take the best remaining, erase overlaps.
    std::vector<Candidate> pool = cands;
    std::vector<int> want;
    while (!pool.empty()) {
      const Candidate best = pool.front();
      want.push_back(best.anchor_index);
      std::vector<Candidate> rest;
      for (size_t i = 1; i < pool.size(); ++i) {
        if (sim::rotated_rect_iou(best.box_px, pool[i].box_px) <= 0.45) rest.push_back(pool[i]);
      }
      pool = std::move(rest);
    }
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) REQUIRE(got[i].anchor_index == want[i]);
  }
}

TEST_CASE("rotation decode: the pair (0,-1) lands inside [0, pi)") {
  // 2*theta = atan2(0, -1) = pi, so theta = pi/2.
  const double theta = sim::wrap_axis_angle(0.5 * std::atan2(0.0, -1.0));
  CHECK(theta >= 0.0);
  CHECK(theta < kPi);
  CHECK(theta == doctest::Approx(kPi / 2));
}

TEST_CASE("predict: untrained uniform outputs tie-break by anchor index") {
  DetectorConfig cfg = quick_cfg();
  // Zero parameters force constant head outputs: conf logits (0,0) give
  // p_obj = 0.5 > conf_min and every anchor the same score, so ordering is
  // purely the tie-break.
  DetectorNet constant(96, 40.0, cfg, 1234);
  nn::TensorFile zeroed;
  constant.pack(zeroed, false);
  nn::TensorFile zf;
  for (const auto& [name, tensor] : zeroed.entries()) {
    nn::Tensor t(tensor.shape);
    zf.put(name, t);
  }
  constant.unpack(zf, false);

  const sim::Scene empty_scene{40.0, {}, 0};
  const nn::Tensor img = sim::render_top(empty_scene, sim::RenderConfig{});
  const auto cands = constant.predict(img);
  REQUIRE(!cands.empty());
  for (size_t i = 1; i < cands.size(); ++i) {
    CHECK(cands[i - 1].anchor_index < cands[i].anchor_index);
  }
  // All survivors share the same score.
  for (const auto& c : cands) CHECK(c.score == cands[0].score);
}

TEST_CASE("predict suppresses overlapping decoded boxes, keeping higher score") {
  // Construct two candidates by hand through the public NMS entry.
  Candidate hi, lo;
  hi.score = 0.9;
  hi.anchor_index = 0;
  hi.box_px = {{10, 10}, 6, 6, 0.2};
  lo.score = 0.4;
  lo.anchor_index = 1;
  lo.box_px = {{10.5, 10.2}, 6, 6, 0.3};  // heavy overlap
  const auto kept = nms_rotated({hi, lo}, 0.45);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].anchor_index == 0);
}

TEST_CASE("train_step: K comes from the object count minus one") {
  DetectorConfig cfg = quick_cfg();
  cfg.batch = 2;
  DetectorNet net(96, 40.0, cfg, 77);
  const sim::SceneConfig scfg;
  const sim::RenderConfig rcfg;
  const sim::Scene scene = sim::reset_scene(5, sim::ObjectKind::cylinder, 5, scfg);

  DetectorNet::TrainSample sample;
  sample.image = sim::render_top(scene, rcfg);
  sample.has_gt = true;
  sample.pose = sim::optimum_pose(scene.objects[0]);
  sample.S = 0.8;
  sample.K = scene.object_count() - 1;

  DetectorNet::TrainSample single = sample;
  single.K = 0;

  const auto result = net.train_step({sample, single}, 2);
  CHECK(result.per_sample[0].K == 4);
  CHECK(result.per_sample[1].K == 0);
  CHECK(!result.skipped);
  CHECK(result.per_sample[0].damped_count > 0);
  CHECK(result.per_sample[1].damped_count == 0);
  CHECK(net.steps_taken() == 1);
}

TEST_CASE("train_step in baseline mode matches unweighted gradients: loss totals agree") {
  // The equality of baseline-mode losses to the reference is covered above;
  // here confirm a full step is deterministic across thread counts.
  DetectorConfig cfg = quick_cfg();
  cfg.batch = 4;
  const sim::SceneConfig scfg;
  const sim::RenderConfig rcfg;
  auto run = [&](int threads) {
    DetectorNet net(96, 40.0, cfg, 99);
    Rng rng(100);
    std::vector<DetectorNet::TrainSample> batch;
    for (int i = 0; i < cfg.batch; ++i) {
      const sim::Scene scene = sim::reset_scene(3, sim::ObjectKind::cylinder, 200 + i, scfg);
      DetectorNet::TrainSample s;
      s.image = sim::render_top(scene, rcfg);
      s.has_gt = true;
      s.pose = sim::optimum_pose(scene.objects[i % 3]);
      s.S = 1.0;
      s.K = 0;
      batch.push_back(std::move(s));
    }
    net.train_step(batch, threads);
    nn::TensorFile file;
    net.pack(file, false);
    std::vector<double> flat;
    for (const auto& [name, t] : file.entries())
      for (double x : t.data) flat.push_back(x);
    return flat;
  };
  CHECK(run(1) == run(2));
}

TEST_SUITE_END();
