#include "grasplearn/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grasplearn/errors.hpp"
#include "grasplearn/geometry.hpp"

namespace grasp::det {

namespace {

constexpr double kPi = 3.14159265358979323846;

double smooth_l1(double d) { return std::fabs(d) < 1.0 ? 0.5 * d * d : std::fabs(d) - 0.5; }
double smooth_l1_grad(double d) { return std::fabs(d) < 1.0 ? d : (d > 0 ? 1.0 : -1.0); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Two-class softmax over (background, object) logits.
void softmax2(double bg_logit, double obj_logit, double& p_bg, double& p_obj) {
  const double m = std::max(bg_logit, obj_logit);
  const double eb = std::exp(bg_logit - m);
  const double eo = std::exp(obj_logit - m);
  const double z = eb + eo;
  p_bg = eb / z;
  p_obj = eo / z;
}

}  // namespace

std::vector<double> alpha_coefficients(const std::vector<double>& conf_ranked_desc, int K,
                                       bool* overflow) {
  if (overflow) *overflow = false;
  if (K > static_cast<int>(conf_ranked_desc.size()) && overflow) *overflow = true;
  std::vector<double> alpha(conf_ranked_desc.size(), 1.0);
  const int damped = std::min<int>(K, static_cast<int>(conf_ranked_desc.size()));
  for (int k = 0; k < damped; ++k) {
    const double c = conf_ranked_desc[k];
    alpha[k] = 0.5 * (1.0 - c) * (1.0 - c);
  }
  return alpha;
}

LossBreakdown multibox_loss(const AnchorSet& anchors, const std::vector<AnchorRaw>& raw,
                            const MatchAssignment& assignment, const SampleTarget& target,
                            const DetectorConfig& cfg, std::vector<AnchorRaw>* grad_raw) {
  const size_t n = anchors.size();
  if (raw.size() != n || assignment.positive.size() != n) {
    throw ConfigError("multibox_loss: anchor/raw/assignment size mismatch");
  }
  if (target.S < 0.0 || target.S > 1.0) throw ConfigError("multibox_loss: S must be in [0,1]");
  if (grad_raw) grad_raw->assign(n, AnchorRaw{});

  LossBreakdown out;
  out.S = target.S;
  out.K = target.K;

  // Class probabilities for every anchor (needed for mining and ranking).
  std::vector<double> p_bg(n), p_obj(n);
  for (size_t i = 0; i < n; ++i) softmax2(raw[i][4], raw[i][5], p_bg[i], p_obj[i]);

  // Positive terms.
  const double theta_sin = target.has_gt ? std::sin(2.0 * target.gt.theta) : 0.0;
  const double theta_cos = target.has_gt ? std::cos(2.0 * target.gt.theta) : 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!assignment.positive[i]) continue;
    if (!target.has_gt) throw ConfigError("multibox_loss: positive anchors but no ground truth");
    ++out.n_pos;
    const BoxEncoding enc =
        encode_box(target.gt.cx, target.gt.cy, target.gt.box_px, target.gt.box_px, anchors[i]);
    const double enc_t[4] = {enc.dx, enc.dy, enc.dw, enc.dh};
    double loc = 0;
    for (int c = 0; c < 4; ++c) loc += smooth_l1(raw[i][c] - enc_t[c]);
    const double conf = -std::log(std::max(p_obj[i], 1e-300));
    const double th =
        smooth_l1(raw[i][6] - theta_sin) + smooth_l1(raw[i][7] - theta_cos);
    const double s_pred = sigmoid(raw[i][8]);
    const double sc = (s_pred - target.S) * (s_pred - target.S);
    out.l_pos += cfg.loc_weight * loc + cfg.conf_weight * conf + cfg.theta_weight * th +
                 cfg.score_weight * sc;
    if (grad_raw) {
      AnchorRaw& g = (*grad_raw)[i];
      const double w = target.S;  // Eq-style positive weighting, detached
      for (int c = 0; c < 4; ++c) g[c] += w * cfg.loc_weight * smooth_l1_grad(raw[i][c] - enc_t[c]);
      // d(-log p_obj)/d logits = (p - onehot_obj)
      g[4] += w * cfg.conf_weight * p_bg[i];
      g[5] += w * cfg.conf_weight * (p_obj[i] - 1.0);
      g[6] += w * cfg.theta_weight * smooth_l1_grad(raw[i][6] - theta_sin);
      g[7] += w * cfg.theta_weight * smooth_l1_grad(raw[i][7] - theta_cos);
      g[8] += w * cfg.score_weight * 2.0 * (s_pred - target.S) * s_pred * (1.0 - s_pred);
    }
  }
  out.no_positives = out.n_pos == 0;

  // Hard-negative pool: every non-positive anchor ranked by objectness, kept
  // to hard_negative_ratio per positive (at least one positive's worth).
  std::vector<int> negatives;
  negatives.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    if (!assignment.positive[i]) negatives.push_back(static_cast<int>(i));
  }
  std::sort(negatives.begin(), negatives.end(), [&](int a, int b) {
    if (p_obj[a] != p_obj[b]) return p_obj[a] > p_obj[b];
    return a < b;
  });
  const size_t keep =
      std::min(negatives.size(),
               static_cast<size_t>(cfg.hard_negative_ratio) * std::max(out.n_pos, 1));
  negatives.resize(keep);

  // Damping rank: by grasping-position probability (default) or by
  // background probability (literal alternative).
  std::vector<int> ranked = negatives;
  if (cfg.alpha_rank_background) {
    std::sort(ranked.begin(), ranked.end(), [&](int a, int b) {
      if (p_bg[a] != p_bg[b]) return p_bg[a] > p_bg[b];
      return a < b;
    });
  }
  std::vector<double> rank_conf(ranked.size());
  for (size_t k = 0; k < ranked.size(); ++k) {
    rank_conf[k] = cfg.alpha_rank_background ? p_bg[ranked[k]] : p_obj[ranked[k]];
  }
  bool overflow = false;
  const std::vector<double> alpha = alpha_coefficients(rank_conf, target.K, &overflow);
  out.damping_overflow = overflow;

  for (size_t k = 0; k < ranked.size(); ++k) {
    const int i = ranked[k];
    const double ce = -std::log(std::max(p_bg[i], 1e-300)) * cfg.conf_weight;
    const double contribution = alpha[k] * ce;
    out.weighted_neg += contribution;
    if (alpha[k] < 1.0) ++out.damped_count;
    out.negatives.push_back({i, rank_conf[k], alpha[k], contribution});
    if (grad_raw) {
      AnchorRaw& g = (*grad_raw)[i];
      g[4] += alpha[k] * cfg.conf_weight * (p_bg[i] - 1.0);
      g[5] += alpha[k] * cfg.conf_weight * p_obj[i];
    }
  }

  out.total = target.S * out.l_pos + out.weighted_neg;
  return out;
}

struct DetectorNet::Forward {
  nn::Activations trunk, deep, head1, head2;
  nn::Tensor f1, f2;
};

DetectorNet::DetectorNet(int image_px, double workspace_cm, const DetectorConfig& cfg,
                         uint64_t init_seed)
    : cfg_(cfg), image_px_(image_px), px_per_cm_(image_px / workspace_cm) {
  if (image_px % 16 != 0) {
    throw ConfigError("detector image resolution must be divisible by 16, got " +
                      std::to_string(image_px));
  }
  if (cfg.channels.size() != 4) throw ConfigError("detector needs exactly 4 backbone widths");
  grid1_cells_ = image_px / 8;
  grid2_cells_ = image_px / 16;
  anchors_ = AnchorSet(image_px, {{grid1_cells_, cfg.grid1_box_px}, {grid2_cells_, cfg.grid2_box_px}});

  Rng rng(init_seed);
  using nn::LayerSpec;
  // Size-preserving convolutions (padding 2) so the feature grids stay
  // aligned with the anchor tiling.
  trunk_ = nn::Network(
      {
          LayerSpec::avgpool2(),
          LayerSpec::conv(cfg.channels[0], 2),
          LayerSpec::relu(),
          LayerSpec::maxpool2(),
          LayerSpec::conv(cfg.channels[1], 2),
          LayerSpec::relu(),
          LayerSpec::maxpool2(),
          LayerSpec::conv(cfg.channels[2], 2),
          LayerSpec::relu(),
      },
      {3, image_px, image_px}, rng);
  deep_ = nn::Network(
      {
          LayerSpec::maxpool2(),
          LayerSpec::conv(cfg.channels[3], 2),
          LayerSpec::relu(),
      },
      trunk_.output_shape(), rng);
  head1_ = nn::Network({LayerSpec::conv(kAnchorChannels, 2)}, trunk_.output_shape(), rng);
  head2_ = nn::Network({LayerSpec::conv(kAnchorChannels, 2)}, deep_.output_shape(), rng);

  adam_trunk_ = nn::Adam(trunk_, cfg.adam);
  adam_deep_ = nn::Adam(deep_, cfg.adam);
  adam_head1_ = nn::Adam(head1_, cfg.adam);
  adam_head2_ = nn::Adam(head2_, cfg.adam);
}

void DetectorNet::forward_raw(const nn::Tensor& image, std::vector<AnchorRaw>& raw,
                              Forward* rec) const {
  nn::Tensor f1, f2, h1, h2;
  if (rec) {
    f1 = trunk_.forward(image, rec->trunk);
    f2 = deep_.forward(f1, rec->deep);
    h1 = head1_.forward(f1, rec->head1);
    h2 = head2_.forward(f2, rec->head2);
    rec->f1 = f1;
    rec->f2 = f2;
  } else {
    f1 = trunk_.infer(image);
    f2 = deep_.infer(f1);
    h1 = head1_.infer(f1);
    h2 = head2_.infer(f2);
  }
  raw.assign(anchors_.size(), AnchorRaw{});
  const int g1 = grid1_cells_, g2 = grid2_cells_;
  for (int r = 0; r < g1; ++r) {
    for (int c = 0; c < g1; ++c) {
      AnchorRaw& a = raw[static_cast<size_t>(r) * g1 + c];
      for (int ch = 0; ch < kAnchorChannels; ++ch) a[ch] = h1.at3(ch, r, c);
    }
  }
  const size_t base = static_cast<size_t>(g1) * g1;
  for (int r = 0; r < g2; ++r) {
    for (int c = 0; c < g2; ++c) {
      AnchorRaw& a = raw[base + static_cast<size_t>(r) * g2 + c];
      for (int ch = 0; ch < kAnchorChannels; ++ch) a[ch] = h2.at3(ch, r, c);
    }
  }
}

std::vector<AnchorRaw> DetectorNet::raw_outputs(const nn::Tensor& image) const {
  std::vector<AnchorRaw> raw;
  forward_raw(image, raw, nullptr);
  return raw;
}

GroundTruthBox DetectorNet::gt_from_pose(const sim::GraspPose& pose) const {
  return {pose.x * px_per_cm_, pose.y * px_per_cm_, cfg_.gt_box_cm * px_per_cm_, pose.theta};
}

std::vector<Candidate> DetectorNet::predict(const nn::Tensor& image) const {
  const std::vector<AnchorRaw> raw = raw_outputs(image);
  std::vector<Candidate> cands;
  const double workspace = image_px_ / px_per_cm_;
  for (size_t i = 0; i < raw.size(); ++i) {
    double p_bg, p_obj;
    softmax2(raw[i][4], raw[i][5], p_bg, p_obj);
    if (p_obj <= cfg_.conf_min) continue;
    double cx, cy, w, h;
    decode_box({raw[i][0], raw[i][1], raw[i][2], raw[i][3]}, anchors_[i], cx, cy, w, h);
    const double theta = sim::wrap_axis_angle(0.5 * std::atan2(raw[i][6], raw[i][7]));
    Candidate cand;
    cand.pose.x = std::clamp(cx / px_per_cm_, 0.0, workspace);
    cand.pose.y = std::clamp(cy / px_per_cm_, 0.0, workspace);
    cand.pose.theta = theta;
    cand.score = sigmoid(raw[i][8]);
    cand.conf = p_obj;
    cand.box_px = {{cx, cy}, w, h, theta};
    cand.anchor_index = static_cast<int>(i);
    cands.push_back(cand);
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.anchor_index < b.anchor_index;
  });
  return nms_rotated(cands, cfg_.nms_iou);
}

DetectorNet::StepResult DetectorNet::train_step(const std::vector<TrainSample>& batch, int threads) {
  if (batch.empty()) throw ConfigError("detector train_step: empty batch");
  const int n = static_cast<int>(batch.size());
  StepResult result;
  result.per_sample.resize(n);

  struct ItemGrads {
    nn::GradBuffer trunk, deep, head1, head2;
  };
  std::vector<ItemGrads> grads(n);

  nn::parallel_items(n, threads, [&](int item) {
    const TrainSample& sample = batch[item];
    Forward rec;
    std::vector<AnchorRaw> raw;
    forward_raw(sample.image, raw, &rec);

    MatchAssignment assignment = sample.has_gt
                                     ? match_ground_truth(anchors_, gt_from_pose(sample.pose),
                                                          cfg_.match_iou)
                                     : MatchAssignment::all_negative(anchors_.size());
    SampleTarget target;
    target.has_gt = sample.has_gt;
    if (sample.has_gt) target.gt = gt_from_pose(sample.pose);
    target.S = sample.S;
    target.K = sample.K;

    std::vector<AnchorRaw> graw;
    result.per_sample[item] = multibox_loss(anchors_, raw, assignment, target, cfg_, &graw);

    // Scatter anchor gradients back into head tensors, scaled to the batch
    // mean.
    const double scale = 1.0 / n;
    nn::Tensor dh1(head1_.output_shape());
    nn::Tensor dh2(head2_.output_shape());
    const int g1 = grid1_cells_, g2 = grid2_cells_;
    for (int r = 0; r < g1; ++r) {
      for (int c = 0; c < g1; ++c) {
        const AnchorRaw& g = graw[static_cast<size_t>(r) * g1 + c];
        for (int ch = 0; ch < kAnchorChannels; ++ch) dh1.at3(ch, r, c) = g[ch] * scale;
      }
    }
    const size_t base = static_cast<size_t>(g1) * g1;
    for (int r = 0; r < g2; ++r) {
      for (int c = 0; c < g2; ++c) {
        const AnchorRaw& g = graw[base + static_cast<size_t>(r) * g2 + c];
        for (int ch = 0; ch < kAnchorChannels; ++ch) dh2.at3(ch, r, c) = g[ch] * scale;
      }
    }

    ItemGrads& ig = grads[item];
    ig.trunk = trunk_.make_grad_buffer();
    ig.deep = deep_.make_grad_buffer();
    ig.head1 = head1_.make_grad_buffer();
    ig.head2 = head2_.make_grad_buffer();
    nn::Tensor df1_a = head1_.backward(rec.head1, dh1, ig.head1);
    nn::Tensor df2 = head2_.backward(rec.head2, dh2, ig.head2);
    nn::Tensor df1_b = deep_.backward(rec.deep, df2, ig.deep);
    for (size_t i = 0; i < df1_a.data.size(); ++i) df1_a.data[i] += df1_b.data[i];
    trunk_.backward(rec.trunk, df1_a, ig.trunk);
  });

  // Deterministic reduction in item order, independent of thread count.
  nn::GradBuffer g_trunk = std::move(grads[0].trunk);
  nn::GradBuffer g_deep = std::move(grads[0].deep);
  nn::GradBuffer g_head1 = std::move(grads[0].head1);
  nn::GradBuffer g_head2 = std::move(grads[0].head2);
  for (int i = 1; i < n; ++i) {
    nn::accumulate(g_trunk, grads[i].trunk);
    nn::accumulate(g_deep, grads[i].deep);
    nn::accumulate(g_head1, grads[i].head1);
    nn::accumulate(g_head2, grads[i].head2);
  }

  for (const LossBreakdown& b : result.per_sample) {
    result.mean_total += b.total / n;
    result.mean_l_pos += b.l_pos / n;
    result.mean_weighted_neg += b.weighted_neg / n;
    result.mean_S += b.S / n;
    result.mean_K += static_cast<double>(b.K) / n;
    result.damped_events += b.damped_count;
  }

  if (!std::isfinite(result.mean_total)) {
    result.skipped = true;
    result.diagnostic = "non-finite detector loss; optimizer step skipped";
    return result;
  }
  try {
    adam_trunk_.step(trunk_, g_trunk);
    adam_deep_.step(deep_, g_deep);
    adam_head1_.step(head1_, g_head1);
    adam_head2_.step(head2_, g_head2);
  } catch (const NumericError& e) {
    result.skipped = true;
    result.diagnostic = e.what();
  }
  return result;
}

void DetectorNet::pack(nn::TensorFile& file, bool with_optimizer) const {
  nn::pack_network(file, trunk_, "det.trunk.");
  nn::pack_network(file, deep_, "det.deep.");
  nn::pack_network(file, head1_, "det.head1.");
  nn::pack_network(file, head2_, "det.head2.");
  if (with_optimizer) {
    auto pack_adam = [&](const nn::Adam& adam, const nn::Network& net, const std::string& prefix) {
      auto params = net.params();
      for (size_t i = 0; i < params.size(); ++i) {
        file.put(prefix + "m." + params[i].name, adam.moments_m()[i]);
        file.put(prefix + "v." + params[i].name, adam.moments_v()[i]);
      }
      file.put(prefix + "step", nn::Tensor({1}, {static_cast<double>(adam.step_count())}));
    };
    pack_adam(adam_trunk_, trunk_, "det.adam.trunk.");
    pack_adam(adam_deep_, deep_, "det.adam.deep.");
    pack_adam(adam_head1_, head1_, "det.adam.head1.");
    pack_adam(adam_head2_, head2_, "det.adam.head2.");
  }
}

void DetectorNet::unpack(const nn::TensorFile& file, bool with_optimizer) {
  nn::unpack_network(file, trunk_, "det.trunk.");
  nn::unpack_network(file, deep_, "det.deep.");
  nn::unpack_network(file, head1_, "det.head1.");
  nn::unpack_network(file, head2_, "det.head2.");
  if (with_optimizer) {
    auto unpack_adam = [&](nn::Adam& adam, const nn::Network& net, const std::string& prefix) {
      auto params = net.params();
      for (size_t i = 0; i < params.size(); ++i) {
        adam.moments_m()[i] = file.get(prefix + "m." + params[i].name);
        adam.moments_v()[i] = file.get(prefix + "v." + params[i].name);
      }
      adam.set_step_count(static_cast<int64_t>(file.get(prefix + "step").data[0]));
    };
    unpack_adam(adam_trunk_, trunk_, "det.adam.trunk.");
    unpack_adam(adam_deep_, deep_, "det.adam.deep.");
    unpack_adam(adam_head1_, head1_, "det.adam.head1.");
    unpack_adam(adam_head2_, head2_, "det.adam.head2.");
  }
}

}  // namespace grasp::det
