#include "grasplearn/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "grasplearn/errors.hpp"

namespace grasp::eval {

double Embedding::distance(const Embedding& other) const {
  const double dx = v[0] - other.v[0];
  const double dy = v[1] - other.v[1];
  return std::sqrt(dx * dx + dy * dy);
}

EmbedderNet::EmbedderNet(int image_px, const nn::AdamConfig& adam, uint64_t init_seed) {
  Rng rng(init_seed);
  using nn::LayerSpec;
  net_ = nn::Network(
      {
          LayerSpec::avgpool2(),
          LayerSpec::conv(20, 1),
          LayerSpec::relu(),
          LayerSpec::maxpool2(),
          LayerSpec::conv(50, 1),
          LayerSpec::relu(),
          LayerSpec::maxpool2(),
          LayerSpec::fc(500),
          LayerSpec::relu(),
          LayerSpec::fc(10),
          LayerSpec::relu(),
          LayerSpec::fc(2),
          LayerSpec::tanh(),
      },
      {3, image_px, image_px}, rng);
  adam_ = nn::Adam(net_, adam);
}

Embedding EmbedderNet::embed(const nn::Tensor& side_image) const {
  const nn::Tensor out = net_.infer(side_image);
  return {{out.data[0], out.data[1]}};
}

void EmbedderNet::pack(nn::TensorFile& file, bool with_optimizer) const {
  nn::pack_network(file, net_, "embedder.");
  if (with_optimizer) {
    auto params = net_.params();
    for (size_t i = 0; i < params.size(); ++i) {
      file.put("embedder.adam.m." + params[i].name, adam_.moments_m()[i]);
      file.put("embedder.adam.v." + params[i].name, adam_.moments_v()[i]);
    }
    file.put("embedder.adam.step", nn::Tensor({1}, {static_cast<double>(adam_.step_count())}));
  }
}

void EmbedderNet::unpack(const nn::TensorFile& file, bool with_optimizer) {
  nn::unpack_network(file, net_, "embedder.");
  if (with_optimizer) {
    auto params = net_.params();
    for (size_t i = 0; i < params.size(); ++i) {
      adam_.moments_m()[i] = file.get("embedder.adam.m." + params[i].name);
      adam_.moments_v()[i] = file.get("embedder.adam.v." + params[i].name);
    }
    adam_.set_step_count(static_cast<int64_t>(file.get("embedder.adam.step").data[0]));
  }
}

double contrastive_loss(const Embedding& a, const Embedding& b, int y, const EvaluatorConfig& cfg) {
  std::array<double, 2> da, db;
  return contrastive_loss_grad(a, b, y, cfg, da, db);
}

double contrastive_loss_grad(const Embedding& a, const Embedding& b, int y,
                             const EvaluatorConfig& cfg, std::array<double, 2>& da,
                             std::array<double, 2>& db) {
  if (y != 0 && y != 1) throw ConfigError("contrastive loss: y must be 0 or 1");
  const double dx = a.v[0] - b.v[0];
  const double dy = a.v[1] - b.v[1];
  const double d2 = dx * dx + dy * dy;
  da = {0, 0};
  db = {0, 0};
  if (y == 0) {
    // Similar pair: pull together, 0.5 * D^2.
    da = {dx, dy};
    db = {-dx, -dy};
    return 0.5 * d2;
  }
  if (!cfg.squared_hinge) {
    // Dissimilar: 0.5 * max(0, margin - D^2).
    const double l = cfg.margin - d2;
    if (l <= 0) return 0.0;
    da = {-dx, -dy};
    db = {dx, dy};
    return 0.5 * l;
  }
  // Standard squared hinge: 0.5 * max(0, margin - D)^2.
  const double d = std::sqrt(d2);
  const double gap = cfg.margin - d;
  if (gap <= 0) return 0.0;
  if (d > 1e-12) {
    const double c = -gap / d;
    da = {c * dx, c * dy};
    db = {-c * dx, -c * dy};
  }
  return 0.5 * gap * gap;
}

int label_pair(const nn::Tensor& image_a, const nn::Tensor& image_b, const EvaluatorConfig& cfg) {
  if (!image_a.same_shape(image_b)) throw ConfigError("label_pair: image shapes differ");
  const int h = image_a.shape[1], w = image_a.shape[2];
  const double tau_pix = cfg.pixel_threshold;
  int differing = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double diff = 0;
      for (int c = 0; c < 3; ++c) {
        diff = std::max(diff, std::fabs(image_a.at3(c, y, x) - image_b.at3(c, y, x)));
      }
      if (diff > tau_pix) ++differing;
    }
  }
  const double tau_count = cfg.count_threshold_frac * h * w;
  return differing > tau_count ? 1 : 0;
}

int PreSampleSet::optimum_count() const {
  int n = 0;
  for (const PreSample& s : samples) n += s.optimum ? 1 : 0;
  return n;
}

int PreSampleSet::suboptimum_count() const { return static_cast<int>(samples.size()) - optimum_count(); }

PreSampleSet generate_presamples(const sim::SceneConfig& scene_cfg, const sim::RenderConfig& render_cfg,
                                 const EvaluatorConfig& cfg, sim::ObjectKind kind,
                                 double optimum_offset, uint64_t seed) {
  const PretrainConfig& pc = cfg.pretrain;
  if (pc.optimum_count < 2 || pc.suboptimum_count < 1) {
    throw ConfigError("pre-sample design needs at least 2 optimum and 1 sub-optimum samples");
  }
  PreSampleSet set;
  Rng rng(derive_seed(seed, "presamples"));
  const int total = pc.optimum_count + pc.suboptimum_count;
  for (int i = 0; i < total; ++i) {
    const bool optimum = i < pc.optimum_count;
    sim::Scene scene =
        sim::reset_scene(1, kind, derive_seed(seed, "presample-scene", i), scene_cfg, optimum_offset);
    const sim::SimObject& obj = scene.objects[0];
    double along = 0, angle = 0;
    const double seg_limit = obj.segment_half() - 0.25;
    if (optimum) {
      along = rng.uniform(-pc.optimum_along_jitter, pc.optimum_along_jitter);
      angle = rng.uniform(-pc.optimum_angle_jitter, pc.optimum_angle_jitter);
    } else if (i % 2 == 0) {
      // Displaced along the axis.
      for (int attempt = 0;; ++attempt) {
        const double magnitude = rng.uniform(pc.sub_along_min, pc.sub_along_max);
        along = rng.coin() ? magnitude : -magnitude;
        if (std::fabs(optimum_offset + along) <= seg_limit) break;
        if (attempt > 64) {
          along = std::copysign(pc.sub_along_min, -optimum_offset);
          break;
        }
      }
      angle = rng.uniform(-pc.optimum_angle_jitter, pc.optimum_angle_jitter);
    } else {
      // Rotated off the perpendicular.
      along = rng.uniform(-pc.optimum_along_jitter, pc.optimum_along_jitter);
      const double magnitude = rng.uniform(pc.sub_angle_min, pc.sub_angle_max);
      angle = rng.coin() ? magnitude : -magnitude;
    }

    const sim::GraspPose opt = sim::optimum_pose(obj);
    const sim::Vec2 u = obj.axis_dir();
    sim::GraspPose pose;
    pose.x = opt.x + along * u.x;
    pose.y = opt.y + along * u.y;
    pose.theta = sim::wrap_axis_angle(opt.theta + angle);

    auto [outcome, next] = sim::execute_grasp(scene, pose, scene_cfg);
    if (!outcome.success) {
      throw NumericError("pre-sample generation produced an ungraspable pose; check tolerances");
    }
    PreSample sample;
    sample.top_image = sim::render_top(scene, render_cfg);
    sample.side_image = sim::render_side(scene, outcome, render_cfg);
    sample.pose = pose;
    sample.optimum = optimum;
    sample.along_error = outcome.errors->along_axis;
    sample.angle_error = outcome.errors->angle;
    set.samples.push_back(std::move(sample));
  }
  return set;
}

SeparationMetrics separation_metrics(const PreSampleSet& set, const EmbedderNet& net) {
  std::vector<Embedding> opt, sub;
  for (const PreSample& s : set.samples) {
    (s.optimum ? opt : sub).push_back(net.embed(s.side_image));
  }
  SeparationMetrics m;
  int n_intra = 0;
  for (size_t i = 0; i < opt.size(); ++i) {
    for (size_t j = i + 1; j < opt.size(); ++j) {
      m.intra_optimum += opt[i].distance(opt[j]);
      ++n_intra;
    }
  }
  if (n_intra) m.intra_optimum /= n_intra;
  int n_inter = 0;
  for (const Embedding& a : opt) {
    for (const Embedding& b : sub) {
      m.inter_class += a.distance(b);
      ++n_inter;
    }
  }
  if (n_inter) m.inter_class /= n_inter;
  m.ratio = m.intra_optimum > 0 ? m.inter_class / m.intra_optimum
                                : (m.inter_class > 0 ? std::numeric_limits<double>::infinity() : 0.0);
  return m;
}

namespace {

// Shared batch step: forwards each pair through the shared-weight network,
// applies the contrastive loss, accumulates per-item gradients in item order.
PairStepResult pair_batch_step(EmbedderNet& net, const std::vector<const nn::Tensor*>& firsts,
                               const std::vector<const nn::Tensor*>& seconds,
                               const std::vector<int>& labels, const EvaluatorConfig& cfg,
                               const sim::RenderConfig& render_cfg, Rng& rng, int threads) {
  const int n = static_cast<int>(labels.size());
  std::vector<nn::GradBuffer> grads(n);
  std::vector<double> losses(n, 0.0);

  // Augmentation draws happen up front on one stream so the batch is
  // deterministic regardless of the thread partition.
  std::vector<nn::Tensor> aug_a(n), aug_b(n);
  for (int i = 0; i < n; ++i) {
    aug_a[i] = sim::augment(*firsts[i], rng, render_cfg);
    aug_b[i] = sim::augment(*seconds[i], rng, render_cfg);
  }

  nn::Network& network = net.net();
  nn::parallel_items(n, threads, [&](int item) {
    nn::Activations acts_a, acts_b;
    const nn::Tensor out_a = network.forward(aug_a[item], acts_a);
    const nn::Tensor out_b = network.forward(aug_b[item], acts_b);
    const Embedding ea{{out_a.data[0], out_a.data[1]}};
    const Embedding eb{{out_b.data[0], out_b.data[1]}};
    std::array<double, 2> da, db;
    losses[item] = contrastive_loss_grad(ea, eb, labels[item], cfg, da, db);
    const double scale = 1.0 / n;
    grads[item] = network.make_grad_buffer();
    nn::Tensor ga({2}, {da[0] * scale, da[1] * scale});
    nn::Tensor gb({2}, {db[0] * scale, db[1] * scale});
    network.backward(acts_a, ga, grads[item]);
    network.backward(acts_b, gb, grads[item]);
  });

  PairStepResult result;
  for (double l : losses) result.mean_loss += l / n;
  if (!std::isfinite(result.mean_loss)) {
    result.skipped = true;
    result.diagnostic = "non-finite contrastive loss; optimizer step skipped";
    return result;
  }
  nn::GradBuffer total = std::move(grads[0]);
  for (int i = 1; i < n; ++i) nn::accumulate(total, grads[i]);
  try {
    net.adam().step(network, total);
  } catch (const NumericError& e) {
    result.skipped = true;
    result.diagnostic = e.what();
  }
  return result;
}

}  // namespace

PretrainReport pretrain(PreSampleSet& set, EmbedderNet& net, const EvaluatorConfig& cfg,
                        const sim::RenderConfig& render_cfg, uint64_t seed, int threads) {
  const PretrainConfig& pc = cfg.pretrain;
  if (set.optimum_count() < 2 || set.suboptimum_count() < 1) {
    throw ConfigError("pretrain: both pre-sample classes must be present");
  }
  Rng rng(derive_seed(seed, "pretrain"));
  PretrainReport report;
  const size_t n = set.samples.size();
  for (int step = 0; step < pc.max_steps; ++step) {
    std::vector<const nn::Tensor*> firsts, seconds;
    std::vector<int> labels;
    for (int p = 0; p < pc.batch_pairs; ++p) {
      const size_t i = rng.index(n);
      size_t j = rng.index(n - 1);
      if (j >= i) ++j;
      firsts.push_back(&set.samples[i].side_image);
      seconds.push_back(&set.samples[j].side_image);
      labels.push_back(set.samples[i].optimum == set.samples[j].optimum ? 0 : 1);
    }
    pair_batch_step(net, firsts, seconds, labels, cfg, render_cfg, rng, threads);
    report.steps = step + 1;
    if (report.steps >= pc.min_steps && report.steps % 20 == 0) {
      report.separation = separation_metrics(set, net);
      if (report.separation.ratio > pc.separation_target) break;
    }
  }
  report.separation = separation_metrics(set, net);
  if (report.separation.inter_class <= report.separation.intra_optimum) {
    throw NumericError("pretraining failed to separate optimum from sub-optimum samples (inter " +
                       std::to_string(report.separation.inter_class) + " <= intra " +
                       std::to_string(report.separation.intra_optimum) + ")");
  }
  set.sigma = std::max(report.separation.intra_optimum, cfg.sigma_floor);
  report.sigma = set.sigma;
  return report;
}

namespace {

// Mean embedding of the optimum group plus the calibration scale (mean
// pairwise distance within the group), both under the current network.
void optimum_anchor(const PreSampleSet& presamples, const EmbedderNet& net,
                    const EvaluatorConfig& cfg, Embedding& mean, double& sigma) {
  std::vector<Embedding> opt;
  for (const PreSample& s : presamples.samples) {
    if (s.optimum) opt.push_back(net.embed(s.side_image));
  }
  if (opt.empty()) throw StateError("grasp_score: pre-sample set has no optimum samples");
  mean = Embedding{};
  for (const Embedding& e : opt) {
    mean.v[0] += e.v[0];
    mean.v[1] += e.v[1];
  }
  mean.v[0] /= static_cast<double>(opt.size());
  mean.v[1] /= static_cast<double>(opt.size());
  double intra = 0;
  int pairs = 0;
  for (size_t i = 0; i < opt.size(); ++i) {
    for (size_t j = i + 1; j < opt.size(); ++j) {
      intra += opt[i].distance(opt[j]);
      ++pairs;
    }
  }
  sigma = std::max(pairs ? intra / pairs : 0.0, cfg.sigma_floor);
}

}  // namespace

double grasp_score(const nn::Tensor& side_image, const PreSampleSet& presamples,
                   const EmbedderNet& net, const EvaluatorConfig& cfg, OptimumCache* cache) {
  Embedding mean;
  double sigma;
  if (cache && cache->version == net.net().version()) {
    mean = cache->mean;
    sigma = cache->sigma;
  } else {
    optimum_anchor(presamples, net, cfg, mean, sigma);
    if (cache) {
      cache->version = net.net().version();
      cache->mean = mean;
      cache->sigma = sigma;
    }
  }
  const double dist = net.embed(side_image).distance(mean);
  return std::max(cfg.score_floor, std::exp(-dist / sigma));
}

PairStepResult train_pairs(EmbedderNet& net, const data::PairDataset& pool,
                           const EvaluatorConfig& cfg, const sim::RenderConfig& render_cfg,
                           Rng& rng, int threads) {
  // Candidate indices: trials always; pre-samples if configured.
  std::vector<size_t> candidates;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (cfg.train_on_presample_pairs || pool.entries()[i].presample_class < 0) {
      candidates.push_back(i);
    }
  }
  if (candidates.size() < 2) {
    throw StateError("train_pairs: pair pool needs at least two usable entries");
  }
  std::vector<const nn::Tensor*> firsts, seconds;
  std::vector<int> labels;
  for (int p = 0; p < cfg.batch_pairs; ++p) {
    const size_t ai = rng.index(candidates.size());
    size_t bi = rng.index(candidates.size() - 1);
    if (bi >= ai) ++bi;
    const size_t a = candidates[ai];
    const size_t b = candidates[bi];
    const auto& ea = pool.entries()[a];
    const auto& eb = pool.entries()[b];
    firsts.push_back(&ea.side_image);
    seconds.push_back(&eb.side_image);
    labels.push_back(label_pair(ea.side_image, eb.side_image, cfg));
  }
  return pair_batch_step(net, firsts, seconds, labels, cfg, render_cfg, rng, threads);
}

size_t rescore_dataset(data::DetectionDataset& d1, const data::PairDataset& d2,
                       const PreSampleSet& presamples, const EmbedderNet& net,
                       const EvaluatorConfig& cfg) {
  OptimumCache cache;
  size_t rescored = 0;
  for (size_t i = 0; i < d1.size(); ++i) {
    const data::TrialSample& sample = d1.samples()[i];
    if (!sample.success) continue;
    const data::PairDataset::Entry* entry = d2.find_trial(sample.trial_index);
    if (!entry) continue;  // no side image recorded for this trial
    d1.set_score(i, grasp_score(entry->side_image, presamples, net, cfg, &cache));
    ++rescored;
  }
  return rescored;
}

void save_presamples(const PreSampleSet& set, const std::string& tensor_path,
                     const std::string& meta_path) {
  nn::TensorFile file;
  nlohmann::json meta;
  meta["version"] = 1;
  meta["sigma"] = set.sigma;
  meta["samples"] = nlohmann::json::array();
  for (size_t i = 0; i < set.samples.size(); ++i) {
    const PreSample& s = set.samples[i];
    file.put("presample." + std::to_string(i) + ".top", s.top_image);
    file.put("presample." + std::to_string(i) + ".side", s.side_image);
    meta["samples"].push_back({{"optimum", s.optimum},
                               {"x", s.pose.x},
                               {"y", s.pose.y},
                               {"theta", s.pose.theta},
                               {"along_error", s.along_error},
                               {"angle_error", s.angle_error}});
  }
  file.save(tensor_path);
  std::ofstream os(meta_path, std::ios::trunc);
  if (!os) throw StateError("cannot open for writing: " + meta_path);
  os << meta.dump(2) << "\n";
}

PreSampleSet load_presamples(const std::string& tensor_path, const std::string& meta_path) {
  std::ifstream is(meta_path);
  if (!is) throw StateError("missing pre-sample metadata: " + meta_path);
  nlohmann::json meta = nlohmann::json::parse(is, nullptr, false);
  if (meta.is_discarded()) throw StateError("malformed pre-sample metadata: " + meta_path);
  const nn::TensorFile file = nn::TensorFile::load(tensor_path);
  PreSampleSet set;
  set.sigma = meta.at("sigma").get<double>();
  const auto& samples = meta.at("samples");
  for (size_t i = 0; i < samples.size(); ++i) {
    PreSample s;
    s.top_image = file.get("presample." + std::to_string(i) + ".top");
    s.side_image = file.get("presample." + std::to_string(i) + ".side");
    s.optimum = samples[i].at("optimum").get<bool>();
    s.pose = {samples[i].at("x").get<double>(), samples[i].at("y").get<double>(),
              samples[i].at("theta").get<double>()};
    s.along_error = samples[i].at("along_error").get<double>();
    s.angle_error = samples[i].at("angle_error").get<double>();
    set.samples.push_back(std::move(s));
  }
  return set;
}

}  // namespace grasp::eval
