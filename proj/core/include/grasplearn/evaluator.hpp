#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "grasplearn/adam.hpp"
#include "grasplearn/checkpoint.hpp"
#include "grasplearn/dataset.hpp"
#include "grasplearn/layers.hpp"
#include "grasplearn/render.hpp"
#include "grasplearn/rng.hpp"
#include "grasplearn/scene.hpp"
#include "grasplearn/tensor.hpp"

namespace grasp::eval {

struct Embedding {
  std::array<double, 2> v{0, 0};

  double distance(const Embedding& other) const;
};

struct PretrainConfig {
  int optimum_count = 15;
  int suboptimum_count = 15;
  double optimum_along_jitter = 0.5;                        // cm
  double optimum_angle_jitter = 2.0 * 3.14159265358979323846 / 180.0;
  double sub_along_min = 2.0, sub_along_max = 4.0;          // cm
  double sub_angle_min = 10.0 * 3.14159265358979323846 / 180.0;
  double sub_angle_max = 20.0 * 3.14159265358979323846 / 180.0;
  int max_steps = 600;
  int min_steps = 60;
  int batch_pairs = 4;
  double separation_target = 2.0;  // required inter/intra distance ratio
};

struct EvaluatorConfig {
  double margin = 1.0;
  // false: dissimilar loss is margin - D^2 (the form used here by default);
  // true: standard squared hinge max(0, margin - D)^2, for comparison.
  bool squared_hinge = false;
  double pixel_threshold = 0.10;        // fraction of the value range
  double count_threshold_frac = 0.01;   // fraction of the pixel count
  double score_floor = 0.05;            // S_min
  double sigma_floor = 1e-3;
  nn::AdamConfig adam{};
  int batch_pairs = 4;
  int steps_per_trial = 4;
  bool train_on_presample_pairs = true;
  PretrainConfig pretrain{};
};

// Shared-weight embedding network: two 5x5 convolutions (20 and 50 channels)
// and three fully-connected layers (500, 10, 2) with a tanh output, plus
// pooling stages that keep the CPU cost proportionate to the input size.
// Both branches of a pair run through this single parameter set.
class EmbedderNet {
 public:
  EmbedderNet() = default;
  EmbedderNet(int image_px, const nn::AdamConfig& adam, uint64_t init_seed);

  Embedding embed(const nn::Tensor& side_image) const;

  nn::Network& net() { return net_; }
  const nn::Network& net() const { return net_; }
  nn::Adam& adam() { return adam_; }
  int64_t steps_taken() const { return adam_.step_count(); }

  void pack(nn::TensorFile& file, bool with_optimizer) const;
  void unpack(const nn::TensorFile& file, bool with_optimizer);

 private:
  nn::Network net_;
  nn::Adam adam_;
};

// Contrastive pair loss. y = 0 for similar, 1 for dissimilar.
double contrastive_loss(const Embedding& a, const Embedding& b, int y, const EvaluatorConfig& cfg);
// Same, with gradients w.r.t. both embeddings.
double contrastive_loss_grad(const Embedding& a, const Embedding& b, int y,
                             const EvaluatorConfig& cfg, std::array<double, 2>& da,
                             std::array<double, 2>& db);

// Pixel-difference teaching signal: 1 (dissimilar) when the number of pixels
// whose largest channel difference exceeds the pixel threshold is greater
// than the count threshold. Inputs must be clean (un-augmented) renders.
int label_pair(const nn::Tensor& image_a, const nn::Tensor& image_b, const EvaluatorConfig& cfg);

// One hand-designed sample: a single-object scene, its executed pose, and
// the canonical side view at the designed errors.
struct PreSample {
  nn::Tensor top_image;
  nn::Tensor side_image;
  sim::GraspPose pose;
  bool optimum = true;
  double along_error = 0;
  double angle_error = 0;
};

struct PreSampleSet {
  std::vector<PreSample> samples;
  double sigma = 0;  // mean pairwise distance within the optimum group

  int optimum_count() const;
  int suboptimum_count() const;
};

// Synthesizes the designed sample set: optimum grasps with slight jitter and
// sub-optimum grasps displaced along the axis or rotated. Deterministic in
// `seed`.
PreSampleSet generate_presamples(const sim::SceneConfig& scene_cfg, const sim::RenderConfig& render_cfg,
                                 const EvaluatorConfig& cfg, sim::ObjectKind kind,
                                 double optimum_offset, uint64_t seed);

struct SeparationMetrics {
  double intra_optimum = 0;  // mean pairwise distance within the optimum group
  double inter_class = 0;    // mean optimum<->sub-optimum distance
  double ratio = 0;
};

SeparationMetrics separation_metrics(const PreSampleSet& set, const EmbedderNet& net);

struct PretrainReport {
  int steps = 0;
  SeparationMetrics separation;
  double sigma = 0;
};

// Class-labelled contrastive pretraining on the designed samples. Trains
// until the optimum group is separation_target times tighter than the
// class gap (or the step budget runs out -> NumericError). Calibrates
// set.sigma afterwards.
PretrainReport pretrain(PreSampleSet& set, EmbedderNet& net, const EvaluatorConfig& cfg,
                        const sim::RenderConfig& render_cfg, uint64_t seed, int threads = 1);

// Cache of the optimum-group mean embedding, keyed on the network version.
struct OptimumCache {
  int64_t version = -1;
  Embedding mean;
  double sigma = 0;
};

// Grasp score of a side image: exp(-dist/sigma) of the embedding distance to
// the optimum-group mean, floored at score_floor. In (0, 1].
double grasp_score(const nn::Tensor& side_image, const PreSampleSet& presamples,
                   const EmbedderNet& net, const EvaluatorConfig& cfg,
                   OptimumCache* cache = nullptr);

// One contrastive optimizer step over a batch of pairs drawn from the pool
// (distinct trial entries plus pre-samples, labelled by pixel difference).
// Returns the mean pair loss; skips the update on a non-finite loss.
struct PairStepResult {
  double mean_loss = 0;
  bool skipped = false;
  std::string diagnostic;
};
PairStepResult train_pairs(EmbedderNet& net, const data::PairDataset& pool,
                           const EvaluatorConfig& cfg, const sim::RenderConfig& render_cfg,
                           Rng& rng, int threads = 1);

// Recomputes the score of every successful detection sample from its side
// image under the current network. Detector parameters are untouched.
// Returns the number of samples rescored.
size_t rescore_dataset(data::DetectionDataset& d1, const data::PairDataset& d2,
                       const PreSampleSet& presamples, const EmbedderNet& net,
                       const EvaluatorConfig& cfg);

// Pre-sample persistence (tensor container + JSON metadata file pair).
void save_presamples(const PreSampleSet& set, const std::string& tensor_path,
                     const std::string& meta_path);
PreSampleSet load_presamples(const std::string& tensor_path, const std::string& meta_path);

}  // namespace grasp::eval
