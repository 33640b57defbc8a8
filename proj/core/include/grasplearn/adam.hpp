#pragma once

#include <string>
#include <vector>

#include "grasplearn/layers.hpp"
#include "grasplearn/tensor.hpp"

namespace grasp::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam optimizer state for one network: first/second moment per parameter
// tensor plus a shared step counter.
class Adam {
 public:
  Adam() = default;
  Adam(const Network& net, AdamConfig cfg);

  // Applies one update from an explicit gradient buffer. Throws NumericError
  // on non-finite gradients without touching parameters or moments.
  void step(Network& net, const GradBuffer& grads);
  // Convenience: consumes the .grad fields populated by Network::backward
  // and zeroes them afterwards.
  void step_from_param_grads(Network& net);

  int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // Moments exposed for checkpoint/resume.
  std::vector<Tensor>& moments_m() { return m_; }
  std::vector<Tensor>& moments_v() { return v_; }
  const std::vector<Tensor>& moments_m() const { return m_; }
  const std::vector<Tensor>& moments_v() const { return v_; }
  void set_step_count(int64_t s) { step_ = s; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  int64_t step_ = 0;
};

}  // namespace grasp::nn
