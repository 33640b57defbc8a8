#include "grasplearn/adam.hpp"

#include <cmath>

#include "grasplearn/errors.hpp"

namespace grasp::nn {

Adam::Adam(const Network& net, AdamConfig cfg) : cfg_(cfg) {
  m_ = net.make_grad_buffer();
  v_ = net.make_grad_buffer();
}

void Adam::step(Network& net, const GradBuffer& grads) {
  auto params = net.params();
  if (grads.size() != params.size() || m_.size() != params.size()) {
    throw ConfigError("Adam state does not match network parameter layout");
  }
  for (size_t s = 0; s < grads.size(); ++s) {
    for (double g : grads[s].data) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter '" + params[s].name + "'; step aborted");
      }
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t s = 0; s < grads.size(); ++s) {
    double* m = m_[s].data.data();
    double* v = v_[s].data.data();
    double* p = params[s].tensor->data.data();
    const double* g = grads[s].data.data();
    const size_t n = grads[s].data.size();
    for (size_t i = 0; i < n; ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  net.bump_version();
}

void Adam::step_from_param_grads(Network& net) {
  auto params = net.params();
  GradBuffer gb;
  gb.reserve(params.size());
  for (auto& p : params) {
    Tensor g(p.tensor->shape);
    if (!p.tensor->grad.empty()) g.data = p.tensor->grad;
    gb.push_back(std::move(g));
  }
  step(net, gb);
  for (auto& p : params) p.tensor->zero_grad();
}

}  // namespace grasp::nn
