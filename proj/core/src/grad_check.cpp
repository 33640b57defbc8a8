#include "grasplearn/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "grasplearn/rng.hpp"

namespace grasp::nn {

namespace {

// Deterministic probe weights, independent of parameter values.
Tensor probe_weights(const std::vector<int>& shape) {
  Tensor w(shape);
  Rng rng(0x9d5f11ca11u);
  for (double& x : w.data) x = rng.uniform(-1.0, 1.0);
  return w;
}

double probe_loss(const Tensor& out, const Tensor& w) {
  double s = 0;
  for (size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * w.data[i];
  return s;
}

}  // namespace

GradCheckReport finite_diff_check(Network& net, const Tensor& input, double tolerance, double step) {
  GradCheckReport report;
  const Tensor w = probe_weights(net.output_shape());

  Activations acts;
  net.forward(input, acts);
  GradBuffer analytic = net.make_grad_buffer();
  net.backward(acts, w, analytic);

  auto params = net.params();
  for (size_t s = 0; s < params.size(); ++s) {
    Tensor& p = *params[s].tensor;
    for (size_t i = 0; i < p.data.size(); ++i) {
      const double saved = p.data[i];
      p.data[i] = saved + step;
      const double up = probe_loss(net.infer(input), w);
      p.data[i] = saved - step;
      const double dn = probe_loss(net.infer(input), w);
      p.data[i] = saved;
      const double numeric = (up - dn) / (2.0 * step);
      const double a = analytic[s].data[i];
      const double scale = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      const double rel = std::fabs(a - numeric) / scale;
      ++report.checked;
      if (rel > report.max_rel_error) report.max_rel_error = rel;
      if (rel > tolerance) {
        report.worst.push_back({params[s].name, i, a, numeric, rel});
      }
    }
  }
  std::sort(report.worst.begin(), report.worst.end(),
            [](const GradCheckEntry& a, const GradCheckEntry& b) { return a.rel_error > b.rel_error; });
  if (report.worst.size() > 16) report.worst.resize(16);
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace grasp::nn
