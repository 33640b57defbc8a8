#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "grasplearn/rng.hpp"
#include "grasplearn/tensor.hpp"

namespace testutil {

inline grasp::nn::Tensor random_tensor(std::vector<int> shape, grasp::Rng& rng, double lo = -1.0,
                                       double hi = 1.0) {
  grasp::nn::Tensor t(std::move(shape));
  for (double& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

// Independent sliding-window convolution (kernel 5, stride 1), the oracle for
// the im2col path.
inline grasp::nn::Tensor conv2d_reference(const grasp::nn::Tensor& in, const grasp::nn::Tensor& weight,
                                          const grasp::nn::Tensor& bias, int padding) {
  const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
  const int oc = weight.shape[0], k = weight.shape[2];
  const int oh = h + 2 * padding - k + 1;
  const int ow = w + 2 * padding - k + 1;
  grasp::nn::Tensor out({oc, oh, ow});
  for (int o = 0; o < oc; ++o) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias.data[o];
        for (int ci = 0; ci < c; ++ci) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy + ky - padding;
              const int ix = ox + kx - padding;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += weight.data[((static_cast<size_t>(o) * c + ci) * k + ky) * k + kx] *
                     in.at3(ci, iy, ix);
            }
          }
        }
        out.at3(o, oy, ox) = acc;
      }
    }
  }
  return out;
}

// Central finite difference of a scalar function of one vector of values.
inline std::vector<double> finite_diff(std::vector<double>& values,
                                       const std::function<double()>& f, double step = 1e-6) {
  std::vector<double> grad(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = f();
    values[i] = saved - step;
    const double dn = f();
    values[i] = saved;
    grad[i] = (up - dn) / (2.0 * step);
  }
  return grad;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

}  // namespace testutil
