#pragma once

#include <string>
#include <vector>

#include "grasplearn/layers.hpp"

namespace grasp::nn {

struct GradCheckEntry {
  std::string param;
  size_t element;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  size_t checked = 0;
  bool passed = false;
  std::vector<GradCheckEntry> worst;  // a few highest-error entries
};

// Central finite-difference check of every parameter of `net` against the
// analytic backward pass. The probe loss is a fixed pseudo-random weighted
// sum of the outputs so all output components influence the result.
// Elements whose two-sided difference straddles a non-smooth point (relu
// kink, pool tie) are naturally avoided by generic random inputs.
GradCheckReport finite_diff_check(Network& net, const Tensor& input, double tolerance,
                                  double step = 1e-5);

}  // namespace grasp::nn
