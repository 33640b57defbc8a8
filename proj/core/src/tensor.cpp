#include "grasplearn/tensor.hpp"

#include <cmath>
#include <sstream>

#include "grasplearn/errors.hpp"

namespace grasp::nn {

int64_t shape_size(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ConfigError("tensor shape must be strictly positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(shape_size(shape)), 0.0);
}

Tensor::Tensor(std::vector<int> s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (static_cast<int64_t>(data.size()) != shape_size(shape)) {
    throw ConfigError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                      shape_str(shape));
  }
}

Tensor Tensor::full(std::vector<int> s, double value) {
  Tensor t(std::move(s));
  for (double& x : t.data) x = value;
  return t;
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!grad.empty()) grad.assign(data.size(), 0.0);
}

bool Tensor::all_finite() const {
  for (double x : data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace grasp::nn
