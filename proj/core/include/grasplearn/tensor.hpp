#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace grasp::nn {

// Dense n-dimensional array of doubles with an optional gradient buffer.
// Data is row-major; shape entries are strictly positive.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until ensure_grad()

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  Tensor(std::vector<int> s, std::vector<double> values);

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double value);

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int dim(size_t i) const { return shape[i]; }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  // [C,H,W] accessors for image-like tensors.
  double& at3(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  double at3(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  void ensure_grad();
  void zero_grad();
  bool all_finite() const;
};

int64_t shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace grasp::nn
