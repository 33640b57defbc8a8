#pragma once

#include <map>
#include <string>

#include "grasplearn/layers.hpp"
#include "grasplearn/tensor.hpp"

namespace grasp::nn {

// Versioned binary container of named tensors.
//
// Layout (little-endian):
//   8 bytes   magic "GLTC0001"
//   u32       tensor count
//   per tensor:
//     u32     name length, then name bytes
//     u32     ndim, then u32 dims[ndim]
//     f64     row-major values
//
// The format is stable across runs; loading validates the magic and every
// declared length against the file size.
class TensorFile {
 public:
  void put(const std::string& name, Tensor t) { entries_[name] = std::move(t); }
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  size_t size() const { return entries_.size(); }
  const std::map<std::string, Tensor>& entries() const { return entries_; }

  void save(const std::string& path) const;
  static TensorFile load(const std::string& path);

 private:
  std::map<std::string, Tensor> entries_;
};

// Network parameters <-> container, with optional name prefix (used to pack
// several networks and optimizer moments into one file).
void pack_network(TensorFile& file, const Network& net, const std::string& prefix = "");
void unpack_network(const TensorFile& file, Network& net, const std::string& prefix = "");

void save_network(const Network& net, const std::string& path);
void load_network(Network& net, const std::string& path);

}  // namespace grasp::nn
