#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "grasplearn/rng.hpp"
#include "grasplearn/tensor.hpp"

namespace grasp::nn {

enum class LayerKind { conv2d, fully_connected, relu, tanh, softmax, maxpool2, avgpool2 };

std::string layer_kind_name(LayerKind k);

// Declarative layer description. Convolutions are fixed at kernel 5, stride 1;
// padding is 1 (shrinking) or 2 (size-preserving).
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int units = 0;    // conv: output channels, fully-connected: output units
  int padding = 1;  // conv only

  static LayerSpec conv(int out_channels, int padding = 1) {
    return {LayerKind::conv2d, out_channels, padding};
  }
  static LayerSpec fc(int out_units) { return {LayerKind::fully_connected, out_units, 0}; }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0}; }
  static LayerSpec tanh() { return {LayerKind::tanh, 0, 0}; }
  static LayerSpec softmax() { return {LayerKind::softmax, 0, 0}; }
  static LayerSpec maxpool2() { return {LayerKind::maxpool2, 0, 0}; }
  static LayerSpec avgpool2() { return {LayerKind::avgpool2, 0, 0}; }
};

inline constexpr int kConvKernel = 5;
inline constexpr int kConvStride = 1;

// Per-layer state captured during a recorded forward pass. `cached` holds the
// layer input (conv, fc, relu) or output (tanh, softmax); `indices` holds
// maxpool argmax positions.
struct LayerCtx {
  Tensor cached;
  std::vector<int32_t> indices;
};

class Network;

// Tape of one forward pass. Owned by the caller so several passes (e.g. the
// two branches of a shared-weight pair) can be in flight on one network.
struct Activations {
  std::vector<LayerCtx> ctx;
  const Network* source = nullptr;
  bool recorded = false;
};

// One gradient tensor per parameter tensor, in network parameter order.
using GradBuffer = std::vector<Tensor>;

struct ParamRef {
  std::string name;
  Tensor* tensor;
};

class Layer {
 public:
  explicit Layer(LayerKind kind) : kind_(kind) {}
  virtual ~Layer() = default;

  LayerKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

  // Shared shape algebra: used for construction-time validation and asserted
  // against at forward time.
  virtual std::vector<int> out_shape(const std::vector<int>& in) const = 0;

  virtual void forward(const Tensor& in, Tensor& out, LayerCtx* ctx) const = 0;
  // din must be pre-sized to the layer input shape. dweight/dbias, when
  // non-null, are accumulated into.
  virtual void backward(const LayerCtx& ctx, const Tensor& dout, Tensor& din, Tensor* dweight,
                        Tensor* dbias) const = 0;

  virtual bool has_params() const { return false; }
  virtual void init_params(const std::vector<int>& in_shape, Rng& rng);

  virtual std::unique_ptr<Layer> clone() const = 0;

  Tensor weight;
  Tensor bias;

 private:
  LayerKind kind_;
  std::string name_;
};

// Fixed sequential stack of layers with double-precision parameters.
// forward/backward with an external Activations record is const and safe to
// call concurrently; the recordless convenience pair forward()/backward()
// mutates internal state and follows the single-writer rule.
class Network {
 public:
  Network() = default;
  Network(const std::vector<LayerSpec>& specs, std::vector<int> input_shape, Rng& init_rng);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  bool empty() const { return layers_.empty(); }
  size_t layer_count() const { return layers_.size(); }
  const std::vector<int>& input_shape() const { return input_shape_; }
  const std::vector<int>& output_shape() const { return shapes_.back(); }

  // Recorded forward: fills `acts` with what backward needs.
  Tensor forward(const Tensor& input, Activations& acts) const;
  // Inference without recording.
  Tensor infer(const Tensor& input) const;
  // Convenience forward that records into the network itself.
  Tensor forward(const Tensor& input);

  // Backward through an explicit record; accumulates into `grads`. Returns
  // the gradient w.r.t. the network input.
  Tensor backward(const Activations& acts, const Tensor& output_grad, GradBuffer& grads) const;
  // Convenience backward using the internally recorded forward; populates
  // each parameter tensor's .grad. Throws StateError without a prior
  // recorded forward.
  Tensor backward(const Tensor& output_grad);

  GradBuffer make_grad_buffer() const;
  std::vector<ParamRef> params();
  std::vector<ParamRef> params() const;  // tensors are non-const pointers into a const net; read-only by convention
  size_t param_tensor_count() const { return param_index_.size(); }

  // Bumped whenever parameters change (optimizer step, checkpoint load), so
  // caches keyed on network contents can invalidate themselves.
  int64_t version() const { return version_; }
  void bump_version() { ++version_; }

 private:
  void index_params();
  void check_input(const Tensor& input) const;

  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<int> input_shape_;
  std::vector<std::vector<int>> shapes_;  // shapes_[i] = input shape of layer i; back() = output
  std::vector<std::pair<size_t, int>> param_index_;  // (layer index, 0=weight/1=bias)
  Activations self_acts_;
  int64_t version_ = 0;
};

// Runs fn(item) for items 0..n-1 across up to n_threads workers using a
// static block partition, so the item->thread mapping is deterministic.
void parallel_items(int n_items, int n_threads, const std::function<void(int)>& fn);

// Accumulate src into dst elementwise (shapes must match slot-for-slot).
void accumulate(GradBuffer& dst, const GradBuffer& src);

}  // namespace grasp::nn
