#include "grasplearn/layers.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <thread>

#include "grasplearn/errors.hpp"

extern "C" void openblas_set_num_threads(int);

namespace grasp::nn {

namespace {

// BLAS threading is pinned to one thread: parallelism happens across batch
// items, and a fixed BLAS configuration keeps results reproducible.
void ensure_blas_single_threaded() {
  static std::once_flag flag;
  std::call_once(flag, [] { openblas_set_num_threads(1); });
}

// Row-major C = alpha * op(A) * op(B) + beta * C.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  ensure_blas_single_threaded();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

std::vector<int> require_chw(const std::vector<int>& in, const std::string& who) {
  if (in.size() != 3) {
    throw ConfigError(who + ": expected [channels,height,width] input, got " + shape_str(in));
  }
  return in;
}

class Conv2d final : public Layer {
 public:
  Conv2d(int out_channels, int padding) : Layer(LayerKind::conv2d), out_channels_(out_channels), padding_(padding) {
    if (out_channels <= 0) throw ConfigError("conv2d: output channels must be positive");
    if (padding != 1 && padding != 2) throw ConfigError("conv2d: padding must be 1 or 2");
  }

  std::vector<int> out_shape(const std::vector<int>& in) const override {
    auto s = require_chw(in, name());
    int oh = s[1] + 2 * padding_ - kConvKernel + 1;
    int ow = s[2] + 2 * padding_ - kConvKernel + 1;
    if (oh <= 0 || ow <= 0) {
      throw ConfigError(name() + ": input " + shape_str(in) + " too small for 5x5 kernel");
    }
    return {out_channels_, oh, ow};
  }

  void init_params(const std::vector<int>& in_shape, Rng& rng) override {
    auto s = require_chw(in_shape, name());
    in_channels_ = s[0];
    const int kk = kConvKernel * kConvKernel;
    weight = Tensor({out_channels_, in_channels_, kConvKernel, kConvKernel});
    bias = Tensor({out_channels_});
    double bound = std::sqrt(6.0 / (in_channels_ * kk + out_channels_ * kk));
    for (double& w : weight.data) w = rng.uniform(-bound, bound);
  }

  bool has_params() const override { return true; }

  void forward(const Tensor& in, Tensor& out, LayerCtx* ctx) const override {
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int oh = h + 2 * padding_ - kConvKernel + 1;
    const int ow = w + 2 * padding_ - kConvKernel + 1;
    out = Tensor({out_channels_, oh, ow});
    std::vector<double> cols;
    im2col(in, oh, ow, cols);
    const int ckk = c * kConvKernel * kConvKernel;
    // out[oc][oy*ow+ox] = sum_k W[oc][k] * cols[k][...]
    gemm(false, false, out_channels_, oh * ow, ckk, 1.0, weight.data.data(), ckk, cols.data(), oh * ow,
         0.0, out.data.data(), oh * ow);
    double* o = out.data.data();
    for (int oc = 0; oc < out_channels_; ++oc) {
      const double b = bias.data[oc];
      for (int i = 0; i < oh * ow; ++i) o[static_cast<size_t>(oc) * oh * ow + i] += b;
    }
    if (ctx) ctx->cached = in;
  }

  void backward(const LayerCtx& ctx, const Tensor& dout, Tensor& din, Tensor* dweight,
                Tensor* dbias) const override {
    const Tensor& in = ctx.cached;
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int oh = dout.shape[1], ow = dout.shape[2];
    const int ckk = c * kConvKernel * kConvKernel;
    std::vector<double> cols;
    im2col(in, oh, ow, cols);
    if (dweight) {
      // dW[oc][k] += dout[oc][s] * cols[k][s]^T
      gemm(false, true, out_channels_, ckk, oh * ow, 1.0, dout.data.data(), oh * ow, cols.data(), oh * ow,
           1.0, dweight->data.data(), ckk);
    }
    if (dbias) {
      for (int oc = 0; oc < out_channels_; ++oc) {
        double s = 0;
        const double* d = dout.data.data() + static_cast<size_t>(oc) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) s += d[i];
        dbias->data[oc] += s;
      }
    }
    // dcols = W^T * dout, then scatter back to input positions.
    std::vector<double> dcols(static_cast<size_t>(ckk) * oh * ow);
    gemm(true, false, ckk, oh * ow, out_channels_, 1.0, weight.data.data(), ckk, dout.data.data(), oh * ow,
         0.0, dcols.data(), oh * ow);
    std::fill(din.data.begin(), din.data.end(), 0.0);
    size_t col = 0;
    for (int ci = 0; ci < c; ++ci) {
      for (int ky = 0; ky < kConvKernel; ++ky) {
        for (int kx = 0; kx < kConvKernel; ++kx, ++col) {
          const double* src = dcols.data() + col * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy + ky - padding_;
            if (iy < 0 || iy >= h) continue;
            double* drow = din.data.data() + (static_cast<size_t>(ci) * h + iy) * w;
            const double* srow = src + static_cast<size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox + kx - padding_;
              if (ix < 0 || ix >= w) continue;
              drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

 private:
  void im2col(const Tensor& in, int oh, int ow, std::vector<double>& cols) const {
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int ckk = c * kConvKernel * kConvKernel;
    cols.assign(static_cast<size_t>(ckk) * oh * ow, 0.0);
    size_t col = 0;
    for (int ci = 0; ci < c; ++ci) {
      for (int ky = 0; ky < kConvKernel; ++ky) {
        for (int kx = 0; kx < kConvKernel; ++kx, ++col) {
          double* dst = cols.data() + col * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy + ky - padding_;
            if (iy < 0 || iy >= h) continue;
            const double* srow = in.data.data() + (static_cast<size_t>(ci) * h + iy) * w;
            double* drow = dst + static_cast<size_t>(oy) * ow;
            const int x0 = std::max(0, padding_ - kx);
            const int x1 = std::min(ow, w + padding_ - kx);
            for (int ox = x0; ox < x1; ++ox) drow[ox] = srow[ox + kx - padding_];
          }
        }
      }
    }
  }

  int out_channels_;
  int padding_;
  int in_channels_ = 0;
};

class FullyConnected final : public Layer {
 public:
  explicit FullyConnected(int out_units) : Layer(LayerKind::fully_connected), out_units_(out_units) {
    if (out_units <= 0) throw ConfigError("fully-connected: output units must be positive");
  }

  std::vector<int> out_shape(const std::vector<int>& in) const override {
    (void)shape_size(in);
    return {out_units_};
  }

  void init_params(const std::vector<int>& in_shape, Rng& rng) override {
    in_units_ = static_cast<int>(shape_size(in_shape));
    weight = Tensor({out_units_, in_units_});
    bias = Tensor({out_units_});
    double bound = std::sqrt(6.0 / (in_units_ + out_units_));
    for (double& w : weight.data) w = rng.uniform(-bound, bound);
  }

  bool has_params() const override { return true; }

  void forward(const Tensor& in, Tensor& out, LayerCtx* ctx) const override {
    out = Tensor({out_units_});
    // y = W x + b
    gemm(false, false, out_units_, 1, in_units_, 1.0, weight.data.data(), in_units_, in.data.data(), 1,
         0.0, out.data.data(), 1);
    for (int i = 0; i < out_units_; ++i) out.data[i] += bias.data[i];
    if (ctx) ctx->cached = in;
  }

  void backward(const LayerCtx& ctx, const Tensor& dout, Tensor& din, Tensor* dweight,
                Tensor* dbias) const override {
    const Tensor& in = ctx.cached;
    if (dweight) {
      // dW += dout * in^T
      gemm(false, false, out_units_, in_units_, 1, 1.0, dout.data.data(), 1, in.data.data(), in_units_,
           1.0, dweight->data.data(), in_units_);
    }
    if (dbias) {
      for (int i = 0; i < out_units_; ++i) dbias->data[i] += dout.data[i];
    }
    // din = W^T dout
    gemm(true, false, in_units_, 1, out_units_, 1.0, weight.data.data(), in_units_, dout.data.data(), 1,
         0.0, din.data.data(), 1);
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<FullyConnected>(*this); }

 private:
  int out_units_;
  int in_units_ = 0;
};

class Relu final : public Layer {
 public:
  Relu() : Layer(LayerKind::relu) {}

  std::vector<int> out_shape(const std::vector<int>& in) const override { return in; }

  void forward(const Tensor& in, Tensor& out, LayerCtx* ctx) const override {
    out = in;
    for (double& x : out.data) x = x > 0 ? x : 0.0;
    if (ctx) ctx->cached = in;
  }

  void backward(const LayerCtx& ctx, const Tensor& dout, Tensor& din, Tensor*, Tensor*) const override {
    const Tensor& in = ctx.cached;
    for (size_t i = 0; i < din.data.size(); ++i) din.data[i] = in.data[i] > 0 ? dout.data[i] : 0.0;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
};

class TanhLayer final : public Layer {
 public:
  TanhLayer() : Layer(LayerKind::tanh) {}

  std::vector<int> out_shape(const std::vector<int>& in) const override { return in; }

  void forward(const Tensor& in, Tensor& out, LayerCtx* ctx) const override {
    out = in;
    for (double& x : out.data) x = std::tanh(x);
    if (ctx) ctx->cached = out;
  }

  void backward(const LayerCtx& ctx, const Tensor& dout, Tensor& din, Tensor*, Tensor*) const override {
    const Tensor& y = ctx.cached;
    for (size_t i = 0; i < din.data.size(); ++i) din.data[i] = dout.data[i] * (1.0 - y.data[i] * y.data[i]);
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<TanhLayer>(*this); }
};

class Softmax final : public Layer {
 public:
  Softmax() : Layer(LayerKind::softmax) {}

  std::vector<int> out_shape(const std::vector<int>& in) const override { return in; }

  void forward(const Tensor& in, Tensor& out, LayerCtx* ctx) const override {
    out = in;
    double mx = *std::max_element(out.data.begin(), out.data.end());
    double sum = 0;
    for (double& x : out.data) {
      x = std::exp(x - mx);
      sum += x;
    }
    for (double& x : out.data) x /= sum;
    if (ctx) ctx->cached = out;
  }

  void backward(const LayerCtx& ctx, const Tensor& dout, Tensor& din, Tensor*, Tensor*) const override {
    const Tensor& y = ctx.cached;
    double dot = 0;
    for (size_t i = 0; i < y.data.size(); ++i) dot += dout.data[i] * y.data[i];
    for (size_t i = 0; i < din.data.size(); ++i) din.data[i] = y.data[i] * (dout.data[i] - dot);
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Softmax>(*this); }
};

class MaxPool2 final : public Layer {
 public:
  MaxPool2() : Layer(LayerKind::maxpool2) {}

  std::vector<int> out_shape(const std::vector<int>& in) const override {
    auto s = require_chw(in, name());
    if (s[1] < 2 || s[2] < 2) throw ConfigError(name() + ": input " + shape_str(in) + " too small to pool");
    return {s[0], s[1] / 2, s[2] / 2};
  }

  void forward(const Tensor& in, Tensor& out, LayerCtx* ctx) const override {
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int oh = h / 2, ow = w / 2;
    out = Tensor({c, oh, ow});
    if (ctx) ctx->indices.assign(static_cast<size_t>(c) * oh * ow, 0);
    for (int ci = 0; ci < c; ++ci) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          int best = ((ci * h + 2 * oy) * w) + 2 * ox;
          double bv = in.data[best];
          const int cand[3] = {best + 1, best + w, best + w + 1};
          for (int k : cand) {
            if (in.data[k] > bv) {
              bv = in.data[k];
              best = k;
            }
          }
          const size_t oi = (static_cast<size_t>(ci) * oh + oy) * ow + ox;
          out.data[oi] = bv;
          if (ctx) ctx->indices[oi] = best;
        }
      }
    }
    if (ctx) {
      ctx->cached.shape = in.shape;  // remember input geometry for backward
      ctx->cached.data.clear();
    }
  }

  void backward(const LayerCtx& ctx, const Tensor& dout, Tensor& din, Tensor*, Tensor*) const override {
    std::fill(din.data.begin(), din.data.end(), 0.0);
    for (size_t i = 0; i < dout.data.size(); ++i) din.data[ctx.indices[i]] += dout.data[i];
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2>(*this); }
};

class AvgPool2 final : public Layer {
 public:
  AvgPool2() : Layer(LayerKind::avgpool2) {}

  std::vector<int> out_shape(const std::vector<int>& in) const override {
    auto s = require_chw(in, name());
    if (s[1] < 2 || s[2] < 2) throw ConfigError(name() + ": input " + shape_str(in) + " too small to pool");
    return {s[0], s[1] / 2, s[2] / 2};
  }

  void forward(const Tensor& in, Tensor& out, LayerCtx* ctx) const override {
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int oh = h / 2, ow = w / 2;
    out = Tensor({c, oh, ow});
    for (int ci = 0; ci < c; ++ci) {
      for (int oy = 0; oy < oh; ++oy) {
        const double* r0 = in.data.data() + (static_cast<size_t>(ci) * h + 2 * oy) * w;
        const double* r1 = r0 + w;
        double* o = out.data.data() + (static_cast<size_t>(ci) * oh + oy) * ow;
        for (int ox = 0; ox < ow; ++ox) {
          o[ox] = 0.25 * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
        }
      }
    }
    if (ctx) {
      ctx->cached.shape = in.shape;
      ctx->cached.data.clear();
    }
  }

  void backward(const LayerCtx& ctx, const Tensor& dout, Tensor& din, Tensor*, Tensor*) const override {
    const int c = ctx.cached.shape[0], h = ctx.cached.shape[1], w = ctx.cached.shape[2];
    const int oh = h / 2, ow = w / 2;
    std::fill(din.data.begin(), din.data.end(), 0.0);
    for (int ci = 0; ci < c; ++ci) {
      for (int oy = 0; oy < oh; ++oy) {
        double* r0 = din.data.data() + (static_cast<size_t>(ci) * h + 2 * oy) * w;
        double* r1 = r0 + w;
        const double* d = dout.data.data() + (static_cast<size_t>(ci) * oh + oy) * ow;
        for (int ox = 0; ox < ow; ++ox) {
          const double g = 0.25 * d[ox];
          r0[2 * ox] += g;
          r0[2 * ox + 1] += g;
          r1[2 * ox] += g;
          r1[2 * ox + 1] += g;
        }
      }
    }
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<AvgPool2>(*this); }
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::conv2d:
      return std::make_unique<Conv2d>(spec.units, spec.padding);
    case LayerKind::fully_connected:
      return std::make_unique<FullyConnected>(spec.units);
    case LayerKind::relu:
      return std::make_unique<Relu>();
    case LayerKind::tanh:
      return std::make_unique<TanhLayer>();
    case LayerKind::softmax:
      return std::make_unique<Softmax>();
    case LayerKind::maxpool2:
      return std::make_unique<MaxPool2>();
    case LayerKind::avgpool2:
      return std::make_unique<AvgPool2>();
  }
  throw ConfigError("unknown layer kind");
}

}  // namespace

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::fully_connected: return "fc";
    case LayerKind::relu: return "relu";
    case LayerKind::tanh: return "tanh";
    case LayerKind::softmax: return "softmax";
    case LayerKind::maxpool2: return "maxpool2";
    case LayerKind::avgpool2: return "avgpool2";
  }
  return "?";
}

void Layer::init_params(const std::vector<int>&, Rng&) {}

Network::Network(const std::vector<LayerSpec>& specs, std::vector<int> input_shape, Rng& init_rng)
    : input_shape_(std::move(input_shape)) {
  if (specs.empty()) throw ConfigError("network needs at least one layer");
  shapes_.push_back(input_shape_);
  int counters[8] = {0};
  for (const LayerSpec& spec : specs) {
    auto layer = make_layer(spec);
    int idx = ++counters[static_cast<int>(spec.kind)];
    layer->set_name(layer_kind_name(spec.kind) + std::to_string(idx));
    layer->init_params(shapes_.back(), init_rng);
    shapes_.push_back(layer->out_shape(shapes_.back()));
    layers_.push_back(std::move(layer));
  }
  index_params();
}

Network::Network(const Network& other)
    : input_shape_(other.input_shape_), shapes_(other.shapes_), version_(other.version_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
  index_params();
}

Network& Network::operator=(const Network& other) {
  if (this == &other) return *this;
  Network tmp(other);
  *this = std::move(tmp);
  return *this;
}

void Network::index_params() {
  param_index_.clear();
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i]->has_params()) {
      param_index_.emplace_back(i, 0);
      param_index_.emplace_back(i, 1);
    }
  }
}

void Network::check_input(const Tensor& input) const {
  if (layers_.empty()) throw StateError("network is empty");
  if (input.shape != input_shape_) {
    throw ConfigError("network input shape " + shape_str(input.shape) + " does not match expected " +
                      shape_str(input_shape_));
  }
}

Tensor Network::forward(const Tensor& input, Activations& acts) const {
  check_input(input);
  acts.ctx.assign(layers_.size(), LayerCtx{});
  acts.source = this;
  acts.recorded = true;
  Tensor cur = input;
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (cur.shape != shapes_[i]) {
      throw ConfigError("layer " + layers_[i]->name() + ": input shape " + shape_str(cur.shape) +
                        " does not match expected " + shape_str(shapes_[i]));
    }
    Tensor next;
    layers_[i]->forward(cur, next, &acts.ctx[i]);
    cur = std::move(next);
  }
  return cur;
}

Tensor Network::infer(const Tensor& input) const {
  check_input(input);
  Tensor cur = input;
  for (size_t i = 0; i < layers_.size(); ++i) {
    Tensor next;
    layers_[i]->forward(cur, next, nullptr);
    cur = std::move(next);
  }
  return cur;
}

Tensor Network::forward(const Tensor& input) { return forward(input, self_acts_); }

Tensor Network::backward(const Activations& acts, const Tensor& output_grad, GradBuffer& grads) const {
  if (!acts.recorded || acts.source != this) {
    throw StateError("backward called without a recorded forward pass on this network");
  }
  if (output_grad.shape != output_shape()) {
    throw ConfigError("output gradient shape " + shape_str(output_grad.shape) + " does not match " +
                      shape_str(output_shape()));
  }
  if (grads.size() != param_index_.size()) {
    throw ConfigError("gradient buffer has " + std::to_string(grads.size()) + " slots, expected " +
                      std::to_string(param_index_.size()));
  }
  Tensor dcur = output_grad;
  size_t slot = param_index_.size();
  for (size_t ri = layers_.size(); ri-- > 0;) {
    Tensor* dw = nullptr;
    Tensor* db = nullptr;
    if (layers_[ri]->has_params()) {
      slot -= 2;
      dw = &grads[slot];
      db = &grads[slot + 1];
    }
    Tensor din(shapes_[ri]);
    layers_[ri]->backward(acts.ctx[ri], dcur, din, dw, db);
    dcur = std::move(din);
  }
  return dcur;
}

Tensor Network::backward(const Tensor& output_grad) {
  GradBuffer gb = make_grad_buffer();
  Tensor din = backward(self_acts_, output_grad, gb);
  size_t slot = 0;
  for (auto& l : layers_) {
    if (!l->has_params()) continue;
    l->weight.ensure_grad();
    l->bias.ensure_grad();
    for (size_t i = 0; i < l->weight.grad.size(); ++i) l->weight.grad[i] += gb[slot].data[i];
    for (size_t i = 0; i < l->bias.grad.size(); ++i) l->bias.grad[i] += gb[slot + 1].data[i];
    slot += 2;
  }
  return din;
}

GradBuffer Network::make_grad_buffer() const {
  GradBuffer gb;
  gb.reserve(param_index_.size());
  for (auto [li, which] : param_index_) {
    const Tensor& p = which == 0 ? layers_[li]->weight : layers_[li]->bias;
    gb.emplace_back(Tensor(p.shape));
  }
  return gb;
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> out;
  out.reserve(param_index_.size());
  for (auto [li, which] : param_index_) {
    Tensor& p = which == 0 ? layers_[li]->weight : layers_[li]->bias;
    out.push_back({layers_[li]->name() + (which == 0 ? ".weight" : ".bias"), &p});
  }
  return out;
}

std::vector<ParamRef> Network::params() const {
  return const_cast<Network*>(this)->params();
}

void parallel_items(int n_items, int n_threads, const std::function<void(int)>& fn) {
  n_threads = std::max(1, std::min(n_threads, n_items));
  if (n_threads == 1) {
    for (int i = 0; i < n_items; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) {
    const int lo = static_cast<int>(static_cast<int64_t>(n_items) * t / n_threads);
    const int hi = static_cast<int>(static_cast<int64_t>(n_items) * (t + 1) / n_threads);
    workers.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

void accumulate(GradBuffer& dst, const GradBuffer& src) {
  if (dst.size() != src.size()) throw ConfigError("gradient buffer size mismatch in accumulate");
  for (size_t s = 0; s < dst.size(); ++s) {
    for (size_t i = 0; i < dst[s].data.size(); ++i) dst[s].data[i] += src[s].data[i];
  }
}

}  // namespace grasp::nn
