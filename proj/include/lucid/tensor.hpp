#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lucid/errors.hpp"

namespace lucid {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense float32 tensor with an optional reverse-mode tape behind it.
//
// Copies are shallow (shared storage) and a tensor is treated as an
// immutable value once built; the only sanctioned mutations are the
// optimizer step and the image-space helpers (clamp_, paste_into), applied
// to tensors the caller owns exclusively. Every differentiable operation
// records a tape node on its result; backward() walks that DAG once in
// reverse topological order and accumulates d(root)/d(leaf) into the
// gradient of every leaf that was created with requires_grad.
//
// A single tape (i.e. one loss expression) must not be shared across
// threads, but independent forward/backward evaluations over disjoint
// tensors are safe to run concurrently.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  int dim(int axis) const;
  std::size_t size() const;

  std::span<const float> data() const;
  std::span<float> mutable_data();
  float value() const;  // scalar tensors only
  float at(std::initializer_list<int> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);  // leaves only
  bool has_grad() const;
  std::span<const float> grad() const;
  void zero_grad();  // allocate (or clear) gradient storage
  void drop_grad();

  // Tape-node operation identifier; empty string for leaves.
  const char* op() const;

 private:
  struct Node;
  std::shared_ptr<Node> node_;
  explicit Tensor(std::shared_ptr<Node> node);
  friend struct TensorOps;
};

// ---- differentiable operation set ----------------------------------------

// Reflect-101 padding: index -1 maps back to index 1, edges not duplicated.
// Requires pad_h < H and pad_w < W.
Tensor mirror_pad(const Tensor& x, int pad_h, int pad_w);

// Valid cross-correlation. x: HxWxC (already padded), kernel: kh x kw x C x F
// with odd kh, kw; bias: F. Output (H-kh+1) x (W-kw+1) x F. Inner products
// accumulate in float64 and round once.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

// 2x2 mean pooling; H and W must be even.
Tensor avg_pool2(const Tensor& x);

// Elementwise max(x, 0). Backward passes zero at exactly x == 0.
Tensor relu(const Tensor& x);

// x: flat N, weights: N x M, bias: M. float64 inner accumulation.
Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);

Tensor flatten(const Tensor& x);
Tensor slice_channel(const Tensor& x, int channel);  // HxWxC -> HxW
Tensor sub_channel_means(const Tensor& x, std::span<const float> means);

Tensor add(const Tensor& a, const Tensor& b);  // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float s);

Tensor sum_squares(const Tensor& x);  // scalar, float64 accumulation
// Scalar sum of weights[k] * x[k]^2. The weight field is a constant in the
// gradient and must not require one itself.
Tensor weighted_sum_squares(const Tensor& x, const Tensor& weights);
Tensor pick(const Tensor& x, std::size_t index);  // scalar x[index]

// Accumulates d(root)/d(leaf) into every requires_grad leaf reachable from
// root. root must be scalar. Gradients add across calls; callers that want a
// fresh gradient zero it first.
void backward(const Tensor& root);

// ---- plain data utilities (no tape) ---------------------------------------

Tensor clone(const Tensor& x);
// Rank-2 {H,W} or rank-3 {H,W,C} spatial crop.
Tensor crop(const Tensor& x, int row0, int col0, int rows, int cols);
void paste_into(Tensor& dst, const Tensor& src, int row0, int col0);
void clamp_(Tensor& x, float lo, float hi);

// ---- Adam ------------------------------------------------------------------

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t t = 0;
  float lr = 0.02f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  static AdamState for_param(const Tensor& param, float lr = 0.02f);
};

// One bias-corrected Adam update of param from param.grad. Requires the
// gradient to be present and the state shapes to match.
void adam_step(Tensor& param, AdamState& state);

}  // namespace lucid
