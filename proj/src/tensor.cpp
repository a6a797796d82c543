#include "lucid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <unordered_set>
#include <utility>

namespace lucid {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("shape has nonpositive dimension " + shape_str(shape));
    n *= std::size_t(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

struct Tensor::Node {
  Shape shape;
  std::vector<float> data;
  bool requires_grad = false;
  std::vector<float> grad;  // empty means absent
  const char* op = "";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  std::vector<float>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
    return grad;
  }
};

Tensor::Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

namespace {

std::shared_ptr<Tensor::Node> require_node(const std::shared_ptr<Tensor::Node>& n) {
  if (!n) throw ContractError("operation on an undefined tensor");
  return n;
}

}  // namespace

// Access hatch for the op implementations in this translation unit.
struct TensorOps {
  using Node = Tensor::Node;

  static std::shared_ptr<Node> node(const Tensor& t) { return require_node(t.node_); }

  static Tensor leaf(Shape shape, std::vector<float> data, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    if (n != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor result(Shape shape, std::vector<float> data, const char* op,
                       std::initializer_list<Tensor> inputs,
                       std::function<void(Node&)> backprop) {
    Tensor out = leaf(std::move(shape), std::move(data), false);
    out.node_->op = op;
    bool active = false;
    for (const Tensor& in : inputs) active = active || node(in)->requires_grad;
    if (active) {
      out.node_->requires_grad = true;
      out.node_->inputs.reserve(inputs.size());
      for (const Tensor& in : inputs) out.node_->inputs.push_back(node(in));
      out.node_->backprop = std::move(backprop);
    }
    return out;
  }
};

using Node = Tensor::Node;

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<float> data(shape_numel(shape), 0.0f);
  return TensorOps::leaf(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  std::vector<float> data(shape_numel(shape), value);
  return TensorOps::leaf(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  return TensorOps::leaf(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return TensorOps::leaf({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return require_node(node_)->shape; }
int Tensor::rank() const { return int(shape().size()); }

int Tensor::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= int(s.size()))
    throw IndexError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::size() const { return require_node(node_)->data.size(); }
std::span<const float> Tensor::data() const { return require_node(node_)->data; }
std::span<float> Tensor::mutable_data() { return require_node(node_)->data; }

float Tensor::value() const {
  if (size() != 1) throw ContractError("value() requires a scalar tensor, got " + shape_str(shape()));
  return node_->data[0];
}

float Tensor::at(std::initializer_list<int> index) const {
  const Shape& s = shape();
  if (index.size() != s.size())
    throw IndexError("index rank mismatch for " + shape_str(s));
  std::size_t flat = 0;
  int axis = 0;
  for (int i : index) {
    if (i < 0 || i >= s[axis]) throw IndexError("index out of range for " + shape_str(s));
    flat = flat * std::size_t(s[axis]) + std::size_t(i);
    ++axis;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return require_node(node_)->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  auto n = require_node(node_);
  if (!n->inputs.empty())
    throw ContractError("set_requires_grad is only valid on leaf tensors");
  n->requires_grad = on;
}

bool Tensor::has_grad() const { return !require_node(node_)->grad.empty(); }

std::span<const float> Tensor::grad() const {
  auto n = require_node(node_);
  if (n->grad.empty()) throw ContractError("tensor has no gradient");
  return n->grad;
}

void Tensor::zero_grad() {
  auto n = require_node(node_);
  n->grad.assign(n->data.size(), 0.0f);
}

void Tensor::drop_grad() { require_node(node_)->grad.clear(); }

const char* Tensor::op() const { return require_node(node_)->op; }

// ---- op helpers ------------------------------------------------------------

namespace {

void check_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     " tensor, got " + shape_str(t.shape()));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

// Reflect-101 fold of index i into [0, n); valid for i in (-n, 2n-1).
inline int reflect101(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

}  // namespace

Tensor mirror_pad(const Tensor& x, int pad_h, int pad_w) {
  check_rank(x, 3, "mirror_pad");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (pad_h < 0 || pad_w < 0) throw ContractError("mirror_pad: negative padding");
  if (pad_h >= H || pad_w >= W)
    throw ContractError("mirror_pad: unsupported padding " + std::to_string(pad_h) + "," +
                        std::to_string(pad_w) + " for " + shape_str(x.shape()));
  const int OH = H + 2 * pad_h, OW = W + 2 * pad_w;
  std::vector<float> out(std::size_t(OH) * OW * C);
  const auto in = x.data();
  for (int r = 0; r < OH; ++r) {
    const int sr = reflect101(r - pad_h, H);
    for (int c = 0; c < OW; ++c) {
      const int sc = reflect101(c - pad_w, W);
      const float* src = &in[(std::size_t(sr) * W + sc) * C];
      float* dst = &out[(std::size_t(r) * OW + c) * C];
      std::copy(src, src + C, dst);
    }
  }
  return TensorOps::result(
      {OH, OW, C}, std::move(out), "mirror_pad", {x}, [pad_h, pad_w](Node& n) {
        Node& xn = *n.inputs[0];
        if (!xn.requires_grad) return;
        const int H = xn.shape[0], W = xn.shape[1], C = xn.shape[2];
        const int OH = H + 2 * pad_h, OW = W + 2 * pad_w;
        auto& gx = xn.ensure_grad();
        const auto& g = n.grad;
        for (int r = 0; r < OH; ++r) {
          const int sr = reflect101(r - pad_h, H);
          for (int c = 0; c < OW; ++c) {
            const int sc = reflect101(c - pad_w, W);
            const float* gsrc = &g[(std::size_t(r) * OW + c) * C];
            float* gdst = &gx[(std::size_t(sr) * W + sc) * C];
            for (int ch = 0; ch < C; ++ch) gdst[ch] += gsrc[ch];
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  check_rank(x, 3, "conv2d");
  check_rank(kernel, 4, "conv2d kernel");
  check_rank(bias, 1, "conv2d bias");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const int kh = kernel.dim(0), kw = kernel.dim(1), KC = kernel.dim(2), F = kernel.dim(3);
  if (kh % 2 == 0 || kw % 2 == 0)
    throw ContractError("conv2d: kernel sizes must be odd, got " + shape_str(kernel.shape()));
  if (KC != C)
    throw ShapeError("conv2d: input channels " + std::to_string(C) +
                     " do not match kernel channels " + std::to_string(KC));
  if (bias.dim(0) != F)
    throw ShapeError("conv2d: bias length " + std::to_string(bias.dim(0)) +
                     " does not match filter count " + std::to_string(F));
  if (H < kh || W < kw)
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " smaller than kernel");
  const int OH = H - kh + 1, OW = W - kw + 1;

  std::vector<float> out(std::size_t(OH) * OW * F);
  const auto in = x.data();
  const auto k = kernel.data();
  const auto b = bias.data();
  std::vector<double> acc(std::size_t(F));
  for (int r = 0; r < OH; ++r) {
    for (int c = 0; c < OW; ++c) {
      for (int f = 0; f < F; ++f) acc[f] = double(b[f]);
      for (int i = 0; i < kh; ++i) {
        const float* xrow = &in[(std::size_t(r + i) * W + c) * C];
        const float* krow = &k[std::size_t(i) * kw * C * F];
        for (int j = 0; j < kw; ++j) {
          for (int ch = 0; ch < C; ++ch) {
            const double xv = xrow[std::size_t(j) * C + ch];
            const float* kp = &krow[(std::size_t(j) * C + ch) * F];
            for (int f = 0; f < F; ++f) acc[f] += xv * double(kp[f]);
          }
        }
      }
      float* dst = &out[(std::size_t(r) * OW + c) * F];
      for (int f = 0; f < F; ++f) dst[f] = float(acc[f]);
    }
  }

  return TensorOps::result(
      {OH, OW, F}, std::move(out), "conv2d", {x, kernel, bias}, [](Node& n) {
        Node& xn = *n.inputs[0];
        Node& kn = *n.inputs[1];
        Node& bn = *n.inputs[2];
        const int W = xn.shape[1], C = xn.shape[2];
        const int kh = kn.shape[0], kw = kn.shape[1], F = kn.shape[3];
        const int OH = n.shape[0], OW = n.shape[1];
        const auto& g = n.grad;
        if (xn.requires_grad) {
          auto& gx = xn.ensure_grad();
          for (int r = 0; r < OH; ++r) {
            for (int c = 0; c < OW; ++c) {
              const float* gp = &g[(std::size_t(r) * OW + c) * F];
              for (int i = 0; i < kh; ++i) {
                for (int j = 0; j < kw; ++j) {
                  for (int ch = 0; ch < C; ++ch) {
                    const float* kp = &kn.data[((std::size_t(i) * kw + j) * C + ch) * F];
                    double s = 0.0;
                    for (int f = 0; f < F; ++f) s += double(gp[f]) * double(kp[f]);
                    gx[(std::size_t(r + i) * W + (c + j)) * C + ch] += float(s);
                  }
                }
              }
            }
          }
        }
        if (kn.requires_grad) {
          auto& gk = kn.ensure_grad();
          for (int r = 0; r < OH; ++r) {
            for (int c = 0; c < OW; ++c) {
              const float* gp = &g[(std::size_t(r) * OW + c) * F];
              for (int i = 0; i < kh; ++i) {
                for (int j = 0; j < kw; ++j) {
                  const float* xp = &xn.data[(std::size_t(r + i) * W + (c + j)) * C];
                  for (int ch = 0; ch < C; ++ch) {
                    float* gkp = &gk[((std::size_t(i) * kw + j) * C + ch) * F];
                    for (int f = 0; f < F; ++f) gkp[f] += xp[ch] * gp[f];
                  }
                }
              }
            }
          }
        }
        if (bn.requires_grad) {
          auto& gb = bn.ensure_grad();
          for (int r = 0; r < OH; ++r) {
            for (int c = 0; c < OW; ++c) {
              const float* gp = &g[(std::size_t(r) * OW + c) * F];
              for (int f = 0; f < F; ++f) gb[f] += gp[f];
            }
          }
        }
      });
}

Tensor avg_pool2(const Tensor& x) {
  check_rank(x, 3, "avg_pool2");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (H % 2 != 0 || W % 2 != 0)
    throw ShapeError("avg_pool2: spatial dims must be even, got " + shape_str(x.shape()));
  const int OH = H / 2, OW = W / 2;
  std::vector<float> out(std::size_t(OH) * OW * C);
  const auto in = x.data();
  for (int r = 0; r < OH; ++r) {
    for (int c = 0; c < OW; ++c) {
      const float* p00 = &in[(std::size_t(2 * r) * W + 2 * c) * C];
      const float* p01 = p00 + C;
      const float* p10 = &in[(std::size_t(2 * r + 1) * W + 2 * c) * C];
      const float* p11 = p10 + C;
      float* dst = &out[(std::size_t(r) * OW + c) * C];
      for (int ch = 0; ch < C; ++ch)
        dst[ch] = 0.25f * (p00[ch] + p01[ch] + p10[ch] + p11[ch]);
    }
  }
  return TensorOps::result({OH, OW, C}, std::move(out), "avg_pool2", {x}, [](Node& n) {
    Node& xn = *n.inputs[0];
    if (!xn.requires_grad) return;
    const int W = xn.shape[1], C = xn.shape[2];
    const int OH = n.shape[0], OW = n.shape[1];
    auto& gx = xn.ensure_grad();
    for (int r = 0; r < OH; ++r) {
      for (int c = 0; c < OW; ++c) {
        const float* gp = &n.grad[(std::size_t(r) * OW + c) * C];
        for (int dr = 0; dr < 2; ++dr) {
          float* gdst = &gx[(std::size_t(2 * r + dr) * W + 2 * c) * C];
          for (int ch = 0; ch < C; ++ch) {
            gdst[ch] += 0.25f * gp[ch];
            gdst[C + ch] += 0.25f * gp[ch];
          }
        }
      }
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
  return TensorOps::result(x.shape(), std::move(out), "relu", {x}, [](Node& n) {
    Node& xn = *n.inputs[0];
    if (!xn.requires_grad) return;
    auto& gx = xn.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xn.data[i] > 0.0f) gx[i] += n.grad[i];
  });
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  check_rank(x, 1, "dense input");
  check_rank(weights, 2, "dense weights");
  check_rank(bias, 1, "dense bias");
  const int N = x.dim(0), M = weights.dim(1);
  if (weights.dim(0) != N)
    throw ShapeError("dense: input length " + std::to_string(N) +
                     " does not match weight rows " + std::to_string(weights.dim(0)));
  if (bias.dim(0) != M)
    throw ShapeError("dense: bias length " + std::to_string(bias.dim(0)) +
                     " does not match weight cols " + std::to_string(M));
  std::vector<float> out(std::size_t(M));
  const auto in = x.data();
  const auto w = weights.data();
  const auto b = bias.data();
  {
    std::vector<double> acc(std::size_t(M));
    for (int j = 0; j < M; ++j) acc[j] = double(b[j]);
    for (int i = 0; i < N; ++i) {
      const double xv = in[i];
      const float* wrow = &w[std::size_t(i) * M];
      for (int j = 0; j < M; ++j) acc[j] += xv * double(wrow[j]);
    }
    for (int j = 0; j < M; ++j) out[j] = float(acc[j]);
  }
  return TensorOps::result({M}, std::move(out), "dense", {x, weights, bias}, [](Node& n) {
    Node& xn = *n.inputs[0];
    Node& wn = *n.inputs[1];
    Node& bn = *n.inputs[2];
    const int N = xn.shape[0], M = wn.shape[1];
    const auto& g = n.grad;
    if (xn.requires_grad) {
      auto& gx = xn.ensure_grad();
      for (int i = 0; i < N; ++i) {
        const float* wrow = &wn.data[std::size_t(i) * M];
        double s = 0.0;
        for (int j = 0; j < M; ++j) s += double(g[j]) * double(wrow[j]);
        gx[i] += float(s);
      }
    }
    if (wn.requires_grad) {
      auto& gw = wn.ensure_grad();
      for (int i = 0; i < N; ++i) {
        float* grow = &gw[std::size_t(i) * M];
        const float xv = xn.data[i];
        for (int j = 0; j < M; ++j) grow[j] += xv * g[j];
      }
    }
    if (bn.requires_grad) {
      auto& gb = bn.ensure_grad();
      for (int j = 0; j < M; ++j) gb[j] += g[j];
    }
  });
}

Tensor flatten(const Tensor& x) {
  std::vector<float> out(x.data().begin(), x.data().end());
  return TensorOps::result({int(x.size())}, std::move(out), "flatten", {x}, [](Node& n) {
    Node& xn = *n.inputs[0];
    if (!xn.requires_grad) return;
    auto& gx = xn.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i];
  });
}

Tensor slice_channel(const Tensor& x, int channel) {
  check_rank(x, 3, "slice_channel");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (channel < 0 || channel >= C)
    throw IndexError("slice_channel: channel " + std::to_string(channel) +
                     " out of range for " + shape_str(x.shape()));
  std::vector<float> out(std::size_t(H) * W);
  const auto in = x.data();
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = in[p * C + channel];
  return TensorOps::result({H, W}, std::move(out), "slice_channel", {x}, [channel](Node& n) {
    Node& xn = *n.inputs[0];
    if (!xn.requires_grad) return;
    const int C = xn.shape[2];
    auto& gx = xn.ensure_grad();
    for (std::size_t p = 0; p < n.grad.size(); ++p) gx[p * C + channel] += n.grad[p];
  });
}

Tensor sub_channel_means(const Tensor& x, std::span<const float> means) {
  check_rank(x, 3, "sub_channel_means");
  const int C = x.dim(2);
  if (int(means.size()) != C)
    throw ShapeError("sub_channel_means: got " + std::to_string(means.size()) +
                     " means for " + std::to_string(C) + " channels");
  std::vector<float> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] - means[i % C];
  return TensorOps::result(x.shape(), std::move(out), "sub_channel_means", {x}, [](Node& n) {
    Node& xn = *n.inputs[0];
    if (!xn.requires_grad) return;
    auto& gx = xn.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i];
  });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Bwd bwd) {
  check_same_shape(a, b, op);
  std::vector<float> out(a.size());
  const auto pa = a.data();
  const auto pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(pa[i], pb[i]);
  return TensorOps::result(a.shape(), std::move(out), op, {a, b}, std::move(bwd));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, "add", [](float x, float y) { return x + y; }, [](Node& n) {
    for (int side = 0; side < 2; ++side) {
      Node& in = *n.inputs[side];
      if (!in.requires_grad) continue;
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, "sub", [](float x, float y) { return x - y; }, [](Node& n) {
    Node& an = *n.inputs[0];
    Node& bn = *n.inputs[1];
    if (an.requires_grad) {
      auto& g = an.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (bn.requires_grad) {
      auto& g = bn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, "mul", [](float x, float y) { return x * y; }, [](Node& n) {
    Node& an = *n.inputs[0];
    Node& bn = *n.inputs[1];
    if (an.requires_grad) {
      auto& g = an.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bn.data[i];
    }
    if (bn.requires_grad) {
      auto& g = bn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * an.data[i];
    }
  });
}

Tensor scale(const Tensor& x, float s) {
  std::vector<float> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * s;
  return TensorOps::result(x.shape(), std::move(out), "scale", {x}, [s](Node& n) {
    Node& xn = *n.inputs[0];
    if (!xn.requires_grad) return;
    auto& gx = xn.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s * n.grad[i];
  });
}

Tensor sum_squares(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += double(v) * double(v);
  return TensorOps::result({1}, {float(acc)}, "sum_squares", {x}, [](Node& n) {
    Node& xn = *n.inputs[0];
    if (!xn.requires_grad) return;
    const float g0 = n.grad[0];
    auto& gx = xn.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0f * xn.data[i] * g0;
  });
}

Tensor weighted_sum_squares(const Tensor& x, const Tensor& weights) {
  check_same_shape(x, weights, "weighted_sum_squares");
  if (weights.requires_grad())
    throw ContractError("weighted_sum_squares: weight field must not require gradients");
  double acc = 0.0;
  const auto px = x.data();
  const auto pw = weights.data();
  for (std::size_t i = 0; i < px.size(); ++i)
    acc += double(pw[i]) * double(px[i]) * double(px[i]);
  return TensorOps::result({1}, {float(acc)}, "weighted_sum_squares", {x, weights}, [](Node& n) {
    Node& xn = *n.inputs[0];
    Node& wn = *n.inputs[1];
    if (!xn.requires_grad) return;
    const float g0 = n.grad[0];
    auto& gx = xn.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += 2.0f * wn.data[i] * xn.data[i] * g0;
  });
}

Tensor pick(const Tensor& x, std::size_t index) {
  if (index >= x.size())
    throw IndexError("pick: index " + std::to_string(index) + " out of range for " +
                     shape_str(x.shape()));
  return TensorOps::result({1}, {x.data()[index]}, "pick", {x}, [index](Node& n) {
    Node& xn = *n.inputs[0];
    if (!xn.requires_grad) return;
    xn.ensure_grad()[index] += n.grad[0];
  });
}

void backward(const Tensor& root) {
  if (root.size() != 1)
    throw ContractError("backward: root must be scalar, got " + shape_str(root.shape()));
  auto root_node = TensorOps::node(root);
  if (!root_node->requires_grad) return;  // constant: nothing depends on any leaf

  // Reverse topological order via iterative post-order DFS, restricted to the
  // active (requires_grad) subgraph. Each node is visited exactly once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root_node.get(), 0);
  seen.insert(root_node.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root_node->ensure_grad()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }
}

// ---- plain data utilities ---------------------------------------------------

Tensor clone(const Tensor& x) {
  return Tensor::from_data(x.shape(), std::vector<float>(x.data().begin(), x.data().end()));
}

namespace {

// Rows/cols geometry shared by crop and paste: rank 2 -> C=1, rank 3 -> C.
void spatial_dims(const Tensor& t, const char* op, int& h, int& w, int& c) {
  if (t.rank() == 2) {
    h = t.dim(0);
    w = t.dim(1);
    c = 1;
  } else if (t.rank() == 3) {
    h = t.dim(0);
    w = t.dim(1);
    c = t.dim(2);
  } else {
    throw ShapeError(std::string(op) + ": expected rank 2 or 3, got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor crop(const Tensor& x, int row0, int col0, int rows, int cols) {
  int H, W, C;
  spatial_dims(x, "crop", H, W, C);
  if (row0 < 0 || col0 < 0 || rows <= 0 || cols <= 0 || row0 + rows > H || col0 + cols > W)
    throw IndexError("crop: window out of range for " + shape_str(x.shape()));
  std::vector<float> out(std::size_t(rows) * cols * C);
  const auto in = x.data();
  for (int r = 0; r < rows; ++r) {
    const float* src = &in[(std::size_t(row0 + r) * W + col0) * C];
    std::copy(src, src + std::size_t(cols) * C, &out[std::size_t(r) * cols * C]);
  }
  Shape shape = x.rank() == 2 ? Shape{rows, cols} : Shape{rows, cols, C};
  return Tensor::from_data(std::move(shape), std::move(out));
}

void paste_into(Tensor& dst, const Tensor& src, int row0, int col0) {
  int H, W, C, h, w, c;
  spatial_dims(dst, "paste_into", H, W, C);
  spatial_dims(src, "paste_into", h, w, c);
  if (c != C) throw ShapeError("paste_into: channel mismatch");
  if (row0 < 0 || col0 < 0 || row0 + h > H || col0 + w > W)
    throw IndexError("paste_into: window out of range");
  auto out = dst.mutable_data();
  const auto in = src.data();
  for (int r = 0; r < h; ++r) {
    const float* s = &in[std::size_t(r) * w * c];
    std::copy(s, s + std::size_t(w) * c, &out[(std::size_t(row0 + r) * W + col0) * C]);
  }
}

void clamp_(Tensor& x, float lo, float hi) {
  for (float& v : x.mutable_data()) v = std::min(std::max(v, lo), hi);
}

// ---- Adam -------------------------------------------------------------------

AdamState AdamState::for_param(const Tensor& param, float lr) {
  AdamState s;
  s.m.assign(param.size(), 0.0f);
  s.v.assign(param.size(), 0.0f);
  s.lr = lr;
  return s;
}

void adam_step(Tensor& param, AdamState& state) {
  if (!param.has_grad()) throw ContractError("adam_step: parameter has no gradient");
  if (state.m.size() != param.size() || state.v.size() != param.size())
    throw ContractError("adam_step: state shape does not match parameter");
  state.t += 1;
  const float c1 = 1.0f - float(std::pow(double(state.beta1), double(state.t)));
  const float c2 = 1.0f - float(std::pow(double(state.beta2), double(state.t)));
  const auto g = param.grad();
  auto p = param.mutable_data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0f - state.beta1) * g[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0f - state.beta2) * g[i] * g[i];
    const float mhat = state.m[i] / c1;
    const float vhat = state.v[i] / c2;
    p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace lucid
