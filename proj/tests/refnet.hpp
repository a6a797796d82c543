// Test-only reference implementations in double precision: a plain-loop
// network evaluator and the loss formulas, written directly from their
// definitions and independent of the tensor/tape machinery they are used to
// check. Finite differences through these stay accurate to ~1e-10, so the
// oracle noise floor is far below the tolerances under test.
#pragma once

#include <cmath>
#include <vector>

#include "lucid/net.hpp"

namespace refnet {

using dvec = std::vector<double>;

struct Block {
  int h = 0, w = 0, c = 0;  // c == 0 marks a flat vector
  dvec data;
};

inline int reflect101(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

inline Block mirror_pad(const Block& x, int ph, int pw) {
  Block out{x.h + 2 * ph, x.w + 2 * pw, x.c, {}};
  out.data.resize(std::size_t(out.h) * out.w * out.c);
  for (int r = 0; r < out.h; ++r)
    for (int c = 0; c < out.w; ++c) {
      const int sr = reflect101(r - ph, x.h);
      const int sc = reflect101(c - pw, x.w);
      for (int ch = 0; ch < x.c; ++ch)
        out.data[(std::size_t(r) * out.w + c) * out.c + ch] =
            x.data[(std::size_t(sr) * x.w + sc) * x.c + ch];
    }
  return out;
}

inline Block conv_same(const Block& x, const lucid::Tensor& kernel, const lucid::Tensor& bias) {
  const int kh = kernel.dim(0), kw = kernel.dim(1), C = kernel.dim(2), F = kernel.dim(3);
  const Block p = mirror_pad(x, (kh - 1) / 2, (kw - 1) / 2);
  Block out{x.h, x.w, F, {}};
  out.data.resize(std::size_t(x.h) * x.w * F);
  const auto k = kernel.data();
  const auto b = bias.data();
  for (int r = 0; r < x.h; ++r)
    for (int c = 0; c < x.w; ++c)
      for (int f = 0; f < F; ++f) {
        double acc = double(b[f]);
        for (int i = 0; i < kh; ++i)
          for (int j = 0; j < kw; ++j)
            for (int ch = 0; ch < C; ++ch)
              acc += p.data[(std::size_t(r + i) * p.w + (c + j)) * C + ch] *
                     double(k[((std::size_t(i) * kw + j) * C + ch) * F + f]);
        out.data[(std::size_t(r) * x.w + c) * F + f] = acc;
      }
  return out;
}

inline Block avg_pool2(const Block& x) {
  Block out{x.h / 2, x.w / 2, x.c, {}};
  out.data.resize(std::size_t(out.h) * out.w * x.c);
  for (int r = 0; r < out.h; ++r)
    for (int c = 0; c < out.w; ++c)
      for (int ch = 0; ch < x.c; ++ch) {
        double s = 0;
        for (int dr = 0; dr < 2; ++dr)
          for (int dc = 0; dc < 2; ++dc)
            s += x.data[(std::size_t(2 * r + dr) * x.w + (2 * c + dc)) * x.c + ch];
        out.data[(std::size_t(r) * out.w + c) * x.c + ch] = 0.25 * s;
      }
  return out;
}

inline void relu_inplace(Block& x) {
  for (double& v : x.data) v = v > 0.0 ? v : 0.0;
}

// Raw (pre-activation) output of every layer, in forward order.
inline std::vector<Block> run_layers(const lucid::NetworkSpec& spec,
                                     const lucid::Weights& weights, const dvec& image) {
  Block cur{spec.input_size, spec.input_size, 3, image};
  for (std::size_t i = 0; i < cur.data.size(); ++i) cur.data[i] -= double(spec.means[i % 3]);
  std::vector<Block> raw;
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const lucid::LayerSpec& l = spec.layers[li];
    switch (l.kind) {
      case lucid::LayerSpec::Kind::Conv: {
        Block out = conv_same(cur, weights.kernels.at(int(li)), weights.biases.at(int(li)));
        raw.push_back(out);
        relu_inplace(out);
        cur = std::move(out);
        break;
      }
      case lucid::LayerSpec::Kind::Pool:
        cur = avg_pool2(cur);
        raw.push_back(cur);
        break;
      case lucid::LayerSpec::Kind::Flatten:
        cur = Block{0, 0, 0, cur.data};
        raw.push_back(cur);
        break;
      case lucid::LayerSpec::Kind::Dense: {
        const lucid::Tensor& w = weights.kernels.at(int(li));
        const lucid::Tensor& b = weights.biases.at(int(li));
        const int N = w.dim(0), M = w.dim(1);
        Block out{0, 0, 0, dvec(std::size_t(M))};
        for (int j = 0; j < M; ++j) out.data[j] = double(b.data()[j]);
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < M; ++j)
            out.data[j] += cur.data[i] * double(w.data()[std::size_t(i) * M + j]);
        raw.push_back(out);
        if (li + 1 < spec.layers.size()) relu_inplace(out);
        cur = std::move(out);
        break;
      }
    }
  }
  return raw;
}

inline dvec logits(const lucid::NetworkSpec& spec, const lucid::Weights& weights,
                   const dvec& image) {
  return run_layers(spec, weights, image).back().data;
}

// ---- loss formulas -----------------------------------------------------------

inline double layer_dream_loss(const lucid::NetworkSpec& spec, const lucid::Weights& weights,
                               const dvec& image, int layer, int map) {
  const Block out = run_layers(spec, weights, image)[std::size_t(layer)];
  double acc = 0;
  for (int r = 0; r < out.h; ++r)
    for (int c = 0; c < out.w; ++c) {
      const double v = out.data[(std::size_t(r) * out.w + c) * out.c + map];
      acc += v * v;
    }
  return -acc;
}

inline double controlled_loss(const lucid::NetworkSpec& spec, const lucid::Weights& weights,
                              const dvec& image, int cls) {
  const double l = logits(spec, weights, image)[std::size_t(cls)];
  return -l * l;
}

// weights_per_offset entries are per-element (already broadcast).
inline double temporal_loss(const dvec& x, const std::vector<dvec>& warped,
                            const std::vector<dvec>& weights_per_offset) {
  double acc = 0;
  for (std::size_t j = 0; j < warped.size(); ++j)
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = x[k] - warped[j][k];
      acc += weights_per_offset[j][k] * d * d;
    }
  return acc / double(x.size());
}

inline double flow_trail_loss(const dvec& x, const dvec& warped, const dvec& mask) {
  double msum = 0;
  for (double m : mask) msum += m;
  if (msum <= 0) return 0;
  double acc = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x[k] - warped[k];
    acc += d * d;
  }
  return acc / (double(x.size()) * msum);
}

// Central finite differences of a scalar function of a flat image.
template <typename F>
dvec finite_diff(F&& f, dvec image, double h = 1e-3) {
  dvec g(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double keep = image[i];
    image[i] = keep + h;
    const double hi = f(image);
    image[i] = keep - h;
    const double lo = f(image);
    image[i] = keep;
    g[i] = (hi - lo) / (2.0 * h);
  }
  return g;
}

// Central finite differences at selected coordinates only.
template <typename F>
dvec finite_diff_at(F&& f, dvec image, const std::vector<std::size_t>& coords,
                    double h = 1e-3) {
  dvec g(coords.size());
  for (std::size_t n = 0; n < coords.size(); ++n) {
    const std::size_t i = coords[n];
    const double keep = image[i];
    image[i] = keep + h;
    const double hi = f(image);
    image[i] = keep - h;
    const double lo = f(image);
    image[i] = keep;
    g[n] = (hi - lo) / (2.0 * h);
  }
  return g;
}

}  // namespace refnet
