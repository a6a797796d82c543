#include "lucid/losses.hpp"

#include <algorithm>
#include <cmath>

namespace lucid {

void LossWeights::validate() const {
  for (double w : {alpha, beta, gamma, delta})
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ContractError("loss weights must be finite and nonnegative");
}

int FrameContext::find(int offset) const {
  for (std::size_t i = 0; i < offsets.size(); ++i)
    if (offsets[i] == offset) return int(i);
  return -1;
}

void FrameContext::finalize() {
  if (offsets.size() != warped.size() || offsets.size() != masks.size())
    throw ContractError("frame context: offsets, warped frames and masks must align");
  for (std::size_t i = 1; i < offsets.size(); ++i)
    if (offsets[i] <= offsets[i - 1])
      throw ContractError("frame context: offsets must be strictly increasing");
  lt_weights = long_term_weights(masks);
}

Tensor broadcast_mask(const Tensor& mask, const Tensor& like) {
  if (mask.shape() == like.shape()) return mask;
  if (mask.rank() == 2 && like.rank() == 3 && mask.dim(0) == like.dim(0) &&
      mask.dim(1) == like.dim(1)) {
    const int C = like.dim(2);
    std::vector<float> out(like.size());
    const auto in = mask.data();
    for (std::size_t p = 0; p < in.size(); ++p)
      for (int ch = 0; ch < C; ++ch) out[p * C + ch] = in[p];
    return Tensor::from_data(like.shape(), std::move(out));
  }
  throw ShapeError("mask " + shape_str(mask.shape()) + " cannot be broadcast to " +
                   shape_str(like.shape()));
}

Tensor layer_dream_loss(const Tensor& feature_map) {
  return scale(sum_squares(feature_map), -1.0f);
}

Tensor controlled_loss(const Tensor& logits, int class_index) {
  if (class_index < 0 || std::size_t(class_index) >= logits.size())
    throw IndexError("controlled_loss: class " + std::to_string(class_index) +
                     " out of range for " + std::to_string(logits.size()) + " logits");
  Tensor l = pick(logits, std::size_t(class_index));
  return scale(mul(l, l), -1.0f);
}

std::vector<Tensor> long_term_weights(const std::vector<Tensor>& masks) {
  std::vector<Tensor> out;
  out.reserve(masks.size());
  if (masks.empty()) return out;
  const Shape& shape = masks.front().shape();
  std::vector<float> nearer_sum(masks.front().size(), 0.0f);
  for (const Tensor& m : masks) {
    if (m.shape() != shape)
      throw ShapeError("long_term_weights: mask shapes disagree: " + shape_str(m.shape()) +
                       " vs " + shape_str(shape));
    std::vector<float> w(m.size());
    const auto data = m.data();
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = std::max(data[i] - nearer_sum[i], 0.0f);
    for (std::size_t i = 0; i < w.size(); ++i) nearer_sum[i] += data[i];
    out.push_back(Tensor::from_data(shape, std::move(w)));
  }
  return out;
}

Tensor temporal_loss(const Tensor& x, const std::vector<Tensor>& warped,
                     const std::vector<Tensor>& weight_fields, std::size_t dimensionality) {
  if (warped.size() != weight_fields.size())
    throw ContractError("temporal_loss: warped frames and weight fields must align");
  if (dimensionality == 0) throw ContractError("temporal_loss: zero dimensionality");
  Tensor acc;
  for (std::size_t i = 0; i < warped.size(); ++i) {
    if (warped[i].shape() != x.shape())
      throw ShapeError("temporal_loss: warped frame shape " + shape_str(warped[i].shape()) +
                       " does not match image " + shape_str(x.shape()));
    Tensor diff = sub(x, warped[i]);
    Tensor term = weighted_sum_squares(diff, broadcast_mask(weight_fields[i], x));
    acc = acc.defined() ? add(acc, term) : term;
  }
  if (!acc.defined()) return Tensor::scalar(0.0f);
  return scale(acc, 1.0f / float(dimensionality));
}

Tensor flow_trail_loss(const Tensor& x, const Tensor& warped, const Tensor& mask,
                       bool masked_residual) {
  if (warped.shape() != x.shape())
    throw ShapeError("flow_trail_loss: warped frame shape does not match image");
  const Tensor field = broadcast_mask(mask, x);
  double mask_sum = 0.0;
  for (float v : field.data()) mask_sum += double(v);
  if (mask_sum <= 0.0) return Tensor::scalar(0.0f);
  Tensor diff = sub(x, warped);
  Tensor energy = masked_residual ? sum_squares(mul(diff, field)) : sum_squares(diff);
  return scale(energy, float(1.0 / (double(x.size()) * mask_sum)));
}

Tensor total_loss(const Tensor& x, const Network& net, int class_index,
                  const LossWeights& weights, const FrameContext& ctx, bool trail_masked) {
  weights.validate();
  const std::size_t D = x.size();
  std::vector<Tensor> terms;

  if (weights.alpha != 0.0)
    terms.push_back(scale(controlled_loss(net.forward_logits(x), class_index),
                          float(weights.alpha)));

  const int j1 = ctx.find(1);
  if (weights.beta != 0.0 && j1 >= 0)
    terms.push_back(scale(temporal_loss(x, {ctx.warped[std::size_t(j1)]},
                                        {ctx.masks[std::size_t(j1)]}, D),
                          float(weights.beta)));

  if (weights.gamma != 0.0 && !ctx.empty()) {
    if (ctx.lt_weights.size() != ctx.offsets.size())
      throw ContractError("total_loss: frame context not finalized (lt_weights missing)");
    terms.push_back(scale(temporal_loss(x, ctx.warped, ctx.lt_weights, D),
                          float(weights.gamma)));
  }

  if (weights.delta != 0.0 && j1 >= 0)
    terms.push_back(scale(flow_trail_loss(x, ctx.warped[std::size_t(j1)],
                                          ctx.masks[std::size_t(j1)], trail_masked),
                          float(weights.delta)));

  if (terms.empty()) return Tensor::scalar(0.0f);
  Tensor acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

}  // namespace lucid
