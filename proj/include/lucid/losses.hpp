#pragma once

#include <cstddef>
#include <vector>

#include "lucid/net.hpp"
#include "lucid/tensor.hpp"

namespace lucid {

// Coefficients of the combined objective
//   L = alpha * L_class + beta * L_short + gamma * L_long + delta * L_trail.
struct LossWeights {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double delta = 0.0;

  void validate() const;
};

// Everything a frame's temporal terms need: for each offset j (ascending,
// with frame index i - j >= first frame) the prior output warped onto this
// frame and the matching validity field. Warped priors and masks are
// constants in the gradient -- they are finished frames.
struct FrameContext {
  std::vector<int> offsets;        // ascending subset of J valid at this frame
  std::vector<Tensor> warped;      // per offset, same shape as the frame
  std::vector<Tensor> masks;       // per offset, {H,W} (or frame-shaped) 0/1
  std::vector<Tensor> lt_weights;  // per offset, long_term_weights(masks)

  bool empty() const { return offsets.empty(); }
  // Index of offset j within the vectors, or -1.
  int find(int offset) const;
  // Recompute lt_weights from masks; call after the masks are final.
  void finalize();
};

// Broadcast a {H,W} field across the channels of `like` (or pass through if
// the shapes already agree).
Tensor broadcast_mask(const Tensor& mask, const Tensor& like);

// Feature-energy objective: negative squared Frobenius norm of a feature map.
Tensor layer_dream_loss(const Tensor& feature_map);

// Class objective: negative squared logit of the target class.
Tensor controlled_loss(const Tensor& logits, int class_index);

// Per-offset weight fields for the long-term loss: each mask minus the sum of
// all nearer-frame masks, clamped at zero. The smallest offset keeps its raw
// mask. Masks must be aligned and ordered by ascending offset.
std::vector<Tensor> long_term_weights(const std::vector<Tensor>& masks);

// (1/D) sum_j sum_k weights_j[k] * (x[k] - warped_j[k])^2 with weight fields
// broadcast across channels. The short-term loss is this restricted to
// offset 1; there is no separate code path for it.
Tensor temporal_loss(const Tensor& x, const std::vector<Tensor>& warped,
                     const std::vector<Tensor>& weight_fields, std::size_t dimensionality);

// Flow-trail term: ||x - warped||_F^2 / (D * sum_k c[k]), the residual left
// unmasked. Defined as 0 when the mask is empty (a fully inconsistent pair
// carries no trail signal). With masked_residual the residual is multiplied
// by the mask before squaring.
Tensor flow_trail_loss(const Tensor& x, const Tensor& warped, const Tensor& mask,
                       bool masked_residual = false);

// The combined objective on one network-sized image. Terms with zero weight
// (or with no usable context, e.g. a first frame) are not evaluated.
Tensor total_loss(const Tensor& x, const Network& net, int class_index,
                  const LossWeights& weights, const FrameContext& ctx,
                  bool trail_masked = false);

}  // namespace lucid
