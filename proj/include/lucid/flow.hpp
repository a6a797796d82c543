#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lucid/tensor.hpp"

namespace lucid {

// Per-pixel displacement field between two frames. direction records which
// way it points: flow at pixel p of frame `source_frame` gives the offset to
// the matching position in frame `target_frame`.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> uv;  // row-major interleaved (u, v)
  int source_frame = 0;
  int target_frame = 0;

  float u(int r, int c) const { return uv[(std::size_t(r) * width + c) * 2]; }
  float v(int r, int c) const { return uv[(std::size_t(r) * width + c) * 2 + 1]; }
  float& u(int r, int c) { return uv[(std::size_t(r) * width + c) * 2]; }
  float& v(int r, int c) { return uv[(std::size_t(r) * width + c) * 2 + 1]; }

  static FlowField constant(int height, int width, float u, float v);
};

// Boolean temporal-validity field; 1 marks pixels where the warp from the
// earlier frame is trustworthy.
struct ConsistencyMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> mask;
  std::size_t consistent_count = 0;

  static ConsistencyMask ones(int height, int width);
  bool at(int r, int c) const { return mask[std::size_t(r) * width + c] != 0; }
  void set(int r, int c, bool value);
  // {H, W} float tensor with entries 0/1.
  Tensor as_field() const;
};

// ---- Middlebury .flo --------------------------------------------------------
// float32 magic 202021.25, int32 width, int32 height, then row-major
// interleaved float32 (u, v); all little-endian.

FlowField parse_flo(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_flo(const FlowField& flow);
FlowField read_flo_file(const std::filesystem::path& path);
void write_flo_file(const FlowField& flow, const std::filesystem::path& path);

// File naming convention for a (from, to) frame pair inside a flow directory.
std::string forward_flo_name(int from_frame, int to_frame);
std::string backward_flo_name(int from_frame, int to_frame);

// ---- warping ---------------------------------------------------------------

struct WarpResult {
  Tensor image;           // bilinear warp; 0 where invalid
  ConsistencyMask valid;  // 0 where the sample footprint leaves the image
};

// Backward warping: warped[p] = image sampled at p + flow(p). The flow must
// point from the current frame into the frame `image` comes from.
WarpResult warp(const Tensor& image, const FlowField& flow);

// ---- consistency -----------------------------------------------------------

struct ConsistencyParams {
  // |w_fwd(p + w_bwd(p)) + w_bwd(p)|^2 > scale*(|w_fwd|^2 + |w_bwd|^2) + offset
  float disagree_scale = 0.01f;
  float disagree_offset = 0.5f;
  // |grad u|^2 + |grad v|^2 > scale*|w_bwd(p)|^2 + offset
  float boundary_scale = 0.01f;
  float boundary_offset = 0.002f;
};

// Forward-backward flow check plus motion-boundary check. `forward` maps the
// earlier frame onto the later one, `backward` the reverse; the mask lives in
// the later frame's pixel grid. Flow sampling clamps at the border, so pure
// translations stay consistent along edges; image-warp validity is a separate
// field (see WarpResult) and is intersected with this mask where losses
// consume it.
ConsistencyMask consistency_mask(const FlowField& forward, const FlowField& backward,
                                 const ConsistencyParams& params = {});

double inconsistency_fraction(const ConsistencyMask& mask);

// ---- synthetic flows (test fixtures) ----------------------------------------

struct FlowPair {
  FlowField forward;   // earlier -> later
  FlowField backward;  // later -> earlier
};

// Content translates by (dx, dy) pixels from the earlier frame to the later.
FlowPair synth_translation(int height, int width, float dx, float dy);
// Content rotates by theta radians about the image center.
FlowPair synth_rotation(int height, int width, float theta);

}  // namespace lucid
