#pragma once

#include <functional>

#include "lucid/rng.hpp"
#include "lucid/tensor.hpp"

namespace lucid {

// One randomized tiling pass: a uniformly drawn origin, the grid of full
// tiles that fits after rolling the image so the origin becomes (0,0), and
// the leftover margin band (H mod T rows, W mod T cols) that this pass
// leaves untouched. Because the origin is uniform over all H*W positions,
// every pixel has the same probability of landing in the margin.
struct TileSchedule {
  int origin_row = 0;
  int origin_col = 0;
  int tile = 0;         // T
  int grid_rows = 0;    // floor(H / T)
  int grid_cols = 0;    // floor(W / T)
  int margin_rows = 0;  // H mod T
  int margin_cols = 0;  // W mod T
  int height = 0;
  int width = 0;
};

// Circular roll: output[r][c] = input[(r + origin_row) mod H][(c + origin_col) mod W],
// i.e. the pixel at the origin becomes the new (0,0). Lossless. Accepts rank-2
// fields and rank-3 images.
Tensor roll(const Tensor& image, int origin_row, int origin_col);

// Exact inverse: unroll(roll(x, o), o) == x.
Tensor unroll(const Tensor& image, int origin_row, int origin_col);

// Draws the origin uniformly from all height*width positions.
// Requires tile <= min(height, width).
TileSchedule make_schedule(int height, int width, int tile, SplitMix64& rng);

// The update receives each rolled-out T x T (xC) tile with its grid position
// and returns the replacement tile (same shape). Rolls, updates every grid
// tile exactly once, leaves the margin untouched, unrolls.
using TileUpdate = std::function<Tensor(const Tensor& tile, int grid_row, int grid_col)>;
Tensor apply_tilewise(const Tensor& image, const TileSchedule& schedule,
                      const TileUpdate& update);

}  // namespace lucid
