#include "lucid/tiler.hpp"

namespace lucid {

namespace {

void roll_dims(const Tensor& t, int& h, int& w, int& c) {
  if (t.rank() == 2) {
    h = t.dim(0);
    w = t.dim(1);
    c = 1;
  } else if (t.rank() == 3) {
    h = t.dim(0);
    w = t.dim(1);
    c = t.dim(2);
  } else {
    throw ShapeError("roll: expected rank 2 or 3, got " + shape_str(t.shape()));
  }
}

int mod(int a, int n) {
  const int r = a % n;
  return r < 0 ? r + n : r;
}

Tensor roll_impl(const Tensor& image, int dr, int dc) {
  int H, W, C;
  roll_dims(image, H, W, C);
  dr = mod(dr, H);
  dc = mod(dc, W);
  Tensor out = Tensor::zeros(image.shape());
  const float* in = image.data().data();
  float* dst = out.mutable_data().data();
  for (int r = 0; r < H; ++r) {
    const int sr = (r + dr) % H;
    // copy the row in two contiguous runs split at the wrap point
    const float* src = in + std::size_t(sr) * W * C;
    float* d = dst + std::size_t(r) * W * C;
    const std::size_t head = std::size_t(W - dc) * C;
    std::copy(src + std::size_t(dc) * C, src + std::size_t(W) * C, d);
    std::copy(src, src + std::size_t(dc) * C, d + head);
  }
  return out;
}

}  // namespace

Tensor roll(const Tensor& image, int origin_row, int origin_col) {
  return roll_impl(image, origin_row, origin_col);
}

Tensor unroll(const Tensor& image, int origin_row, int origin_col) {
  int H, W, C;
  roll_dims(image, H, W, C);
  return roll_impl(image, mod(-origin_row, H), mod(-origin_col, W));
}

TileSchedule make_schedule(int height, int width, int tile, SplitMix64& rng) {
  if (tile <= 0) throw ContractError("make_schedule: tile size must be positive");
  if (tile > height || tile > width)
    throw ContractError("make_schedule: unsupported size, tile " + std::to_string(tile) +
                        " exceeds image " + std::to_string(height) + "x" +
                        std::to_string(width));
  TileSchedule s;
  s.height = height;
  s.width = width;
  s.tile = tile;
  s.grid_rows = height / tile;
  s.grid_cols = width / tile;
  s.margin_rows = height % tile;
  s.margin_cols = width % tile;
  s.origin_row = int(rng.below(std::uint64_t(height)));
  s.origin_col = int(rng.below(std::uint64_t(width)));
  return s;
}

Tensor apply_tilewise(const Tensor& image, const TileSchedule& schedule,
                      const TileUpdate& update) {
  int H, W, C;
  roll_dims(image, H, W, C);
  if (H != schedule.height || W != schedule.width)
    throw ShapeError("apply_tilewise: schedule built for " + std::to_string(schedule.height) +
                     "x" + std::to_string(schedule.width) + ", image is " +
                     shape_str(image.shape()));
  const int T = schedule.tile;
  Tensor rolled = roll(image, schedule.origin_row, schedule.origin_col);
  for (int tr = 0; tr < schedule.grid_rows; ++tr) {
    for (int tc = 0; tc < schedule.grid_cols; ++tc) {
      Tensor tile = crop(rolled, tr * T, tc * T, T, T);
      Tensor updated = update(tile, tr, tc);
      if (!updated.defined() || updated.shape() != tile.shape())
        throw ContractError("apply_tilewise: update must preserve the tile shape");
      paste_into(rolled, updated, tr * T, tc * T);
    }
  }
  return unroll(rolled, schedule.origin_row, schedule.origin_col);
}

}  // namespace lucid
