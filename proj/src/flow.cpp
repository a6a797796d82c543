#include "lucid/flow.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace lucid {

FlowField FlowField::constant(int height, int width, float u, float v) {
  FlowField f;
  f.height = height;
  f.width = width;
  f.uv.resize(std::size_t(height) * width * 2);
  for (std::size_t p = 0; p < std::size_t(height) * width; ++p) {
    f.uv[p * 2] = u;
    f.uv[p * 2 + 1] = v;
  }
  return f;
}

ConsistencyMask ConsistencyMask::ones(int height, int width) {
  ConsistencyMask m;
  m.height = height;
  m.width = width;
  m.mask.assign(std::size_t(height) * width, 1);
  m.consistent_count = m.mask.size();
  return m;
}

void ConsistencyMask::set(int r, int c, bool value) {
  auto& cell = mask[std::size_t(r) * width + c];
  if (cell && !value) --consistent_count;
  if (!cell && value) ++consistent_count;
  cell = value ? 1 : 0;
}

Tensor ConsistencyMask::as_field() const {
  std::vector<float> data(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) data[i] = mask[i] ? 1.0f : 0.0f;
  return Tensor::from_data({height, width}, std::move(data));
}

// ---- .flo -------------------------------------------------------------------

namespace {

constexpr float kFloMagic = 202021.25f;

float read_f32le(const std::uint8_t* p) {
  std::uint32_t v = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
                    std::uint32_t(p[3]) << 24;
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

std::int32_t read_i32le(const std::uint8_t* p) {
  std::uint32_t v = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
                    std::uint32_t(p[3]) << 24;
  std::int32_t i;
  std::memcpy(&i, &v, 4);
  return i;
}

void append_f32le(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  out.push_back(std::uint8_t(v));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 24));
}

void append_i32le(std::vector<std::uint8_t>& out, std::int32_t i) {
  std::uint32_t v;
  std::memcpy(&v, &i, 4);
  out.push_back(std::uint8_t(v));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 24));
}

}  // namespace

FlowField parse_flo(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || read_f32le(bytes.data()) != kFloMagic)
    throw ParseError(".flo: bad magic");
  if (bytes.size() < 12) throw ParseError(".flo: truncated header");
  const std::int32_t w = read_i32le(bytes.data() + 4);
  const std::int32_t h = read_i32le(bytes.data() + 8);
  if (w <= 0 || h <= 0) throw ParseError(".flo: nonpositive dimensions");
  const std::size_t expect = 12 + std::size_t(w) * std::size_t(h) * 2 * 4;
  if (bytes.size() < expect) throw ParseError(".flo: truncated payload");
  if (bytes.size() > expect) throw ParseError(".flo: trailing bytes");
  FlowField f;
  f.width = w;
  f.height = h;
  f.uv.resize(std::size_t(w) * h * 2);
  for (std::size_t i = 0; i < f.uv.size(); ++i) f.uv[i] = read_f32le(bytes.data() + 12 + i * 4);
  return f;
}

std::vector<std::uint8_t> write_flo(const FlowField& flow) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + flow.uv.size() * 4);
  append_f32le(out, kFloMagic);
  append_i32le(out, flow.width);
  append_i32le(out, flow.height);
  for (float f : flow.uv) append_f32le(out, f);
  return out;
}

FlowField read_flo_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("flow file not found: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_flo(bytes);
}

void write_flo_file(const FlowField& flow, const std::filesystem::path& path) {
  const auto bytes = write_flo(flow);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string forward_flo_name(int from_frame, int to_frame) {
  return "forward_" + std::to_string(from_frame) + "_" + std::to_string(to_frame) + ".flo";
}

std::string backward_flo_name(int from_frame, int to_frame) {
  return "backward_" + std::to_string(from_frame) + "_" + std::to_string(to_frame) + ".flo";
}

// ---- warping ----------------------------------------------------------------

WarpResult warp(const Tensor& image, const FlowField& flow) {
  if (image.rank() != 3 && image.rank() != 2)
    throw ShapeError("warp: image must be rank 2 or 3, got " + shape_str(image.shape()));
  const int H = image.dim(0), W = image.dim(1);
  const int C = image.rank() == 3 ? image.dim(2) : 1;
  if (flow.height != H || flow.width != W)
    throw ShapeError("warp: flow " + std::to_string(flow.width) + "x" +
                     std::to_string(flow.height) + " does not match image " +
                     shape_str(image.shape()));
  Tensor out = Tensor::zeros(image.shape());
  ConsistencyMask valid = ConsistencyMask::ones(H, W);
  const auto in = image.data();
  auto dst = out.mutable_data();
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const float x = float(c) + flow.u(r, c);
      const float y = float(r) + flow.v(r, c);
      if (x < 0.0f || x > float(W - 1) || y < 0.0f || y > float(H - 1)) {
        valid.set(r, c, false);
        continue;
      }
      const int x0 = int(std::floor(x));
      const int y0 = int(std::floor(y));
      const int x1 = std::min(x0 + 1, W - 1);
      const int y1 = std::min(y0 + 1, H - 1);
      const float fx = x - float(x0);
      const float fy = y - float(y0);
      const float* p00 = &in[(std::size_t(y0) * W + x0) * C];
      const float* p01 = &in[(std::size_t(y0) * W + x1) * C];
      const float* p10 = &in[(std::size_t(y1) * W + x0) * C];
      const float* p11 = &in[(std::size_t(y1) * W + x1) * C];
      float* o = &dst[(std::size_t(r) * W + c) * C];
      for (int ch = 0; ch < C; ++ch) {
        const float top = p00[ch] + fx * (p01[ch] - p00[ch]);
        const float bot = p10[ch] + fx * (p11[ch] - p10[ch]);
        o[ch] = top + fy * (bot - top);
      }
    }
  }
  return {std::move(out), std::move(valid)};
}

// ---- consistency ------------------------------------------------------------

namespace {

// Bilinear sample of one flow component with border clamp.
float sample_flow(const FlowField& f, float x, float y, int comp) {
  const float cx = std::min(std::max(x, 0.0f), float(f.width - 1));
  const float cy = std::min(std::max(y, 0.0f), float(f.height - 1));
  const int x0 = int(std::floor(cx));
  const int y0 = int(std::floor(cy));
  const int x1 = std::min(x0 + 1, f.width - 1);
  const int y1 = std::min(y0 + 1, f.height - 1);
  const float fx = cx - float(x0);
  const float fy = cy - float(y0);
  auto val = [&](int r, int c) { return comp == 0 ? f.u(r, c) : f.v(r, c); };
  const float top = val(y0, x0) + fx * (val(y0, x1) - val(y0, x0));
  const float bot = val(y1, x0) + fx * (val(y1, x1) - val(y1, x0));
  return top + fy * (bot - top);
}

// Central differences, one-sided at borders.
void flow_gradient(const FlowField& f, int r, int c, int comp, float& gx, float& gy) {
  auto val = [&](int rr, int cc) { return comp == 0 ? f.u(rr, cc) : f.v(rr, cc); };
  const int cl = std::max(c - 1, 0), cr = std::min(c + 1, f.width - 1);
  const int rl = std::max(r - 1, 0), rr_ = std::min(r + 1, f.height - 1);
  gx = (val(r, cr) - val(r, cl)) / float(cr - cl == 0 ? 1 : cr - cl);
  gy = (val(rr_, c) - val(rl, c)) / float(rr_ - rl == 0 ? 1 : rr_ - rl);
}

}  // namespace

ConsistencyMask consistency_mask(const FlowField& forward, const FlowField& backward,
                                 const ConsistencyParams& params) {
  if (forward.height != backward.height || forward.width != backward.width)
    throw ShapeError("consistency_mask: flow dimensions disagree");
  const int H = backward.height, W = backward.width;
  ConsistencyMask m = ConsistencyMask::ones(H, W);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const float bu = backward.u(r, c);
      const float bv = backward.v(r, c);
      const float fu = sample_flow(forward, float(c) + bu, float(r) + bv, 0);
      const float fv = sample_flow(forward, float(c) + bu, float(r) + bv, 1);
      const float b2 = bu * bu + bv * bv;
      const float f2 = fu * fu + fv * fv;
      const float du = fu + bu;
      const float dv = fv + bv;
      if (du * du + dv * dv > params.disagree_scale * (f2 + b2) + params.disagree_offset) {
        m.set(r, c, false);
        continue;
      }
      float gux, guy, gvx, gvy;
      flow_gradient(backward, r, c, 0, gux, guy);
      flow_gradient(backward, r, c, 1, gvx, gvy);
      const float grad2 = gux * gux + guy * guy + gvx * gvx + gvy * gvy;
      if (grad2 > params.boundary_scale * b2 + params.boundary_offset) m.set(r, c, false);
    }
  }
  return m;
}

double inconsistency_fraction(const ConsistencyMask& mask) {
  if (mask.mask.empty()) return 0.0;
  return 1.0 - double(mask.consistent_count) / double(mask.mask.size());
}

// ---- synthetic flows ----------------------------------------------------------

FlowPair synth_translation(int height, int width, float dx, float dy) {
  FlowPair p;
  p.forward = FlowField::constant(height, width, dx, dy);
  p.backward = FlowField::constant(height, width, -dx, -dy);
  return p;
}

FlowPair synth_rotation(int height, int width, float theta) {
  FlowPair p;
  p.forward = FlowField::constant(height, width, 0.0f, 0.0f);
  p.backward = FlowField::constant(height, width, 0.0f, 0.0f);
  const double cx = 0.5 * double(width - 1);
  const double cy = 0.5 * double(height - 1);
  const double s = std::sin(double(theta)), c = std::cos(double(theta));
  for (int r = 0; r < height; ++r) {
    for (int col = 0; col < width; ++col) {
      const double px = double(col) - cx;
      const double py = double(r) - cy;
      // forward: where this point lands after rotating by theta
      p.forward.u(r, col) = float(c * px - s * py - px);
      p.forward.v(r, col) = float(s * px + c * py - py);
      // backward: where this point came from (rotate by -theta)
      p.backward.u(r, col) = float(c * px + s * py - px);
      p.backward.v(r, col) = float(-s * px + c * py - py);
    }
  }
  return p;
}

}  // namespace lucid
