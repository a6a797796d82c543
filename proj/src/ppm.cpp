#include "lucid/ppm.hpp"

#include <cmath>
#include <fstream>

namespace lucid {

Tensor PpmImage::to_tensor() const {
  std::vector<float> data(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) data[i] = float(samples[i]) / 255.0f;
  return Tensor::from_data({height, width, 3}, std::move(data));
}

PpmImage PpmImage::from_tensor(const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3)
    throw ShapeError("PpmImage: expected HxWx3 tensor, got " + shape_str(image.shape()));
  PpmImage out;
  out.height = image.dim(0);
  out.width = image.dim(1);
  out.samples.resize(image.size());
  const auto in = image.data();
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const float v = std::min(std::max(in[i], 0.0f), 1.0f);
    out.samples[i] = std::uint8_t(std::lround(v * 255.0f));
  }
  return out;
}

namespace {

// Skips whitespace and '#' comments, then reads a nonnegative decimal token.
int next_header_int(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
    throw ParseError("ppm: malformed header");
  long value = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > 1 << 24) throw ParseError("ppm: header value out of range");
    ++pos;
  }
  return int(value);
}

}  // namespace

PpmImage read_ppm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw ParseError("ppm: bad magic (expected P6)");
  std::size_t pos = 2;
  PpmImage img;
  img.width = next_header_int(bytes, pos);
  img.height = next_header_int(bytes, pos);
  const int maxval = next_header_int(bytes, pos);
  if (img.width <= 0 || img.height <= 0) throw ParseError("ppm: nonpositive dimensions");
  if (maxval != 255) throw ParseError("ppm: unsupported maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw ParseError("ppm: malformed header");
  ++pos;  // single whitespace byte before the payload
  const std::size_t expect = std::size_t(img.width) * img.height * 3;
  if (bytes.size() - pos < expect) throw ParseError("ppm: truncated payload");
  img.samples.assign(bytes.begin() + std::ptrdiff_t(pos),
                     bytes.begin() + std::ptrdiff_t(pos + expect));
  return img;
}

std::vector<std::uint8_t> write_ppm(const PpmImage& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.samples.begin(), image.samples.end());
  return out;
}

PpmImage read_ppm_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("image not found: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return read_ppm(bytes);
}

void write_ppm_file(const PpmImage& image, const std::filesystem::path& path) {
  const auto bytes = write_ppm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace lucid
