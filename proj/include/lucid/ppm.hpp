#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lucid/tensor.hpp"

namespace lucid {

// Binary PPM (P6, maxval 255) image.
struct PpmImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> samples;  // RGB interleaved

  // float image in [0,1] <-> 8-bit samples (round half away from zero).
  Tensor to_tensor() const;  // {H, W, 3}
  static PpmImage from_tensor(const Tensor& image);
};

PpmImage read_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_ppm(const PpmImage& image);
PpmImage read_ppm_file(const std::filesystem::path& path);
void write_ppm_file(const PpmImage& image, const std::filesystem::path& path);

}  // namespace lucid
