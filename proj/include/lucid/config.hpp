#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lucid/pipeline.hpp"

namespace lucid {

// One layer of run configuration; every field is optional so layers can be
// merged with command line > config file > preset defaults.
struct Config {
  std::optional<std::string> preset;
  std::optional<int> class_index;
  std::optional<std::uint64_t> seed;

  std::optional<double> alpha, beta, gamma, delta;
  std::optional<std::vector<int>> offsets;  // key "J"
  std::optional<int> k_base, k_over;
  std::optional<double> lr;
  std::optional<double> shot_threshold;
  std::optional<double> disagree_scale, disagree_offset;
  std::optional<double> boundary_scale, boundary_offset;
  std::optional<bool> trail_masked;

  std::optional<std::string> net_spec, weights, frames, flows, out, image;

  // Overlays `higher` on top of this config (set fields win).
  void apply(const Config& higher);

  static Config from_text(const std::string& text);
  static Config from_file(const std::filesystem::path& path);
};

// Builds runtime options from the merged config: preset defaults first, then
// every override, validated (weights nonnegative, J ascending, k_base <=
// k_over).
DreamOptions resolve_options(const Config& config);

// Effective-configuration echo for the run manifest.
std::vector<std::pair<std::string, std::string>> config_echo(const DreamOptions& options);

}  // namespace lucid
