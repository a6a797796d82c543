#pragma once

#include <cstdint>

namespace lucid {

// SplitMix64 (Steele, Lea, Flood 2014): 64-bit state, one multiply-xorshift
// chain per draw. Chosen because the whole algorithm fits in a screenful and
// produces identical streams on every platform, which keeps runs bit-exact.
struct SplitMix64 {
  std::uint64_t state = 0;

  SplitMix64() = default;
  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Unbiased draw in [0, bound) via rejection sampling.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = ~0ull - ~0ull % bound;
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % bound;
  }

  // Uniform float in [0, 1) with 24 mantissa bits.
  float uniform01() { return float(next() >> 40) * (1.0f / 16777216.0f); }

  // Uniform float in [-limit, limit].
  float uniform_sym(float limit) { return (2.0f * uniform01() - 1.0f) * limit; }
};

// Derives an independent stream seed from (seed, stream). Frame i of a run
// draws from derive_stream(global_seed, i), so per-frame randomness does not
// depend on how much the previous frames consumed.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 g(seed ^ (0xD1B54A32D192ED03ull + stream * 0x9E3779B97F4A7C15ull));
  g.next();
  return g.next();
}

}  // namespace lucid
