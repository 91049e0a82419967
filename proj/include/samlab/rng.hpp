#pragma once

#include <cmath>
#include <cstdint>

namespace samlab {

// Counter-based pseudo-random stream.
//
// Reproducibility contract (do not change without a major version bump):
//   raw output i of a stream with seed s is the splitmix64 finalizer
//   applied to s + (i + 1) * 0x9E3779B97F4A7C15, uniforms are
//   ((raw >> 11) + 1) * 2^-53 in (0, 1], and normals use Box-Muller
//   consuming exactly two uniforms per draw.
//
// The same (seed, counter) always yields the same draw, so trajectories
// are bit-identical across runs. Streams for parallel runs are derived
// from (base_seed, index) and do not overlap.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t next_u64() { return mix(seed + (++counter) * kGamma); }

  // Uniform in (0, 1]; never 0, so log() below is always finite.
  double next_uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller.
  double next_normal() {
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  static RngStream derive(std::uint64_t base_seed, std::uint64_t index) {
    return RngStream{mix(base_seed + kGamma * mix(index + kGamma)), 0};
  }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;
};

}  // namespace samlab
