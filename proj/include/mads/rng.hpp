#pragma once

// Portable pseudo-random numbers. Every draw is defined bit-for-bit here (no
// std:: distributions, whose algorithms vary between standard libraries):
//
//   * engine: xoshiro256** seeded by four successive splitmix64 outputs;
//   * uniform(): top 53 bits of a draw scaled by 2^-53, in [0, 1);
//   * normal(): Box-Muller cosine branch, one normal per two uniforms;
//   * beta22(): median of three uniforms, which is exactly Beta(2, 2).
//
// Independent streams are derived with derive_seed(), so per-index work can be
// generated in any order (or in parallel) and still match a sequential run.

#include <array>
#include <cstdint>
#include <initializer_list>

namespace mads {

std::uint64_t splitmix64(std::uint64_t& state);

/// Mixes a base seed with stream labels into a new seed.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> labels);

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  double beta22();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace mads
