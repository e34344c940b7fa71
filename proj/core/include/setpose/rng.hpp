#pragma once

#include <array>
#include <cstdint>

namespace setpose {

/// xoshiro256** (Blackman & Vigna), seeded through splitmix64.
///
/// The algorithm is pinned so that generated datasets and initializations are
/// reproducible across compilers and platforms; std::mt19937 would be too, but
/// the standard distributions layered on top of it are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream for (seed, index), e.g. one per generated sample.
  static Rng stream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  bool bernoulli(double p);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace setpose
