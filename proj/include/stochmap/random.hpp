#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace stochmap {

using Rng = std::mt19937_64;

// One independent stream per (seed, stream id). Chains and benchmark cells
// each get their own stream so runs are reproducible cell by cell.
inline auto make_rng(std::uint64_t seed, std::uint64_t stream = 0) -> Rng {
  auto seq = std::seed_seq{
      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
      0x5eedU};
  return Rng{seq};
}

inline auto uniform01(Rng& rng) -> double {
  return std::uniform_real_distribution<double>{0.0, 1.0}(rng);
}

// Draws an index with probability proportional to weights[i]. Weights need
// not be normalized; total must be positive.
inline auto sample_categorical(std::span<const double> weights, double total, Rng& rng) -> int {
  auto target = uniform01(rng) * total;
  auto last_positive = -1;
  for (auto i = 0; i < static_cast<int>(weights.size()); ++i) {
    if (weights[i] <= 0.0) { continue; }
    last_positive = i;
    target -= weights[i];
    if (target < 0.0) { return i; }
  }
  return last_positive;  // rounding at the tail
}

inline auto sample_categorical(std::span<const double> weights, Rng& rng) -> int {
  auto total = 0.0;
  for (auto w : weights) { total += w; }
  return sample_categorical(weights, total, rng);
}

inline auto sample_poisson(double mean, Rng& rng) -> int {
  if (!(mean > 0.0)) { return 0; }
  return std::poisson_distribution<int>{mean}(rng);
}

}  // namespace stochmap
