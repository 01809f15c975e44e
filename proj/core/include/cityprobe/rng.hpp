#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace cityprobe {

/// Uniform draw in [0, bound) by rejection sampling. mt19937_64's output
/// sequence is pinned by the standard, so results are identical on every
/// platform (std::uniform_int_distribution is not).
inline uint64_t bounded_uniform(std::mt19937_64& rng, uint64_t bound) {
  uint64_t limit =
      std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % bound;
  uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return draw % bound;
}

/// Uniform double in (0, 1]; never returns 0.
inline double unit_uniform(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace cityprobe
