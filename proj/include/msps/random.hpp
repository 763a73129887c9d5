#pragma once

// Seeded generator shared by every stochastic component (LSH families,
// parameter init, synthetic data, SPSA). The algorithm is fixed so that
// other implementations can reproduce the exact same draws:
//
//   next_u64:  splitmix64 (state += 0x9E3779B97F4A7C15, then the standard
//              xor-shift-multiply finalizer)
//   uniform:   (next_u64 >> 11) * 2^-53, in [0, 1)
//   normal:    Box-Muller, cosine branch only; consumes two u64 draws:
//              u1 = ((x1 >> 11) + 0.5) * 2^-53, u2 = (x2 >> 11) * 2^-53,
//              z = sqrt(-2 ln u1) * cos(2 pi u2)

#include <cmath>
#include <cstdint>
#include <numbers>

namespace msps {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Rademacher +-1.
  double sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

 private:
  std::uint64_t state_;
};

// Derives an independent stream seed from a base seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  SplitMix64 g(base ^ (tag * 0xD1B54A32D192ED03ULL));
  return g.next_u64();
}

}  // namespace msps
