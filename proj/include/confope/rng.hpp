#pragma once
// Counter-style RNG built on splitmix64. Each trajectory gets its own substream
// keyed by (seed, index), so simulation output does not depend on thread count
// or iteration order: serial and parallel runs are bit-identical.

#include <cstdint>

#include "confope/common.hpp"

namespace confope {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}
  // Substream for item `idx` under `seed` (e.g. one per trajectory).
  static Rng substream(uint64_t seed, uint64_t idx) {
    uint64_t s = splitmix64(seed ^ 0xD1B54A32D192ED03ULL);
    return Rng(splitmix64(s + 0x9E3779B97F4A7C15ULL * (idx + 1)));
  }

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Index drawn from an (unnormalized is not allowed) probability vector.
  int categorical(const double* p, int n) {
    double x = uniform();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += p[i];
      if (x < acc) return i;
    }
    // Guard against rounding: return the last index with positive mass.
    for (int i = n - 1; i >= 0; --i)
      if (p[i] > 0.0) return i;
    return n - 1;
  }
  int categorical(const Vec& p) { return categorical(p.data(), static_cast<int>(p.size())); }

 private:
  uint64_t state_;
};

}  // namespace confope
