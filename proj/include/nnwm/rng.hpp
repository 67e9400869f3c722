#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace nnwm {

// Deterministic random source. Every draw is fully specified on top of the
// mt19937_64 bit stream (no std::*_distribution, whose output differs across
// standard libraries). Watermark keys are regenerated from a stored seed, so
// the exact draw sequence is part of the key format:
//   uniform_index(n): rejection-sampled u64 modulo n
//   uniform01():      (u64 >> 11) * 2^-53
//   normal():         Box-Muller on two uniform01() draws, sine value cached
//   shuffle():        Fisher-Yates from the back using uniform_index
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Unbiased uniform draw from [0, n).
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t threshold = (-bound) % bound;
    std::uint64_t r = next_u64();
    while (r < threshold) r = next_u64();
    return static_cast<std::size_t>(r % bound);
  }

  // Uniform in [0, 1) with full 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Independent sub-seed for a named stream (splitmix64 finalizer). Used to
// derive per-purpose seeds (init, shuffle, data splits) from one global seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace nnwm
