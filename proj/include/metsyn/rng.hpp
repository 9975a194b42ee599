#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace metsyn {

/// SplitMix64 stream (Steele, Lea & Flood 2014).
///
/// Every distribution below is defined in terms of `next_u64` only, so a
/// given seed produces the same draws on every platform and compiler:
///   uniform()      (next_u64() >> 11) * 2^-53, in [0, 1)
///   uniform(a, b)  a + (b - a) * uniform()
///   below(n)       Lemire multiply-shift with rejection, in [0, n)
///   normal()       Box-Muller cosine branch, two uniforms per draw
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
      if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  double normal() noexcept {
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Independent child stream keyed by `keys`; the parent is not advanced.
  Rng split(std::initializer_list<std::uint64_t> keys) const noexcept {
    return Rng(derive(state_, keys));
  }

  /// Seed of the stream for (seed, k0, k1, ...), e.g. (master, donor, host, rep).
  static std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
    std::uint64_t h = mix(seed ^ 0x6A09E667F3BCC909ULL);
    for (auto k : keys) h = mix(h ^ mix(k + 0x9E3779B97F4A7C15ULL));
    return h;
  }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

private:
  std::uint64_t state_;
};

} // namespace metsyn
