#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace tnd {

// Deterministic RNG used by the simulation harness. All draws are derived
// from xoshiro-style 64-bit output so that results are bit-reproducible
// across platforms and independent of thread scheduling: each Monte Carlo
// replicate gets its own stream keyed by (seed, replicate index).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  // Stream for replicate `rep` of a run seeded with `seed`.
  static Rng for_replicate(std::uint64_t seed, std::uint64_t rep) {
    std::uint64_t sm = seed;
    const std::uint64_t a = splitmix64(sm);
    std::uint64_t key = a ^ (0x9E3779B97F4A7C15ULL * (rep + 1));
    return Rng(key);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0,1) with 53 significant bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    // Box-Muller; one value per call keeps streams position-independent.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double truncated_normal(double mean, double sd, double lo, double hi) {
    for (;;) {
      const double x = mean + sd * normal();
      if (x >= lo && x <= hi) return x;
    }
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire rejection; unbiased.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto l = static_cast<std::uint64_t>(m);
    if (l < n) {
      const std::uint64_t t = -n % n;
      while (l < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        l = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Sample k indices without replacement from {0,...,n-1} (partial
  // Fisher-Yates); result order is the draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

}  // namespace tnd
