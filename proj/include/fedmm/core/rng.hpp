#pragma once

// Counter-based random streams.
//
// Every draw in the simulator comes from a SplitMix64 stream: the state is a
// 64-bit counter advanced by the golden-ratio increment and each output is the
// SplitMix64 finalizer applied to the counter. Substreams are keyed by hashing
// (master seed, key...) with the same finalizer, so any (client, round,
// purpose) tuple maps to a fixed, platform-independent sequence. Normal and
// integer variates are derived here rather than through <random>
// distributions, whose algorithms are implementation-defined.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <utility>
#include <vector>

namespace fedmm {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Hash of a seed and a list of keys; used to derive independent substreams.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                           std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = splitmix64_mix(seed + 0x9e3779b97f4a7c15ULL);
  for (std::uint64_t k : keys) {
    h = splitmix64_mix(h ^ splitmix64_mix(k + 0x632be59bd9b4e019ULL));
  }
  return h;
}

/// Purpose tags for substream derivation.
enum class StreamPurpose : std::uint64_t {
  participation = 1,
  minibatch = 2,
  compression = 3,
  inner_oracle = 4,
  init = 5,
  data = 6,
  split = 7,
  repeat = 8,
};

class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed = 0) noexcept : counter_(seed) {}

  /// Substream keyed by (seed, keys...).
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
    return Rng(derive_seed(seed, keys));
  }

  /// Child stream derived from the current state without advancing it.
  Rng split(std::uint64_t key) const noexcept { return Rng(derive_seed(counter_, {key})); }

  constexpr std::uint64_t next_u64() noexcept {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(counter_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n); Lemire's multiply-shift with rejection.
  std::uint64_t uniform_index(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) noexcept { return p >= 1.0 || uniform() < p; }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Poisson variate; inversion for small means, normal approximation with
  /// continuity correction above 500.
  std::uint64_t poisson(double mean) noexcept {
    if (mean <= 0.0) return 0;
    if (mean > 500.0) {
      const double x = std::floor(mean + std::sqrt(mean) * normal() + 0.5);
      return x < 0.0 ? 0 : static_cast<std::uint64_t>(x);
    }
    const double u = uniform();
    double prob = std::exp(-mean);
    double cdf = prob;
    std::uint64_t k = 0;
    while (u > cdf && k < 100000) {
      ++k;
      prob *= mean / static_cast<double>(k);
      cdf += prob;
    }
    return k;
  }

  /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    if (k > n) k = n;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_index(n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::uint64_t counter_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fedmm
