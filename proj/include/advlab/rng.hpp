#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace advlab::rng {

// SplitMix64 finalizer. Full-avalanche 64-bit mix; the basis for all
// counter-derived streams below.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// Derive a child key from a seed and one or more stream components.
// Pure function of its arguments; order-sensitive, so (seed, a, b) and
// (seed, b, a) are independent streams.
constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
  return mix64(seed + kGolden * (salt + 1));
}

template <typename... Rest>
constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t salt, Rest... rest) {
  return derive(derive(seed, salt), rest...);
}

// Counter-based stream: value i is a pure function of (key, i). No shared
// state, so any number of workers may read any index concurrently and the
// result never depends on evaluation order.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  std::uint64_t bits(std::uint64_t i) const { return mix64(key_ + kGolden * (i + 1)); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform(std::uint64_t i) const { return static_cast<double>(bits(i) >> 11) * 0x1.0p-53; }

  double uniform(std::uint64_t i, double lo, double hi) const {
    return lo + (hi - lo) * uniform(i);
  }

  // Uniform integer in [0, n). Multiply-shift; bias is negligible for the
  // small n used here.
  std::uint64_t below(std::uint64_t i, std::uint64_t n) const {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits(i)) * n) >> 64);
  }

  // Standard normal via Box-Muller on the index pair (2i, 2i+1).
  double normal(std::uint64_t i) const {
    const double u1 = static_cast<double>((bits(2 * i) >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
};

// Cursor over a Stream for call sites that want gen-style sequential draws
// (initialization, shuffles). Still fully determined by the key.
class Sequence {
 public:
  explicit Sequence(std::uint64_t key) : stream_(key) {}

  std::uint64_t bits() { return stream_.bits(next_++); }
  double uniform() { return stream_.uniform(next_++); }
  double uniform(double lo, double hi) { return stream_.uniform(next_++, lo, hi); }
  std::uint64_t below(std::uint64_t n) { return stream_.below(next_++, n); }
  double normal() { return stream_.normal(next_++); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  Stream stream_;
  std::uint64_t next_ = 0;
};

// Uniform permutation of {0..n-1} drawn from the given key.
inline std::vector<int> permutation(std::uint64_t key, int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  Sequence seq(key);
  seq.shuffle(p);
  return p;
}

}  // namespace advlab::rng
