#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "dsvb/tensor.hpp"

namespace dsvb {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Deterministic random stream (xoshiro256** seeded via splitmix64).
/// All distributions are implemented in-house so that identical seeds give
/// bit-identical draw sequences on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& w : state_) w = detail::splitmix64(sm);
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

  /// Uniform draw in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  /// Uniform integer in [0, n).
  Index uniform_index(Index n) {
    return static_cast<Index>(next_u64() % static_cast<std::uint64_t>(n));
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<Index>(last - first);
    for (Index i = n - 1; i > 0; --i) {
      const Index j = uniform_index(i + 1);
      std::swap(first[i], first[j]);
    }
  }

  void fill_uniform(Array& a, double lo, double hi) {
    for (Index i = 0; i < a.size(); ++i) a(i) = uniform(lo, hi);
  }

  void fill_normal(Array& a) {
    for (Index i = 0; i < a.size(); ++i) a(i) = normal();
  }

  Tensor normal_tensor(Shape shape) {
    Tensor t = Tensor::uninitialized(std::move(shape));
    fill_normal(t.values());
    return t;
  }

  Tensor uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t = Tensor::uninitialized(std::move(shape));
    fill_uniform(t.values(), lo, hi);
    return t;
  }

  /// Derived stream keyed off the original seed and a label. Forking is
  /// independent of how many draws this stream has produced, so named
  /// sub-streams stay stable across code paths (identical parameter
  /// initialisation across model variants relies on this).
  Rng fork(std::string_view label) const {
    std::uint64_t mix = seed_ ^ detail::fnv1a64(label);
    return Rng(detail::splitmix64(mix));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t seed_;
  std::uint64_t state_[4];
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace dsvb
