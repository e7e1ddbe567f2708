#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string_view>
#include <utility>

namespace contramod {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_label(std::string_view label) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent stream key from a parent key and a label.
/// Stream splitting rule: child = mix64(parent ^ mix64(fnv1a(label) + i0) ...)
/// folded over every integer discriminator in order.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view label,
                                 std::initializer_list<std::int64_t> ids = {}) noexcept {
  std::uint64_t key = mix64(parent ^ mix64(hash_label(label)));
  for (std::int64_t id : ids) key = mix64(key ^ mix64(static_cast<std::uint64_t>(id)));
  return key;
}

/// Counter-based generator: output n is mix64(key + n * golden). The full
/// state is (key, counter), so any draw can be reproduced independently and
/// results do not depend on the platform's <random> distributions.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key = 0) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept { return next(); }
  result_type next() noexcept { return mix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % bound;
  }

  /// Standard normal via Box-Muller (the second value of each pair is kept).
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  CounterRng split(std::string_view label, std::initializer_list<std::int64_t> ids = {}) const noexcept {
    return CounterRng(derive_seed(key_, label, ids));
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates with the generator's own bounded draw (std::shuffle is not
/// specified bit-for-bit across standard libraries).
template <typename T>
void shuffle(std::span<T> values, CounterRng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace contramod
