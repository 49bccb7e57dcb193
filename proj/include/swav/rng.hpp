#pragma once

// Counter-based random generator with label-derived stream keys. A stream is
// defined by (seed, chain of split labels); drawing never touches other
// streams, so worker layout cannot change the numbers a consumer sees.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace swav {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 output function
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::string_view label = "root")
      : key_(detail::mix64(seed ^ detail::fnv1a(label))) {}

  // Child stream for a named purpose. Distinct labels give distinct streams;
  // the parent's draw position is not consumed.
  Rng split(std::string_view label) const {
    return Rng(FromKey{}, detail::mix64(key_ ^ detail::fnv1a(label)));
  }

  Rng split(std::string_view label, std::uint64_t index) const {
    const std::uint64_t base = detail::mix64(key_ ^ detail::fnv1a(label));
    return Rng(FromKey{}, detail::mix64(base + index * detail::kGolden));
  }

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  // Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; consumes exactly two draws.
  double normal() {
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.empty()) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

  // State accessors for checkpointing.
  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  static Rng restore(std::uint64_t key, std::uint64_t counter) {
    Rng r(FromKey{}, key);
    r.counter_ = counter;
    return r;
  }

 private:
  struct FromKey {};
  Rng(FromKey, std::uint64_t key) : key_(key) {}

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace swav
