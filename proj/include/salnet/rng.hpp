#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace salnet {

// Seeded generator with explicit value mappings so sequences are identical
// across platforms (std::mt19937 output is pinned by the standard, the
// distribution adaptors are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : gen_(static_cast<std::uint32_t>(seed ^ (seed >> 32)) ^ 0x9e3779b9u) {}

  std::uint32_t next_u32() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return next_u32() * (1.0 / 4294967296.0); }

  float uniform(float lo, float hi) {
    return lo + (hi - lo) * static_cast<float>(uniform());
  }

  // Uniform index in [0, n). n must be >= 1.
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(next_u32() % n);
  }

  // Fisher-Yates, in place.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937 gen_;
};

}  // namespace salnet
