#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace sslab {

/// Seeded random source with platform-independent draws.
///
/// std::mt19937_64's output sequence is fixed by the standard, but the
/// std:: distributions are not, so every derived draw is computed here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; used to expand one seed into many.
std::uint64_t mix64(std::uint64_t x);

/// Per-stage seed: mix of the parent seed and a stable hash of the tag.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag);

/// Per-item seed: mix of the parent seed and an index.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

}  // namespace sslab
