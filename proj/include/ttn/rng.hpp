#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace ttn {

/// Seeded pseudo-random source. All draws are derived from raw 64-bit
/// engine output so results do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Requires n > 0.
  std::size_t below(std::size_t n);

  double normal();
  double gamma(double shape);
  std::vector<double> dirichlet(std::span<const double> concentration);

  /// Index drawn proportionally to the (unnormalized, nonnegative) weights.
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

/// Seed for a named pipeline stage, derived from the global seed.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage);

/// Seed for the i-th independent sub-task of a stage (documents, sweep points).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace ttn
