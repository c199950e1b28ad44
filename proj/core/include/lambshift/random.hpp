#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lambshift {

/// Identifier recorded in run metadata so a run can be reproduced bit for bit.
inline constexpr std::string_view kRngAlgorithm =
    "mt19937_64; child_seed=splitmix64(master+(index+1)*0x9E3779B97F4A7C15); "
    "uniform=(u64>>11)*2^-53; normal=Box-Muller";

/// SplitMix64 finalizer. A bijection on 64-bit integers.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for configuration `index` of a run seeded with `master_seed`.
/// Distinct indices always give distinct seeds.
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) noexcept;

/// Seedable generator whose output is fully specified (no reliance on the
/// implementation-defined std:: distributions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal deviate.
  double normal();

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace lambshift
