#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace lambshift {

/// Exact sum of doubles held as a wide two's-complement fixed-point integer
/// whose least significant bit weighs 2^-1074 (the smallest subnormal).
/// Addition is exact, so the result is independent of summation order and
/// grouping; value() rounds once at the end.
class ExactSum {
 public:
  ExactSum() = default;

  void add(double x);
  ExactSum& operator+=(const ExactSum& other);
  ExactSum& operator+=(double x) {
    add(x);
    return *this;
  }

  double value() const;
  bool is_finite() const { return !non_finite_; }

  /// Compact text form used in checkpoints.
  std::string serialize() const;
  static ExactSum deserialize(const std::string& text);

  bool operator==(const ExactSum&) const = default;

 private:
  // 34 limbs: 2098 significant bits plus 78 bits of carry headroom.
  static constexpr int kLimbs = 34;
  std::array<std::uint64_t, kLimbs> limbs_{};
  bool non_finite_ = false;
};

}  // namespace lambshift
