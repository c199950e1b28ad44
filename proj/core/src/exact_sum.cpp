#include "lambshift/exact_sum.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace lambshift {

void ExactSum::add(double x) {
  if (x == 0.0) return;
  if (!std::isfinite(x)) {
    non_finite_ = true;
    return;
  }
  const auto bits = std::bit_cast<std::uint64_t>(x);
  const bool negative = (bits >> 63) != 0;
  const int biased = static_cast<int>((bits >> 52) & 0x7FF);
  std::uint64_t mantissa = bits & ((std::uint64_t{1} << 52) - 1);
  int shift = 0;  // bit position of the mantissa LSB
  if (biased == 0) {
    shift = 0;
  } else {
    mantissa |= std::uint64_t{1} << 52;
    shift = biased - 1;
  }
  const int limb = shift / 64;
  const int offset = shift % 64;
  const std::uint64_t lo = mantissa << offset;
  const std::uint64_t hi = offset == 0 ? 0 : (mantissa >> (64 - offset));

  if (!negative) {
    std::uint64_t carry = 0;
    std::uint64_t parts[2] = {lo, hi};
    for (int i = limb; i < kLimbs; ++i) {
      const std::uint64_t add = (i - limb < 2) ? parts[i - limb] : 0;
      const std::uint64_t s1 = limbs_[i] + add;
      const std::uint64_t c1 = s1 < add ? 1 : 0;
      const std::uint64_t s2 = s1 + carry;
      const std::uint64_t c2 = s2 < carry ? 1 : 0;
      limbs_[i] = s2;
      carry = c1 + c2;
      if (carry == 0 && i - limb >= 1) break;
    }
  } else {
    std::uint64_t borrow = 0;
    std::uint64_t parts[2] = {lo, hi};
    for (int i = limb; i < kLimbs; ++i) {
      const std::uint64_t sub = (i - limb < 2) ? parts[i - limb] : 0;
      const std::uint64_t d1 = limbs_[i] - sub;
      const std::uint64_t b1 = limbs_[i] < sub ? 1 : 0;
      const std::uint64_t d2 = d1 - borrow;
      const std::uint64_t b2 = d1 < borrow ? 1 : 0;
      limbs_[i] = d2;
      borrow = b1 + b2;
      if (borrow == 0 && i - limb >= 1) break;
    }
  }
}

ExactSum& ExactSum::operator+=(const ExactSum& other) {
  std::uint64_t carry = 0;
  for (int i = 0; i < kLimbs; ++i) {
    const std::uint64_t s1 = limbs_[i] + other.limbs_[i];
    const std::uint64_t c1 = s1 < other.limbs_[i] ? 1 : 0;
    const std::uint64_t s2 = s1 + carry;
    const std::uint64_t c2 = s2 < carry ? 1 : 0;
    limbs_[i] = s2;
    carry = c1 + c2;
  }
  non_finite_ = non_finite_ || other.non_finite_;
  return *this;
}

double ExactSum::value() const {
  if (non_finite_) return std::numeric_limits<double>::quiet_NaN();
  std::array<std::uint64_t, kLimbs> mag = limbs_;
  const bool negative = (mag[kLimbs - 1] >> 63) != 0;
  if (negative) {
    std::uint64_t carry = 1;
    for (auto& w : mag) {
      w = ~w + carry;
      carry = (carry != 0 && w == 0) ? 1 : 0;
    }
  }
  int top = kLimbs - 1;
  while (top >= 0 && mag[top] == 0) --top;
  if (top < 0) return 0.0;
  // Top 128 bits rounded to 64 with a sticky bit for everything below, then a
  // single conversion; deterministic in the exact value.
  const int lead = std::countl_zero(mag[top]);
  const int base_bit = top * 64 - lead;  // exponent offset of the window's LSB
  auto bit_window = [&](int from_bit) {
    // 64 bits of the magnitude starting at absolute bit `from_bit`.
    if (from_bit < 0) {
      const int s = -from_bit;
      return s >= 64 ? std::uint64_t{0} : (mag[0] << s);
    }
    const int w = from_bit / 64;
    const int o = from_bit % 64;
    std::uint64_t v = mag[w] >> o;
    if (o != 0 && w + 1 < kLimbs) v |= mag[w + 1] << (64 - o);
    return v;
  };
  std::uint64_t head = bit_window(base_bit);
  bool sticky = false;
  for (int b = 0; b < base_bit && !sticky; b += 64) {
    const int w = b / 64;
    if (b + 64 <= base_bit) {
      sticky = mag[w] != 0;
    } else {
      const int keep = base_bit - b;
      sticky = (mag[w] & ((std::uint64_t{1} << keep) - 1)) != 0;
    }
  }
  if (sticky) head |= 1;  // 64-bit head has 11 spare bits below the double mantissa
  const double result = std::ldexp(static_cast<double>(head), base_bit - 1074);
  return negative ? -result : result;
}

std::string ExactSum::serialize() const {
  if (non_finite_) return "nan";
  int lo = 0;
  while (lo < kLimbs && limbs_[lo] == 0) ++lo;
  if (lo == kLimbs) return "0";
  int hi = kLimbs - 1;
  while (limbs_[hi] == 0) --hi;
  std::string out = std::to_string(lo) + ":";
  for (int i = lo; i <= hi; ++i) {
    if (i > lo) out += ',';
    out += fmt::format("{:x}", limbs_[i]);
  }
  return out;
}

ExactSum ExactSum::deserialize(const std::string& text) {
  ExactSum s;
  if (text == "0") return s;
  if (text == "nan") {
    s.non_finite_ = true;
    return s;
  }
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("malformed ExactSum: " + text);
  int idx = std::stoi(text.substr(0, colon));
  std::size_t pos = colon + 1;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto end = comma == std::string::npos ? text.size() : comma;
    if (idx < 0 || idx >= kLimbs) throw std::invalid_argument("ExactSum limb out of range");
    s.limbs_[idx++] = std::stoull(text.substr(pos, end - pos), nullptr, 16);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return s;
}

}  // namespace lambshift
