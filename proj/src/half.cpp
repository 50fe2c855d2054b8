#include "xts/half.hpp"

#include <bit>
#include <cmath>

#include "xts/errors.hpp"

namespace xts {

std::uint16_t double_to_half_bits(double x) {
  const std::uint64_t b = std::bit_cast<std::uint64_t>(x);
  const std::uint16_t sign = static_cast<std::uint16_t>((b >> 63) << 15);
  const std::uint64_t dexp = (b >> 52) & 0x7ff;
  const std::uint64_t dman = b & ((1ULL << 52) - 1);

  if (dexp == 0x7ff) throw HalfRangeError("double_to_half_bits: NaN or Inf input");
  if (dexp == 0) return sign;  // double subnormals sit far below 2^-25

  const int e = static_cast<int>(dexp) - 1023;
  if (e >= 16) throw HalfRangeError("double_to_half_bits: magnitude exceeds 65504");
  if (e <= -26) return sign;  // below half the smallest subnormal

  if (e >= -14) {
    // Normal half target: keep 10 mantissa bits, round the remaining 42.
    std::uint64_t r = dman >> 42;
    const std::uint64_t rem = dman & ((1ULL << 42) - 1);
    const std::uint64_t half_point = 1ULL << 41;
    if (rem > half_point || (rem == half_point && (r & 1))) ++r;
    int he = e;
    if (r == 1024) {
      r = 0;
      ++he;
    }
    if (he > 15) throw HalfRangeError("double_to_half_bits: magnitude exceeds 65504");
    return static_cast<std::uint16_t>(sign | ((he + 15) << 10) | r);
  }

  // Subnormal half target: round value / 2^-24 to the nearest integer.
  const std::uint64_t full = (1ULL << 52) | dman;
  const int shift = 28 - e;  // in [43, 53] for e in [-25, -15]
  std::uint64_t r = full >> shift;
  const std::uint64_t rem = full & ((1ULL << shift) - 1);
  const std::uint64_t half_point = 1ULL << (shift - 1);
  if (rem > half_point || (rem == half_point && (r & 1))) ++r;
  if (r == 1024) return static_cast<std::uint16_t>(sign | (1 << 10));  // 2^-14
  return static_cast<std::uint16_t>(sign | r);
}

double half_bits_to_double(std::uint16_t bits) {
  const int sign = (bits >> 15) & 1;
  const int e = (bits >> 10) & 0x1f;
  const int man = bits & 0x3ff;
  double v;
  if (e == 0)
    v = std::ldexp(static_cast<double>(man), -24);
  else if (e == 31)
    v = man == 0 ? HUGE_VAL : std::nan("");
  else
    v = std::ldexp(static_cast<double>(1024 + man), e - 25);
  return sign ? -v : v;
}

double round_to_half(double x) { return half_bits_to_double(double_to_half_bits(x)); }

}  // namespace xts
