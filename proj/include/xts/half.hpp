#pragma once

#include <cstdint>

namespace xts {

// Software binary16. Values are carried around as doubles that happen to be
// exactly representable in half precision; the uint16 payload is only the
// interchange form.

/// Round-to-nearest-even conversion. Throws HalfRangeError for NaN, Inf and
/// values whose rounded magnitude exceeds 65504. Subnormal results and
/// underflow to zero are silent.
std::uint16_t double_to_half_bits(double x);

/// Exact widening of a binary16 payload (every half is a double).
double half_bits_to_double(std::uint16_t bits);

/// double -> binary16 -> double round trip.
double round_to_half(double x);

inline constexpr double kHalfMax = 65504.0;

}  // namespace xts
