#pragma once

#include <cstdint>

namespace stripnet {

/// IEEE-754 binary16 encoding of x, rounded to nearest even.
/// Values beyond the half range encode as infinity; NaN stays NaN.
std::uint16_t double_to_half_bits(double x);

double half_bits_to_double(std::uint16_t bits);

inline bool half_is_finite(std::uint16_t bits) { return (bits & 0x7C00u) != 0x7C00u; }

}  // namespace stripnet
