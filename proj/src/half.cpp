#include "stripnet/half.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace stripnet {

std::uint16_t double_to_half_bits(double x) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  const auto sign = static_cast<std::uint16_t>((bits >> 48) & 0x8000u);
  const int exp = static_cast<int>((bits >> 52) & 0x7FF);
  const std::uint64_t mant = bits & 0xFFFFFFFFFFFFFull;

  if (exp == 0x7FF) return static_cast<std::uint16_t>(sign | 0x7C00u | (mant ? 0x200u : 0u));

  // Unbiased exponent; doubles subnormal in half are handled by the shift below.
  const int e = exp - 1023;
  if (e > 15) return static_cast<std::uint16_t>(sign | 0x7C00u);
  if (exp == 0 || e < -25) return sign;  // rounds to zero (|x| < 2^-25)

  // Full 53-bit significand with implicit one.
  const std::uint64_t sig = mant | (std::uint64_t{1} << 52);
  int half_exp = e + 15;
  int shift;  // bits to drop from sig
  if (half_exp >= 1) {
    shift = 52 - 10;
  } else {
    // Subnormal half: value = m * 2^-24.
    shift = 52 - 10 + (1 - half_exp);
    half_exp = 0;
  }
  std::uint64_t kept = sig >> shift;
  const std::uint64_t rem = sig & ((std::uint64_t{1} << shift) - 1);
  const std::uint64_t halfway = std::uint64_t{1} << (shift - 1);
  if (rem > halfway || (rem == halfway && (kept & 1u))) ++kept;

  std::uint32_t out;
  if (half_exp == 0) {
    // kept may have carried into the normal range, which the encoding absorbs.
    out = static_cast<std::uint32_t>(kept);
  } else {
    if (kept == (std::uint64_t{1} << 11)) {
      kept >>= 1;
      ++half_exp;
    }
    if (half_exp >= 31) return static_cast<std::uint16_t>(sign | 0x7C00u);
    out = (static_cast<std::uint32_t>(half_exp) << 10) | static_cast<std::uint32_t>(kept & 0x3FFu);
  }
  return static_cast<std::uint16_t>(sign | out);
}

double half_bits_to_double(std::uint16_t bits) {
  const double sign = (bits & 0x8000u) ? -1.0 : 1.0;
  const int exp = (bits >> 10) & 0x1F;
  const int mant = bits & 0x3FF;
  if (exp == 0) return sign * std::ldexp(static_cast<double>(mant), -24);
  if (exp == 31) return mant ? std::numeric_limits<double>::quiet_NaN() : sign * HUGE_VAL;
  return sign * std::ldexp(static_cast<double>(mant | 0x400), exp - 25);
}

}  // namespace stripnet
