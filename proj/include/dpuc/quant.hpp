#pragma once

// Fixed-point arithmetic shared by the reference executor and the machine
// model. Every tensor scale is a power of two, so a quantized value q of a
// tensor with exponent e represents q * 2^e. Changing exponents is a shift;
// right shifts round half away from zero. Results saturate to int8.

#include <algorithm>
#include <cstdint>
#include <cstdlib>

namespace dpuc::quant {

inline constexpr int32_t kInt8Min = -128;
inline constexpr int32_t kInt8Max = 127;

// value * 2^-shift, rounding half away from zero when shift > 0.
inline int64_t shift_round(int64_t value, int shift) {
  if (shift <= 0) return value * (int64_t{1} << -shift);
  const int64_t mag = std::llabs(value);
  const int64_t half = int64_t{1} << (shift - 1);
  const int64_t r = (mag + half) >> shift;
  return value < 0 ? -r : r;
}

inline int8_t saturate8(int64_t v) {
  return static_cast<int8_t>(std::clamp<int64_t>(v, kInt8Min, kInt8Max));
}

// Accumulator (exponent from_exp) to int8 at exponent to_exp.
inline int8_t requantize(int64_t acc, int from_exp, int to_exp, bool relu = false) {
  if (relu && acc < 0) acc = 0;
  return saturate8(shift_round(acc, to_exp - from_exp));
}

// Bias is brought to the accumulator exponent once, at full int32 width.
inline int32_t align_bias(int64_t bias, int bias_exp, int acc_exp) {
  const int64_t v = shift_round(bias, acc_exp - bias_exp);
  return static_cast<int32_t>(std::clamp<int64_t>(v, INT32_MIN, INT32_MAX));
}

// a * 2^ea + b * 2^eb requantized to eo.
inline int8_t add(int32_t a, int ea, int32_t b, int eb, int eo, bool relu = false) {
  const int m = std::min(ea, eb);
  const int64_t sum = shift_round(a, m - ea) + shift_round(b, m - eb);
  return requantize(sum, m, eo, relu);
}

}  // namespace dpuc::quant
