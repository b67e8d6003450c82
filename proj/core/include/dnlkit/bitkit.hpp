#pragma once

#include <bit>
#include <cstdint>

#include "dnlkit/error.hpp"

// Bit-level primitives over IEEE-754 single-precision words. Everything here
// operates on the raw 32-bit word, never through floating-point negation, so
// NaN payloads and signed zeros behave identically everywhere.
namespace dnlkit::bitkit {

inline constexpr int kSignBitPos = 31;        // bit 0 = mantissa LSB
inline constexpr int kExponentLsbPos = 23;
inline constexpr std::uint32_t kSignMask = 0x8000'0000u;
inline constexpr std::uint32_t kExponentMask = 0x7F80'0000u;
inline constexpr std::uint32_t kMantissaMask = 0x007F'FFFFu;

// Raw little-endian word of one FP32 value. Round-trips losslessly,
// including NaN payloads, infinities and signed zero.
struct FloatWord {
  std::uint32_t bits = 0;

  static FloatWord from_float(float v) { return {std::bit_cast<std::uint32_t>(v)}; }
  float to_float() const { return std::bit_cast<float>(bits); }

  friend bool operator==(FloatWord, FloatWord) = default;
};

struct FloatParts {
  std::uint32_t sign;      // 0 or 1
  std::uint32_t exponent;  // 0..255
  std::uint32_t mantissa;  // 0..2^23-1
};

constexpr FloatParts decompose(FloatWord w) {
  return {w.bits >> kSignBitPos, (w.bits & kExponentMask) >> kExponentLsbPos,
          w.bits & kMantissaMask};
}

constexpr FloatWord reassemble(const FloatParts& p) {
  return {(p.sign << kSignBitPos) | (p.exponent << kExponentLsbPos) |
          (p.mantissa & kMantissaMask)};
}

// Flips exactly one bit; an involution. pos in [0, 31].
inline FloatWord flip_bit(FloatWord w, int pos) {
  if (pos < 0 || pos > 31) {
    throw_precondition("flip_bit: bit position " + std::to_string(pos) +
                       " out of range [0,31]");
  }
  return {w.bits ^ (std::uint32_t{1} << pos)};
}

// Sign flip as a raw bit operation: magnitude (and NaN payload) preserved
// bit-exactly.
inline float flip_sign(float v) {
  return FloatWord{FloatWord::from_float(v).bits ^ kSignMask}.to_float();
}

inline std::uint32_t sign_of(FloatWord w) { return w.bits >> kSignBitPos; }

}  // namespace dnlkit::bitkit
