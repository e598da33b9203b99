#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

#include "bucketline/bits.hpp"

namespace bucketline {

// Generator polynomial G(x) of degree n. `taps` holds the coefficients of
// x^0 .. x^(n-1); the x^n term is implicit.
struct CrcPolynomial {
  std::string_view name;
  unsigned degree;
  std::uint32_t taps;

  // Full coefficient vector including x^n, bit i = coefficient of x^i.
  std::uint64_t full() const { return (std::uint64_t{1} << degree) | taps; }
};

namespace crc_polys {
inline constexpr CrcPolynomial kCrc1{"CRC-1", 1, 0x1};                 // 1 + x
inline constexpr CrcPolynomial kCrc8General{"CRC-8 general", 8, 0xD5};  // 1+x^2+x^4+x^6+x^7+x^8
inline constexpr CrcPolynomial kCrc8Atm{"CRC-8 ATM", 8, 0x07};          // 1+x+x^2+x^8
inline constexpr CrcPolynomial kCrc16{"CRC-16", 16, 0x1021};            // 1+x^5+x^12+x^16
inline constexpr CrcPolynomial kCrc32{"CRC-32", 32, 0x04C11DB7};
inline constexpr std::array<CrcPolynomial, 5> kAll{kCrc1, kCrc8General, kCrc8Atm, kCrc16, kCrc32};
}  // namespace crc_polys

// Remainder of M(x) * x^n divided by G(x) over GF(2). Zero initial register,
// MSB first, no reflection, no final XOR. Returns n bits, MSB first.
Bits crc(std::span<const std::uint8_t> bits, const CrcPolynomial& poly);

// Same convention, specialised for CRC-32 over whole octets (table driven).
std::uint32_t crc32(std::span<const std::uint8_t> octets);

}  // namespace bucketline
