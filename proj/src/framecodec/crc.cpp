#include "bucketline/crc.hpp"

namespace bucketline {

Bits crc(std::span<const std::uint8_t> bits, const CrcPolynomial& poly) {
  const unsigned n = poly.degree;
  const std::uint64_t top = std::uint64_t{1} << (n - 1);
  const std::uint64_t mask = (n == 64) ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1);
  std::uint64_t reg = 0;
  // Shifting each message bit through the register is equivalent to dividing
  // M(x) * x^n by G(x).
  for (std::uint8_t b : bits) {
    const bool feedback = ((reg & top) != 0) != (b != 0);
    reg = (reg << 1) & mask;
    if (feedback) reg ^= poly.taps;
  }
  Bits out(n);
  for (unsigned i = 0; i < n; ++i) out[i] = (reg >> (n - 1 - i)) & 1u;
  return out;
}

namespace {

struct Crc32Table {
  std::uint32_t entries[256];
  constexpr Crc32Table() : entries{} {
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t r = i << 24;
      for (int k = 0; k < 8; ++k) r = (r & 0x80000000u) ? (r << 1) ^ crc_polys::kCrc32.taps : (r << 1);
      entries[i] = r;
    }
  }
};

constexpr Crc32Table kTable;

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> octets) {
  std::uint32_t reg = 0;
  for (std::uint8_t o : octets) reg = (reg << 8) ^ kTable.entries[((reg >> 24) ^ o) & 0xFF];
  return reg;
}

}  // namespace bucketline
