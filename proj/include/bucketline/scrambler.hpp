#pragma once

#include <cstdint>
#include <span>

#include "bucketline/bits.hpp"

namespace bucketline {

inline constexpr std::uint16_t kScramblerAllOnes = 0x3FF;

// Additive scrambler for S(x) = 1 + x^3 + x^10. Keystream recurrence
// k[i] = k[i-3] ^ k[i-10]; the seed supplies k[-1] (bit 0) .. k[-10] (bit 9).
class Lfsr {
 public:
  explicit Lfsr(std::uint16_t seed = kScramblerAllOnes);

  std::uint8_t next();

 private:
  std::uint16_t state_;
};

Bits keystream(std::uint16_t seed, std::size_t count);

// Throws ZeroSeed for a zero seed.
Bits scramble(std::span<const std::uint8_t> bits, std::uint16_t seed = kScramblerAllOnes);

}  // namespace bucketline
