#include "bucketline/scrambler.hpp"

#include "bucketline/error.hpp"

namespace bucketline {

// state_ bit j holds k[i-1-j] for the next output index i.
Lfsr::Lfsr(std::uint16_t seed) : state_(seed & 0x3FF) {
  if (state_ == 0) throw Error(ErrorCode::ZeroSeed, "scrambler seed must be nonzero");
}

std::uint8_t Lfsr::next() {
  const std::uint8_t out = ((state_ >> 2) ^ (state_ >> 9)) & 1u;
  state_ = static_cast<std::uint16_t>(((state_ << 1) | out) & 0x3FF);
  return out;
}

Bits keystream(std::uint16_t seed, std::size_t count) {
  Lfsr lfsr(seed);
  Bits out(count);
  for (auto& b : out) b = lfsr.next();
  return out;
}

Bits scramble(std::span<const std::uint8_t> bits, std::uint16_t seed) {
  Lfsr lfsr(seed);
  Bits out(bits.begin(), bits.end());
  for (auto& b : out) b = static_cast<std::uint8_t>((b ^ lfsr.next()) & 1u);
  return out;
}

}  // namespace bucketline
