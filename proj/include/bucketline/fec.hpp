#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "bucketline/bits.hpp"

namespace bucketline {

struct CodecConfig;

// Rate-1/2, K=7 convolutional code (generators 133, 171 octal) followed by a
// row-write / column-read block interleaver. The encoder starts in state 0 and
// appends no tail, so |out| == 2|in|; the decoder picks the best final state.
namespace conv {
inline constexpr unsigned kConstraintLength = 7;
inline constexpr unsigned kStates = 1u << (kConstraintLength - 1);
inline constexpr unsigned kG0 = 0133;
inline constexpr unsigned kG1 = 0171;

Bits encode(std::span<const std::uint8_t> bits);
Bits viterbi_decode(std::span<const std::uint8_t> coded);
}  // namespace conv

// Permutation for `rows` x ceil(len/rows); positions past len are skipped.
Bits interleave(std::span<const std::uint8_t> bits, std::size_t rows);
Bits deinterleave(std::span<const std::uint8_t> bits, std::size_t rows);

// Throws UnsupportedRate unless cfg.codeRate is 1/2.
Bits fec_encode(std::span<const std::uint8_t> bits, const CodecConfig& cfg);

// Never fails for even-length input; integrity is checked by the CRC.
Bits fec_decode(std::span<const std::uint8_t> coded, const CodecConfig& cfg);

}  // namespace bucketline
