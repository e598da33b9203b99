#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bucketline {

using Octets = std::vector<std::uint8_t>;

// One bit per element, values 0 or 1. Octets expand MSB first.
using Bits = std::vector<std::uint8_t>;

Bits to_bits(std::span<const std::uint8_t> octets);

// Length must be a multiple of 8.
Octets to_octets(std::span<const std::uint8_t> bits);

std::size_t hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

}  // namespace bucketline
