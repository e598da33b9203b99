#pragma once

#include <complex>
#include <span>
#include <vector>

#include "bucketline/bits.hpp"

namespace bucketline {

using Complex = std::complex<double>;
using Samples = std::vector<Complex>;

// Square Gray-coded QAM normalized to unit mean energy, plus BPSK for M = 2.
// For square M the first half of each n-bit group selects the in-phase level
// and the second half the quadrature level; within an axis, Gray index g maps
// to level 2k + 1 - sqrt(M) where k is the Gray-decoded value of g.
// BPSK maps bit 0 to +1 and bit 1 to -1.
bool qam_order_supported(unsigned M);
unsigned qam_bits_per_symbol(unsigned M);

// Mean square of the unnormalized grid, 2(M-1)/3 (1 for BPSK).
double qam_average_energy(unsigned M);

// Half the minimum distance between normalized constellation points.
double qam_half_min_distance(unsigned M);

// Throws UnsupportedOrder, or BadLength when |bits| is not a multiple of n.
Samples qam_map(std::span<const std::uint8_t> bits, unsigned M);

// Nearest-point hard decision. A point equidistant from several constellation
// points resolves to the one with the lowest Gray index.
Bits qam_demap(std::span<const Complex> points, unsigned M);

// Nearest constellation point for each input (same tie rule as qam_demap).
Samples qam_slice(std::span<const Complex> points, unsigned M);

}  // namespace bucketline
