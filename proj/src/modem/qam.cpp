#include "bucketline/qam.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "bucketline/error.hpp"

namespace bucketline {
namespace {

unsigned gray_decode(unsigned g) {
  unsigned k = 0;
  for (; g; g >>= 1) k ^= g;
  return k;
}

unsigned gray_encode(unsigned k) { return k ^ (k >> 1); }

void require_order(unsigned M) {
  if (!qam_order_supported(M)) throw Error(ErrorCode::UnsupportedOrder, "M=" + std::to_string(M));
}

unsigned side(unsigned M) { return 1u << (qam_bits_per_symbol(M) / 2); }

// Per-axis decision: returns the Gray index of the nearest level.
unsigned decide_axis(double x, unsigned L) {
  // Candidates are the two levels bracketing x; compare distances explicitly
  // so that exact midpoints follow the lower-Gray-index rule.
  double t = (x + L - 1) / 2.0;
  long lo = static_cast<long>(std::floor(t));
  if (lo < 0) return gray_encode(0);
  if (lo >= static_cast<long>(L) - 1) return gray_encode(L - 1);
  const unsigned k0 = static_cast<unsigned>(lo), k1 = k0 + 1;
  const double d0 = std::abs(x - (2.0 * k0 + 1 - L));
  const double d1 = std::abs(x - (2.0 * k1 + 1 - L));
  if (d0 < d1) return gray_encode(k0);
  if (d1 < d0) return gray_encode(k1);
  return std::min(gray_encode(k0), gray_encode(k1));
}

}  // namespace

bool qam_order_supported(unsigned M) {
  if (M < 2 || !std::has_single_bit(M)) return false;
  const unsigned n = static_cast<unsigned>(std::countr_zero(M));
  return M == 2 || (n % 2 == 0 && n <= 16);
}

unsigned qam_bits_per_symbol(unsigned M) {
  require_order(M);
  return static_cast<unsigned>(std::countr_zero(M));
}

double qam_average_energy(unsigned M) {
  require_order(M);
  return M == 2 ? 1.0 : 2.0 * (M - 1) / 3.0;
}

double qam_half_min_distance(unsigned M) { return 1.0 / std::sqrt(qam_average_energy(M)); }

Samples qam_map(std::span<const std::uint8_t> bits, unsigned M) {
  const unsigned n = qam_bits_per_symbol(M);
  if (bits.size() % n) throw Error(ErrorCode::BadLength, "bit count not a multiple of log2(M)");
  Samples out;
  out.reserve(bits.size() / n);
  if (M == 2) {
    for (auto b : bits) out.emplace_back(b ? -1.0 : 1.0, 0.0);
    return out;
  }
  const unsigned L = side(M), h = n / 2;
  const double scale = 1.0 / std::sqrt(qam_average_energy(M));
  for (std::size_t i = 0; i < bits.size(); i += n) {
    unsigned gi = 0, gq = 0;
    for (unsigned j = 0; j < h; ++j) gi = (gi << 1) | bits[i + j];
    for (unsigned j = 0; j < h; ++j) gq = (gq << 1) | bits[i + h + j];
    const double re = 2.0 * gray_decode(gi) + 1 - L;
    const double im = 2.0 * gray_decode(gq) + 1 - L;
    out.emplace_back(re * scale, im * scale);
  }
  return out;
}

Bits qam_demap(std::span<const Complex> points, unsigned M) {
  const unsigned n = qam_bits_per_symbol(M);
  Bits out;
  out.reserve(points.size() * n);
  if (M == 2) {
    for (const auto& p : points) out.push_back(p.real() < 0.0 ? 1 : 0);
    return out;
  }
  const unsigned L = side(M), h = n / 2;
  const double scale = std::sqrt(qam_average_energy(M));
  for (const auto& p : points) {
    const unsigned gi = decide_axis(p.real() * scale, L);
    const unsigned gq = decide_axis(p.imag() * scale, L);
    for (int j = static_cast<int>(h) - 1; j >= 0; --j) out.push_back((gi >> j) & 1u);
    for (int j = static_cast<int>(h) - 1; j >= 0; --j) out.push_back((gq >> j) & 1u);
  }
  return out;
}

Samples qam_slice(std::span<const Complex> points, unsigned M) {
  return qam_map(qam_demap(points, M), M);
}

}  // namespace bucketline
