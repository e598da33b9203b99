#include "bucketline/bits.hpp"

#include "bucketline/error.hpp"

namespace bucketline {

Bits to_bits(std::span<const std::uint8_t> octets) {
  Bits out;
  out.reserve(octets.size() * 8);
  for (std::uint8_t o : octets) {
    for (int b = 7; b >= 0; --b) out.push_back((o >> b) & 1u);
  }
  return out;
}

Octets to_octets(std::span<const std::uint8_t> bits) {
  if (bits.size() % 8 != 0) {
    throw Error(ErrorCode::BadLength, "bit count " + std::to_string(bits.size()) + " is not a multiple of 8");
  }
  Octets out(bits.size() / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    out[i / 8] = static_cast<std::uint8_t>(out[i / 8] | ((bits[i] & 1u) << (7 - i % 8)));
  }
  return out;
}

std::size_t hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  std::size_t n = std::min(a.size(), b.size());
  std::size_t d = (a.size() > b.size() ? a.size() - b.size() : b.size() - a.size());
  for (std::size_t i = 0; i < n; ++i) d += (a[i] != b[i]);
  return d;
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OversizeMsdu: return "OversizeMsdu";
    case ErrorCode::IcvMismatch: return "IcvMismatch";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::UnknownType: return "UnknownType";
    case ErrorCode::ZeroSeed: return "ZeroSeed";
    case ErrorCode::UnsupportedRate: return "UnsupportedRate";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UnsupportedOrder: return "UnsupportedOrder";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::DemodFailed: return "DemodFailed";
    case ErrorCode::BadShape: return "BadShape";
    case ErrorCode::BadOrder: return "BadOrder";
    case ErrorCode::AssociationStalled: return "AssociationStalled";
    case ErrorCode::CycleTimeout: return "CycleTimeout";
    case ErrorCode::OrphanUnreachable: return "OrphanUnreachable";
    case ErrorCode::UnknownTarget: return "UnknownTarget";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace bucketline
