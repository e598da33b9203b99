#include "bucketline/mpdu.hpp"

#include <string>

#include "bucketline/crc.hpp"
#include "bucketline/error.hpp"

namespace bucketline {

std::string_view to_string(BucketType type) {
  switch (type) {
    case BucketType::MeasurementData: return "MeasurementData";
    case BucketType::Beacon: return "Beacon";
    case BucketType::Management: return "Management";
    case BucketType::Acknowledgment: return "Acknowledgment";
  }
  return "?";
}

std::string_view to_string(Command cmd) {
  static constexpr std::string_view kNames[kCommandCount] = {
      "acknowledgment",
      "association start",
      "association request",
      "association end",
      "automatic repeat query",
      "coordinator alive and ready",
      "data available",
      "dissociation",
      "global data request",
      "global status request",
      "hello neighbor",
      "node data request",
      "node status request",
      "malfunction",
      "node active",
      "node failure detected",
      "node address table request",
      "neighbor inactive",
      "orphan",
      "perfect",
      "priority bucket available",
      "ready to retransmit",
      "request sensorID",
      "request NodeID",
      "request NetID",
      "set NodeID/NetID",
  };
  const auto i = static_cast<unsigned>(cmd);
  return i < kCommandCount ? kNames[i] : std::string_view{"?"};
}

BucketType bucket_type(const Msdu& msdu) {
  return static_cast<BucketType>(msdu.index());
}

void CodecConfig::validate() const {
  if (mpduLen < kMinMpduLen || mpduLen > kMaxMpduLen) {
    throw Error(ErrorCode::BadLength, "mpduLen " + std::to_string(mpduLen) + " outside [27, 42]");
  }
  if ((scramblerSeed & 0x3FF) == 0) throw Error(ErrorCode::ZeroSeed, "scrambler seed must be nonzero");
  if (!cipher) throw Error(ErrorCode::ConfigError, "cipher must be set");
}

namespace {

void put_u32(Octets& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  return (std::uint32_t{in[at]} << 24) | (std::uint32_t{in[at + 1]} << 16) |
         (std::uint32_t{in[at + 2]} << 8) | std::uint32_t{in[at + 3]};
}

Octets pack_msdu(const Msdu& msdu, std::size_t width) {
  Octets field(width, 0);
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, MeasurementData>) {
          if (width < 5) throw Error(ErrorCode::OversizeMsdu, "measurement data needs 5 octets");
          if (v.pressurePa >= (1u << 27)) throw Error(ErrorCode::OversizeMsdu, "pressure exceeds 27 bits");
          if (v.temperatureK >= (1u << 10)) throw Error(ErrorCode::OversizeMsdu, "temperature exceeds 10 bits");
          if (v.flags >= 8) throw Error(ErrorCode::OversizeMsdu, "flags exceed 3 bits");
          const std::uint64_t word = (std::uint64_t{v.pressurePa} << 13) |
                                     (std::uint64_t{v.temperatureK} << 3) | v.flags;
          for (int i = 0; i < 5; ++i) field[i] = static_cast<std::uint8_t>(word >> (8 * (4 - i)));
        } else if constexpr (std::is_same_v<T, Beacon>) {
          field[0] = static_cast<std::uint8_t>(v.kind);
        } else if constexpr (std::is_same_v<T, Management>) {
          if (1 + v.payload.size() > width) {
            throw Error(ErrorCode::OversizeMsdu, "management payload of " + std::to_string(v.payload.size()) +
                                                     " octets exceeds the " + std::to_string(width - 1) +
                                                     "-octet budget");
          }
          field[0] = static_cast<std::uint8_t>(v.command);
          std::copy(v.payload.begin(), v.payload.end(), field.begin() + 1);
        }
      },
      msdu);
  return field;
}

}  // namespace

Octets serialize_mpdu(const Mpdu& m, const CodecConfig& cfg) {
  cfg.validate();
  Octets out;
  out.reserve(cfg.mpduLen);
  const std::uint16_t header =
      static_cast<std::uint16_t>((static_cast<unsigned>(m.type()) << 14) | (m.futureUse & 0x3FFF));
  out.push_back(static_cast<std::uint8_t>(header >> 8));
  out.push_back(static_cast<std::uint8_t>(header));
  put_u32(out, m.timestampMs);
  put_u32(out, m.originalSource.pack());
  put_u32(out, m.finalDestination.pack());
  put_u32(out, m.currentDestination.pack());
  put_u32(out, m.currentSource.pack());
  Octets field = pack_msdu(m.msdu, cfg.msduLen());
  out.insert(out.end(), field.begin(), field.end());
  put_u32(out, crc32(out));
  return cfg.cipher->encrypt(out);
}

bool icv_ok(std::span<const std::uint8_t> raw, const CodecConfig& cfg) {
  if (raw.size() != cfg.mpduLen) return false;
  Octets plain = cfg.cipher->decrypt(raw);
  const std::size_t body = plain.size() - CodecConfig::kIcvLen;
  return crc32(std::span(plain).first(body)) == get_u32(plain, body);
}

Mpdu parse_mpdu(std::span<const std::uint8_t> raw, const CodecConfig& cfg) {
  cfg.validate();
  if (raw.size() != cfg.mpduLen) {
    throw Error(ErrorCode::BadLength,
                "got " + std::to_string(raw.size()) + " octets, expected " + std::to_string(cfg.mpduLen));
  }
  Octets plain = cfg.cipher->decrypt(raw);
  const std::size_t body = plain.size() - CodecConfig::kIcvLen;
  if (crc32(std::span(plain).first(body)) != get_u32(plain, body)) {
    throw Error(ErrorCode::IcvMismatch, "CRC-32 integrity check failed");
  }

  Mpdu m;
  const auto type = static_cast<BucketType>(plain[0] >> 6);
  // Future-use bits are not interpreted.
  m.futureUse = 0;
  m.timestampMs = get_u32(plain, 2);
  m.originalSource = Address::unpack(get_u32(plain, 6));
  m.finalDestination = Address::unpack(get_u32(plain, 10));
  m.currentDestination = Address::unpack(get_u32(plain, 14));
  m.currentSource = Address::unpack(get_u32(plain, 18));

  const std::size_t at = 22;
  const std::size_t width = cfg.msduLen();
  switch (type) {
    case BucketType::MeasurementData: {
      std::uint64_t word = 0;
      for (int i = 0; i < 5; ++i) word = (word << 8) | plain[at + i];
      m.msdu = MeasurementData{static_cast<std::uint32_t>(word >> 13),
                               static_cast<std::uint16_t>((word >> 3) & 0x3FF),
                               static_cast<std::uint8_t>(word & 0x7)};
      break;
    }
    case BucketType::Beacon: {
      if (plain[at] > 1) throw Error(ErrorCode::UnknownType, "beacon kind " + std::to_string(plain[at]));
      m.msdu = Beacon{static_cast<BeaconKind>(plain[at])};
      break;
    }
    case BucketType::Management: {
      if (plain[at] >= kCommandCount) {
        throw Error(ErrorCode::UnknownType, "management command code " + std::to_string(plain[at]));
      }
      Management mg;
      mg.command = static_cast<Command>(plain[at]);
      mg.payload.assign(plain.begin() + at + 1, plain.begin() + at + width);
      m.msdu = std::move(mg);
      break;
    }
    case BucketType::Acknowledgment:
      m.msdu = Acknowledgment{};
      break;
  }
  return m;
}

Octets majority_vote(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                     std::span<const std::uint8_t> c) {
  if (a.size() != b.size() || b.size() != c.size()) {
    throw Error(ErrorCode::LengthMismatch, "replicas differ in length");
  }
  Octets out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = static_cast<std::uint8_t>((a[i] & b[i]) | (a[i] & c[i]) | (b[i] & c[i]));
  }
  return out;
}

}  // namespace bucketline
