#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <variant>

#include "bucketline/bits.hpp"
#include "bucketline/scrambler.hpp"

namespace bucketline {

/// Network address carried in each of the four MPDU address fields.
/// Packs as one 4-octet big-endian word: NetID in the top octet, NodeID below.
struct Address {
  std::uint8_t netId = 0;
  std::uint32_t nodeId = 0;  // 24 bits

  static constexpr std::uint32_t kCoordinatorNode = 0;
  static constexpr std::uint32_t kUnassignedNode = 0xFFFFFF;

  static constexpr Address coordinator(std::uint8_t net = 1) { return {net, kCoordinatorNode}; }
  static constexpr Address unassigned() { return {0xFF, kUnassignedNode}; }

  bool isCoordinator() const { return nodeId == kCoordinatorNode; }
  bool isUnassigned() const { return nodeId == kUnassignedNode; }

  std::uint32_t pack() const { return (std::uint32_t{netId} << 24) | (nodeId & 0xFFFFFF); }
  static Address unpack(std::uint32_t word) {
    return {static_cast<std::uint8_t>(word >> 24), word & 0xFFFFFF};
  }

  friend bool operator==(const Address&, const Address&) = default;
  friend auto operator<=>(const Address&, const Address&) = default;
};

enum class BucketType : std::uint8_t { MeasurementData = 0, Beacon = 1, Management = 2, Acknowledgment = 3 };

std::string_view to_string(BucketType type);

/// Management command/status codes, numbered in the order they are listed
/// in the MAC command table (see docs/FORMATS.md).
enum class Command : std::uint8_t {
  Acknowledgment = 0,
  AssociationStart,
  AssociationRequest,
  AssociationEnd,
  AutomaticRepeatQuery,
  CoordinatorAliveAndReady,
  DataAvailable,
  Dissociation,
  GlobalDataRequest,
  GlobalStatusRequest,
  HelloNeighbor,
  NodeDataRequest,
  NodeStatusRequest,
  Malfunction,
  NodeActive,
  NodeFailureDetected,
  NodeAddressTableRequest,
  NeighborInactive,
  Orphan,
  Perfect,
  PriorityBucketAvailable,
  ReadyToRetransmit,
  RequestSensorId,
  RequestNodeId,
  RequestNetId,
  SetNodeIdNetId,
};
inline constexpr unsigned kCommandCount = 26;

std::string_view to_string(Command cmd);

struct MeasurementData {
  std::uint32_t pressurePa = 0;     // 27 bits
  std::uint16_t temperatureK = 0;   // 10 bits
  std::uint8_t flags = 0;           // 3 bits
  friend bool operator==(const MeasurementData&, const MeasurementData&) = default;
};

enum class BeaconKind : std::uint8_t { Central = 0, Discover = 1 };

struct Beacon {
  BeaconKind kind = BeaconKind::Central;
  friend bool operator==(const Beacon&, const Beacon&) = default;
};

// The payload occupies the rest of the fixed-size MSDU field; parse returns it
// zero-padded to that width.
struct Management {
  Command command = Command::Acknowledgment;
  Octets payload;
  friend bool operator==(const Management&, const Management&) = default;
};

struct Acknowledgment {
  friend bool operator==(const Acknowledgment&, const Acknowledgment&) = default;
};

using Msdu = std::variant<MeasurementData, Beacon, Management, Acknowledgment>;

BucketType bucket_type(const Msdu& msdu);

struct Mpdu {
  std::uint16_t futureUse = 0;  // 14 bits, sent as zero, ignored on parse
  std::uint32_t timestampMs = 0;
  Address originalSource;
  Address finalDestination;
  Address currentDestination;
  Address currentSource;
  Msdu msdu = Acknowledgment{};

  BucketType type() const { return bucket_type(msdu); }
  friend bool operator==(const Mpdu&, const Mpdu&) = default;
};

/// Transform applied to the serialized MPDU after the ICV is computed.
class Cipher {
 public:
  virtual ~Cipher() = default;
  virtual Octets encrypt(std::span<const std::uint8_t> plain) const = 0;
  virtual Octets decrypt(std::span<const std::uint8_t> cipher) const = 0;
};

class IdentityCipher final : public Cipher {
 public:
  Octets encrypt(std::span<const std::uint8_t> plain) const override { return {plain.begin(), plain.end()}; }
  Octets decrypt(std::span<const std::uint8_t> c) const override { return {c.begin(), c.end()}; }
};

struct CodeRate {
  unsigned k = 1;
  unsigned m = 2;
  double value() const { return static_cast<double>(k) / m; }
  friend bool operator==(const CodeRate&, const CodeRate&) = default;
};

struct CodecConfig {
  static constexpr std::size_t kHeaderLen = 2;
  static constexpr std::size_t kTimestampLen = 4;
  static constexpr std::size_t kAddressesLen = 16;
  static constexpr std::size_t kIcvLen = 4;
  static constexpr std::size_t kMinMpduLen = 27;
  static constexpr std::size_t kMaxMpduLen = 42;

  std::size_t mpduLen = 31;
  std::uint16_t scramblerSeed = kScramblerAllOnes;
  CodeRate codeRate{1, 2};
  std::size_t interleaverRows = 16;
  std::shared_ptr<const Cipher> cipher = std::make_shared<IdentityCipher>();

  std::size_t msduLen() const { return mpduLen - kHeaderLen - kTimestampLen - kAddressesLen - kIcvLen; }
  void validate() const;
};

/// Octet-exact serialization; the last four octets are the CRC-32 ICV.
/// The configured cipher is applied to the whole frame after the ICV.
Octets serialize_mpdu(const Mpdu& m, const CodecConfig& cfg);

/// Inverse of serialize_mpdu. Throws BadLength, IcvMismatch or UnknownType.
Mpdu parse_mpdu(std::span<const std::uint8_t> raw, const CodecConfig& cfg);

/// True when the trailing ICV matches (after deciphering); no field parsing.
bool icv_ok(std::span<const std::uint8_t> raw, const CodecConfig& cfg);

/// Bitwise two-of-three vote. Throws LengthMismatch.
Octets majority_vote(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                     std::span<const std::uint8_t> c);

}  // namespace bucketline
