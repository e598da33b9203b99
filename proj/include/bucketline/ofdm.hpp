#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "bucketline/mpdu.hpp"
#include "bucketline/qam.hpp"

namespace bucketline {

/// Baseband OFDM numerology. Defaults give a 256-bin, 12.5 MSPS modem with a
/// 25% cyclic prefix and 13 extended symbols (8 sync, 2 SFD, 3 payload).
struct OfdmConfig {
  std::size_t fftSize = 256;
  double subcarrierSpacingHz = 48828.125;
  double cyclicPrefixFraction = 0.25;
  std::size_t dataCarrierCount = 212;
  std::size_t pilotCarrierCount = 44;
  unsigned qamOrder = 16;
  double sampleRate = 12.5e6;
  std::size_t preambleSymbols = 8;
  std::size_t sfdSymbols = 2;
  std::size_t payloadSymbols = 3;
  double detectThreshold = 0.7;

  // Frame-control block prepended to the MPDU on air.
  static constexpr std::size_t kFrameControlLen = 22;
  static constexpr std::uint8_t kFrameControlVersion = 1;

  void validate() const;

  std::size_t cpLength() const;
  std::size_t extendedLength() const { return fftSize + cpLength(); }
  std::size_t symbolCount() const { return preambleSymbols + sfdSymbols + payloadSymbols; }
  std::size_t burstSamples() const { return symbolCount() * extendedLength(); }
  double symbolS() const { return static_cast<double>(fftSize) / sampleRate; }
  double extendedSymbolS() const { return static_cast<double>(extendedLength()) / sampleRate; }
  double burstS() const { return static_cast<double>(burstSamples()) / sampleRate; }
  std::size_t usedCarriers() const { return dataCarrierCount + pilotCarrierCount; }
  std::size_t codedBitsPerSymbol() const;

  // FFT bins in use are 0 .. usedCarriers()-1. Pilot i sits at used-carrier
  // position floor(i * used / pilots + 1/2); the remaining bins carry data in
  // ascending order.
  std::vector<std::size_t> pilotBins() const;
  std::vector<std::size_t> dataBins() const;
  // BPSK (+1/-1) values of the pilots and of the sync symbol on each used bin,
  // both drawn from the all-ones scrambler keystream.
  std::vector<double> pilotValues() const;
  std::vector<double> syncValues() const;
};

struct OfdmBurst {
  Samples samples;
  double txPowerDbm = 0.0;
};

/// Frame control block: version, bucket-type echo, 16 reserved zero octets,
/// CRC-32 of the first 18 octets.
Octets frame_control(std::span<const std::uint8_t> mpdu);

/// Payload bits for one OFDM symbol: scramble(FC || MPDU), FEC-encode, pad
/// with zeros to the data-carrier capacity. Throws Overflow.
Bits psdu_coded_bits(std::span<const std::uint8_t> mpdu, const OfdmConfig& cfg, const CodecConfig& codec);

/// Frequency-domain content (all fftSize bins) of the payload symbol.
Samples payload_spectrum(std::span<const std::uint8_t> mpdu, const OfdmConfig& cfg, const CodecConfig& codec);

/// Time-domain symbol body with the 1/N inverse-transform convention.
Samples ofdm_symbol_body(std::span<const Complex> bins);

/// Prepends the last cpLength() samples of the body.
Samples add_cyclic_prefix(std::span<const Complex> body, std::size_t cpLength);

/// Full burst: sync x preambleSymbols, SFD (= -sync) x sfdSymbols, payload
/// symbol x payloadSymbols. Mean sample power is 10^(txPowerDbm/10) mW, so
/// samples are in units of sqrt(mW).
OfdmBurst modulate_bucket(std::span<const std::uint8_t> mpdu, const OfdmConfig& cfg, const CodecConfig& codec,
                          double txPowerDbm = 0.0);

/// Lag-one-symbol self-correlation detector with SFD sign-flip confirmation
/// followed by matched-filter fine timing. Returns the burst start, or
/// nullopt (no burst) when nothing qualifies or the burst is truncated.
std::optional<std::size_t> detect_burst(std::span<const Complex> stream, const OfdmConfig& cfg);

/// Real part of the normalized lag-L correlation over an L-sample window,
/// for every start d in [0, size - 2L]. Exposed for diagnostics.
std::vector<double> self_correlation(std::span<const Complex> stream, std::size_t lag);

struct LinkStats {
  double evmRms = 0.0;  // RMS error vector relative to unit-energy constellation
  std::array<bool, 3> replicaCrcOk{};
  bool votedCrcOk = false;
  std::size_t replicasDecoded = 0;
};

struct DemodResult {
  Octets mpdu;
  LinkStats stats;
};

/// Demodulates the burst starting at `offset`. Throws DemodFailed when no
/// replica (nor their bitwise vote) passes the ICV check, BadLength when the
/// stream ends before the burst does.
DemodResult demodulate_bucket(std::span<const Complex> stream, std::size_t offset, const OfdmConfig& cfg,
                              const CodecConfig& codec);

/// Per-bin channel estimate (all fftSize bins) from the pilots of the
/// extended symbol at `start`: exact least-squares values on pilot bins,
/// linear interpolation in between with circular wrap.
Samples channel_estimate(std::span<const Complex> stream, std::size_t start, const OfdmConfig& cfg);

/// Equalized data-carrier points for one payload symbol whose extended symbol
/// starts at `start` (CP included). Exposed for EVM and SER measurements.
Samples equalize_symbol(std::span<const Complex> stream, std::size_t start, const OfdmConfig& cfg);
/// Same, equalizing with a full-band `reference` estimate scaled by the
/// common gain the pilots measure. The demodulator takes the reference from
/// the sync and SFD symbols.
Samples equalize_symbol(std::span<const Complex> stream, std::size_t start, const OfdmConfig& cfg,
                        std::span<const Complex> reference);

/// Writes interleaved little-endian float64 I/Q pairs to `path` and a text
/// header to `path` + ".txt". Both writes are atomic.
void write_iq_dump(const std::filesystem::path& path, std::span<const Complex> samples, const OfdmConfig& cfg);

}  // namespace bucketline
