#include "bucketline/ofdm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <unsupported/Eigen/FFT>

#include "bucketline/crc.hpp"
#include "bucketline/error.hpp"
#include "bucketline/fec.hpp"
#include "bucketline/scrambler.hpp"

namespace bucketline {
namespace {

Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}

Samples forward_fft(std::span<const Complex> x) {
  Samples in(x.begin(), x.end()), out;
  fft_engine().fwd(out, in);
  return out;
}

void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

// Amplitude factor that gives unit-power bins a mean sample power of p_mW.
double amplitude_scale(const OfdmConfig& cfg, double txPowerDbm) {
  const double pmw = std::pow(10.0, txPowerDbm / 10.0);
  const double n = static_cast<double>(cfg.fftSize);
  return std::sqrt(pmw * n * n / static_cast<double>(cfg.usedCarriers()));
}

Samples sync_spectrum(const OfdmConfig& cfg) {
  Samples bins(cfg.fftSize);
  const auto v = cfg.syncValues();
  for (std::size_t k = 0; k < v.size(); ++k) bins[k] = v[k];
  return bins;
}

// Last sync and first SFD extended symbols at unit bin power: the fine-timing
// reference.
Samples timing_template(const OfdmConfig& cfg) {
  auto sync = add_cyclic_prefix(ofdm_symbol_body(sync_spectrum(cfg)), cfg.cpLength());
  Samples t(sync);
  for (const auto& s : sync) t.push_back(-s);
  return t;
}

}  // namespace

void OfdmConfig::validate() const {
  if (fftSize < 8 || (fftSize & (fftSize - 1))) config_error("fftSize must be a power of two >= 8");
  if (!(subcarrierSpacingHz > 0) || !(sampleRate > 0)) config_error("rates must be positive");
  if (std::abs(sampleRate - fftSize * subcarrierSpacingHz) > 1e-9 * sampleRate) {
    config_error("sampleRate must equal fftSize * subcarrierSpacingHz");
  }
  if (!(cyclicPrefixFraction > 0) || cyclicPrefixFraction >= 1) config_error("cyclicPrefixFraction must be in (0,1)");
  const double cp = cyclicPrefixFraction * fftSize;
  if (std::abs(cp - std::round(cp)) > 1e-9) config_error("cyclic prefix must be a whole number of samples");
  if (usedCarriers() > fftSize) config_error("data + pilot carriers exceed fftSize");
  if (pilotCarrierCount < 2) config_error("at least two pilot carriers are required");
  if (dataCarrierCount == 0) config_error("dataCarrierCount must be positive");
  if (!qam_order_supported(qamOrder)) throw Error(ErrorCode::UnsupportedOrder, "qamOrder " + std::to_string(qamOrder));
  if (preambleSymbols < 2) config_error("preambleSymbols must be >= 2");
  if (sfdSymbols < 1) config_error("sfdSymbols must be >= 1");
  if (payloadSymbols != 3) config_error("payloadSymbols must be 3 (three replicas)");
  if (!(detectThreshold > 0)) config_error("detectThreshold must be positive");
}

std::size_t OfdmConfig::cpLength() const {
  return static_cast<std::size_t>(std::lround(cyclicPrefixFraction * static_cast<double>(fftSize)));
}

std::size_t OfdmConfig::codedBitsPerSymbol() const { return dataCarrierCount * qam_bits_per_symbol(qamOrder); }

std::vector<std::size_t> OfdmConfig::pilotBins() const {
  std::vector<std::size_t> bins;
  const std::size_t u = usedCarriers(), p = pilotCarrierCount;
  for (std::size_t i = 0; i < p; ++i) bins.push_back((2 * i * u + p) / (2 * p));
  return bins;
}

std::vector<std::size_t> OfdmConfig::dataBins() const {
  const auto pilots = pilotBins();
  std::vector<std::size_t> bins;
  std::size_t j = 0;
  for (std::size_t k = 0; k < usedCarriers(); ++k) {
    if (j < pilots.size() && pilots[j] == k) {
      ++j;
      continue;
    }
    bins.push_back(k);
  }
  return bins;
}

std::vector<double> OfdmConfig::pilotValues() const {
  std::vector<double> v;
  for (auto b : keystream(kScramblerAllOnes, pilotCarrierCount)) v.push_back(b ? -1.0 : 1.0);
  return v;
}

std::vector<double> OfdmConfig::syncValues() const {
  std::vector<double> v;
  for (auto b : keystream(kScramblerAllOnes, usedCarriers())) v.push_back(b ? -1.0 : 1.0);
  return v;
}

Octets frame_control(std::span<const std::uint8_t> mpdu) {
  Octets fc(OfdmConfig::kFrameControlLen, 0);
  fc[0] = OfdmConfig::kFrameControlVersion;
  fc[1] = mpdu.empty() ? 0 : static_cast<std::uint8_t>(mpdu[0] >> 6);
  const std::uint32_t c = crc32(std::span<const std::uint8_t>(fc.data(), 18));
  for (int i = 0; i < 4; ++i) fc[18 + i] = static_cast<std::uint8_t>(c >> (24 - 8 * i));
  return fc;
}

Bits psdu_coded_bits(std::span<const std::uint8_t> mpdu, const OfdmConfig& cfg, const CodecConfig& codec) {
  Octets psdu = frame_control(mpdu);
  psdu.insert(psdu.end(), mpdu.begin(), mpdu.end());
  const Bits plain = to_bits(psdu);
  Bits coded = fec_encode(scramble(plain, codec.scramblerSeed), codec);
  const std::size_t cap = cfg.codedBitsPerSymbol();
  if (coded.size() > cap) {
    throw Error(ErrorCode::Overflow,
                std::to_string(coded.size()) + " coded bits exceed " + std::to_string(cap) + " carrier bits");
  }
  coded.resize(cap, 0);
  return coded;
}

Samples payload_spectrum(std::span<const std::uint8_t> mpdu, const OfdmConfig& cfg, const CodecConfig& codec) {
  const Samples points = qam_map(psdu_coded_bits(mpdu, cfg, codec), cfg.qamOrder);
  Samples bins(cfg.fftSize);
  const auto data = cfg.dataBins();
  const auto pilots = cfg.pilotBins();
  const auto pv = cfg.pilotValues();
  for (std::size_t i = 0; i < data.size(); ++i) bins[data[i]] = points[i];
  for (std::size_t i = 0; i < pilots.size(); ++i) bins[pilots[i]] = pv[i];
  return bins;
}

Samples ofdm_symbol_body(std::span<const Complex> bins) {
  Samples in(bins.begin(), bins.end()), out;
  fft_engine().inv(out, in);  // includes the 1/N factor
  return out;
}

Samples add_cyclic_prefix(std::span<const Complex> body, std::size_t cpLength) {
  Samples out(body.end() - static_cast<std::ptrdiff_t>(cpLength), body.end());
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

OfdmBurst modulate_bucket(std::span<const std::uint8_t> mpdu, const OfdmConfig& cfg, const CodecConfig& codec,
                          double txPowerDbm) {
  cfg.validate();
  if (mpdu.size() != codec.mpduLen) {
    throw Error(ErrorCode::BadLength, "MPDU is " + std::to_string(mpdu.size()) + " octets, expected " +
                                          std::to_string(codec.mpduLen));
  }
  const std::size_t cp = cfg.cpLength();
  const Samples sync = add_cyclic_prefix(ofdm_symbol_body(sync_spectrum(cfg)), cp);
  const Samples payload = add_cyclic_prefix(ofdm_symbol_body(payload_spectrum(mpdu, cfg, codec)), cp);

  OfdmBurst burst;
  burst.txPowerDbm = txPowerDbm;
  burst.samples.reserve(cfg.burstSamples());
  for (std::size_t i = 0; i < cfg.preambleSymbols; ++i) burst.samples.insert(burst.samples.end(), sync.begin(), sync.end());
  for (std::size_t i = 0; i < cfg.sfdSymbols; ++i) {
    for (const auto& s : sync) burst.samples.push_back(-s);
  }
  for (std::size_t i = 0; i < cfg.payloadSymbols; ++i) {
    burst.samples.insert(burst.samples.end(), payload.begin(), payload.end());
  }
  const double a = amplitude_scale(cfg, txPowerDbm);
  for (auto& s : burst.samples) s *= a;
  return burst;
}

std::vector<double> self_correlation(std::span<const Complex> r, std::size_t lag) {
  if (r.size() < 2 * lag) return {};
  const std::size_t count = r.size() - 2 * lag + 1;
  std::vector<double> c(count);
  Complex acc{};
  double e1 = 0, e2 = 0;
  for (std::size_t i = 0; i < lag; ++i) {
    acc += r[i + lag] * std::conj(r[i]);
    e1 += std::norm(r[i]);
    e2 += std::norm(r[i + lag]);
  }
  for (std::size_t d = 0;; ++d) {
    const double den = std::sqrt(e1 * e2);
    c[d] = den > 0 ? acc.real() / den : 0.0;
    if (d + 1 == count) break;
    // Slide the window by one sample.
    acc += r[d + 2 * lag] * std::conj(r[d + lag]) - r[d + lag] * std::conj(r[d]);
    e1 += std::norm(r[d + lag]) - std::norm(r[d]);
    e2 += std::norm(r[d + 2 * lag]) - std::norm(r[d + lag]);
    // Running sums drift; refresh periodically to keep them exact enough.
    if ((d + 1) % 4096 == 0) {
      acc = {};
      e1 = e2 = 0;
      for (std::size_t i = d + 1; i < d + 1 + lag; ++i) {
        acc += r[i + lag] * std::conj(r[i]);
        e1 += std::norm(r[i]);
        e2 += std::norm(r[i + lag]);
      }
    }
  }
  return c;
}

std::optional<std::size_t> detect_burst(std::span<const Complex> stream, const OfdmConfig& cfg) {
  cfg.validate();
  const std::size_t L = cfg.extendedLength();
  const auto c = self_correlation(stream, L);
  if (c.size() <= L) return std::nullopt;
  const double thr = cfg.detectThreshold;
  const std::size_t flip = (cfg.preambleSymbols - 1) * L;  // last sync symbol vs first SFD symbol
  const auto tmpl = timing_template(cfg);
  const std::size_t search = cfg.cpLength() * 3 / 4;

  for (std::size_t d = L; d < c.size(); ++d) {
    if (c[d - L] - c[d] < thr || c[d] > -thr / 2) continue;
    const std::size_t end = std::min(c.size(), d + L);
    const std::size_t vmin = static_cast<std::size_t>(std::min_element(c.begin() + d, c.begin() + end) - c.begin());
    if (vmin < flip) {
      d = end;
      continue;
    }
    const std::size_t coarse = vmin - flip;
    const std::size_t lo = coarse > search ? coarse - search : 0;
    const std::size_t hi = coarse + search;
    double best = -1;
    std::size_t best_start = coarse;
    for (std::size_t s = lo; s <= hi; ++s) {
      const std::size_t at = s + flip;
      if (at + tmpl.size() > stream.size()) break;
      Complex acc{};
      for (std::size_t i = 0; i < tmpl.size(); ++i) acc += stream[at + i] * std::conj(tmpl[i]);
      const double m = std::norm(acc);
      if (m > best) {
        best = m;
        best_start = s;
      }
    }
    if (best_start + cfg.burstSamples() > stream.size()) return std::nullopt;
    return best_start;
  }
  return std::nullopt;
}

namespace {

// Spectrum of the symbol body, sampled one position early inside the prefix
// so a one-sample late timing error does not pull in the next symbol; the
// known circular shift is undone here. One sample keeps channels of up to
// cpLength() taps free of inter-symbol interference.
Samples received_spectrum(std::span<const Complex> stream, std::size_t start, const OfdmConfig& cfg) {
  const std::size_t N = cfg.fftSize, cp = cfg.cpLength();
  const std::size_t backoff = 1;
  const std::size_t from = start + cp - backoff;
  if (from + N > stream.size()) throw Error(ErrorCode::BadLength, "stream ends inside a payload symbol");
  Samples Y = forward_fft(stream.subspan(from, N));
  for (std::size_t k = 0; k < N; ++k) {
    Y[k] *= std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(k * backoff % N) / static_cast<double>(N));
  }
  return Y;
}

Samples interpolate_pilots(const Samples& Y, const OfdmConfig& cfg) {
  const std::size_t N = cfg.fftSize;
  const auto pilots = cfg.pilotBins();
  const auto pv = cfg.pilotValues();
  const std::size_t P = pilots.size();
  Samples H(N);
  for (std::size_t i = 0; i < P; ++i) {
    const std::size_t a = pilots[i];
    const std::size_t b = i + 1 < P ? pilots[i + 1] : pilots[0] + N;
    const Complex ha = Y[a] / pv[i];
    const Complex hb = Y[b % N] / pv[(i + 1) % P];
    for (std::size_t k = a; k < b; ++k) {
      const double w = static_cast<double>(k - a) / static_cast<double>(b - a);
      H[k % N] = ha * (1.0 - w) + hb * w;
    }
  }
  // Bins below the first pilot are covered by the wrap segment above.
  return H;
}

// Full-band estimate from the known sync and SFD symbols, averaged over all
// of them. Exact on every bin for any channel shorter than the prefix.
Samples preamble_estimate(std::span<const Complex> stream, std::size_t offset, const OfdmConfig& cfg) {
  const std::size_t N = cfg.fftSize, L = cfg.extendedLength();
  const Samples X = sync_spectrum(cfg);
  const std::size_t count = cfg.preambleSymbols + cfg.sfdSymbols;
  Samples H(N);
  for (std::size_t s = 0; s < count; ++s) {
    const Samples Y = received_spectrum(stream, offset + s * L, cfg);
    const double sign = s < cfg.preambleSymbols ? 1.0 : -1.0;
    for (std::size_t k = 0; k < N; ++k) {
      if (std::abs(X[k]) > 0) H[k] += Y[k] / (sign * X[k]);
    }
  }
  for (auto& h : H) h /= static_cast<double>(count);
  return H;
}

Samples equalize_with(const Samples& Y, const Samples& H, const OfdmConfig& cfg) {
  Samples out;
  for (auto k : cfg.dataBins()) out.push_back(std::abs(H[k]) > 0 ? Y[k] / H[k] : Complex{});
  return out;
}

}  // namespace

Samples channel_estimate(std::span<const Complex> stream, std::size_t start, const OfdmConfig& cfg) {
  return interpolate_pilots(received_spectrum(stream, start, cfg), cfg);
}

Samples equalize_symbol(std::span<const Complex> stream, std::size_t start, const OfdmConfig& cfg) {
  const Samples Y = received_spectrum(stream, start, cfg);
  return equalize_with(Y, interpolate_pilots(Y, cfg), cfg);
}

Samples equalize_symbol(std::span<const Complex> stream, std::size_t start, const OfdmConfig& cfg,
                        std::span<const Complex> reference) {
  const Samples Y = received_spectrum(stream, start, cfg);
  // Pilots track the common gain and phase drift relative to the reference.
  const auto pilots = cfg.pilotBins();
  const auto pv = cfg.pilotValues();
  Complex g{};
  for (std::size_t i = 0; i < pilots.size(); ++i) {
    const Complex h = reference[pilots[i]];
    if (std::abs(h) > 0) g += Y[pilots[i]] / (pv[i] * h);
  }
  g /= static_cast<double>(pilots.size());
  Samples H(reference.begin(), reference.end());
  for (auto& h : H) h *= g;
  return equalize_with(Y, H, cfg);
}

DemodResult demodulate_bucket(std::span<const Complex> stream, std::size_t offset, const OfdmConfig& cfg,
                              const CodecConfig& codec) {
  cfg.validate();
  if (offset + cfg.burstSamples() > stream.size()) throw Error(ErrorCode::BadLength, "stream ends before the burst");
  const std::size_t L = cfg.extendedLength();
  const std::size_t psduBits = 8 * (OfdmConfig::kFrameControlLen + codec.mpduLen);
  const std::size_t codedBits = 2 * psduBits;
  if (codedBits > cfg.codedBitsPerSymbol()) throw Error(ErrorCode::Overflow, "MPDU does not fit one payload symbol");

  DemodResult res;
  std::array<Octets, 3> replicas;
  double err = 0;
  std::size_t npts = 0;
  const Samples reference = preamble_estimate(stream, offset, cfg);
  for (std::size_t r = 0; r < 3; ++r) {
    const std::size_t start = offset + (cfg.preambleSymbols + cfg.sfdSymbols + r) * L;
    const Samples eq = equalize_symbol(stream, start, cfg, reference);
    const Samples sliced = qam_slice(eq, cfg.qamOrder);
    for (std::size_t i = 0; i < eq.size(); ++i) err += std::norm(eq[i] - sliced[i]);
    npts += eq.size();
    Bits bits = qam_demap(eq, cfg.qamOrder);
    bits.resize(codedBits);
    const Bits plain = scramble(fec_decode(bits, codec), codec.scramblerSeed);
    const Octets psdu = to_octets(plain);
    replicas[r].assign(psdu.begin() + OfdmConfig::kFrameControlLen, psdu.end());
    res.stats.replicaCrcOk[r] = icv_ok(replicas[r], codec);
    res.stats.replicasDecoded += res.stats.replicaCrcOk[r];
  }
  res.stats.evmRms = std::sqrt(err / static_cast<double>(npts));

  Octets voted = majority_vote(replicas[0], replicas[1], replicas[2]);
  res.stats.votedCrcOk = icv_ok(voted, codec);
  if (res.stats.votedCrcOk) {
    res.mpdu = std::move(voted);
    return res;
  }
  for (std::size_t r = 0; r < 3; ++r) {
    if (res.stats.replicaCrcOk[r]) {
      res.mpdu = replicas[r];
      return res;
    }
  }
  throw Error(ErrorCode::DemodFailed, "no replica passed the ICV check");
}

}  // namespace bucketline
