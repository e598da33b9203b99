#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "bucketline/error.hpp"
#include "bucketline/ofdm.hpp"
#include "bucketline/qam.hpp"
#include "oracles.hpp"

using namespace bucketline;

namespace {

Mpdu random_mpdu(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> u32;
  Mpdu m;
  m.timestampMs = u32(rng);
  m.originalSource = {static_cast<std::uint8_t>(u32(rng)), u32(rng) & 0xFFFFFF};
  m.finalDestination = {static_cast<std::uint8_t>(u32(rng)), u32(rng) & 0xFFFFFF};
  m.currentDestination = {static_cast<std::uint8_t>(u32(rng)), u32(rng) & 0xFFFFFF};
  m.currentSource = {static_cast<std::uint8_t>(u32(rng)), u32(rng) & 0xFFFFFF};
  m.msdu = MeasurementData{u32(rng) & 0x7FFFFFF, static_cast<std::uint16_t>(u32(rng) & 0x3FF),
                           static_cast<std::uint8_t>(u32(rng) & 7)};
  return m;
}

Samples convolve(const Samples& x, const Samples& h) {
  Samples y(x.size() + h.size() - 1);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < h.size(); ++j) y[i + j] += x[i] * h[j];
  return y;
}

void add_awgn(Samples& s, double noisePower, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(noisePower / 2));
  for (auto& x : s) x += Complex(n(rng), n(rng));
}

double mean_power(const Samples& s) {
  double p = 0;
  for (const auto& x : s) p += std::norm(x);
  return p / static_cast<double>(s.size());
}

}  // namespace

TEST_CASE("bpsk uses two antipodal phases") {
  const auto p = qam_map(Bits{0, 1}, 2);
  CHECK(p[0] == Complex(1, 0));
  CHECK(p[1] == Complex(-1, 0));
}

TEST_CASE("16-QAM point for 0000 follows the indexed grid") {
  // Grid from the indexing formula (2k-1-sqrt(M)) + j(2l-1-sqrt(M)), k,l=1..4.
  double e = 0;
  for (int k = 1; k <= 4; ++k)
    for (int l = 1; l <= 4; ++l) e += std::norm(Complex(2 * k - 1 - 4, 2 * l - 1 - 4));
  e /= 16;
  CHECK(e == doctest::Approx(10.0));
  const auto p = qam_map(Bits{0, 0, 0, 0}, 16);
  CHECK(std::abs(p[0] - Complex(-3, -3) / std::sqrt(e)) < 1e-15);
}

TEST_CASE("constellations have unit mean energy") {
  for (unsigned M : {4u, 16u, 64u}) {
    const unsigned n = qam_bits_per_symbol(M);
    Bits all;
    for (unsigned v = 0; v < M; ++v)
      for (int j = static_cast<int>(n) - 1; j >= 0; --j) all.push_back((v >> j) & 1u);
    const auto pts = qam_map(all, M);
    CHECK(mean_power(pts) == doctest::Approx(1.0).epsilon(1e-12));
    std::set<std::pair<double, double>> distinct;
    for (const auto& p : pts) distinct.insert({p.real(), p.imag()});
    CHECK(distinct.size() == M);
    CHECK(qam_demap(pts, M) == all);
  }
}

TEST_CASE("demap tolerates perturbations below half the minimum distance") {
  std::mt19937_64 rng(5);
  const double half = qam_half_min_distance(16);
  CHECK(half == doctest::Approx(1.0 / std::sqrt(10.0)));
  std::uniform_real_distribution<double> ang(0, 2 * M_PI);
  for (int t = 0; t < 2000; ++t) {
    const Bits b = oracle::random_bits(rng, 4);
    auto p = qam_map(b, 16);
    p[0] += std::polar(0.999 * half, ang(rng));
    CHECK(qam_demap(p, 16) == b);
  }
}

TEST_CASE("demap ties resolve to the lower gray index") {
  const double s = 1.0 / std::sqrt(10.0);
  // Midway between I levels -3 (gray 00) and -1 (gray 01).
  CHECK(qam_demap(Samples{Complex(-2 * s, -3 * s)}, 16) == Bits{0, 0, 0, 0});
  // Midway between +1 (gray 11) and +3 (gray 10).
  CHECK(qam_demap(Samples{Complex(2 * s, -3 * s)}, 16) == Bits{1, 0, 0, 0});
  // Origin: equidistant from four points; -1 (01) beats +1 (11) on both axes.
  CHECK(qam_demap(Samples{Complex(0, 0)}, 16) == Bits{0, 1, 0, 1});
  CHECK(qam_demap(Samples{Complex(0, 0)}, 2) == Bits{0});
}

TEST_CASE("qam errors") {
  CHECK_THROWS_AS(qam_map(Bits{0, 0, 0}, 8), Error);
  try {
    qam_map(Bits{0, 0, 0}, 16);
    FAIL("expected BadLength");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadLength);
  }
  try {
    qam_map(Bits{0}, 32);
    FAIL("expected UnsupportedOrder");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsupportedOrder);
  }
}

TEST_CASE("default numerology") {
  OfdmConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.cpLength() == 64);
  CHECK(cfg.extendedLength() == 320);
  CHECK(cfg.symbolCount() == 13);
  CHECK(cfg.burstSamples() == 4160);
  CHECK(cfg.symbolS() == doctest::Approx(20.48e-6).epsilon(1e-12));
  CHECK(cfg.extendedSymbolS() == doctest::Approx(25.6e-6).epsilon(1e-12));
  CHECK(cfg.burstS() == doctest::Approx(0.3328e-3).epsilon(1e-12));
  CHECK(cfg.codedBitsPerSymbol() == 848);
  const auto p = cfg.pilotBins();
  const auto d = cfg.dataBins();
  CHECK(p.size() == 44);
  CHECK(d.size() == 212);
  std::set<std::size_t> all(p.begin(), p.end());
  all.insert(d.begin(), d.end());
  CHECK(all.size() == 256);
  CHECK(*all.rbegin() == 255);
}

TEST_CASE("31-octet MPDU fills the 212 data carriers exactly") {
  OfdmConfig cfg;
  CodecConfig codec;
  std::mt19937_64 rng(1);
  const Octets raw = serialize_mpdu(random_mpdu(rng), codec);
  CHECK(8 * (OfdmConfig::kFrameControlLen + raw.size()) == 424);
  CHECK(psdu_coded_bits(raw, cfg, codec).size() == 848);
  CHECK(modulate_bucket(raw, cfg, codec).samples.size() == 4160);

  CodecConfig big;
  big.mpduLen = 42;
  const Octets rawBig = serialize_mpdu(Mpdu{}, big);
  try {
    modulate_bucket(rawBig, cfg, big);
    FAIL("expected Overflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Overflow);
  }
}

TEST_CASE("symbol body matches the direct inverse DFT and satisfies Parseval") {
  OfdmConfig cfg;
  CodecConfig codec;
  std::mt19937_64 rng(2);
  const Octets raw = serialize_mpdu(random_mpdu(rng), codec);
  const Samples X = payload_spectrum(raw, cfg, codec);
  const Samples x = ofdm_symbol_body(X);
  // Inverse DFT via the forward oracle: conj(DFT(conj(X))) / N.
  Samples Xc(X.size());
  for (std::size_t k = 0; k < X.size(); ++k) Xc[k] = std::conj(X[k]);
  auto ref = oracle::naive_dft(Xc);
  const double N = static_cast<double>(X.size());
  for (std::size_t n = 0; n < ref.size(); ++n) CHECK(std::abs(std::conj(ref[n]) / N - x[n]) < 1e-12);
  double et = 0, ef = 0;
  for (const auto& v : x) et += std::norm(v);
  for (const auto& v : X) ef += std::norm(v);
  CHECK(std::abs(et - ef / N) <= 1e-9 * et);
}

TEST_CASE("single-carrier symbol is orthogonal to all other bins") {
  for (std::size_t bin : {0u, 1u, 37u, 128u, 255u}) {
    Samples X(256);
    X[bin] = Complex(0.6, -0.8);
    const auto back = oracle::naive_dft(ofdm_symbol_body(X));
    for (std::size_t k = 0; k < 256; ++k) {
      if (k == bin)
        CHECK(std::abs(back[k] - X[bin]) < 1e-9);
      else
        CHECK(std::abs(back[k]) < 1e-9);
    }
  }
}

TEST_CASE("every extended symbol carries an exact cyclic prefix") {
  OfdmConfig cfg;
  CodecConfig codec;
  std::mt19937_64 rng(3);
  const auto burst = modulate_bucket(serialize_mpdu(random_mpdu(rng), codec), cfg, codec, 10.0);
  const std::size_t L = cfg.extendedLength(), cp = cfg.cpLength();
  for (std::size_t s = 0; s < cfg.symbolCount(); ++s) {
    Complex acc{};
    double e1 = 0, e2 = 0;
    for (std::size_t i = 0; i < cp; ++i) {
      const auto a = burst.samples[s * L + i];
      const auto b = burst.samples[s * L + L - cp + i];
      CHECK(a == b);
      acc += a * std::conj(b);
      e1 += std::norm(a);
      e2 += std::norm(b);
    }
    CHECK(acc.real() / std::sqrt(e1 * e2) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("burst mean power follows the transmit power in dBm") {
  OfdmConfig cfg;
  CodecConfig codec;
  const Octets raw = serialize_mpdu(Mpdu{}, codec);
  for (double dbm : {-5.0, 0.0, 10.0}) {
    const auto b = modulate_bucket(raw, cfg, codec, dbm);
    // Symbol bodies carry exactly the nominal power; prefixes are subsets.
    const Samples body(b.samples.begin() + 64, b.samples.begin() + 320);
    CHECK(mean_power(body) == doctest::Approx(std::pow(10.0, dbm / 10)).epsilon(1e-12));
    CHECK(10 * std::log10(mean_power(b.samples)) == doctest::Approx(dbm).epsilon(0.02));
  }
}

TEST_CASE("loopback through the identity channel is bit exact") {
  OfdmConfig cfg;
  CodecConfig codec;
  std::mt19937_64 rng(4);
  for (int t = 0; t < 1000; ++t) {
    const Mpdu m = random_mpdu(rng);
    const Octets raw = serialize_mpdu(m, codec);
    const auto burst = modulate_bucket(raw, cfg, codec, 0.0);
    const auto res = demodulate_bucket(burst.samples, 0, cfg, codec);
    REQUIRE(res.mpdu == raw);
    CHECK(parse_mpdu(res.mpdu, codec) == m);
    CHECK(res.stats.evmRms < 1e-9);
    CHECK(res.stats.replicasDecoded == 3);
  }
}

TEST_CASE("two-tap channel inside the prefix is equalized") {
  OfdmConfig cfg;
  CodecConfig codec;
  std::mt19937_64 rng(6);
  Samples h(9);
  h[0] = 1.0;
  h[8] = 0.3;
  for (int t = 0; t < 300; ++t) {
    const Octets raw = serialize_mpdu(random_mpdu(rng), codec);
    const auto rx = convolve(modulate_bucket(raw, cfg, codec).samples, h);
    const auto off = detect_burst(rx, cfg);
    REQUIRE(off.has_value());
    CHECK(*off == 0);
    const auto res = demodulate_bucket(rx, *off, cfg, codec);
    CHECK(res.mpdu == raw);
    CHECK(res.stats.votedCrcOk);
  }
}

TEST_CASE("an echo anywhere inside the prefix is equalized") {
  OfdmConfig cfg;
  CodecConfig codec;
  std::mt19937_64 rng(8);
  for (std::size_t delay : {1u, 16u, 31u, 47u, 63u}) {
    CAPTURE(delay);
    Samples h(delay + 1);
    h[0] = 1.0;
    h[delay] = Complex(0.4, -0.3);
    for (int t = 0; t < 40; ++t) {
      const Octets raw = serialize_mpdu(random_mpdu(rng), codec);
      const auto rx = convolve(modulate_bucket(raw, cfg, codec).samples, h);
      const auto off = detect_burst(rx, cfg);
      REQUIRE(off.has_value());
      const auto res = demodulate_bucket(rx, *off, cfg, codec);
      CHECK(res.mpdu == raw);
      CHECK(res.stats.replicasDecoded == 3);
    }
  }
}

TEST_CASE("pilot-bin channel estimate is exact for any channel shorter than the prefix") {
  OfdmConfig cfg;
  CodecConfig codec;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> len(1, 64);
  const Octets raw = serialize_mpdu(Mpdu{}, codec);
  const double dbm = 3.0;
  const auto tx = modulate_bucket(raw, cfg, codec, dbm).samples;
  const double amp = std::sqrt(std::pow(10.0, dbm / 10) * 256.0 * 256.0 / 256.0);
  for (int t = 0; t < 50; ++t) {
    Samples h(len(rng));
    for (auto& v : h) v = Complex(g(rng), g(rng));
    const auto rx = convolve(tx, h);
    // Oracle frequency response scaled by the transmit amplitude.
    Samples hp(256);
    std::copy(h.begin(), h.end(), hp.begin());
    const auto Hf = oracle::naive_dft(hp);
    const auto est = channel_estimate(rx, 10 * 320, cfg);
    for (auto k : cfg.pilotBins()) CHECK(std::abs(est[k] - amp * Hf[k]) <= 1e-9 * amp * (1 + std::abs(Hf[k])));
  }
}

TEST_CASE("clean burst at offset 777 is located exactly") {
  OfdmConfig cfg;
  CodecConfig codec;
  std::mt19937_64 rng(8);
  const Octets raw = serialize_mpdu(random_mpdu(rng), codec);
  const auto b = modulate_bucket(raw, cfg, codec, -20.0).samples;
  Samples stream(777 + b.size() + 500);
  std::copy(b.begin(), b.end(), stream.begin() + 777);
  const auto off = detect_burst(stream, cfg);
  REQUIRE(off.has_value());
  CHECK(*off >= 776);
  CHECK(*off <= 778);
  CHECK(demodulate_bucket(stream, *off, cfg, codec).mpdu == raw);
}

TEST_CASE("detection at 0 dB SNR in Gaussian noise") {
  OfdmConfig cfg;
  CodecConfig codec;
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> where(0, 1500);
  const Octets raw = serialize_mpdu(Mpdu{}, codec);
  const auto b = modulate_bucket(raw, cfg, codec, 0.0).samples;
  int hits = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t at = where(rng);
    Samples stream(at + b.size() + 400);
    std::copy(b.begin(), b.end(), stream.begin() + static_cast<std::ptrdiff_t>(at));
    add_awgn(stream, 1.0, rng);  // signal mean power is 1 mW
    const auto off = detect_burst(stream, cfg);
    if (off && (*off + 1 >= at) && (*off <= at + 1)) ++hits;
  }
  MESSAGE("0 dB detections within +-1 sample: " << hits << "/1000");
  CHECK(hits >= 990);
}

TEST_CASE("pure noise raises no detections") {
  OfdmConfig cfg;
  std::mt19937_64 rng(10);
  int alarms = 0;
  const int windows = 2000;
  for (int t = 0; t < windows / 2; ++t) {
    Samples stream(2 * cfg.burstSamples());
    add_awgn(stream, 1.0, rng);
    alarms += detect_burst(stream, cfg).has_value();
  }
  MESSAGE("false alarms: " << alarms << " over " << windows << " burst-length windows");
  CHECK(static_cast<double>(alarms) / windows < 1e-3);
  CHECK_FALSE(detect_burst(Samples(10000), cfg).has_value());
}

TEST_CASE("one destroyed replica is outvoted") {
  OfdmConfig cfg;
  CodecConfig codec;
  std::mt19937_64 rng(11);
  for (int r = 0; r < 3; ++r) {
    const Octets raw = serialize_mpdu(random_mpdu(rng), codec);
    auto s = modulate_bucket(raw, cfg, codec).samples;
    std::normal_distribution<double> big(0.0, 10.0);
    for (std::size_t i = (10 + r) * 320; i < (11 + r) * 320; ++i) s[i] = Complex(big(rng), big(rng));
    const auto res = demodulate_bucket(s, 0, cfg, codec);
    CHECK(res.mpdu == raw);
    CHECK_FALSE(res.stats.replicaCrcOk[r]);
    CHECK(res.stats.replicasDecoded == 2);
  }
}

TEST_CASE("all replicas destroyed raises DemodFailed") {
  OfdmConfig cfg;
  CodecConfig codec;
  std::mt19937_64 rng(12);
  auto s = modulate_bucket(serialize_mpdu(Mpdu{}, codec), cfg, codec).samples;
  std::normal_distribution<double> big(0.0, 10.0);
  for (std::size_t i = 10 * 320; i < s.size(); ++i) s[i] = Complex(big(rng), big(rng));
  try {
    demodulate_bucket(s, 0, cfg, codec);
    FAIL("expected DemodFailed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DemodFailed);
  }
  CHECK_THROWS_AS(demodulate_bucket(s, 100, cfg, codec), Error);
}

TEST_CASE("4-QAM cannot carry a default bucket in one payload symbol") {
  OfdmConfig cfg;
  cfg.qamOrder = 4;
  cfg.dataCarrierCount = 212;
  CodecConfig codec;
  codec.mpduLen = 31;
  // 848 coded bits need 424 carriers at 2 bits each: does not fit in 256.
  CHECK_THROWS_AS(modulate_bucket(serialize_mpdu(Mpdu{}, codec), cfg, codec), Error);
}

TEST_CASE("I/Q dump layout") {
  OfdmConfig cfg;
  CodecConfig codec;
  const auto b = modulate_bucket(serialize_mpdu(Mpdu{}, codec), cfg, codec);
  const auto dir = std::filesystem::temp_directory_path() / "bucketline_iq_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "burst.iq";
  write_iq_dump(path, b.samples, cfg);
  CHECK(std::filesystem::file_size(path) == b.samples.size() * 16);
  std::ifstream in(path, std::ios::binary);
  double iq[2];
  in.read(reinterpret_cast<char*>(iq), sizeof iq);
  CHECK(iq[0] == b.samples[0].real());
  CHECK(iq[1] == b.samples[0].imag());
  auto side = path;
  side += ".txt";
  std::ifstream hdr(side);
  std::string all((std::istreambuf_iterator<char>(hdr)), {});
  CHECK(all.find("fft_size = 256") != std::string::npos);
  CHECK(all.find("cp_samples = 64") != std::string::npos);
  std::filesystem::remove_all(dir);
}
