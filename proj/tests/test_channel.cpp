#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "bucketline/channel.hpp"
#include "bucketline/error.hpp"
#include "oracles.hpp"

using namespace bucketline;

namespace {

double mean_power(const Samples& s, std::size_t from, std::size_t to) {
  double p = 0;
  for (std::size_t i = from; i < to; ++i) p += std::norm(s[i]);
  return p / static_cast<double>(to - from);
}

CableModel noiseless() {
  CableModel c;
  c.noiseEnabled = false;
  return c;
}

OfdmBurst some_burst(double dbm, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  Mpdu m;
  m.timestampMs = static_cast<std::uint32_t>(rng());
  m.originalSource = {1, static_cast<std::uint32_t>(rng() & 0xFFFFFF)};
  m.msdu = MeasurementData{static_cast<std::uint32_t>(rng() & 0x7FFFFFF), 300, 1};
  return modulate_bucket(serialize_mpdu(m, CodecConfig{}), OfdmConfig{}, CodecConfig{}, dbm);
}

// Standardized fourth moment of the generalized Gaussian family.
double gg_kurtosis(double a) { return std::tgamma(5 / a) * std::tgamma(1 / a) / std::pow(std::tgamma(3 / a), 2); }

}  // namespace

TEST_CASE("generalized Gaussian sample moments") {
  const std::size_t n = 1'000'000;
  for (double alpha : {2.0, 1.0}) {
    const double sigma = 0.7;
    const auto x = sample_generalized_gaussian(alpha, sigma, n, std::uint64_t{42});
    double m = 0, v = 0;
    for (double u : x) m += u;
    m /= n;
    for (double u : x) v += (u - m) * (u - m);
    v /= (n - 1);
    const double s2 = sigma * sigma;
    const double seMean = sigma / std::sqrt(double(n));
    const double seVar = s2 * std::sqrt((gg_kurtosis(alpha) - 1) / n);
    INFO("alpha=" << alpha << " mean=" << m << " var=" << v);
    CHECK(std::abs(m) < 3 * seMean);
    CHECK(std::abs(v - s2) < 3 * seVar);
  }
}

TEST_CASE("generalized Gaussian density integrates to one") {
  for (double alpha : {1.0, 1.5, 2.0}) {
    const double sigma = 1.3;
    auto f = [&](double u) { return generalized_gaussian_pdf(u, alpha, sigma); };
    // Split at the origin so the alpha = 1 cusp sits on a panel boundary.
    const double total = oracle::simpson(f, -20 * sigma, 0, 20000) + oracle::simpson(f, 0, 20 * sigma, 20000);
    INFO("alpha=" << alpha);
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("shape errors") {
  for (double a : {0.0, -1.0}) {
    try {
      sample_generalized_gaussian(a, 1.0, 10, std::uint64_t{1});
      FAIL("expected BadShape");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadShape);
    }
  }
  CHECK_THROWS_AS(sample_generalized_gaussian(2.0, 0.0, 10, std::uint64_t{1}), Error);
}

TEST_CASE("zero distance, unit tap and no noise is the identity") {
  const auto b = some_burst(4.0);
  const auto p = propagate(b, noiseless(), 0.0, 12.5e6, 7);
  CHECK(p.delaySamples == 0);
  REQUIRE(p.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < b.samples.size(); ++i) CHECK(p.samples[i] == b.samples[i]);
}

TEST_CASE("ten metres of cable costs 3 dB") {
  const auto b = some_burst(10.0);
  const auto p = propagate(b, noiseless(), 10.0, 12.5e6, 7);
  const double in = mean_power(b.samples, 0, b.samples.size());
  const double out = mean_power(p.samples, p.delaySamples, p.delaySamples + b.samples.size());
  CHECK(std::abs(10 * std::log10(in / out) - 3.0) < 1e-9);
  CHECK(p.budget.rxPowerDbm == doctest::Approx(7.0));
}

TEST_CASE("fifty metres is the decode limit at 10 dBm") {
  CableModel c;
  c.noiseFloorDbm = CableModel::floor_from_tx_snr(10.0, 15.0);
  ReceiverModel rx;
  const auto at50 = link_budget(c, 10.0, 50.0);
  CHECK(std::abs(at50.snrDb) < 1e-9);
  CHECK(rx.decodable(at50));
  CHECK_FALSE(rx.decodable(link_budget(c, 10.0, 50.5)));
  CHECK(min_tx_power(c, rx, 10.0, -50, 10) == -2);
  CHECK(min_tx_power(c, rx, 20.0, -50, 10) == 1);
  CHECK(min_tx_power(c, rx, 50.0, -50, 10) == 10);
  CHECK_FALSE(min_tx_power(c, rx, 60.0, -50, 10).has_value());
  // At 20 m the 10 m power falls below the decode threshold.
  CHECK_FALSE(rx.decodable(link_budget(c, -2.0, 20.0)));
}

TEST_CASE("sensitivity floor is a hard limit") {
  CableModel c;
  c.noiseFloorDbm = -80;
  ReceiverModel rx;
  CHECK(rx.decodable(link_budget(c, 10.0, 200.0)));   // -50 dBm exactly
  CHECK_FALSE(rx.decodable(link_budget(c, 10.0, 201.0)));
}

TEST_CASE("attenuation composes additively in dB") {
  const auto b = some_burst(0.0, 3);
  const CableModel c = noiseless();
  const auto a = propagate(b, c, 17.0, 12.5e6, 1);
  OfdmBurst mid{Samples(a.samples.begin() + static_cast<std::ptrdiff_t>(a.delaySamples), a.samples.end()), 0.0};
  const auto two = propagate(mid, c, 26.0, 12.5e6, 1);
  const auto one = propagate(b, c, 43.0, 12.5e6, 1);
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    const auto x = two.samples[two.delaySamples + i];
    const auto y = one.samples[one.delaySamples + i];
    CHECK(std::abs(x - y) <= 1e-9 * std::abs(y) + 1e-300);
  }
}

TEST_CASE("silent-interval noise power is 2 sigma^2") {
  CableModel c;
  c.noiseFloorDbm = -5.0;
  for (double alpha : {2.0, 1.0}) {
    c.noiseAlpha = alpha;
    const double s = c.noiseSigma();
    OfdmBurst silent{Samples(200000), 0.0};
    const auto p = propagate(silent, c, 0.0, 12.5e6, 99);
    const double n = static_cast<double>(p.samples.size());
    const double meas = mean_power(p.samples, 0, p.samples.size());
    // |n|^2 = x^2 + y^2 with x, y i.i.d.; Var(x^2) = (kurtosis - 1) sigma^4.
    const double se = std::sqrt(2 * (gg_kurtosis(alpha) - 1)) * s * s / std::sqrt(n);
    INFO("alpha=" << alpha << " measured=" << meas << " expected=" << 2 * s * s);
    CHECK(std::abs(meas - 2 * s * s) < 3 * se);
    CHECK(2 * s * s == doctest::Approx(std::pow(10.0, -0.5)));
  }
}

TEST_CASE("delay lands on the rounded sample") {
  const auto b = some_burst(0.0, 5);
  const CableModel c = noiseless();
  for (double d : {0.0, 10.0, 1234.0, 5000.0}) {
    const auto p = propagate(b, c, d, 12.5e6, 1);
    const auto expect = static_cast<std::size_t>(std::llround(d / 2.0e8 * 12.5e6));
    // Oracle: brute-force cross-correlation peak search.
    std::size_t best = 0;
    double bestv = -1;
    for (std::size_t lag = 0; lag + b.samples.size() <= p.samples.size(); ++lag) {
      Complex acc{};
      for (std::size_t i = 0; i < b.samples.size(); i += 4) acc += p.samples[lag + i] * std::conj(b.samples[i]);
      if (std::abs(acc) > bestv) bestv = std::abs(acc), best = lag;
    }
    INFO("d=" << d);
    CHECK(best == expect);
    CHECK(p.delaySamples == expect);
  }
}

TEST_CASE("FIR taps convolve the attenuated burst") {
  auto c = noiseless();
  c.firTaps = {Complex(1, 0), Complex(0, 0), Complex(0.3, -0.1)};
  const auto b = some_burst(0.0, 6);
  const auto p = propagate(b, c, 0.0, 12.5e6, 1);
  REQUIRE(p.samples.size() == b.samples.size() + 2);
  for (std::size_t i = 2; i < b.samples.size(); ++i) {
    CHECK(std::abs(p.samples[i] - (b.samples[i] + c.firTaps[2] * b.samples[i - 2])) < 1e-12);
  }
  CHECK_THROWS_AS(CableModel{.firTaps = Samples(65, Complex(1, 0))}.validate(64), Error);
}

TEST_CASE("superposition of a single transmission is itself") {
  const auto b = some_burst(0.0, 7);
  const auto s = superpose({{0, b.samples}});
  CHECK(s == b.samples);
  const auto t = superpose({{5, {Complex(1, 0)}}, {5, {Complex(0, 2)}}});
  CHECK(t.size() == 6);
  CHECK(t[5] == Complex(1, 2));
}

TEST_CASE("disjoint bursts are both detected") {
  OfdmConfig cfg;
  CodecConfig codec;
  const auto a = some_burst(0.0, 8), b = some_burst(-3.0, 9);
  const std::size_t sa = 300, sb = 300 + a.samples.size() + 900;
  auto stream = superpose({{sa, a.samples}, {sb, b.samples}});
  stream.resize(stream.size() + 200);
  const auto first = detect_burst(stream, cfg);
  REQUIRE(first.has_value());
  CHECK(*first == sa);
  const std::size_t resume = *first + cfg.burstSamples();
  const auto second = detect_burst(std::span(stream).subspan(resume), cfg);
  REQUIRE(second.has_value());
  CHECK(*second + resume == sb);
  CHECK(demodulate_bucket(stream, sa, cfg, codec).mpdu == demodulate_bucket(a.samples, 0, cfg, codec).mpdu);
  CHECK(demodulate_bucket(stream, sb, cfg, codec).mpdu == demodulate_bucket(b.samples, 0, cfg, codec).mpdu);
}

// Interference from the far burst is not noise-like during its preamble, so
// at exactly 15 dB a fraction of a percent of overlaps still defeat the FEC.
TEST_CASE("near burst survives a far burst at least 15 dB weaker") {
  OfdmConfig cfg;
  CodecConfig codec;
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<std::size_t> overlap(0, 4000);
  for (double ratio : {15.0, 20.0, 25.0}) {
    int ok = 0;
    const int trials = ratio == 15.0 ? 1000 : 200;
    for (int t = 0; t < trials; ++t) {
      const auto near = some_burst(0.0, 100 + t);
      const auto far = some_burst(-ratio, 5000 + t);
      const std::size_t start = 200;
      auto stream = superpose({{start, near.samples}, {start + overlap(rng), far.samples}});
      const auto off = detect_burst(stream, cfg);
      if (!off || *off != start) continue;
      try {
        ok += demodulate_bucket(stream, *off, cfg, codec).mpdu == demodulate_bucket(near.samples, 0, cfg, codec).mpdu;
      } catch (const Error&) {
      }
    }
    MESSAGE("SIR " << ratio << " dB: " << ok << "/" << trials << " near bursts decoded");
    if (ratio == 15.0)
      CHECK(ok >= 990);
    else
      CHECK(ok == trials);
  }
}

TEST_CASE("default topology reaches five neighbours each side") {
  CableModel c;
  ReceiverModel rx;
  std::vector<double> pos;
  for (int i = 0; i <= 1000; ++i) pos.push_back(10.0 * i);  // coordinator at 0
  const auto r = reachability(c, rx, pos, 10.0);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const std::size_t up = std::min<std::size_t>(5, i), down = std::min<std::size_t>(5, pos.size() - 1 - i);
    CHECK(r[i].upstream == up);
    CHECK(r[i].downstream == down);
    if (i >= 2 && i + 2 < pos.size()) {
      CHECK(r[i].upstream >= 2);
      CHECK(r[i].downstream >= 2);
    }
  }
}

TEST_CASE("per-link seeds are distinct and stable") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t l = 0; l < 10000; ++l) seen.insert(link_seed(123, l));
  CHECK(seen.size() == 10000);
  CHECK(link_seed(1, 2) == link_seed(1, 2));
  CHECK(link_seed(1, 2) != link_seed(2, 2));
}
