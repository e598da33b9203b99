#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "bucketline/analytics.hpp"
#include "bucketline/error.hpp"
#include "oracles.hpp"

using namespace bucketline;

TEST_CASE("PHY rate of the oil-well numerology is 40 Mbps") {
  const auto t0 = std::chrono::steady_clock::now();
  const double r = phy_rate(RateInputs{256, 4, 0.5, 20.48e-6, 5.12e-6});
  const auto dt = std::chrono::steady_clock::now() - t0;
  CHECK(r == 40e6);
  CHECK(dt < std::chrono::milliseconds(1));
  CHECK(phy_rate(RateInputs::from(OfdmConfig{}, CodecConfig{})) == doctest::Approx(40e6).epsilon(1e-15));
}

TEST_CASE("PHY rate is linear in bits per symbol") {
  CHECK(phy_rate(RateInputs{256, 2, 0.5, 20.48e-6, 5.12e-6}) == doctest::Approx(20e6).epsilon(1e-15));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-6, 1e-4);
  for (int i = 0; i < 100; ++i) {
    RateInputs a{64, 3, 0.75, u(rng), u(rng)};
    RateInputs b = a;
    b.qamBits *= 2;
    CHECK(phy_rate(b) == doctest::Approx(2 * phy_rate(a)).epsilon(1e-14));
  }
}

TEST_CASE("bucket rate") {
  const double r = bucket_rate(25.6e-6, 13);
  CHECK(r >= 3004);
  CHECK(r <= 3005);
  CHECK(r == doctest::Approx(3004.8076923076923).epsilon(1e-14));
  CHECK(bucket_rate(25.6e-6, 1) == doctest::Approx(39062.5).epsilon(1e-15));
  CHECK(bucket_rate(12.8e-6, 13) == doctest::Approx(2 * r).epsilon(1e-15));
  const OfdmConfig cfg;
  CHECK(bucket_rate(cfg.extendedSymbolS(), cfg.symbolCount()) == doctest::Approx(r).epsilon(1e-14));
}

TEST_CASE("latency closed forms") {
  const LatencyInputs l{1000, 0.33e-3, 0.033e-3, 1.0};
  // 2999 hops of 0.363 ms plus one second of acquisition.
  CHECK(latency_estimate(l) == doctest::Approx(2.088637).epsilon(1e-12));
  CHECK(std::abs(latency_estimate(l) - 2.088) / 2.088 < 5e-4);
  CHECK(command_propagation(l) == doctest::Approx(0.363).epsilon(1e-12));
  CHECK(measure_return(l) == doctest::Approx(1.725637).epsilon(1e-12));

  const LatencyInputs one{1, 0.33e-3, 0.033e-3, 1.0};
  CHECK(latency_estimate(one) == doctest::Approx(2 * (0.33e-3 + 0.033e-3) + 1.0).epsilon(1e-15));
}

TEST_CASE("latency is the sum of its parts and affine in N") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::uint64_t> n(1, 1'000'000);
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t k = n(rng);
    CHECK(3 * k - 1 == k + (2 * k - 1));
    const LatencyInputs l{k, 0.33e-3, 0.033e-3, 1.0};
    CHECK(latency_estimate(l) == command_propagation(l) + measure_return(l));
    LatencyInputs next = l;
    next.nodeCount = k + 1;
    CHECK(latency_estimate(next) - latency_estimate(l) == doctest::Approx(3 * 0.363e-3).epsilon(1e-6));
  }
}

TEST_CASE("Gaussian Q function") {
  CHECK(q_function(0.0) == 0.5);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-8, 8);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    CHECK(q_function(x) + q_function(-x) == doctest::Approx(1.0).epsilon(1e-15));
  }
  // Oracle: Simpson integration of the standard normal density.
  for (double x : {0.0, 0.5, 1.0, 2.0, 3.0, 4.5}) {
    auto phi = [](double t) { return std::exp(-t * t / 2) / std::sqrt(2 * M_PI); };
    const double ref = oracle::simpson(phi, x, 40.0, 200000);
    CHECK(std::abs(q_function(x) - ref) <= 1e-12 * ref + 1e-15);
  }
}

TEST_CASE("quadrature Q matches the erfc form at alpha = 2") {
  for (double x = 0; x <= 6.0 + 1e-12; x += 0.05) {
    INFO("x=" << x);
    CHECK(std::abs(q_function_quadrature(x, 2.0) - q_function(x)) < 1e-9);
    CHECK(std::abs(q_function_quadrature(x, 2.0) - q_function(x)) <= 1e-9 * q_function(x));
  }
  CHECK(q_function_quadrature(-1.0, 2.0) == doctest::Approx(q_function(-1.0)).epsilon(1e-12));
}

TEST_CASE("generalized Q at alpha = 1 is the Laplace tail") {
  // Unit-variance Laplace: P(U > x) = exp(-sqrt(2) x) / 2 for x >= 0.
  for (double x : {0.0, 0.3, 1.0, 2.5, 6.0}) {
    CHECK(q_function(x, 1.0) == doctest::Approx(0.5 * std::exp(-std::sqrt(2.0) * x)).epsilon(1e-10));
  }
  CHECK(q_function(0.0, 0.7) == doctest::Approx(0.5).epsilon(1e-12));
  for (double a : {0.0, -2.0}) {
    try {
      q_function(1.0, a);
      FAIL("expected BadShape");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadShape);
    }
  }
}

TEST_CASE("M-QAM SER closed form") {
  // Oracle: independent per-axis errors, 1 - (1 - p)^2 with p = 2(1 - 1/sqrt M) Q(.).
  for (unsigned m : {4u, 16u, 64u, 256u}) {
    for (double s = -5; s <= 25; s += 0.5) {
      const double arg = std::sqrt(3 * std::pow(10.0, s / 10) / (m - 1));
      const double p = 2 * (1 - 1 / std::sqrt(double(m))) * 0.5 * std::erfc(arg / std::sqrt(2.0));
      CHECK(ser_mqam(m, s) == doctest::Approx(1 - (1 - p) * (1 - p)).epsilon(1e-12));
    }
  }
  for (unsigned m : {4u, 16u, 64u}) {
    const double a = 1 - 1 / std::sqrt(double(m));
    CHECK(ser_mqam(m, -400) == doctest::Approx(4 * a * 0.5 - 4 * a * a * 0.25).epsilon(1e-12));
    CHECK(ser_mqam(m, 200) == 0.0);
  }
  for (unsigned bad : {0u, 2u, 8u, 12u, 32u}) {
    try {
      ser_mqam(bad, 10);
      FAIL("expected BadOrder");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadOrder);
    }
  }
}

TEST_CASE("SER is decreasing in SNR and increasing in M") {
  for (double s = -5; s <= 25; s += 0.25) {
    CHECK(ser_mqam(64, s) > ser_mqam(16, s));
    CHECK(ser_mqam(16, s) > ser_mqam(4, s));
    for (unsigned m : {4u, 16u, 64u}) {
      if (ser_mqam(m, s + 0.25) > 0) CHECK(ser_mqam(m, s + 0.25) < ser_mqam(m, s));
    }
  }
}

TEST_CASE("Monte-Carlo demapper SER agrees with the closed form") {
  const std::uint64_t n = 1'000'000;
  struct Point {
    unsigned m;
    double snr;
  };
  for (auto [m, snr] : {Point{16, 8}, Point{16, 12}, Point{16, 16}, Point{64, 14}, Point{64, 18}, Point{64, 22}}) {
    const auto mc = monte_carlo_ser(m, snr, n, 1000 + m + static_cast<std::uint64_t>(snr));
    const double p = ser_mqam(m, snr);
    const double se = std::sqrt(p * (1 - p) / n);
    MESSAGE("M=" << m << " snr=" << snr << " dB: measured " << mc.rate() << " closed form " << p);
    CHECK(mc.symbols == n);
    CHECK(std::abs(mc.rate() - p) < 3 * se);
  }
}

TEST_CASE("link range and power step") {
  CHECK(link_range(10, 15, 0.3, 0) == doctest::Approx(50.0).epsilon(1e-15));
  CHECK(link_range(10, 15, 0.3, 15) == 0.0);
  CHECK(power_step(15, 4) == 0.9375);
  CHECK(power_step(15, 4) <= 1.0);
}

TEST_CASE("SER curve CSV") {
  const auto csv = ser_curve_csv({16, 64}, -5, 25, 0.5);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "snr_db,ser_m16,ser_m64");
  int rows = 0;
  double last16 = 1;
  while (std::getline(is, line)) {
    ++rows;
    std::istringstream ls(line);
    std::string a, b, c;
    std::getline(ls, a, ',');
    std::getline(ls, b, ',');
    std::getline(ls, c, ',');
    CHECK(std::stod(c) > std::stod(b));
    last16 = std::stod(b);
    if (rows == 61) CHECK(std::stod(a) == 25.0);
  }
  CHECK(rows == 61);
  CHECK(last16 < 1e-9);
  CHECK_THROWS_AS(ser_curve_csv({16}, 0, 10, 0), Error);
  CHECK_THROWS_AS(ser_curve_csv({12}, 0, 10, 1), Error);
}

TEST_CASE("rate table CSV") {
  const auto csv = rate_table_csv(OfdmConfig{}, CodecConfig{}, LatencyInputs{1000, 0.33e-3, 0.033e-3, 1.0});
  CHECK(csv.find("quantity,value,unit\n") == 0);
  CHECK(csv.find("phy_rate,40000000,bit/s") != std::string::npos);
  CHECK(csv.find("latency,2.0886") != std::string::npos);
}
