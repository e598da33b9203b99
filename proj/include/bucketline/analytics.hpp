#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bucketline/mpdu.hpp"
#include "bucketline/ofdm.hpp"

namespace bucketline {

// Closed-form calculators. All functions are pure.

struct RateInputs {
  double subcarriers = 256;
  double qamBits = 4;
  double codeRate = 0.5;
  double symbolS = 20.48e-6;
  double guardS = 5.12e-6;

  static RateInputs from(const OfdmConfig& ofdm, const CodecConfig& codec);
};

/// Raw PHY rate in bit/s: subcarriers * n * CR / ((T + T_G) / 2).
double phy_rate(const RateInputs& r);

/// Buckets per second: 1 / (symbolsPerBucket * T').
double bucket_rate(double symbolExtendedS, double symbolsPerBucket);

struct LatencyInputs {
  std::uint64_t nodeCount = 1;
  double tNnS = 0.33e-3;
  double tIlS = 0.033e-3;
  double tAcqS = 1.0;
};

/// Time for the measurement request to reach the last node: N (T_n-n + T_IL).
double command_propagation(const LatencyInputs& l);
/// Time for the last node's reading to reach the coordinator once the request
/// has reached it: (2N - 1)(T_n-n + T_IL) + T_acq.
double measure_return(const LatencyInputs& l);
/// (3N - 1)(T_n-n + T_IL) + T_acq, the sum of the two above.
double latency_estimate(const LatencyInputs& l);

/// Gaussian tail probability, 0.5 erfc(x / sqrt 2).
double q_function(double x);
/// Unit-variance generalized Gaussian tail P(U > x). Closed form for
/// alpha = 2, adaptive quadrature otherwise. BadShape for alpha <= 0.
double q_function(double x, double alpha);
/// Always integrates numerically; used to cross-check the closed form.
double q_function_quadrature(double x, double alpha);

/// Square M-QAM symbol error rate at Es/N0 = snrDb. BadOrder unless M is an
/// even power of two >= 4.
double ser_mqam(unsigned m, double snrDb);

/// Symbol error rate of the modem's demapper measured over `symbols` random
/// symbols in complex Gaussian noise of variance N0 (N0/2 per dimension).
struct MonteCarloSer {
  std::uint64_t symbols = 0;
  std::uint64_t errors = 0;
  double rate() const { return symbols ? static_cast<double>(errors) / static_cast<double>(symbols) : 0.0; }
};
MonteCarloSer monte_carlo_ser(unsigned m, double snrDb, std::uint64_t symbols, std::uint64_t seed);

/// Distance over which the transmit SNR margin is consumed by attenuation.
double link_range(double txPowerDbm, double txSnrDb, double attenuationDbPerM, double decodeSnrDb);
/// Power control step when `rangeDb` is covered with `bits` of resolution.
double power_step(double rangeDb, unsigned bits);

/// CSV with columns snr_db,ser_m<M>... for snr from lo to hi inclusive.
std::string ser_curve_csv(const std::vector<unsigned>& orders, double loDb, double hiDb, double stepDb);

/// CSV with columns quantity,value,unit for the rate and latency figures of
/// a configuration.
std::string rate_table_csv(const OfdmConfig& ofdm, const CodecConfig& codec, const LatencyInputs& latency);

}  // namespace bucketline
