#include "bucketline/analytics.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <random>
#include <sstream>

#include "bucketline/error.hpp"
#include "bucketline/qam.hpp"

namespace bucketline {

RateInputs RateInputs::from(const OfdmConfig& ofdm, const CodecConfig& codec) {
  RateInputs r;
  r.subcarriers = static_cast<double>(ofdm.fftSize);
  r.qamBits = static_cast<double>(qam_bits_per_symbol(ofdm.qamOrder));
  r.codeRate = codec.codeRate.value();
  r.symbolS = ofdm.symbolS();
  r.guardS = ofdm.extendedSymbolS() - ofdm.symbolS();
  return r;
}

double phy_rate(const RateInputs& r) { return 2.0 * r.subcarriers * r.qamBits * r.codeRate / (r.symbolS + r.guardS); }

double bucket_rate(double symbolExtendedS, double symbolsPerBucket) { return 1.0 / (symbolsPerBucket * symbolExtendedS); }

namespace {
double hop(const LatencyInputs& l) { return l.tNnS + l.tIlS; }
}  // namespace

double command_propagation(const LatencyInputs& l) { return static_cast<double>(l.nodeCount) * hop(l); }

double measure_return(const LatencyInputs& l) {
  return static_cast<double>(2 * l.nodeCount - 1) * hop(l) + l.tAcqS;
}

double latency_estimate(const LatencyInputs& l) { return command_propagation(l) + measure_return(l); }

double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double q_function_quadrature(double x, double alpha) {
  if (!(alpha > 0)) throw Error(ErrorCode::BadShape, "alpha must be > 0");
  if (x < 0) return 1.0 - q_function_quadrature(-x, alpha);
  const double g1 = std::tgamma(1.0 / alpha);
  const double lambda0 = std::sqrt(std::tgamma(3.0 / alpha) / g1);
  const double scale = alpha * lambda0 / (2.0 * g1);
  auto f = [&](double u) { return std::exp(-std::pow(lambda0 * u, alpha)); };
  boost::math::quadrature::exp_sinh<double> integrator;
  return scale * integrator.integrate(f, x, std::numeric_limits<double>::infinity());
}

double q_function(double x, double alpha) {
  if (!(alpha > 0)) throw Error(ErrorCode::BadShape, "alpha must be > 0");
  return alpha == 2.0 ? q_function(x) : q_function_quadrature(x, alpha);
}

namespace {
bool square_order(unsigned m) {
  if (m < 4 || (m & (m - 1)) != 0) return false;
  unsigned bits = 0;
  while ((1u << bits) < m) ++bits;
  return bits % 2 == 0;
}
}  // namespace

double ser_mqam(unsigned m, double snrDb) {
  if (!square_order(m)) throw Error(ErrorCode::BadOrder, "M must be an even power of two >= 4, got " + std::to_string(m));
  const double esn0 = std::pow(10.0, snrDb / 10.0);
  const double a = 1.0 - 1.0 / std::sqrt(static_cast<double>(m));
  const double q = q_function(std::sqrt(3.0 * esn0 / (m - 1.0)));
  return 4.0 * a * q - 4.0 * a * a * q * q;
}

MonteCarloSer monte_carlo_ser(unsigned m, double snrDb, std::uint64_t symbols, std::uint64_t seed) {
  if (!square_order(m)) throw Error(ErrorCode::BadOrder, "M must be an even power of two >= 4, got " + std::to_string(m));
  const std::size_t k = qam_bits_per_symbol(m);
  const double sigma = std::sqrt(std::pow(10.0, -snrDb / 10.0) / 2.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::bernoulli_distribution coin(0.5);

  MonteCarloSer out;
  constexpr std::size_t kBatch = 4096;
  std::vector<std::uint8_t> bits;
  while (out.symbols < symbols) {
    const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(kBatch, symbols - out.symbols));
    bits.resize(n * k);
    for (auto& b : bits) b = coin(rng) ? 1 : 0;
    Samples s = qam_map(bits, m);
    for (auto& z : s) z += Complex(noise(rng), noise(rng));
    const auto decided = qam_demap(s, m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        if (decided[i * k + j] != bits[i * k + j]) {
          ++out.errors;
          break;
        }
      }
    }
    out.symbols += n;
  }
  return out;
}

double link_range(double txPowerDbm, double txSnrDb, double attenuationDbPerM, double decodeSnrDb) {
  (void)txPowerDbm;  // the margin is relative to the transmit level, not its absolute value
  return (txSnrDb - decodeSnrDb) / attenuationDbPerM;
}

double power_step(double rangeDb, unsigned bits) { return rangeDb / std::ldexp(1.0, static_cast<int>(bits)); }

std::string ser_curve_csv(const std::vector<unsigned>& orders, double loDb, double hiDb, double stepDb) {
  if (!(stepDb > 0) || hiDb < loDb) throw Error(ErrorCode::ConfigError, "snr range must satisfy lo <= hi and step > 0");
  for (unsigned m : orders) ser_mqam(m, 0.0);
  std::ostringstream os;
  os.precision(17);
  os << "snr_db";
  for (unsigned m : orders) os << ",ser_m" << m;
  os << '\n';
  const auto count = static_cast<long>(std::floor((hiDb - loDb) / stepDb + 1e-9));
  for (long i = 0; i <= count; ++i) {
    const double snr = loDb + static_cast<double>(i) * stepDb;
    os << snr;
    for (unsigned m : orders) os << ',' << ser_mqam(m, snr);
    os << '\n';
  }
  return os.str();
}

std::string rate_table_csv(const OfdmConfig& ofdm, const CodecConfig& codec, const LatencyInputs& latency) {
  std::ostringstream os;
  os.precision(17);
  os << "quantity,value,unit\n";
  os << "phy_rate," << phy_rate(RateInputs::from(ofdm, codec)) << ",bit/s\n";
  os << "bucket_duration," << ofdm.burstS() << ",s\n";
  os << "bucket_rate," << bucket_rate(ofdm.extendedSymbolS(), static_cast<double>(ofdm.symbolCount())) << ",bucket/s\n";
  os << "node_count," << latency.nodeCount << ",\n";
  os << "t_nn," << latency.tNnS << ",s\n";
  os << "t_il," << latency.tIlS << ",s\n";
  os << "t_acq," << latency.tAcqS << ",s\n";
  os << "command_propagation," << command_propagation(latency) << ",s\n";
  os << "measure_return," << measure_return(latency) << ",s\n";
  os << "latency," << latency_estimate(latency) << ",s\n";
  return os.str();
}

}  // namespace bucketline
