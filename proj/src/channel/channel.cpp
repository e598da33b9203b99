#include "bucketline/channel.hpp"

#include <cmath>
#include <string>

#include "bucketline/error.hpp"

namespace bucketline {

namespace {
// Links are compared against thresholds that the default numbers hit exactly
// (for example 0.3 dB/m over 50 m against a 15 dB margin).
constexpr double kDbSlack = 1e-9;
}  // namespace

double CableModel::noiseSigma() const {
  return noiseEnabled ? std::sqrt(std::pow(10.0, noiseFloorDbm / 10.0) / 2.0) : 0.0;
}

void CableModel::validate(std::size_t cpLength) const {
  if (!(attenuationDbPerM >= 0)) throw Error(ErrorCode::ConfigError, "cable.attenuation_db_per_m must be >= 0");
  if (!(propagationSpeed > 0)) throw Error(ErrorCode::ConfigError, "cable.propagation_speed must be > 0");
  if (!(noiseAlpha > 0)) throw Error(ErrorCode::BadShape, "cable.noise_alpha must be > 0");
  if (firTaps.empty() || firTaps.size() > cpLength) {
    throw Error(ErrorCode::ConfigError, "cable.fir_taps length must be in [1, " + std::to_string(cpLength) + "]");
  }
  if (impulseProbability < 0 || impulseProbability > 1) {
    throw Error(ErrorCode::ConfigError, "cable.impulse_probability must be in [0, 1]");
  }
}

LinkBudget link_budget(const CableModel& cable, double txPowerDbm, double distanceM) {
  LinkBudget b;
  b.txPowerDbm = txPowerDbm;
  b.distanceM = distanceM;
  b.rxPowerDbm = txPowerDbm - cable.attenuationDbPerM * distanceM;
  b.snrDb = b.rxPowerDbm - cable.noiseFloorDbm;
  return b;
}

bool ReceiverModel::decodable(const LinkBudget& b) const {
  return b.rxPowerDbm + kDbSlack >= sensitivityDbm && b.snrDb + kDbSlack >= decodeSnrDb;
}

std::optional<int> min_tx_power(const CableModel& cable, const ReceiverModel& rx, double distanceM, int minDbm,
                                int maxDbm) {
  for (int p = minDbm; p <= maxDbm; ++p) {
    if (rx.decodable(link_budget(cable, p, distanceM))) return p;
  }
  return std::nullopt;
}

double generalized_gaussian_pdf(double u, double alpha, double sigma) {
  const double lambda = std::sqrt(std::tgamma(3.0 / alpha) / (sigma * sigma * std::tgamma(1.0 / alpha)));
  return alpha * lambda / (2.0 * std::tgamma(1.0 / alpha)) * std::exp(-std::pow(lambda * std::abs(u), alpha));
}

std::vector<double> sample_generalized_gaussian(double alpha, double sigma, std::size_t count, std::mt19937_64& rng) {
  if (!(alpha > 0)) throw Error(ErrorCode::BadShape, "alpha must be > 0");
  if (!(sigma > 0)) throw Error(ErrorCode::BadShape, "sigma must be > 0");
  const double lambda = std::sqrt(std::tgamma(3.0 / alpha) / (sigma * sigma * std::tgamma(1.0 / alpha)));
  std::gamma_distribution<double> gamma(1.0 / alpha, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> out(count);
  for (auto& x : out) {
    const double mag = std::pow(gamma(rng), 1.0 / alpha) / lambda;
    x = sign(rng) ? -mag : mag;
  }
  return out;
}

std::vector<double> sample_generalized_gaussian(double alpha, double sigma, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_generalized_gaussian(alpha, sigma, count, rng);
}

Propagation propagate(const OfdmBurst& burst, const CableModel& cable, double distanceM, double sampleRate,
                      std::uint64_t rngSeed) {
  Propagation out;
  out.budget = link_budget(cable, burst.txPowerDbm, distanceM);
  out.delaySamples = static_cast<std::size_t>(std::llround(distanceM / cable.propagationSpeed * sampleRate));
  const double gain = std::pow(10.0, -cable.attenuationDbPerM * distanceM / 20.0);
  const auto& h = cable.firTaps;
  out.samples.assign(out.delaySamples + burst.samples.size() + h.size() - 1, Complex{});
  for (std::size_t i = 0; i < burst.samples.size(); ++i) {
    const Complex x = burst.samples[i] * gain;
    for (std::size_t j = 0; j < h.size(); ++j) out.samples[out.delaySamples + i + j] += x * h[j];
  }
  const double sigma = cable.noiseSigma();
  if (sigma > 0) {
    std::mt19937_64 rng(rngSeed);
    const auto re = sample_generalized_gaussian(cable.noiseAlpha, sigma, out.samples.size(), rng);
    const auto im = sample_generalized_gaussian(cable.noiseAlpha, sigma, out.samples.size(), rng);
    for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += Complex(re[i], im[i]);
    if (cable.impulseProbability > 0) {
      std::bernoulli_distribution hit(cable.impulseProbability);
      std::bernoulli_distribution sign(0.5);
      for (auto& s : out.samples) {
        if (hit(rng)) s += Complex(sign(rng) ? cable.impulseAmplitude : -cable.impulseAmplitude, 0.0);
      }
    }
  }
  return out;
}

Samples superpose(const std::vector<Transmission>& parts) {
  std::size_t len = 0;
  for (const auto& p : parts) len = std::max(len, p.startSample + p.samples.size());
  Samples out(len);
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.samples.size(); ++i) out[p.startSample + i] += p.samples[i];
  }
  return out;
}

std::vector<Reach> reachability(const CableModel& cable, const ReceiverModel& rx, const std::vector<double>& positions,
                                double maxDbm) {
  std::vector<Reach> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (std::size_t j = 0; j < positions.size(); ++j) {
      if (i == j) continue;
      if (!rx.decodable(link_budget(cable, maxDbm, std::abs(positions[i] - positions[j])))) continue;
      if (j < i)
        ++out[i].upstream;
      else
        ++out[i].downstream;
    }
  }
  return out;
}

std::uint64_t link_seed(std::uint64_t scenarioSeed, std::uint64_t linkId) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = scenarioSeed + 0x9E3779B97F4A7C15ull * (linkId + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace bucketline
