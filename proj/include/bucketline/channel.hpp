#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "bucketline/ofdm.hpp"

namespace bucketline {

/// Cable medium shared by all nodes. Noise is referenced to a fixed floor
/// along the cable; each real dimension carries variance floor/2 so the
/// complex noise power equals 2 sigma^2 = 10^(noiseFloorDbm/10) mW.
struct CableModel {
  double attenuationDbPerM = 0.3;
  double propagationSpeed = 2.0e8;
  Samples firTaps{Complex(1.0, 0.0)};
  double noiseAlpha = 2.0;
  double noiseFloorDbm = -5.0;  // 10 dBm reference minus 15 dB transmit SNR
  bool noiseEnabled = true;
  // Optional Bernoulli impulse mixer on top of the background noise.
  double impulseProbability = 0.0;
  double impulseAmplitude = 0.0;  // sqrt(mW), per real dimension

  static double floor_from_tx_snr(double txPowerDbm, double txSnrDb) { return txPowerDbm - txSnrDb; }

  double noiseSigma() const;
  void validate(std::size_t cpLength) const;
};

struct LinkBudget {
  double txPowerDbm = 0;
  double distanceM = 0;
  double rxPowerDbm = 0;
  double snrDb = 0;
};

LinkBudget link_budget(const CableModel& cable, double txPowerDbm, double distanceM);

/// Decodability rule shared by every fidelity level: the received power must
/// clear the sensitivity floor and the SNR must reach the decode threshold.
struct ReceiverModel {
  double sensitivityDbm = -50.0;
  double decodeSnrDb = 0.0;
  bool decodable(const LinkBudget& b) const;
};

/// Smallest power on the 1 dB grid [minDbm, maxDbm] that reaches `distanceM`,
/// or no value when even maxDbm does not.
std::optional<int> min_tx_power(const CableModel& cable, const ReceiverModel& rx, double distanceM, int minDbm,
                                int maxDbm);

/// Generalized Gaussian density p(u | 0, sigma, alpha).
double generalized_gaussian_pdf(double u, double alpha, double sigma);

/// I.i.d. generalized Gaussian samples: sign * Gamma(1/alpha)^(1/alpha) / Lambda.
/// Throws BadShape for alpha <= 0 or sigma <= 0.
std::vector<double> sample_generalized_gaussian(double alpha, double sigma, std::size_t count, std::uint64_t seed);
std::vector<double> sample_generalized_gaussian(double alpha, double sigma, std::size_t count, std::mt19937_64& rng);

struct Propagation {
  Samples samples;
  LinkBudget budget;
  std::size_t delaySamples = 0;
};

/// Attenuate by the cable loss, delay by round(distance / speed * fs)
/// samples, convolve with the FIR taps and add independent noise on I and Q.
/// Output length is delay + |burst| + |taps| - 1.
Propagation propagate(const OfdmBurst& burst, const CableModel& cable, double distanceM, double sampleRate,
                      std::uint64_t rngSeed);

struct Transmission {
  std::size_t startSample = 0;
  Samples samples;
};

/// Sample-wise sum on a common clock; length reaches the latest end.
Samples superpose(const std::vector<Transmission>& parts);

/// Counts of reachable neighbours on each side for nodes at `positions`
/// (metres along the cable, ascending) when transmitting at maxDbm.
struct Reach {
  std::size_t upstream = 0;
  std::size_t downstream = 0;
};
std::vector<Reach> reachability(const CableModel& cable, const ReceiverModel& rx, const std::vector<double>& positions,
                                double maxDbm);

/// Derives a per-link RNG seed from a scenario seed and a link identifier.
std::uint64_t link_seed(std::uint64_t scenarioSeed, std::uint64_t linkId);

}  // namespace bucketline
