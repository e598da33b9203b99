#include <algorithm>
#include <map>

#include "bucketline/error.hpp"
#include "bucketline/protocol.hpp"

namespace bucketline {

void CsmaParams::validate() const {
  if (!(cifsUs > 0 && rifsUs > 0 && backoffSlotUs > 0) || prpSlots == 0 || cwMin == 0 || cwMin > cwMax) {
    throw Error(ErrorCode::ConfigError, "csma: timings must be positive and 0 < cw_min <= cw_max");
  }
}

Arbitration arbitrate(const std::vector<TransmitIntent>& pending, ArbitrationPhase phase, const CsmaParams& csma,
                      double bucketUs, std::mt19937_64& rng) {
  Arbitration out;
  // Lower key wins the priority resolution period.
  auto key = [&](const TransmitIntent& t) -> std::pair<int, long long> {
    const auto depth = static_cast<long long>(t.depth);
    return {t.coordinatorTraffic ? 0 : 1, phase == ArbitrationPhase::MeasurementCycle ? depth : -depth};
  };
  std::map<std::pair<int, long long>, std::vector<TransmitIntent>> classes;
  for (const auto& t : pending) {
    if (phase == ArbitrationPhase::MeasurementCycle && t.eventDriven && !t.coordinatorTraffic) {
      out.deferred.push_back(t.id);
    } else {
      classes[key(t)].push_back(t);
    }
  }

  const double prpUs = csma.prpSlots * csma.backoffSlotUs;
  double t = 0;
  for (auto& [k, members] : classes) {
    struct Contender {
      TransmitIntent intent;
      unsigned cw;
      unsigned collisions = 0;
    };
    std::vector<Contender> left;
    for (const auto& m : members) left.push_back({m, csma.cwMin});
    while (!left.empty()) {
      if (left.size() == 1) {
        // An idle medium with a single contender needs no backoff.
        t += csma.cifsUs + prpUs;
        out.order.push_back({left[0].intent.id, t, 0, left[0].collisions});
        t += bucketUs + csma.rifsUs + bucketUs;
        break;
      }
      std::vector<unsigned> draws(left.size());
      for (std::size_t i = 0; i < left.size(); ++i) {
        draws[i] = static_cast<unsigned>(std::uniform_int_distribution<unsigned>(0, left[i].cw - 1)(rng));
      }
      const unsigned lo = *std::min_element(draws.begin(), draws.end());
      const auto ties = static_cast<std::size_t>(std::count(draws.begin(), draws.end(), lo));
      t += csma.cifsUs + prpUs + lo * csma.backoffSlotUs;
      if (ties > 1) {
        ++out.collisionEpochs;
        for (std::size_t i = 0; i < left.size(); ++i) {
          if (draws[i] == lo) {
            ++left[i].collisions;
            left[i].cw = std::min(2 * left[i].cw, csma.cwMax);
          }
        }
        t += bucketUs;
        continue;
      }
      const auto w = static_cast<std::size_t>(std::find(draws.begin(), draws.end(), lo) - draws.begin());
      out.order.push_back({left[w].intent.id, t, lo, left[w].collisions});
      t += bucketUs + csma.rifsUs + bucketUs;
      left.erase(left.begin() + static_cast<std::ptrdiff_t>(w));
    }
  }
  return out;
}

}  // namespace bucketline
