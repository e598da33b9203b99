#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "bucketline/analytics.hpp"
#include "bucketline/qam.hpp"
#include "bucketline/sim.hpp"

namespace bucketline {

namespace {

std::string quote_csv(const std::string& v) {
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string seconds(std::int64_t ns) {
  char t[32];
  std::snprintf(t, sizeof t, "%lld.%09lld", static_cast<long long>(ns / 1'000'000'000),
                static_cast<long long>(ns % 1'000'000'000));
  return t;
}

}  // namespace

std::string to_jsonl(const EventLog& log) {
  std::string out;
  for (const auto& e : log) {
    out += "{\"t\":" + seconds(e.tNs);
    out += ",\"seq\":" + std::to_string(e.seq);
    out += ",\"kind\":\"" + std::string(to_string(e.kind)) + "\"";
    out += ",\"actor\":" + nlohmann::json(e.actor).dump();
    out += ",\"details\":" + (e.details.is_null() ? std::string("{}") : e.details.dump());
    out += "}\n";
  }
  return out;
}


std::string to_events_csv(const EventLog& log) {
  std::string out = "t,seq,kind,actor,details\n";
  for (const auto& e : log) {
    out += seconds(e.tNs) + ',' + std::to_string(e.seq) + ',' + std::string(to_string(e.kind)) + ',' + e.actor + ',' +
           quote_csv(e.details.is_null() ? std::string("{}") : e.details.dump()) + '\n';
  }
  return out;
}

std::string metrics_csv(const Metrics& m) {
  std::ostringstream os;
  os.precision(12);
  os << "key,value\n";
  os << "simulated_s," << m.simulatedS << '\n';
  os << "transmissions," << m.transmissions << '\n';
  os << "receptions," << m.receptions << '\n';
  os << "bucket_errors," << m.bucketErrors << '\n';
  os << "bucket_error_rate," << m.bucketErrorRate() << '\n';
  os << "collisions," << m.collisions << '\n';
  os << "retries," << m.retries << '\n';
  os << "cycles," << m.cycles.size() << '\n';
  for (const auto& c : m.cycles) {
    const std::string p = std::string("cycle.") + (c.kind == CycleKind::Status ? "status" : std::to_string(c.index));
    os << p << ".start_s," << c.startS << '\n';
    os << p << ".latency_s," << c.latencyS << '\n';
    os << p << ".delivered," << c.delivered << '\n';
    os << p << ".lost_to_faults," << c.lostToFaults << '\n';
    os << p << ".timed_out," << c.timedOut << '\n';
  }
  for (std::size_t i = 0; i < m.energy.size(); ++i) {
    const auto& e = m.energy[i];
    const std::string p = "energy." + std::to_string(i);
    os << p << ".tx_s," << e.txS << '\n';
    os << p << ".idle_s," << e.idleS << '\n';
    os << p << ".sleep_s," << e.sleepS << '\n';
    os << p << ".joules," << e.joules << '\n';
  }
  return os.str();
}

std::vector<LatencyComparison> verify_against_analytics(const Metrics& m, const Scenario& s) {
  const double analytic = latency_estimate({s.nodeCount, s.tNn(), s.tIl(), s.tAcqS});
  std::vector<LatencyComparison> out;
  for (const auto& c : m.cycles) {
    if (c.kind != CycleKind::Data) continue;
    LatencyComparison cmp;
    cmp.cycle = c.index;
    cmp.simulatedS = c.latencyS;
    cmp.analyticS = analytic;
    cmp.relativeError = std::abs(c.latencyS - analytic) / analytic;
    cmp.diverged = cmp.relativeError > 0.01 || c.timedOut > 0;
    out.push_back(cmp);
  }
  return out;
}

std::string latency_csv(const std::vector<LatencyComparison>& rows) {
  std::ostringstream os;
  os.precision(12);
  os << "cycle,simulated_s,analytic_s,relative_error,diverged\n";
  for (const auto& r : rows) {
    os << r.cycle << ',' << r.simulatedS << ',' << r.analyticS << ',' << r.relativeError << ','
       << (r.diverged ? "true" : "false") << '\n';
  }
  return os.str();
}

std::string network_summary(const Scenario& s) {
  const auto& o = s.ofdm;
  const double bandwidth = 2.0 * static_cast<double>(o.fftSize) * o.subcarrierSpacingHz;
  const double allocLo = static_cast<double>(o.fftSize) / 2.0;
  const double rate = bucket_rate(o.extendedSymbolS(), static_cast<double>(o.symbolCount()));
  const double profileS = s.nodeCount / rate;
  const int powerBits = static_cast<int>(std::ceil(std::log2(s.maxPowerDbm - s.minPowerDbm + 1)));
  const std::string mod = o.qamOrder == 2 ? "BPSK" : std::to_string(o.qamOrder) + "-QAM";
  const unsigned g = std::gcd(s.codec.codeRate.k, s.codec.codeRate.m);

  std::ostringstream os;
  auto row = [&](const std::string& k, const std::string& v) { os << k << std::string(32 - k.size(), ' ') << v << '\n'; };
  auto fmt = [](const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return std::string(buf);
  };
  row("Property", "Value");
  row("Cable", "Coaxial cable");
  row("Channel bandwidth", fmt("%.4g MHz", bandwidth / 1e6));
  row("Subcarrier bandwidth", fmt("%.3f kHz", o.subcarrierSpacingHz / 1e3));
  row("Total number of subcarriers", std::to_string(2 * o.fftSize));
  row("Total OFDM subcarriers", std::to_string(o.usedCarriers()));
  row("Data / pilot carriers", std::to_string(o.dataCarrierCount) + " / " + std::to_string(o.pilotCarrierCount));
  row("Channel allocation", fmt("k = %.0f", allocLo) + fmt(" -- %.0f", allocLo + o.fftSize) +
                                fmt(" (%.4g MHz", allocLo * o.subcarrierSpacingHz / 1e6) +
                                fmt(" -- %.4g MHz)", (allocLo + o.fftSize) * o.subcarrierSpacingHz / 1e6));
  row("Modulation", mod);
  row("FFT", std::to_string(o.fftSize));
  row("Guard interval (cyclic prefix)", fmt("%g%%", o.cyclicPrefixFraction * 100.0));
  row("Data rate (bucket/s)", fmt("%.0f", std::floor(rate)) + fmt(" (%.4f)", rate));
  row("Dataset profile transmission", fmt("%.3f s", profileS) + " for " + std::to_string(s.nodeCount) + " nodes" +
                                          (profileS < 1.0 ? " (< 1 s)" : ""));
  row("Code rate", std::to_string(s.codec.codeRate.k / g) + "/" + std::to_string(s.codec.codeRate.m / g));
  row("Transmission power", "-50 dBm -- " + std::to_string(s.maxPowerDbm) + " dBm");
  row("Discovery ramp", std::to_string(s.minPowerDbm) + " dBm -- " + std::to_string(s.maxPowerDbm) + " dBm");
  row("Output power step (" + std::to_string(powerBits) + " bits)", "1 dB");
  row("PHY rate", fmt("%.4g Mbit/s", phy_rate(RateInputs::from(o, s.codec)) / 1e6));
  return os.str();
}

OfdmBurst reference_burst(const Scenario& s) {
  Mpdu m;
  m.timestampMs = 1;
  m.originalSource = m.currentSource = Address::coordinator();
  m.finalDestination = {1, Address::kUnassignedNode};
  m.currentDestination = {1, 1};
  m.msdu = Management{Command::GlobalDataRequest, {}};
  return modulate_bucket(serialize_mpdu(m, s.codec), s.ofdm, s.codec, s.minPowerDbm);
}

std::vector<SelfCheck> self_checks(const Scenario& s) {
  std::vector<SelfCheck> out;
  auto add = [&](std::string name, bool ok, const char* f, double a, double b) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a, b);
    out.push_back({std::move(name), ok, buf});
  };
  const Scenario d;
  const double phy = phy_rate(RateInputs::from(d.ofdm, d.codec));
  add("phy_rate", phy == 40e6, "%.6g bit/s (expected %.6g)", phy, 40e6);
  const double br = bucket_rate(25.6e-6, 13);
  add("bucket_rate", br >= 3004 && br <= 3005, "%.3f bucket/s (expected %.0f..3005)", br, 3004);
  const double lat = latency_estimate({1000, 0.33e-3, 0.033e-3, 1.0});
  add("latency_closed_form", std::abs(lat - 2.088) / 2.088 < 5e-4, "%.5f s (expected %.3f s)", lat, 2.088);

  const auto run = run_scenario(s);
  const auto cmp = verify_against_analytics(run.metrics, s);
  if (cmp.empty()) out.push_back({"sim_vs_formula", false, "no completed data cycle"});
  for (const auto& c : cmp) {
    add("sim_vs_formula.cycle" + std::to_string(c.cycle), !c.diverged, "simulated %.6f s vs analytic %.6f s",
        c.simulatedS, c.analyticS);
  }
  return out;
}

std::string self_checks_csv(const std::vector<SelfCheck>& checks) {
  std::string out = "check,passed,detail\n";
  for (const auto& c : checks) out += c.name + ',' + (c.passed ? "true" : "false") + ',' + quote_csv(c.detail) + '\n';
  return out;
}

}  // namespace bucketline
