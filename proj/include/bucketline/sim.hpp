#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bucketline/channel.hpp"
#include "bucketline/events.hpp"
#include "bucketline/mpdu.hpp"
#include "bucketline/ofdm.hpp"
#include "bucketline/protocol.hpp"

namespace bucketline {

enum class Fidelity { Waveform, Abstract };
enum class FaultKind { NodeFail, NodeOrphan, CoordinatorFail, LinkCut };
enum class LogLevel { All, Protocol, Cycles };

std::string_view to_string(Fidelity f);
std::string_view to_string(FaultKind k);

/// Targets are queue positions: 0 is the coordinator, 1..N the sensor nodes.
/// LinkCut severs the single link between `target` and `peer`.
struct Fault {
  double timeS = 0;
  FaultKind kind = FaultKind::NodeFail;
  std::uint32_t target = 0;
  std::uint32_t peer = 0;
};

struct Scenario {
  std::string name = "custom";
  std::uint32_t nodeCount = 8;
  double spacingM = 10.0;
  std::vector<double> positionsM;  // explicit sensor positions; overrides spacing when set
  CableModel cable;
  ReceiverModel receiver;
  double fecGainDb = 20.0;  // coding gain credited to the abstract loss model
  OfdmConfig ofdm;
  CodecConfig codec;
  CsmaParams csma;
  double tAcqS = 1.0;
  double tNnS = 0.0;  // 0 = the waveform bucket duration
  double tIlFraction = 0.1;
  double tIlS = -1.0;  // negative = tIlFraction * T_n-n
  int minPowerDbm = -5;
  int maxPowerDbm = 10;
  Fidelity fidelity = Fidelity::Abstract;
  std::vector<Fault> faults;
  std::uint64_t rngSeed = 1;
  double durationS = 0.0;  // 0 = run `cycles` measurement cycles
  std::uint32_t cycles = 1;
  double cyclePeriodS = 0.0;  // 0 = back to back after the event window
  double eventWindowS = -1.0;  // negative = node count x bucket duration
  double deadlineFactor = 1.5;
  double orphanRestoreS = 5.0;
  bool preassigned = false;
  bool standby = false;
  double heartbeatCycles = 10.0;
  unsigned missedHeartbeats = 3;
  LogLevel logLevel = LogLevel::All;

  double tNn() const { return tNnS > 0 ? tNnS : ofdm.burstS(); }
  double tIl() const { return tIlS >= 0 ? tIlS : tIlFraction * tNn(); }
  /// Sensor positions in metres (index 0 is node 1); the coordinator is at 0.
  std::vector<double> sensor_positions() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Flat `dotted.key = value` text, one entry per line, `#` comments.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& pathOrBuiltin);
/// Applies one `key=value` override on top of a parsed scenario.
void apply_override(Scenario& s, const std::string& keyEqualsValue);
/// The 1000-node oil-well deployment: abstract fidelity, preassigned tables.
Scenario builtin_scenario(const std::string& name);
/// Canonical text form; parse_scenario(render_scenario(s)) reproduces s.
std::string render_scenario(const Scenario& s);

struct Event {
  std::int64_t tNs = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::StateChange;
  std::string actor;
  nlohmann::json details;
};

using EventLog = std::vector<Event>;

/// One object per line with fields t, seq, kind, actor, details.
std::string to_jsonl(const EventLog& log);
/// Same records as CSV: t,seq,kind,actor,details (details as quoted JSON).
std::string to_events_csv(const EventLog& log);

struct NodeEnergy {
  double txS = 0;
  double idleS = 0;
  double sleepS = 0;
  double joules = 0;
};

/// Supply and per-state currents used for the energy counter.
struct PowerProfile {
  double supplyV = 5.0;
  double txA = 20e-3;
  double idleA = 1e-3;
  double sleepA = 10e-6;
};

struct CycleMetrics {
  std::uint64_t index = 0;
  CycleKind kind = CycleKind::Data;
  double startS = 0;
  double latencyS = 0;
  std::uint32_t delivered = 0;
  std::uint32_t lostToFaults = 0;
  std::uint32_t timedOut = 0;
  std::vector<std::uint32_t> arrivalOrder;
};

struct Metrics {
  std::vector<CycleMetrics> cycles;
  std::uint64_t transmissions = 0;
  std::uint64_t receptions = 0;  // link-budget decodable receptions delivered to the decoder
  std::uint64_t bucketErrors = 0;
  std::uint64_t collisions = 0;
  std::uint64_t retries = 0;
  std::vector<NodeEnergy> energy;  // index 0 = coordinator
  double simulatedS = 0;

  double bucketErrorRate() const {
    return receptions ? static_cast<double>(bucketErrors) / static_cast<double>(receptions) : 0.0;
  }
};

/// Flat key,value table.
std::string metrics_csv(const Metrics& m);

struct RunResult {
  EventLog log;
  Metrics metrics;
  std::vector<CycleReport> cycleReports;
  std::optional<AssociationReport> association;
  std::vector<NeighborTable> tables;     // by queue position, 0 = coordinator
  std::vector<Address> addresses;        // by queue position
  std::vector<Phase> phases;             // by queue position
  std::size_t maxLiveMasters = 0;  // most coordinators acting as master at any instant
  std::uint32_t promotions = 0;
  bool halted = false;  // the master failed with no standby to take over
};

RunResult run_scenario(const Scenario& s, const PowerProfile& power = {});

/// Runs discovery and the node-active brigade only. Throws
/// AssociationStalled when fewer than nodeCount addresses were handed out.
RunResult run_association(Scenario s);

struct LatencyComparison {
  std::uint64_t cycle = 0;
  double simulatedS = 0;
  double analyticS = 0;
  double relativeError = 0;
  bool diverged = false;
};

/// Compares each completed data cycle with the closed-form latency using the
/// scenario's own T_n-n, T_IL and T_acq. Divergence means > 1 %.
std::vector<LatencyComparison> verify_against_analytics(const Metrics& m, const Scenario& s);

/// Columns cycle,simulated_s,analytic_s,relative_error,diverged.
std::string latency_csv(const std::vector<LatencyComparison>& rows);

/// Specification summary rows (bandwidth, carriers, rates, power) for a
/// configuration.
std::string network_summary(const Scenario& s);

/// Noise-free burst of the coordinator's opening data request under the
/// scenario's modem settings, at the lowest discovery power.
OfdmBurst reference_burst(const Scenario& s);

struct SelfCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Closed-form numerology checks plus a simulated-vs-analytic latency check
/// of `s`. Any failure is a divergence.
std::vector<SelfCheck> self_checks(const Scenario& s);
/// Columns check,passed,detail.
std::string self_checks_csv(const std::vector<SelfCheck>& checks);

}  // namespace bucketline
