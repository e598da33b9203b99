#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "bucketline/error.hpp"
#include "bucketline/qam.hpp"
#include "bucketline/sim.hpp"

namespace bucketline {

std::string_view to_string(Fidelity f) { return f == Fidelity::Waveform ? "waveform" : "abstract"; }

std::string_view to_string(FaultKind k) {
  switch (k) {
    case FaultKind::NodeFail: return "NodeFail";
    case FaultKind::NodeOrphan: return "NodeOrphan";
    case FaultKind::CoordinatorFail: return "CoordinatorFail";
    case FaultKind::LinkCut: return "LinkCut";
  }
  return "?";
}

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::ConfigError, key + ": " + why);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || !std::isfinite(out)) bad(key, "expected a number, got '" + v + "'");
  return out;
}

template <class T>
T to_int(const std::string& key, const std::string& v) {
  T out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) bad(key, "expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, "expected true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + num(v[i]);
  return out;
}

Fault to_fault(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  std::string time, kind, target;
  if (!(is >> time >> kind >> target)) bad(key, "expected '<time_s> <kind> <target>'");
  Fault f;
  f.timeS = to_double(key, time);
  if (kind == "NodeFail")
    f.kind = FaultKind::NodeFail;
  else if (kind == "NodeOrphan")
    f.kind = FaultKind::NodeOrphan;
  else if (kind == "CoordinatorFail")
    f.kind = FaultKind::CoordinatorFail;
  else if (kind == "LinkCut")
    f.kind = FaultKind::LinkCut;
  else
    bad(key, "unknown fault kind '" + kind + "'");
  if (f.kind == FaultKind::LinkCut) {
    const auto dash = target.find('-');
    if (dash == std::string::npos) bad(key, "LinkCut target must be '<a>-<b>'");
    f.target = to_int<std::uint32_t>(key, target.substr(0, dash));
    f.peer = to_int<std::uint32_t>(key, target.substr(dash + 1));
  } else {
    f.target = to_int<std::uint32_t>(key, target);
  }
  return f;
}

std::string render_fault(const Fault& f) {
  std::string t = std::to_string(f.target);
  if (f.kind == FaultKind::LinkCut) t += "-" + std::to_string(f.peer);
  return num(f.timeS) + " " + std::string(to_string(f.kind)) + " " + t;
}

struct Field {
  std::function<void(Scenario&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const Scenario&)> get;
};

template <class T>
Field real(T Scenario::*member) {
  return {[member](Scenario& s, const std::string& k, const std::string& v) { s.*member = to_double(k, v); },
          [member](const Scenario& s) { return num(s.*member); }};
}

template <class T>
Field integer(T Scenario::*member) {
  return {[member](Scenario& s, const std::string& k, const std::string& v) { s.*member = to_int<T>(k, v); },
          [member](const Scenario& s) { return std::to_string(s.*member); }};
}

template <class Sub, class T>
Field sub_real(Sub Scenario::*sub, T Sub::*member) {
  return {[=](Scenario& s, const std::string& k, const std::string& v) { s.*sub.*member = to_double(k, v); },
          [=](const Scenario& s) { return num(s.*sub.*member); }};
}

template <class Sub, class T>
Field sub_int(Sub Scenario::*sub, T Sub::*member) {
  return {[=](Scenario& s, const std::string& k, const std::string& v) { s.*sub.*member = to_int<T>(k, v); },
          [=](const Scenario& s) { return std::to_string(s.*sub.*member); }};
}

Field boolean(bool Scenario::*member) {
  return {[member](Scenario& s, const std::string& k, const std::string& v) { s.*member = to_bool(k, v); },
          [member](const Scenario& s) { return std::string(s.*member ? "true" : "false"); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["name"] = {[](Scenario& s, const std::string&, const std::string& v) { s.name = v; },
                 [](const Scenario& s) { return s.name; }};
    t["nodes"] = integer(&Scenario::nodeCount);
    t["spacing_m"] = real(&Scenario::spacingM);
    t["topology.positions_m"] = {
        [](Scenario& s, const std::string& k, const std::string& v) { s.positionsM = to_list(k, v); },
        [](const Scenario& s) { return list(s.positionsM); }};
    t["fidelity"] = {[](Scenario& s, const std::string& k, const std::string& v) {
                       if (v == "waveform")
                         s.fidelity = Fidelity::Waveform;
                       else if (v == "abstract")
                         s.fidelity = Fidelity::Abstract;
                       else
                         bad(k, "expected waveform or abstract, got '" + v + "'");
                     },
                     [](const Scenario& s) { return std::string(to_string(s.fidelity)); }};
    t["seed"] = integer(&Scenario::rngSeed);
    t["duration_s"] = real(&Scenario::durationS);
    t["cycles"] = integer(&Scenario::cycles);
    t["cycle_period_s"] = real(&Scenario::cyclePeriodS);
    t["preassigned"] = boolean(&Scenario::preassigned);
    t["standby"] = boolean(&Scenario::standby);
    t["event_window_s"] = real(&Scenario::eventWindowS);
    t["orphan_restore_s"] = real(&Scenario::orphanRestoreS);
    t["deadline_factor"] = real(&Scenario::deadlineFactor);
    t["log.events"] = {[](Scenario& s, const std::string& k, const std::string& v) {
                         if (v == "all")
                           s.logLevel = LogLevel::All;
                         else if (v == "protocol")
                           s.logLevel = LogLevel::Protocol;
                         else if (v == "cycles")
                           s.logLevel = LogLevel::Cycles;
                         else
                           bad(k, "expected all, protocol or cycles, got '" + v + "'");
                       },
                       [](const Scenario& s) {
                         return std::string(s.logLevel == LogLevel::All        ? "all"
                                            : s.logLevel == LogLevel::Protocol ? "protocol"
                                                                               : "cycles");
                       }};

    t["timing.t_acq_s"] = real(&Scenario::tAcqS);
    t["timing.t_nn_s"] = real(&Scenario::tNnS);
    t["timing.t_il_fraction"] = real(&Scenario::tIlFraction);
    t["timing.t_il_s"] = real(&Scenario::tIlS);

    t["cable.attenuation_db_per_m"] = sub_real(&Scenario::cable, &CableModel::attenuationDbPerM);
    t["cable.propagation_speed"] = sub_real(&Scenario::cable, &CableModel::propagationSpeed);
    t["cable.noise_alpha"] = sub_real(&Scenario::cable, &CableModel::noiseAlpha);
    t["cable.noise_floor_dbm"] = sub_real(&Scenario::cable, &CableModel::noiseFloorDbm);
    t["cable.noise"] = {
        [](Scenario& s, const std::string& k, const std::string& v) { s.cable.noiseEnabled = to_bool(k, v); },
        [](const Scenario& s) { return std::string(s.cable.noiseEnabled ? "true" : "false"); }};
    t["cable.fir_taps"] = {[](Scenario& s, const std::string& k, const std::string& v) {
                             s.cable.firTaps.clear();
                             for (double x : to_list(k, v)) s.cable.firTaps.emplace_back(x, 0.0);
                           },
                           [](const Scenario& s) {
                             std::vector<double> re;
                             for (const auto& c : s.cable.firTaps) re.push_back(c.real());
                             return list(re);
                           }};
    t["cable.impulse_probability"] = sub_real(&Scenario::cable, &CableModel::impulseProbability);
    t["cable.impulse_amplitude"] = sub_real(&Scenario::cable, &CableModel::impulseAmplitude);

    t["receiver.sensitivity_dbm"] = sub_real(&Scenario::receiver, &ReceiverModel::sensitivityDbm);
    t["receiver.decode_snr_db"] = sub_real(&Scenario::receiver, &ReceiverModel::decodeSnrDb);
    t["receiver.fec_gain_db"] = real(&Scenario::fecGainDb);

    t["power.min_dbm"] = integer(&Scenario::minPowerDbm);
    t["power.max_dbm"] = integer(&Scenario::maxPowerDbm);

    t["ofdm.fft_size"] = sub_int(&Scenario::ofdm, &OfdmConfig::fftSize);
    t["ofdm.subcarrier_spacing_hz"] = sub_real(&Scenario::ofdm, &OfdmConfig::subcarrierSpacingHz);
    t["ofdm.cp_fraction"] = sub_real(&Scenario::ofdm, &OfdmConfig::cyclicPrefixFraction);
    t["ofdm.data_carriers"] = sub_int(&Scenario::ofdm, &OfdmConfig::dataCarrierCount);
    t["ofdm.pilot_carriers"] = sub_int(&Scenario::ofdm, &OfdmConfig::pilotCarrierCount);
    t["ofdm.qam_order"] = sub_int(&Scenario::ofdm, &OfdmConfig::qamOrder);
    t["ofdm.sample_rate"] = sub_real(&Scenario::ofdm, &OfdmConfig::sampleRate);
    t["ofdm.preamble_symbols"] = sub_int(&Scenario::ofdm, &OfdmConfig::preambleSymbols);
    t["ofdm.sfd_symbols"] = sub_int(&Scenario::ofdm, &OfdmConfig::sfdSymbols);
    t["ofdm.payload_symbols"] = sub_int(&Scenario::ofdm, &OfdmConfig::payloadSymbols);
    t["ofdm.detect_threshold"] = sub_real(&Scenario::ofdm, &OfdmConfig::detectThreshold);

    t["codec.mpdu_len"] = sub_int(&Scenario::codec, &CodecConfig::mpduLen);
    t["codec.scrambler_seed"] = sub_int(&Scenario::codec, &CodecConfig::scramblerSeed);
    t["codec.interleaver_rows"] = sub_int(&Scenario::codec, &CodecConfig::interleaverRows);
    t["codec.code_rate"] = {[](Scenario& s, const std::string& k, const std::string& v) {
                              const auto slash = v.find('/');
                              if (slash == std::string::npos) bad(k, "expected k/m, got '" + v + "'");
                              s.codec.codeRate.k = to_int<unsigned>(k, trim(v.substr(0, slash)));
                              s.codec.codeRate.m = to_int<unsigned>(k, trim(v.substr(slash + 1)));
                            },
                            [](const Scenario& s) {
                              return std::to_string(s.codec.codeRate.k) + "/" + std::to_string(s.codec.codeRate.m);
                            }};

    t["csma.cifs_us"] = sub_real(&Scenario::csma, &CsmaParams::cifsUs);
    t["csma.prp_slots"] = sub_int(&Scenario::csma, &CsmaParams::prpSlots);
    t["csma.rifs_us"] = sub_real(&Scenario::csma, &CsmaParams::rifsUs);
    t["csma.backoff_slot_us"] = sub_real(&Scenario::csma, &CsmaParams::backoffSlotUs);
    t["csma.cw_min"] = sub_int(&Scenario::csma, &CsmaParams::cwMin);
    t["csma.cw_max"] = sub_int(&Scenario::csma, &CsmaParams::cwMax);

    t["failover.heartbeat_cycles"] = real(&Scenario::heartbeatCycles);
    t["failover.missed_heartbeats"] = integer(&Scenario::missedHeartbeats);
    return t;
  }();
  return table;
}

void set_key(Scenario& s, std::map<unsigned, Fault>& faults, const std::string& key, const std::string& value) {
  if (key.rfind("fault.", 0) == 0) {
    const auto idx = to_int<unsigned>(key, key.substr(6));
    faults[idx] = to_fault(key, value);
    return;
  }
  const auto it = fields().find(key);
  if (it == fields().end()) bad(key, "unknown key");
  it->second.set(s, key, value);
}

std::pair<std::string, std::string> split_kv(const std::string& line, const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) bad(where, "expected 'key = value'");
  auto key = trim(std::string_view(line).substr(0, eq));
  auto value = trim(std::string_view(line).substr(eq + 1));
  if (key.empty()) bad(where, "empty key");
  return {key, value};
}

}  // namespace

std::vector<double> Scenario::sensor_positions() const {
  if (!positionsM.empty()) return positionsM;
  std::vector<double> out(nodeCount);
  for (std::uint32_t i = 0; i < nodeCount; ++i) out[i] = spacingM * (i + 1);
  return out;
}

void Scenario::validate() const {
  if (nodeCount < 1 || nodeCount >= Address::kUnassignedNode - 1) bad("nodes", "must be in [1, 16777213]");
  if (!(spacingM > 0)) bad("spacing_m", "must be > 0");
  if (!positionsM.empty()) {
    if (positionsM.size() != nodeCount) bad("topology.positions_m", "needs exactly one position per node");
    double prev = 0;
    for (double p : positionsM) {
      if (!(p > prev)) bad("topology.positions_m", "positions must be > 0 and strictly increasing");
      prev = p;
    }
  }
  if (!(tAcqS >= 0)) bad("timing.t_acq_s", "must be >= 0");
  if (!(tNnS >= 0)) bad("timing.t_nn_s", "must be >= 0");
  if (!(tIlFraction >= 0)) bad("timing.t_il_fraction", "must be >= 0");
  if (fidelity == Fidelity::Waveform && tNn() + 1e-12 < ofdm.burstS())
    bad("timing.t_nn_s", "waveform fidelity needs T_n-n >= the bucket duration " + num(ofdm.burstS()));
  if (minPowerDbm < -50 || maxPowerDbm > 10 || minPowerDbm > maxPowerDbm)
    bad("power.min_dbm", "power range must satisfy -50 <= min <= max <= 10");
  if (!(durationS >= 0)) bad("duration_s", "must be >= 0");
  if (durationS == 0 && cycles < 1) bad("cycles", "must be >= 1 when duration_s is 0");
  if (!(cyclePeriodS >= 0)) bad("cycle_period_s", "must be >= 0");
  if (!(deadlineFactor >= 1)) bad("deadline_factor", "must be >= 1");
  if (!(orphanRestoreS >= 0)) bad("orphan_restore_s", "must be >= 0");
  if (!(heartbeatCycles > 0)) bad("failover.heartbeat_cycles", "must be > 0");
  if (missedHeartbeats < 1) bad("failover.missed_heartbeats", "must be >= 1");
  if (!(fecGainDb >= 0)) bad("receiver.fec_gain_db", "must be >= 0");
  if (!qam_order_supported(ofdm.qamOrder)) bad("ofdm.qam_order", "unsupported order " + std::to_string(ofdm.qamOrder));
  try {
    ofdm.validate();
    codec.validate();
    cable.validate(ofdm.cpLength());
    csma.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  double prev = 0;
  for (std::size_t i = 0; i < faults.size(); ++i) {
    const auto& f = faults[i];
    const std::string key = "fault." + std::to_string(i);
    if (!(f.timeS >= prev)) bad(key, "faults must be sorted by time and non-negative");
    prev = f.timeS;
    const bool coordinator = f.kind == FaultKind::CoordinatorFail;
    if (coordinator ? f.target != 0 : (f.target < 1 || f.target > nodeCount))
      throw Error(ErrorCode::UnknownTarget, key + ": no station at position " + std::to_string(f.target));
    if (f.kind == FaultKind::LinkCut && (f.peer > nodeCount || f.peer == f.target))
      throw Error(ErrorCode::UnknownTarget, key + ": no link " + std::to_string(f.target) + "-" + std::to_string(f.peer));
  }
}

Scenario parse_scenario(const std::string& text) {
  Scenario s;
  std::map<unsigned, Fault> faults;
  std::istringstream is(text);
  std::string line;
  unsigned lineNo = 0;
  while (std::getline(is, line)) {
    ++lineNo;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    auto [key, value] = split_kv(line, "line " + std::to_string(lineNo));
    set_key(s, faults, key, value);
  }
  for (auto& [idx, f] : faults) s.faults.push_back(f);
  s.validate();
  return s;
}

void apply_override(Scenario& s, const std::string& keyEqualsValue) {
  auto [key, value] = split_kv(keyEqualsValue, "override '" + keyEqualsValue + "'");
  std::map<unsigned, Fault> faults;
  for (unsigned i = 0; i < s.faults.size(); ++i) faults[i] = s.faults[i];
  set_key(s, faults, key, value);
  s.faults.clear();
  for (auto& [idx, f] : faults) s.faults.push_back(f);
  s.validate();
}

Scenario builtin_scenario(const std::string& name) {
  if (name == "default") {
    Scenario s;
    s.name = "default";
    return s;
  }
  if (name == "oilwell1000") {
    Scenario s;
    s.name = "oilwell1000";
    s.nodeCount = 1000;
    s.spacingM = 10.0;
    s.fidelity = Fidelity::Abstract;
    s.preassigned = true;
    s.tNnS = 0.33e-3;
    s.tIlS = 0.033e-3;
    s.tAcqS = 1.0;
    s.logLevel = LogLevel::Cycles;
    return s;
  }
  throw Error(ErrorCode::ConfigError, "scenario: no built-in scenario named '" + name + "'");
}

Scenario load_scenario(const std::string& pathOrBuiltin) {
  std::ifstream in(pathOrBuiltin);
  if (!in) {
    if (pathOrBuiltin == "default" || pathOrBuiltin == "oilwell1000") return builtin_scenario(pathOrBuiltin);
    throw Error(ErrorCode::ConfigError, "scenario: cannot open '" + pathOrBuiltin + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string render_scenario(const Scenario& s) {
  std::string out;
  for (const auto& [key, field] : fields()) {
    if (key == "topology.positions_m" && s.positionsM.empty()) continue;
    out += key + " = " + field.get(s) + "\n";
  }
  for (std::size_t i = 0; i < s.faults.size(); ++i)
    out += "fault." + std::to_string(i) + " = " + render_fault(s.faults[i]) + "\n";
  return out;
}

}  // namespace bucketline
