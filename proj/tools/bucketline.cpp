// bucketline: batch front end over the library. Every output is produced by a
// library call; this file only parses flags, picks file names and maps errors
// to exit codes.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "bucketline/analytics.hpp"
#include "bucketline/atomic_file.hpp"
#include "bucketline/error.hpp"
#include "bucketline/sim.hpp"

namespace fs = std::filesystem;
using namespace bucketline;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kDivergence = 2;

struct Options {
  std::string scenario;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> fidelity;
  std::vector<std::string> overrides;
  std::string format = "jsonl";
  bool iq = false;
  std::vector<unsigned> orders = {16};
  std::string snr = "-5:25:0.5";
};

void setup_logging() {
  auto log = spdlog::stderr_color_st("bucketline");
  log->set_pattern("%^%l%$: %v");
  log->set_level(spdlog::level::warn);
  if (const char* env = std::getenv("BUCKETLINE_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only honour recognised ones.
    if (level != spdlog::level::off || std::string(env) == "off") log->set_level(level);
  }
  spdlog::set_default_logger(log);
}

Scenario load(const Options& o, const std::string& fallback) {
  const std::string source = o.scenario.empty() ? fallback : o.scenario;
  Scenario s = load_scenario(source);
  if (o.seed) apply_override(s, "seed=" + std::to_string(*o.seed));
  if (o.fidelity) apply_override(s, "fidelity=" + *o.fidelity);
  for (const auto& kv : o.overrides) apply_override(s, kv);
  s.validate();
  spdlog::info("scenario '{}' from {}: {} nodes, {} fidelity, seed {}", s.name, source, s.nodeCount,
               to_string(s.fidelity), s.rngSeed);
  return s;
}

void emit(const Options& o, const std::string& name, const std::string& contents) {
  const fs::path path = fs::path(o.out) / name;
  fs::create_directories(path.parent_path());
  write_file_atomic(path, contents);
  spdlog::debug("wrote {} ({} bytes)", path.string(), contents.size());
}

RunResult timed_run(const Scenario& s) {
  const auto t0 = std::chrono::steady_clock::now();
  auto r = run_scenario(s);
  spdlog::info("simulated {:.6f} s in {:.3f} s wall", r.metrics.simulatedS,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  for (const auto& e : r.log) {
    if (e.kind == EventKind::Warning) spdlog::warn("t={} ns {}: {}", e.tNs, e.actor, e.details.dump());
  }
  return r;
}

int cmd_simulate(const Options& o) {
  const auto s = load(o, "default");
  const auto r = timed_run(s);
  const auto cmp = verify_against_analytics(r.metrics, s);
  emit(o, "metrics.csv", metrics_csv(r.metrics));
  emit(o, "latency.csv", latency_csv(cmp));
  if (o.format == "jsonl") {
    emit(o, "events.jsonl", to_jsonl(r.log));
  } else {
    emit(o, "events.csv", to_events_csv(r.log));
  }
  if (o.iq) {
    const fs::path path = fs::path(o.out) / "burst.iq";
    fs::create_directories(path.parent_path());
    write_iq_dump(path, reference_burst(s).samples, s.ofdm);
  }
  for (const auto& c : r.metrics.cycles) {
    std::cout << (c.kind == CycleKind::Status ? "status" : "data") << " cycle " << c.index << ": latency "
              << c.latencyS << " s, delivered " << c.delivered << '/' << s.nodeCount << '\n';
  }
  if (r.halted) std::cout << "network halted\n";
  return kOk;
}

int cmd_latency(const Options& o) {
  auto s = load(o, "oilwell1000");
  s.logLevel = LogLevel::Cycles;
  const auto cmp = verify_against_analytics(timed_run(s).metrics, s);
  const auto csv = latency_csv(cmp);
  emit(o, "latency.csv", csv);
  std::cout << csv;
  return kOk;
}

int cmd_rates(const Options& o) {
  const auto s = load(o, "oilwell1000");
  emit(o, "rates.csv", rate_table_csv(s.ofdm, s.codec, {s.nodeCount, s.tNn(), s.tIl(), s.tAcqS}));
  const auto summary = network_summary(s);
  emit(o, "summary.txt", summary);
  std::cout << summary;
  return kOk;
}

std::vector<double> parse_range(const std::string& text) {
  std::vector<double> v;
  std::size_t at = 0;
  for (int i = 0; i < 3; ++i) {
    const auto next = text.find(':', at);
    if ((i < 2) == (next == std::string::npos)) break;
    try {
      std::size_t used = 0;
      const auto part = text.substr(at, next == std::string::npos ? std::string::npos : next - at);
      v.push_back(std::stod(part, &used));
      if (used != part.size()) break;
    } catch (const std::exception&) {
      break;
    }
    at = next + 1;
  }
  if (v.size() != 3) throw Error(ErrorCode::ConfigError, "--snr expects lo:hi:step, got '" + text + "'");
  return v;
}

int cmd_ser_curve(const Options& o) {
  const auto r = parse_range(o.snr);
  emit(o, "ser_curve.csv", ser_curve_csv(o.orders, r[0], r[1], r[2]));
  return kOk;
}

int cmd_selftest(const Options& o) {
  const auto checks = self_checks(load(o, "oilwell1000"));
  emit(o, "selftest.csv", self_checks_csv(checks));
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    ok = ok && c.passed;
  }
  return ok ? kOk : kDivergence;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  Options o;
  CLI::App app{"Bucket-brigade sensor line simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--scenario", o.scenario, "Scenario file or builtin name (default, oilwell1000)");
  app.add_option("--out", o.out, "Output directory")->capture_default_str();
  app.add_option("--seed", o.seed, "RNG seed");
  app.add_option("--fidelity", o.fidelity, "abstract or waveform")->check(CLI::IsMember({"abstract", "waveform"}));
  app.add_option("--override", o.overrides, "key=value applied after the scenario file")->allow_extra_args(false);
  app.add_option("--format", o.format, "Event log format")->check(CLI::IsMember({"csv", "jsonl"}))->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "Run a scenario and write metrics, latency and the event log");
  simulate->add_flag("--iq", o.iq, "Also dump the reference burst as I/Q samples");
  auto* serCurve = app.add_subcommand("ser-curve", "Write the M-QAM symbol error rate curve");
  serCurve->add_option("--M", o.orders, "Constellation order (repeatable)")->capture_default_str();
  serCurve->add_option("--snr", o.snr, "SNR sweep lo:hi:step in dB")->capture_default_str();
  auto* rates = app.add_subcommand("rates", "Write the rate table and print the network summary");
  auto* latency = app.add_subcommand("latency", "Compare simulated cycle latency with the closed form");
  auto* selftest = app.add_subcommand("selftest", "Run the numerology and latency cross-checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*serCurve) return cmd_ser_curve(o);
    if (*rates) return cmd_rates(o);
    if (*latency) return cmd_latency(o);
    if (*selftest) return cmd_selftest(o);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kConfigError;
  }
  return kConfigError;
}
