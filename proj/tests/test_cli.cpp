#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bucketline/analytics.hpp"
#include "bucketline/sim.hpp"

namespace fs = std::filesystem;
using namespace bucketline;

namespace {

// The binary is the thin shell under test; every file it writes must equal
// the library call that produces it.
int cli(const std::string& args) {
  const int status = std::system((std::string(BUCKETLINE_EXE) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("bucketline_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("simulate writes exactly what the library produces") {
  const auto dir = fresh_dir("simulate");
  const std::string scen = (dir.string() + ".txt");
  {
    std::ofstream f(scen);
    f << "nodes = 6\ncable.noise = true\nfault.1 = 0.6 NodeFail 3\n";
  }
  REQUIRE(cli("simulate --scenario " + scen + " --seed 9 --override spacing_m=9 --out " + dir.string()) == 0);

  auto s = load_scenario(scen);
  apply_override(s, "seed=9");
  apply_override(s, "spacing_m=9");
  const auto r = run_scenario(s);
  CHECK(slurp(dir / "events.jsonl") == to_jsonl(r.log));
  CHECK(slurp(dir / "metrics.csv") == metrics_csv(r.metrics));
  CHECK(slurp(dir / "latency.csv") == latency_csv(verify_against_analytics(r.metrics, s)));

  REQUIRE(cli("simulate --scenario " + scen + " --seed 9 --override spacing_m=9 --format csv --out " +
              dir.string()) == 0);
  CHECK(slurp(dir / "events.csv") == to_events_csv(r.log));
  fs::remove(scen);
}

TEST_CASE("overrides are applied after the scenario file") {
  const auto dir = fresh_dir("override");
  REQUIRE(cli("simulate --scenario default --override nodes=3 --override preassigned=true --fidelity waveform --out " +
              dir.string()) == 0);
  auto s = builtin_scenario("default");
  s.nodeCount = 3;
  s.preassigned = true;
  s.fidelity = Fidelity::Waveform;
  CHECK(slurp(dir / "events.jsonl") == to_jsonl(run_scenario(s).log));
}

TEST_CASE("ser-curve and rates match their library emitters") {
  const auto dir = fresh_dir("curves");
  REQUIRE(cli("ser-curve --M 16 --M 64 --snr -5:25:0.5 --out " + dir.string()) == 0);
  const auto curve = slurp(dir / "ser_curve.csv");
  CHECK(curve == ser_curve_csv({16, 64}, -5, 25, 0.5));
  const auto last = curve.substr(curve.rfind('\n', curve.size() - 2) + 1);
  CHECK(last.rfind("25,", 0) == 0);
  CHECK(std::stod(last.substr(3)) < 1e-9);

  REQUIRE(cli("rates --scenario oilwell1000 --out " + dir.string()) == 0);
  const auto s = builtin_scenario("oilwell1000");
  CHECK(slurp(dir / "rates.csv") == rate_table_csv(s.ofdm, s.codec, {s.nodeCount, s.tNn(), s.tIl(), s.tAcqS}));
  CHECK(slurp(dir / "summary.txt") == network_summary(s));
}

TEST_CASE("the oil-well simulation reports a cycle of about 2.088 s") {
  const auto dir = fresh_dir("oilwell");
  REQUIRE(cli("latency --scenario oilwell1000 --out " + dir.string()) == 0);
  std::istringstream rows(slurp(dir / "latency.csv"));
  std::string header, row;
  std::getline(rows, header);
  std::getline(rows, row);
  const double simulated = std::stod(row.substr(row.find(',') + 1));
  CHECK(std::abs(simulated - 2.088) / 2.088 < 0.01);
}

TEST_CASE("exit codes separate config errors from divergence") {
  const auto dir = fresh_dir("errors");
  CHECK(cli("simulate --scenario missing.file --out " + dir.string()) == 1);
  CHECK_FALSE(fs::exists(dir));
  CHECK(cli("simulate --override nodez=3 --out " + dir.string()) == 1);
  CHECK(cli("simulate --format xml --out " + dir.string()) == 1);
  CHECK(cli("ser-curve --snr 5:1:1 --out " + dir.string()) == 1);
  CHECK(cli("nonsense") == 1);
  CHECK_FALSE(fs::exists(dir));

  CHECK(cli("selftest --scenario default --override preassigned=true --out " + dir.string()) == 0);
  // With no acquisition time the readings overtake the command wave and the
  // closed form no longer describes the cycle.
  CHECK(cli("selftest --scenario default --override preassigned=true --override timing.t_acq_s=0 --out " +
            dir.string()) == 2);
  CHECK(slurp(dir / "selftest.csv").find(",false,") != std::string::npos);
}

TEST_CASE("writes leave no temporary files behind") {
  const auto dir = fresh_dir("atomic");
  REQUIRE(cli("simulate --iq --override nodes=2 --out " + dir.string()) == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    ++files;
    const auto name = e.path().filename().string();
    CHECK(name.find(".tmp") == std::string::npos);
  }
  CHECK(files == 5);
  const auto s = builtin_scenario("default");
  CHECK(fs::file_size(dir / "burst.iq") == 16 * s.ofdm.burstSamples());
}
