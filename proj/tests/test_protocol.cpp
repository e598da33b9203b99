#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "bucketline/error.hpp"
#include "bucketline/protocol.hpp"

using namespace bucketline;

namespace {

Address node(std::uint32_t id) { return {1, id}; }

std::vector<double> line(std::size_t stations, double spacing) {
  std::vector<double> p(stations);
  for (std::size_t i = 0; i < stations; ++i) p[i] = spacing * static_cast<double>(i);
  return p;
}

// Smallest integer power in [lo, hi] whose received level clears both the
// noise floor (SNR >= 0 dB) and the sensitivity; whole-metre distances keep
// everything in integer tenths of a dB.
std::optional<int> oracle_min_power(int distanceM, int lo, int hi) {
  // rx = p - 0.3 d must be >= -5 dBm (noise floor, 0 dB SNR) and >= -50 dBm.
  for (int p = lo; p <= hi; ++p) {
    const int rxTenths = 10 * p - 3 * distanceM;
    if (rxTenths >= -50 && rxTenths >= -500) return p;
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("neighbor table sorts upstream before downstream, closest first") {
  NeighborTable t(node(5));
  for (std::uint32_t id : {8u, 2u, 6u, 0u, 4u, 9u, 3u}) t.upsert(node(id), 1);
  std::vector<std::uint32_t> ids;
  for (const auto& e : t.entries()) ids.push_back(e.address.nodeId);
  CHECK(ids == std::vector<std::uint32_t>{4, 3, 2, 0, 6, 8, 9});
  CHECK(t.count(Direction::Upstream) == 4);
  CHECK(t.count(Direction::Downstream) == 3);

  CHECK(t.nearest(Direction::Upstream)->address == node(4));
  t.set_active(node(4), false);
  CHECK(t.nearest(Direction::Upstream)->address == node(3));
  CHECK(t.count(Direction::Upstream) == 3);
  CHECK(t.count(Direction::Upstream, false) == 4);
  CHECK(t.next_beyond(Direction::Downstream, node(6))->address == node(8));
  CHECK_FALSE(t.next_beyond(Direction::Downstream, node(9)));

  t.upsert(node(4), 3);
  CHECK(t.find(node(4))->active);
  CHECK(t.find(node(4))->minTxPowerDbm == 1);  // upsert never raises the stored power
  t.upsert(node(4), -2);
  CHECK(t.find(node(4))->minTxPowerDbm == -2);
}

TEST_CASE("analytic tables match an independent link-budget scan") {
  const auto pos = line(12, 10.0);
  const auto tables = analytic_tables(pos, CableModel{}, ReceiverModel{}, -5, 10, 1);
  REQUIRE(tables.size() == pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    std::set<std::uint32_t> expected;
    for (std::size_t j = 0; j < pos.size(); ++j) {
      if (j != i && oracle_min_power(10 * std::abs(static_cast<int>(i) - static_cast<int>(j)), -5, 10)) {
        expected.insert(static_cast<std::uint32_t>(j));
      }
    }
    std::set<std::uint32_t> got;
    for (const auto& e : tables[i].entries()) {
      got.insert(e.address.nodeId);
      const int d = 10 * std::abs(static_cast<int>(e.address.nodeId) - static_cast<int>(i));
      CHECK(e.minTxPowerDbm == *oracle_min_power(d, -5, 10));
    }
    CHECK(got == expected);
  }
  // 10 dBm covers 50 m: an interior node hears five stations each way.
  CHECK(tables[6].entries().size() == 10);
}

TEST_CASE("arbitration always serves coordinator traffic first") {
  std::mt19937_64 rng(3);
  const std::vector<TransmitIntent> pending = {
      {1, false, 3, false}, {2, true, 7, false}, {3, false, 9, true}, {4, false, 1, false}};
  for (auto phase : {ArbitrationPhase::MeasurementCycle, ArbitrationPhase::EventPeriod}) {
    const auto a = arbitrate(pending, phase, CsmaParams{}, 332.8, rng);
    REQUIRE_FALSE(a.order.empty());
    CHECK(a.order.front().id == 2);
  }
}

TEST_CASE("measurement cycle defers event buckets and favours shallow nodes") {
  std::mt19937_64 rng(5);
  const std::vector<TransmitIntent> pending = {
      {1, false, 6, false}, {2, false, 2, false}, {3, false, 4, true}, {4, false, 9, true}};
  const auto a = arbitrate(pending, ArbitrationPhase::MeasurementCycle, CsmaParams{}, 332.8, rng);
  CHECK(a.deferred == std::vector<std::size_t>{3, 4});
  REQUIRE(a.order.size() == 2);
  CHECK(a.order[0].id == 2);
  CHECK(a.order[1].id == 1);
}

TEST_CASE("event period favours the deepest node") {
  std::mt19937_64 rng(7);
  const std::vector<TransmitIntent> pending = {{1, false, 2, true}, {2, false, 8, true}, {3, false, 5, true}};
  const auto a = arbitrate(pending, ArbitrationPhase::EventPeriod, CsmaParams{}, 332.8, rng);
  CHECK(a.deferred.empty());
  REQUIRE(a.order.size() == 3);
  CHECK(a.order[0].id == 2);
  CHECK(a.order[1].id == 3);
  CHECK(a.order[2].id == 1);
}

TEST_CASE("a lone contender starts after the interframe space and priority slots") {
  std::mt19937_64 rng(1);
  CsmaParams c;
  const auto a = arbitrate({{9, false, 4, true}}, ArbitrationPhase::EventPeriod, c, 332.8, rng);
  REQUIRE(a.order.size() == 1);
  CHECK(a.order[0].startUs == doctest::Approx(c.cifsUs + c.prpSlots * c.backoffSlotUs));
  CHECK(a.order[0].backoffSlots == 0);
}

TEST_CASE("contention never livelocks and transmissions never overlap") {
  std::mt19937_64 rng(2024);
  const CsmaParams c;
  const double bucketUs = 332.8;
  std::size_t totalCollisions = 0;
  for (int run = 0; run < 10'000; ++run) {
    const auto n = std::uniform_int_distribution<std::size_t>(1, 24)(rng);
    std::vector<TransmitIntent> pending;
    for (std::size_t i = 0; i < n; ++i) {
      // Few depths so many intents share a priority class.
      pending.push_back({i, (rng() % 16) == 0, 1 + rng() % 3, true});
    }
    const auto a = arbitrate(pending, ArbitrationPhase::EventPeriod, c, bucketUs, rng);
    totalCollisions += a.collisionEpochs;
    REQUIRE(a.order.size() == n);
    std::set<std::size_t> ids;
    for (const auto& s : a.order) ids.insert(s.id);
    CHECK(ids.size() == n);
    for (std::size_t i = 1; i < a.order.size(); ++i) {
      CHECK(a.order[i].startUs >= a.order[i - 1].startUs + bucketUs);
    }
  }
  // Sanity: with up to 24 contenders per class ties must actually occur.
  CHECK(totalCollisions > 0);
}

TEST_CASE("orphan recovery prefers the nearest live upstream station") {
  const auto pos = line(10, 10.0);
  std::vector<bool> alive(pos.size(), true);
  CHECK(plan_orphan_recovery(pos, 5, alive, CableModel{}, ReceiverModel{}, 10) == 4);
  alive[4] = false;
  alive[3] = false;
  CHECK(plan_orphan_recovery(pos, 5, alive, CableModel{}, ReceiverModel{}, 10) == 2);
  for (std::size_t j = 0; j < 5; ++j) alive[j] = false;
  CHECK(plan_orphan_recovery(pos, 5, alive, CableModel{}, ReceiverModel{}, 10) == 6);
}

TEST_CASE("orphan recovery reports unreachable and unknown targets") {
  const std::vector<double> pos = {0, 10, 100, 110};
  std::vector<bool> alive = {true, true, true, false};
  try {
    plan_orphan_recovery(pos, 2, alive, CableModel{}, ReceiverModel{}, 10);
    FAIL("expected OrphanUnreachable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OrphanUnreachable);
  }
  try {
    plan_orphan_recovery(pos, 7, alive, CableModel{}, ReceiverModel{}, 10);
    FAIL("expected UnknownTarget");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownTarget);
  }
}

TEST_CASE("csma parameters are validated") {
  CsmaParams c;
  CHECK_NOTHROW(c.validate());
  c.cwMin = 128;
  CHECK_THROWS_AS(c.validate(), Error);
}
