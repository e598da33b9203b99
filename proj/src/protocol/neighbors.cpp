#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "bucketline/error.hpp"
#include "bucketline/protocol.hpp"

namespace bucketline {

void NeighborTable::set_self(Address self) {
  self_ = self;
  for (auto& e : entries_) e.direction = side_of(e.address);
  sort();
}

Direction NeighborTable::side_of(Address a) const {
  return a.nodeId < self_.nodeId ? Direction::Upstream : Direction::Downstream;
}

std::uint32_t NeighborTable::rank(Address a) const {
  return a.nodeId > self_.nodeId ? a.nodeId - self_.nodeId : self_.nodeId - a.nodeId;
}

void NeighborTable::sort() {
  std::stable_sort(entries_.begin(), entries_.end(), [this](const NeighborEntry& x, const NeighborEntry& y) {
    if (x.direction != y.direction) return x.direction == Direction::Upstream;
    return rank(x.address) < rank(y.address);
  });
}

void NeighborTable::upsert(Address a, int minTxPowerDbm, std::uint32_t seenMs) {
  for (auto& e : entries_) {
    if (e.address == a) {
      e.minTxPowerDbm = std::min(e.minTxPowerDbm, minTxPowerDbm);
      e.lastSeenMs = std::max(e.lastSeenMs, seenMs);
      e.active = true;
      return;
    }
  }
  entries_.push_back({a, side_of(a), minTxPowerDbm, seenMs, true});
  sort();
}

void NeighborTable::set_active(Address a, bool active) {
  for (auto& e : entries_) {
    if (e.address == a) e.active = active;
  }
}

void NeighborTable::touch(Address a, std::uint32_t seenMs) {
  for (auto& e : entries_) {
    if (e.address != a) continue;
    e.lastSeenMs = std::max(e.lastSeenMs, seenMs);
    e.active = true;  // heard, so alive
  }
}

const NeighborEntry* NeighborTable::find(Address a) const {
  for (const auto& e : entries_) {
    if (e.address == a) return &e;
  }
  return nullptr;
}

std::optional<NeighborEntry> NeighborTable::nearest(Direction d) const {
  for (const auto& e : entries_) {
    if (e.direction == d && e.active) return e;
  }
  return std::nullopt;
}

std::optional<NeighborEntry> NeighborTable::next_beyond(Direction d, Address after) const {
  const auto r = rank(after);
  for (const auto& e : entries_) {
    if (e.direction == d && e.active && rank(e.address) > r) return e;
  }
  return std::nullopt;
}

std::size_t NeighborTable::count(Direction d, bool activeOnly) const {
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [&](const NeighborEntry& e) {
    return e.direction == d && (!activeOnly || e.active);
  }));
}

std::vector<NeighborTable> analytic_tables(const std::vector<double>& positions, const CableModel& cable,
                                           const ReceiverModel& rx, int minDbm, int maxDbm, std::uint8_t netId) {
  std::vector<NeighborTable> out;
  out.reserve(positions.size());
  auto addr = [&](std::size_t i) { return Address{netId, static_cast<std::uint32_t>(i)}; };
  for (std::size_t i = 0; i < positions.size(); ++i) {
    NeighborTable t(addr(i));
    // Positions are sorted along the cable, so scan outwards and stop at the
    // first unreachable station on each side.
    for (std::size_t j = i; j-- > 0;) {
      const auto p = min_tx_power(cable, rx, std::abs(positions[i] - positions[j]), minDbm, maxDbm);
      if (!p) break;
      t.upsert(addr(j), *p);
    }
    for (std::size_t j = i + 1; j < positions.size(); ++j) {
      const auto p = min_tx_power(cable, rx, std::abs(positions[i] - positions[j]), minDbm, maxDbm);
      if (!p) break;
      t.upsert(addr(j), *p);
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::size_t plan_orphan_recovery(const std::vector<double>& positions, std::size_t orphan,
                                 const std::vector<bool>& alive, const CableModel& cable, const ReceiverModel& rx,
                                 int maxDbm) {
  if (orphan >= positions.size()) throw Error(ErrorCode::UnknownTarget, "orphan index out of range");
  auto reachable = [&](std::size_t j) {
    return j != orphan && alive.at(j) &&
           rx.decodable(link_budget(cable, maxDbm, std::abs(positions[orphan] - positions[j])));
  };
  for (std::size_t j = orphan; j-- > 0;) {
    if (reachable(j)) return j;
  }
  for (std::size_t j = orphan + 1; j < positions.size(); ++j) {
    if (reachable(j)) return j;
  }
  throw Error(ErrorCode::OrphanUnreachable, "node " + std::to_string(orphan) + " has no reachable neighbour");
}

}  // namespace bucketline
