#include <algorithm>
#include <limits>

#include "bucketline/error.hpp"
#include "bucketline/protocol.hpp"

namespace bucketline {

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Unassociated: return "Unassociated";
    case Phase::Associating: return "Associating";
    case Phase::Idle: return "Idle";
    case Phase::Measuring: return "Measuring";
    case Phase::RelayingUp: return "RelayingUp";
    case Phase::AwaitingAck: return "AwaitingAck";
    case Phase::Orphan: return "Orphan";
    case Phase::Failed: return "Failed";
  }
  return "?";
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::TxStart: return "TxStart";
    case EventKind::TxEnd: return "TxEnd";
    case EventKind::RxDetect: return "RxDetect";
    case EventKind::RxDecoded: return "RxDecoded";
    case EventKind::StateChange: return "StateChange";
    case EventKind::Warning: return "Warning";
    case EventKind::CycleStart: return "CycleStart";
    case EventKind::CycleEnd: return "CycleEnd";
    case EventKind::Fault: return "Fault";
  }
  return "?";
}

namespace {

// Acquisition time rides in the request payload as microseconds; the top bit
// marks a status brigade.
constexpr std::uint32_t kStatusFlag = 0x8000'0000u;

Octets be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
          static_cast<std::uint8_t>(v)};
}

std::uint32_t read_be32(const Octets& p) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | (i < p.size() ? p[i] : 0u);
  return v;
}

const Management* management(const Mpdu& m) { return std::get_if<Management>(&m.msdu); }

bool is_request(const Mpdu& m) {
  const auto* mg = management(m);
  return mg && (mg->command == Command::GlobalDataRequest || mg->command == Command::GlobalStatusRequest);
}

// A reading travelling up the brigade: sensor data or a status reply.
bool is_reading(const Mpdu& m) {
  if (std::holds_alternative<MeasurementData>(m.msdu)) return true;
  const auto* mg = management(m);
  return mg && mg->command == Command::NodeActive;
}

}  // namespace

Station::Station(Role role, const ProtocolConfig& cfg, NodeContext& ctx) : role_(role), cfg_(cfg), ctx_(ctx) {
  if (isCoordinator()) {
    table_.set_self(Address::coordinator(cfg.netId));
    phase_ = Phase::Idle;
  } else {
    table_.set_self(Address::unassigned());
  }
}

void Station::configure(Address a, NeighborTable t) {
  table_ = std::move(t);
  table_.set_self(a);
  phase_ = Phase::Idle;
}

void Station::set_phase(Phase p) {
  if (p == phase_) return;
  ctx_.log(EventKind::StateChange, {{"from", to_string(phase_)}, {"to", to_string(p)}});
  phase_ = p;
}

int Station::power_to(Address a) const {
  const auto* e = table_.find(a);
  return e ? e->minTxPowerDbm : cfg_.maxPowerDbm;
}

int Station::power_for(Address target, std::optional<Address> listener) const {
  const int p = power_to(target);
  return listener ? std::max(p, power_to(*listener)) : p;
}

Mpdu Station::make(Address dest, Address finalDest, std::uint32_t ts, Msdu msdu) const {
  Mpdu m;
  m.timestampMs = ts;
  m.originalSource = address();
  m.finalDestination = finalDest;
  m.currentDestination = dest;
  m.currentSource = address();
  m.msdu = std::move(msdu);
  return m;
}

// Once a node has sent its own reading, every later transmission in the cycle
// keeps to a three-hop grid anchored there. Neighbours on either side then
// hold the other two phases, so a retry never lands on their traffic.
std::int64_t Station::slot_after(std::int64_t t) const {
  const auto period = 3 * cfg_.hop();
  const auto origin = cycle_.ownSentNs;
  if (t <= origin) return origin;
  return origin + (t - origin + period - 1) / period * period;
}

std::int64_t Station::send(Mpdu m, int power) {
  m.currentSource = address();
  const bool gridded = !isCoordinator() && cycle_.active && cycle_.ownSentNs >= 0;
  if (!gridded) return ctx_.transmit(m, power, ctx_.now());
  const auto at = slot_after(std::max({ctx_.now(), cycle_.lastSlotNs + 1, cycle_.holdUntilNs}));
  const auto start = ctx_.transmit(m, power, at);
  cycle_.lastSlotNs = start;
  return start;
}

void Station::ack_to(Address to, Address finalDest) {
  send(make(to, finalDest, cycle_.ts, Acknowledgment{}), power_to(to));
}

// ---------------------------------------------------------------- dispatch

void Station::on_receive(const Mpdu& m) {
  if (phase_ == Phase::Failed) return;
  if (role_ == Role::Standby) {
    shadow(m);
    return;
  }
  const auto* mg = management(m);
  const bool toMe = m.currentDestination == address() && !address().isUnassigned();

  if (phase_ == Phase::Orphan) {
    if (mg && mg->command == Command::NodeAddressTableRequest && toMe && m.finalDestination == address()) {
      orphan_ = {};
      ctx_.log(EventKind::StateChange, {{"event", "rejoined"}});
      set_phase(Phase::Idle);
    }
    return;
  }

  if (address().isUnassigned()) {
    if (!mg) return;
    if (mg->command == Command::HelloNeighbor && m.currentDestination == kBroadcast) on_hello(m, *mg);
    if (mg->command == Command::SetNodeIdNetId && m.currentDestination.isUnassigned()) on_set_address(m, *mg);
    return;
  }

  heardNs_[m.currentSource.nodeId] = ctx_.now();
  if (table_.contains(m.currentSource)) table_.touch(m.currentSource, m.timestampMs);

  if (mg) {
    switch (mg->command) {
      case Command::HelloNeighbor:
        if (m.currentDestination == kBroadcast)
          on_hello(m, *mg);
        else if (toMe)
          on_hello_reply(m);
        return;
      case Command::AssociationStart:
        if (toMe && !isCoordinator()) {
          ramp_ = {};
          ramp_.active = true;
          ramp_.power = cfg_.rampStartDbm;
          ramp_.nextFreeId = read_be32(mg->payload) & 0xFFFFFF;
          set_phase(Phase::Associating);
          ramp_step();
        }
        return;
      case Command::AssociationEnd:
        if (toMe) on_association_end(m, *mg);
        return;
      case Command::GlobalDataRequest:
      case Command::GlobalStatusRequest:
        if (toMe && !isCoordinator())
          on_request(m, mg->command == Command::GlobalStatusRequest ? CycleKind::Status : CycleKind::Data);
        else
          overheard(m);
        return;
      case Command::NodeDataRequest:
        if (toMe && !isCoordinator()) on_node_data_request(m);
        return;
      case Command::NodeActive:
        if (toMe)
          on_data(m);
        else
          overheard(m);
        return;
      case Command::AssociationRequest:
        if (m.originalSource == m.currentSource && table_.contains(m.originalSource)) {
          table_.set_active(m.originalSource, true);
        }
        if (toMe) {
          if (isCoordinator()) {
            on_association_request(m);
          } else if (auto up = table_.nearest(Direction::Upstream)) {
            Mpdu relay = m;
            relay.currentDestination = up->address;
            send(relay, power_to(up->address));
          }
        }
        return;
      case Command::NodeAddressTableRequest:
        if (toMe && m.finalDestination != address()) route_down(m);
        return;
      default:
        return;  // reserved commands are parsed but carry no behaviour
    }
  }
  if (std::holds_alternative<MeasurementData>(m.msdu)) {
    if (toMe)
      on_data(m);
    else
      overheard(m);
    return;
  }
  if (std::holds_alternative<Acknowledgment>(m.msdu) && toMe) on_ack(m);
}

void Station::on_timer(TimerId id) {
  if (phase_ == Phase::Failed) return;
  switch (id) {
    case TimerId::ForwardAck: forward_failed(); break;
    case TimerId::DataAck: data_ack_timeout(); break;
    case TimerId::DownstreamWait: downstream_wait_timeout(); break;
    case TimerId::SendOwn: try_send(); break;
    case TimerId::CycleDeadline:
      if (coord_.running) end_cycle(true);
      break;
    case TimerId::CycleSettle:
      if (coord_.running) end_cycle(false);
      break;
    case TimerId::Heartbeat:
      if (role_ != Role::Master) break;
      if (coord_.running)
        coord_.heartbeatDeferred = true;
      else
        send_heartbeat();
      ctx_.set_timer(TimerId::Heartbeat, ctx_.now() + cfg_.heartbeatPeriodNs);
      break;
    case TimerId::Watchdog:
      if (role_ == Role::Standby) {
        role_ = Role::Master;
        ctx_.log(EventKind::StateChange, {{"event", "promoted"}, {"from", "Standby"}, {"to", "Master"}});
        ctx_.promoted();
        start_heartbeats();
      }
      break;
    case TimerId::RampStep:
      if (!ramp_.active) break;
      if (ramp_.gotReply && ramp_.repeats < 8) {
        // Someone answered: repeat the level in case a reply was lost.
        ramp_.gotReply = false;
        ++ramp_.repeats;
      } else {
        ramp_.gotReply = false;
        ramp_.repeats = 0;
        if (++ramp_.power > cfg_.maxPowerDbm) {
          finish_ramp();
          break;
        }
      }
      ramp_step();
      break;
    case TimerId::HelloReply:
      if (reply_.pending) {
        reply_.pending = false;
        reply_.sent = true;
        Mpdu r = make(reply_.to, reply_.to, reply_.nonce,
                      Management{Command::HelloNeighbor, {static_cast<std::uint8_t>(reply_.power)}});
        send(r, reply_.power);
      }
      break;
    case TimerId::AssociationDeadline:
      if (coord_.associating) {
        coord_.associating = false;
        ramp_.active = false;
        AssociationReport r;
        r.stalled = true;
        r.lastReached = address();
        r.endNs = ctx_.now();
        ctx_.log(EventKind::Warning, {{"code", "AssociationStalled"}, {"reason", "deadline"}});
        ctx_.association_finished(r);
      }
      break;
    case TimerId::Count: break;
  }
}

// ------------------------------------------------------------- association

void Station::begin_association(std::uint32_t expectedNodes, std::int64_t deadlineNs) {
  coord_.associating = true;
  coord_.expected = expectedNodes;
  ramp_ = {};
  ramp_.active = true;
  ramp_.power = cfg_.rampStartDbm;
  ramp_.nextFreeId = 1;
  ctx_.set_timer(TimerId::AssociationDeadline, deadlineNs);
  ramp_step();
}

void Station::ramp_step() {
  Mpdu hello = make(kBroadcast, kBroadcast, 0, Management{Command::HelloNeighbor, {static_cast<std::uint8_t>(ramp_.power)}});
  const auto start = send(hello, ramp_.power);
  ctx_.set_timer(TimerId::RampStep, start + static_cast<std::int64_t>(cfg_.replyWindow + 2) * cfg_.hop());
}

void Station::on_hello(const Mpdu& m, const Management& mg) {
  if (ramp_.active || reply_.pending) return;
  const Address from = m.currentSource;
  if (!address().isUnassigned() && table_.contains(from)) return;
  const int power = static_cast<std::int8_t>(mg.payload.empty() ? 0 : mg.payload[0]);
  heardHelloPower_[from] = power;
  reply_.pending = true;
  reply_.to = from;
  reply_.power = power;
  reply_.nonce = static_cast<std::uint32_t>(ctx_.random_below(std::uint64_t{1} << 32));
  if (address().isUnassigned()) set_phase(Phase::Associating);
  const auto slot = static_cast<std::int64_t>(ctx_.random_below(cfg_.replyWindow));
  ctx_.set_timer(TimerId::HelloReply, ctx_.now() + slot * cfg_.hop());
}

void Station::on_hello_reply(const Mpdu& m) {
  if (!ramp_.active) return;
  ramp_.gotReply = true;
  const Address r = m.currentSource;
  if (r.isUnassigned()) {
    const Address assigned{cfg_.netId, ramp_.nextFreeId++};
    table_.upsert(assigned, ramp_.power, m.timestampMs);
    const auto id = assigned.nodeId;
    Octets payload{assigned.netId, static_cast<std::uint8_t>(id >> 16), static_cast<std::uint8_t>(id >> 8),
                   static_cast<std::uint8_t>(id)};
    send(make(Address::unassigned(), Address::unassigned(), m.timestampMs, Management{Command::SetNodeIdNetId, payload}),
         ramp_.power);
  } else {
    if (!table_.contains(r)) table_.upsert(r, ramp_.power);
    send(make(r, r, m.timestampMs, Acknowledgment{}), ramp_.power);
  }
}

void Station::on_set_address(const Mpdu& m, const Management& mg) {
  if (!reply_.sent || m.timestampMs != reply_.nonce || m.currentSource != reply_.to) return;
  const Address a{mg.payload.at(0), (std::uint32_t{mg.payload.at(1)} << 16) | (std::uint32_t{mg.payload.at(2)} << 8) |
                                        mg.payload.at(3)};
  table_.set_self(a);
  table_.upsert(m.currentSource, heardHelloPower_[m.currentSource]);
  reply_.sent = false;
  ctx_.log(EventKind::StateChange, {{"event", "address_assigned"}, {"node_id", a.nodeId}, {"net_id", a.netId}});
  set_phase(Phase::Idle);
}

void Station::finish_ramp() {
  ramp_.active = false;
  ctx_.cancel_timer(TimerId::RampStep);
  if (auto next = table_.nearest(Direction::Downstream)) {
    send(make(next->address, next->address, 0, Management{Command::AssociationStart, be32(ramp_.nextFreeId)}),
         next->minTxPowerDbm);
    if (!isCoordinator()) set_phase(Phase::Idle);
    return;
  }
  Management end{Command::AssociationEnd, be32(ramp_.nextFreeId - 1)};
  if (isCoordinator()) {
    Mpdu self = make(address(), address(), 0, end);
    on_association_end(self, end);
    return;
  }
  set_phase(Phase::Idle);
  if (auto up = table_.nearest(Direction::Upstream)) {
    send(make(up->address, Address::coordinator(cfg_.netId), 0, end), up->minTxPowerDbm);
  }
}

void Station::on_association_end(const Mpdu& m, const Management& mg) {
  if (!isCoordinator()) {
    if (auto up = table_.nearest(Direction::Upstream)) {
      Mpdu relay = m;
      relay.currentDestination = up->address;
      send(relay, up->minTxPowerDbm);
    }
    return;
  }
  if (!coord_.associating) return;
  coord_.associating = false;
  ctx_.cancel_timer(TimerId::AssociationDeadline);
  AssociationReport r;
  r.assigned = read_be32(mg.payload) & 0xFFFFFF;
  r.lastReached = m.originalSource;
  r.stalled = r.assigned < coord_.expected;
  r.endNs = ctx_.now();
  coord_.active.clear();
  for (std::uint32_t id = 1; id <= r.assigned; ++id) coord_.active.insert(Address{cfg_.netId, id});
  if (r.stalled) {
    ctx_.log(EventKind::Warning, {{"code", "AssociationStalled"},
                                  {"last_reached", r.lastReached.nodeId},
                                  {"assigned", r.assigned},
                                  {"expected", coord_.expected}});
  }
  ctx_.association_finished(r);
}

// ------------------------------------------------------------------ brigade

void Station::mark_skipped_upstream(Address requester) {
  // Anything closer than the station that reached us has gone quiet.
  while (auto up = table_.nearest(Direction::Upstream)) {
    if (up->address == requester || up->address.nodeId < requester.nodeId) break;
    table_.set_active(up->address, false);
    ctx_.log(EventKind::StateChange, {{"event", "neighbor_inactive"}, {"neighbor", up->address.nodeId}});
  }
  if (!table_.contains(requester)) table_.upsert(requester, cfg_.maxPowerDbm);
  table_.set_active(requester, true);
}

void Station::begin_cycle_as_node(const Mpdu& req, CycleKind kind, bool explicitPoll) {
  ctx_.cancel_timer(TimerId::ForwardAck);
  ctx_.cancel_timer(TimerId::DataAck);
  ctx_.cancel_timer(TimerId::DownstreamWait);
  ctx_.cancel_timer(TimerId::SendOwn);
  cycle_ = {};
  cycle_.active = true;
  cycle_.kind = kind;
  cycle_.ts = req.timestampMs;
  cycle_.requester = req.currentSource;
  cycle_.upstream = req.currentSource;
  mark_skipped_upstream(req.currentSource);
  const auto* mg = management(req);
  cycle_.tacqNs = static_cast<std::int64_t>(read_be32(mg->payload) & ~kStatusFlag) * 1000;
  cycle_.acqDoneNs = ctx_.now() + cycle_.tacqNs;
  set_phase(Phase::Measuring);

  if (auto d = table_.nearest(Direction::Downstream)) {
    cycle_.downstream = d->address;
    forward_request();
  } else {
    ack_to(cycle_.requester, cycle_.requester);
  }
  if (req.currentSource.isCoordinator() || explicitPoll) {
    cycle_.polled = true;
    cycle_.pollReadyNs = ctx_.now();
    ctx_.set_timer(TimerId::SendOwn, std::max(cycle_.pollReadyNs, cycle_.acqDoneNs));
  }
  if (explicitPoll && cycle_.acqDoneNs > ctx_.now() + cfg_.hop()) ack_to(cycle_.requester, cycle_.requester);
}

void Station::forward_request() {
  const Command cmd = cycle_.kind == CycleKind::Data ? Command::GlobalDataRequest : Command::GlobalStatusRequest;
  std::uint32_t payload = static_cast<std::uint32_t>(cycle_.tacqNs / 1000);
  if (cycle_.kind == CycleKind::Status) payload |= kStatusFlag;
  Mpdu m = make(*cycle_.downstream, kBroadcast, cycle_.ts, Management{cmd, be32(payload)});
  const std::optional<Address> listener =
      isCoordinator() ? std::nullopt : std::optional<Address>(cycle_.upstream);
  cycle_.fwdPending = true;
  cycle_.fwdSentNs = send(m, power_for(*cycle_.downstream, listener));
  ctx_.set_timer(TimerId::ForwardAck, cycle_.fwdSentNs + static_cast<std::int64_t>(cfg_.ackTimeoutHops) * cfg_.hop());
}

void Station::forward_failed() {
  if (!cycle_.active || !cycle_.fwdPending) return;
  if (cycle_.fwdTries < cfg_.maxRetries) {
    ++cycle_.fwdTries;
    ctx_.count_retry();
    forward_request();
    return;
  }
  const Address dead = *cycle_.downstream;
  table_.set_active(dead, false);
  ctx_.log(EventKind::StateChange, {{"event", "neighbor_inactive"}, {"neighbor", dead.nodeId}});
  cycle_.fwdTries = 0;
  if (auto next = table_.next_beyond(Direction::Downstream, dead)) {
    cycle_.downstream = next->address;
    forward_request();
    return;
  }
  cycle_.downstream.reset();
  cycle_.fwdPending = false;
  if (isCoordinator() && coord_.running) end_cycle(false);
}

void Station::forward_acked() {
  cycle_.fwdPending = false;
  cycle_.fwdAckNs = ctx_.now();
  ctx_.cancel_timer(TimerId::ForwardAck);
  if (isCoordinator()) arm_downstream_wait();
}

void Station::on_request(const Mpdu& m, CycleKind kind) {
  if (cycle_.active && m.timestampMs == cycle_.ts) {
    // Our forward was not heard upstream; confirm explicitly.
    ack_to(m.currentSource, m.currentSource);
    return;
  }
  begin_cycle_as_node(m, kind, false);
}

void Station::on_node_data_request(const Mpdu& m) {
  const auto* mg = management(m);
  if (!cycle_.active || m.timestampMs != cycle_.ts) {
    const auto kind = (read_be32(mg->payload) & kStatusFlag) ? CycleKind::Status : CycleKind::Data;
    begin_cycle_as_node(m, kind, true);
    return;
  }
  cycle_.upstream = m.currentSource;
  mark_skipped_upstream(m.currentSource);
  cycle_.polled = true;
  // Reply one hop late so the answer lands on the poller's relay grid.
  cycle_.pollReadyNs = ctx_.now() + cfg_.hop();
  if (cycle_.ownAcked) {
    cycle_.ownAcked = false;
    cycle_.ownQueued = false;
    cycle_.settled.erase(address().nodeId);
  }
  if (cycle_.acqDoneNs > ctx_.now() + cfg_.hop()) ack_to(m.currentSource, m.currentSource);
  ctx_.set_timer(TimerId::SendOwn, std::max(cycle_.pollReadyNs, cycle_.acqDoneNs));
}

void Station::overheard(const Mpdu& m) {
  if (!cycle_.active || m.timestampMs != cycle_.ts) return;
  if (cycle_.fwdPending && is_request(m) && cycle_.downstream && m.currentSource == *cycle_.downstream) {
    forward_acked();
    return;
  }
  if (!is_reading(m) || m.currentSource != cycle_.upstream) return;
  if (cycle_.inFlight && m.originalSource == cycle_.inFlight->m.originalSource) {
    data_acked();
    return;
  }
  upstream_busy();
  if (!cycle_.polled && m.originalSource == cycle_.upstream) {
    cycle_.polled = true;
    // Leave the upstream node's acknowledgement slot clear.
    cycle_.pollReadyNs = ctx_.now() + cfg_.hop();
    ctx_.set_timer(TimerId::SendOwn, std::max(cycle_.pollReadyNs, cycle_.acqDoneNs));
  }
}

// Upstream is alive but still clearing older traffic; give it another round.
void Station::upstream_busy() {
  if (!cycle_.inFlight || cycle_.ownSentNs < 0) return;
  ctx_.set_timer(TimerId::DataAck, ctx_.now() + static_cast<std::int64_t>(cfg_.ackTimeoutHops + 1) * cfg_.hop());
}

void Station::on_ack(const Mpdu& m) {
  if (reply_.sent && m.currentSource == reply_.to && m.timestampMs == reply_.nonce) {
    table_.upsert(m.currentSource, heardHelloPower_[m.currentSource]);
    reply_.sent = false;
    return;
  }
  if (!cycle_.active || m.timestampMs != cycle_.ts) return;
  if (cycle_.inFlight && m.currentSource == cycle_.upstream &&
      m.finalDestination == cycle_.inFlight->m.originalSource) {
    data_acked();
    return;
  }
  if (m.currentSource == cycle_.upstream) upstream_busy();
  if (cycle_.downstream && m.currentSource == *cycle_.downstream && m.finalDestination == address()) {
    if (cycle_.fwdPending) {
      forward_acked();
    } else if (!cycle_.downstreamHeard) {
      // Polled node is alive but still acquiring.
      cycle_.dsTries = 0;
      ctx_.set_timer(TimerId::DownstreamWait, ctx_.now() + cycle_.tacqNs + 2 * cfg_.hop());
    }
  }
}

void Station::data_acked() {
  const Address origin = cycle_.inFlight->m.originalSource;
  cycle_.settled.insert(origin.nodeId);
  cycle_.inFlight.reset();
  cycle_.inFlightTries = 0;
  cycle_.inFlightRounds = 0;
  ctx_.cancel_timer(TimerId::DataAck);
  if (origin == address()) {
    cycle_.ownAcked = true;
    set_phase(Phase::RelayingUp);
  }
  try_send();
}

Msdu Station::own_payload() {
  if (cycle_.kind == CycleKind::Status) return Management{Command::NodeActive, {}};
  return ctx_.acquire();
}

void Station::try_send() {
  if (!cycle_.active || cycle_.inFlight || isCoordinator()) return;
  const auto now = ctx_.now();
  if (cycle_.polled && !cycle_.ownQueued && now >= std::max(cycle_.pollReadyNs, cycle_.acqDoneNs)) {
    cycle_.ownQueued = true;
    cycle_.seen.insert(address().nodeId);
    cycle_.inFlight = Cycle::Pending{make(cycle_.upstream, Address::coordinator(cfg_.netId), cycle_.ts, own_payload()),
                                     cycle_.downstream};
    cycle_.inFlightTries = 0;
    cycle_.inFlightRounds = 0;
    cycle_.ownSentNs = -1;
    set_phase(Phase::AwaitingAck);
    send_in_flight();
    return;
  }
  if (!cycle_.queue.empty()) {
    cycle_.inFlight = std::move(cycle_.queue.front());
    cycle_.queue.pop_front();
    cycle_.inFlightTries = 0;
    cycle_.inFlightRounds = 0;
    send_in_flight();
  }
}

void Station::send_in_flight() {
  auto& p = *cycle_.inFlight;
  p.m.currentDestination = cycle_.upstream;
  const auto start = send(p.m, power_for(cycle_.upstream, p.listener));
  if (p.m.originalSource == address() && cycle_.ownSentNs < 0) {
    cycle_.ownSentNs = start;
    cycle_.lastSlotNs = start;
    arm_downstream_wait();
  }
  ctx_.set_timer(TimerId::DataAck, start + static_cast<std::int64_t>(cfg_.ackTimeoutHops) * cfg_.hop());
}

bool Station::heard_recently(Address a) const {
  const auto it = heardNs_.find(a.nodeId);
  const auto window = static_cast<std::int64_t>((cfg_.maxRetries + 1) * cfg_.ackTimeoutHops) * cfg_.hop();
  return it != heardNs_.end() && ctx_.now() - it->second <= window;
}

// Random whole slot periods so a retry stops meeting the same periodic interferer.
void Station::back_off(unsigned tries) {
  const auto periods = ctx_.random_below(std::uint64_t{1} << std::min(tries, 3u));
  cycle_.holdUntilNs = ctx_.now() + static_cast<std::int64_t>(periods) * 3 * cfg_.hop();
}

void Station::data_ack_timeout() {
  if (!cycle_.active || !cycle_.inFlight) return;
  if (cycle_.inFlightTries >= cfg_.maxRetries && cycle_.inFlightRounds < cfg_.maxRetries &&
      heard_recently(cycle_.upstream)) {
    // Collisions, not silence: the neighbour is alive, keep it.
    ++cycle_.inFlightRounds;
    cycle_.inFlightTries = 0;
  }
  if (cycle_.inFlightTries < cfg_.maxRetries) {
    ++cycle_.inFlightTries;
    ctx_.count_retry();
    if (cycle_.inFlightRounds > 0) back_off(cycle_.inFlightTries + cycle_.inFlightRounds);
    send_in_flight();
    return;
  }
  const Address dead = cycle_.upstream;
  table_.set_active(dead, false);
  ctx_.log(EventKind::StateChange, {{"event", "neighbor_inactive"}, {"neighbor", dead.nodeId}});
  if (auto next = table_.next_beyond(Direction::Upstream, dead)) {
    cycle_.upstream = next->address;
    cycle_.inFlightTries = 0;
    send_in_flight();
    return;
  }
  ctx_.log(EventKind::StateChange,
           {{"event", "bucket_dropped"}, {"origin", cycle_.inFlight->m.originalSource.nodeId}});
  cycle_.inFlight.reset();
  try_send();
}

void Station::arm_downstream_wait() {
  if (!cycle_.downstream || cycle_.downstreamHeard) return;
  const auto h = cfg_.hop();
  std::int64_t at = std::numeric_limits<std::int64_t>::min();
  if (cycle_.ownSentNs >= 0) at = cycle_.ownSentNs + 4 * h;
  if (cycle_.fwdAckNs >= 0) at = std::max(at, cycle_.fwdAckNs + cycle_.tacqNs + 2 * h);
  if (at == std::numeric_limits<std::int64_t>::min()) return;
  ctx_.set_timer(TimerId::DownstreamWait, at);
}

void Station::note_downstream_heard() {
  cycle_.downstreamHeard = true;
  ctx_.cancel_timer(TimerId::DownstreamWait);
}

void Station::downstream_wait_timeout() {
  if (!cycle_.active || cycle_.downstreamHeard || !cycle_.downstream) return;
  if (cycle_.dsTries > cfg_.maxRetries) {
    const Address dead = *cycle_.downstream;
    table_.set_active(dead, false);
    ctx_.log(EventKind::StateChange, {{"event", "neighbor_inactive"}, {"neighbor", dead.nodeId}});
    auto next = table_.next_beyond(Direction::Downstream, dead);
    cycle_.dsTries = 0;
    if (!next) {
      cycle_.downstream.reset();
      if (isCoordinator() && coord_.running) end_cycle(false);
      return;
    }
    cycle_.downstream = next->address;
  }
  if (cycle_.dsTries > 0) ctx_.count_retry();
  ++cycle_.dsTries;
  std::uint32_t payload = static_cast<std::uint32_t>(cycle_.tacqNs / 1000);
  if (cycle_.kind == CycleKind::Status) payload |= kStatusFlag;
  const auto start = send(make(*cycle_.downstream, *cycle_.downstream, cycle_.ts,
                               Management{Command::NodeDataRequest, be32(payload)}),
                          power_to(*cycle_.downstream));
  ctx_.set_timer(TimerId::DownstreamWait, start + static_cast<std::int64_t>(cfg_.ackTimeoutHops) * cfg_.hop());
}

void Station::on_data(const Mpdu& m) {
  if (isCoordinator()) {
    record(m);
    return;
  }
  if (!cycle_.active || m.timestampMs != cycle_.ts) return;
  if (cycle_.downstream && m.currentSource == *cycle_.downstream) note_downstream_heard();
  const auto origin = m.originalSource.nodeId;
  if (cycle_.seen.count(origin)) {
    // Still waiting here: the eventual relay is the acknowledgement.
    const bool pending = (cycle_.inFlight && cycle_.inFlight->m.originalSource == m.originalSource) ||
                         std::any_of(cycle_.queue.begin(), cycle_.queue.end(),
                                     [&](const auto& p) { return p.m.originalSource == m.originalSource; });
    if (!pending) ack_to(m.currentSource, m.originalSource);
    return;
  }
  cycle_.seen.insert(origin);
  cycle_.queue.push_back({m, m.currentSource});
  try_send();
}

// -------------------------------------------------------------- coordinator

void Station::start_cycle(CycleKind kind, std::uint32_t timestampMs, std::int64_t deadlineNs, std::uint64_t index) {
  coord_.running = true;
  coord_.report = {};
  coord_.report.index = index;
  coord_.report.kind = kind;
  coord_.report.timestampMs = timestampMs;
  coord_.report.startNs = ctx_.now();
  coord_.deadlineNs = deadlineNs;
  for (const auto& e : table_.entries()) table_.set_active(e.address, coord_.active.count(e.address) > 0);

  cycle_ = {};
  cycle_.active = true;
  cycle_.kind = kind;
  cycle_.ts = timestampMs;
  cycle_.tacqNs = kind == CycleKind::Data ? cfg_.tAcqNs
                                          : static_cast<std::int64_t>(coord_.active.size() + 2) * cfg_.hop();
  ctx_.log(EventKind::CycleStart, {{"cycle", index},
                                   {"kind", kind == CycleKind::Data ? "data" : "status"},
                                   {"timestamp_ms", timestampMs},
                                   {"active", coord_.active.size()}});
  ctx_.set_timer(TimerId::CycleDeadline, deadlineNs);
  if (auto d = table_.nearest(Direction::Downstream)) {
    cycle_.downstream = d->address;
    forward_request();
  } else {
    end_cycle(false);
  }
}

void Station::record(const Mpdu& m) {
  if (role_ != Role::Master) return;
  if (coord_.running && m.timestampMs == coord_.report.timestampMs) {
    if (cycle_.downstream && m.currentSource == *cycle_.downstream) note_downstream_heard();
    const auto id = m.originalSource.nodeId;
    if (!coord_.report.readings.count(id)) {
      const auto* md = std::get_if<MeasurementData>(&m.msdu);
      coord_.report.readings[id] = md ? *md : MeasurementData{};
      coord_.report.arrivalOrder.push_back(m.originalSource);
      coord_.report.lastArrivalNs = ctx_.now();
      coord_.active.insert(m.originalSource);
    }
  }
  send(make(m.currentSource, m.originalSource, m.timestampMs, Acknowledgment{}), power_to(m.currentSource));
  if (coord_.running) maybe_end_cycle();
}

void Station::maybe_end_cycle() {
  const auto& got = coord_.report.readings;
  bool all = true;
  std::uint32_t deepest = 0;
  for (const auto& a : coord_.active) {
    if (!got.count(a.nodeId)) all = false;
    deepest = std::max(deepest, a.nodeId);
  }
  if (all) {
    end_cycle(false);
  } else if (got.count(deepest)) {
    // Out-of-order stragglers may still be in the pipe; end once it goes quiet.
    const auto quiet = static_cast<std::int64_t>(2 * (cfg_.maxRetries + 1) * cfg_.ackTimeoutHops) * cfg_.hop();
    ctx_.set_timer(TimerId::CycleSettle, ctx_.now() + quiet);
  }
}

void Station::end_cycle(bool timedOut) {
  coord_.running = false;
  cycle_.active = false;
  ctx_.cancel_timer(TimerId::CycleDeadline);
  ctx_.cancel_timer(TimerId::CycleSettle);
  ctx_.cancel_timer(TimerId::DownstreamWait);
  ctx_.cancel_timer(TimerId::ForwardAck);
  auto& r = coord_.report;
  r.endNs = ctx_.now();
  r.timedOut = timedOut;
  for (const auto& a : coord_.active) {
    if (!r.readings.count(a.nodeId)) r.missing.push_back(a);
  }
  for (const auto& a : r.missing) {
    ctx_.log(EventKind::Warning, {{"code", timedOut ? "CycleTimeout" : "NodeMissing"},
                                  {"node", a.nodeId},
                                  {"cycle", r.index}});
    coord_.active.erase(a);
    table_.set_active(a, false);
  }
  nlohmann::json order = nlohmann::json::array();
  for (const auto& a : r.arrivalOrder) order.push_back(a.nodeId);
  ctx_.log(EventKind::CycleEnd, {{"cycle", r.index},
                                 {"kind", r.kind == CycleKind::Data ? "data" : "status"},
                                 {"delivered", r.readings.size()},
                                 {"latency_ns", r.lastArrivalNs > 0 ? r.lastArrivalNs - r.startNs : 0},
                                 {"timed_out", timedOut},
                                 {"arrival_order", order}});
  if (coord_.heartbeatDeferred) {
    coord_.heartbeatDeferred = false;
    send_heartbeat();
  }
  ctx_.cycle_finished(r);
}

void Station::on_association_request(const Mpdu& m) {
  if (role_ != Role::Master) return;
  const Address orphan = m.originalSource;
  coord_.active.insert(orphan);
  if (table_.contains(orphan)) table_.set_active(orphan, true);
  ctx_.log(EventKind::StateChange, {{"event", "node_rejoined"}, {"node", orphan.nodeId}});
  route_down(make(orphan, orphan, m.timestampMs,
                  Management{Command::NodeAddressTableRequest, be32(orphan.nodeId)}));
}

void Station::route_down(const Mpdu& m) {
  const Address target = m.finalDestination;
  std::optional<NeighborEntry> hop;
  if (const auto* e = table_.find(target); e && e->active) {
    hop = *e;
  } else {
    hop = table_.nearest(Direction::Downstream);
  }
  if (!hop) return;
  Mpdu out = m;
  out.currentDestination = hop->address;
  send(out, hop->minTxPowerDbm);
}

void Station::start_heartbeats() {
  if (cfg_.heartbeatPeriodNs <= 0) return;
  if (role_ == Role::Master) {
    ctx_.set_timer(TimerId::Heartbeat, ctx_.now() + cfg_.heartbeatPeriodNs);
  } else if (role_ == Role::Standby) {
    coord_.lastHeartbeatNs = ctx_.now();
    ctx_.set_timer(TimerId::Watchdog,
                   ctx_.now() + static_cast<std::int64_t>(cfg_.missedHeartbeats) * cfg_.heartbeatPeriodNs +
                       cfg_.heartbeatPeriodNs / 2);
  }
}

void Station::send_heartbeat() {
  send(make(kBroadcast, kBroadcast, 0, Management{Command::CoordinatorAliveAndReady, {}}), cfg_.rampStartDbm);
}

void Station::shadow(const Mpdu& m) {
  const auto* mg = management(m);
  const Address coordinator = Address::coordinator(cfg_.netId);
  if (m.currentSource == coordinator) {
    if (!mg) {
      if (std::holds_alternative<Acknowledgment>(m.msdu) && coord_.shadowHelloPower &&
          !table_.contains(m.currentDestination) && !m.currentDestination.isCoordinator()) {
        // Acknowledged hello reply during the master's ramp.
        table_.upsert(m.currentDestination, *coord_.shadowHelloPower);
      }
      return;
    }
    switch (mg->command) {
      case Command::CoordinatorAliveAndReady:
        start_heartbeats();
        break;
      case Command::HelloNeighbor:
        coord_.shadowHelloPower = static_cast<std::int8_t>(mg->payload.empty() ? 0 : mg->payload[0]);
        break;
      case Command::SetNodeIdNetId: {
        const Address a{mg->payload.at(0), (std::uint32_t{mg->payload.at(1)} << 16) |
                                               (std::uint32_t{mg->payload.at(2)} << 8) | mg->payload.at(3)};
        if (coord_.shadowHelloPower) table_.upsert(a, *coord_.shadowHelloPower);
        break;
      }
      case Command::GlobalDataRequest:
      case Command::GlobalStatusRequest:
        coord_.shadowHelloPower.reset();
        if (m.timestampMs != coord_.observedTs) {
          if (!coord_.observedThisCycle.empty()) coord_.active = coord_.observedThisCycle;
          coord_.observedThisCycle.clear();
          coord_.observedTs = m.timestampMs;
        }
        break;
      default: break;
    }
    return;
  }
  if (m.currentDestination != coordinator) return;
  if (is_reading(m) && m.timestampMs == coord_.observedTs) {
    coord_.observedThisCycle.insert(m.originalSource);
    coord_.active.insert(m.originalSource);
  }
  if (mg && mg->command == Command::AssociationRequest) coord_.active.insert(m.originalSource);
}

// ------------------------------------------------------------------- faults

void Station::fail() {
  for (int t = 0; t < static_cast<int>(TimerId::Count); ++t) ctx_.cancel_timer(static_cast<TimerId>(t));
  cycle_ = {};
  coord_.running = false;
  set_phase(Phase::Failed);
}

void Station::silence() {
  for (int t = 0; t < static_cast<int>(TimerId::Count); ++t) ctx_.cancel_timer(static_cast<TimerId>(t));
  cycle_ = {};
  set_phase(Phase::Orphan);
}

void Station::restore_as_orphan() {
  cycle_ = {};
  orphan_ = {};
  orphan_.pending = true;
  ctx_.log(EventKind::StateChange, {{"event", "restored"}, {"phase", "Orphan"}});
}

void Station::event_window() {
  if (phase_ != Phase::Orphan || orphan_.pending || orphan_.gaveUp || orphan_.attempts == 0) return;
  if (orphan_.attempts > cfg_.maxRetries) {
    orphan_.gaveUp = true;
    ctx_.log(EventKind::Warning, {{"code", "OrphanUnreachable"}, {"node", address().nodeId}});
    return;
  }
  orphan_.pending = true;
}

void Station::send_event_bucket() {
  if (!orphan_.pending) return;
  orphan_.pending = false;
  ++orphan_.attempts;
  auto up = table_.nearest(Direction::Upstream);
  if (!up) up = table_.nearest(Direction::Downstream);
  if (!up) {
    orphan_.gaveUp = true;
    ctx_.log(EventKind::Warning, {{"code", "OrphanUnreachable"}, {"node", address().nodeId}});
    return;
  }
  // Full power so every former neighbour hears the request and re-adds us.
  send(make(up->address, Address::coordinator(cfg_.netId), 0, Management{Command::AssociationRequest, {}}),
       cfg_.maxPowerDbm);
}

}  // namespace bucketline
