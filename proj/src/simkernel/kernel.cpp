#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <queue>
#include <random>
#include <set>

#include "bucketline/analytics.hpp"
#include "bucketline/error.hpp"
#include "bucketline/sim.hpp"

namespace bucketline {

namespace {

constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();
constexpr auto kTimerCount = static_cast<std::size_t>(TimerId::Count);

std::int64_t to_ns(double s) { return std::llround(s * 1e9); }

enum class Ev : std::uint8_t { Timer, BeginTx, EndTx, Deliver, Fault, Restore, StartCycle, WindowEnd, SendEvent };

struct Item {
  std::int64_t t;
  std::uint64_t seq;
  Ev kind;
  std::uint32_t station;
  std::uint64_t arg;
  bool operator>(const Item& o) const { return t != o.t ? t > o.t : seq > o.seq; }
};

struct Tx {
  std::uint64_t id = 0;
  Mpdu m;
  int power = 0;
  std::uint32_t from = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;
  unsigned refs = 0;
  std::optional<OfdmBurst> burst;
};

struct Rx {
  std::uint32_t tx = 0;
  std::uint32_t to = 0;
  double distanceM = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;
  bool lost = false;
};

// Pool with index reuse so a 1000-node brigade does not retain every bucket.
template <class T>
class Pool {
 public:
  std::uint32_t alloc(T v) {
    if (!free_.empty()) {
      const auto i = free_.back();
      free_.pop_back();
      items_[i] = std::move(v);
      return i;
    }
    items_.push_back(std::move(v));
    return static_cast<std::uint32_t>(items_.size() - 1);
  }
  void release(std::uint32_t i) {
    items_[i] = T{};
    free_.push_back(i);
  }
  T& operator[](std::uint32_t i) { return items_[i]; }

 private:
  std::vector<T> items_;
  std::vector<std::uint32_t> free_;
};

class Kernel;

class Ctx final : public NodeContext {
 public:
  Ctx(Kernel& k, std::uint32_t idx) : k_(k), idx_(idx) {}
  std::int64_t now() const override;
  std::int64_t transmit(const Mpdu& m, int powerDbm, std::int64_t notBefore) override;
  void set_timer(TimerId id, std::int64_t at) override;
  void cancel_timer(TimerId id) override;
  void log(EventKind kind, nlohmann::json details) override;
  std::uint64_t random_below(std::uint64_t bound) override;
  MeasurementData acquire() override;
  void count_retry() override;
  void cycle_finished(const CycleReport& r) override;
  void association_finished(const AssociationReport& r) override;
  void promoted() override;

 private:
  Kernel& k_;
  std::uint32_t idx_;
};

struct Node {
  std::unique_ptr<Ctx> ctx;
  std::unique_ptr<Station> st;
  double pos = 0;
  std::string actor;
  std::array<std::uint64_t, kTimerCount> timerGen{};
  std::int64_t busyUntil = 0;
  std::int64_t curTxStart = -1;
  std::int64_t curTxEnd = -1;
  std::vector<std::uint32_t> activeRx;
  std::vector<std::pair<std::uint32_t, double>> reach;  // stations within range at full power
  std::int64_t txNs = 0;
  std::int64_t sleepNs = 0;
  std::int64_t sleepSince = -1;
};

class Kernel {
 public:
  Kernel(const Scenario& s, const PowerProfile& power, bool associationOnly)
      : s_(s), power_(power), associationOnly_(associationOnly), rng_(s.rngSeed) {
    s_.validate();
    tNn_ = to_ns(s_.tNn());
    tIl_ = to_ns(s_.tIl());
    hop_ = tNn_ + tIl_;
    tAcq_ = to_ns(s_.tAcqS);
    n_ = s_.nodeCount;
    const double windowS = s_.eventWindowS >= 0 ? s_.eventWindowS : n_ * s_.tNn();
    window_ = to_ns(windowS);
    const double analytic = latency_estimate({n_, s_.tNn(), s_.tIl(), s_.tAcqS});
    heartbeat_ = to_ns(s_.heartbeatCycles * analytic);
    stopAt_ = s_.durationS > 0 ? to_ns(s_.durationS) : kNever;
    build();
  }

  RunResult run();

  // NodeContext plumbing.
  std::int64_t now() const { return now_; }
  std::int64_t transmit(std::uint32_t from, const Mpdu& m, int power, std::int64_t notBefore);
  void set_timer(std::uint32_t st, TimerId id, std::int64_t at) {
    auto& gen = nodes_[st].timerGen[static_cast<std::size_t>(id)];
    ++gen;
    push(std::max(at, now_), Ev::Timer, st, static_cast<std::uint64_t>(id) | (gen << 8));
  }
  void cancel_timer(std::uint32_t st, TimerId id) { ++nodes_[st].timerGen[static_cast<std::size_t>(id)]; }
  void log(EventKind kind, std::uint32_t st, nlohmann::json details);
  std::uint64_t random_below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(rng_);
  }
  MeasurementData acquire(std::uint32_t st) const {
    MeasurementData d;
    d.pressurePa = (20'000'000u + st * 1000u + cycleTs_ % 1000u) & 0x7FF'FFFFu;
    d.temperatureK = static_cast<std::uint16_t>(300 + st % 200);
    return d;
  }
  void count_retry() { ++res_.metrics.retries; }
  void cycle_finished(const CycleReport& r);
  void association_finished(const AssociationReport& r);
  void promoted(std::uint32_t st);

 private:
  void build();
  void push(std::int64_t t, Ev kind, std::uint32_t st, std::uint64_t arg = 0) {
    queue_.push(Item{t, seq_++, kind, st, arg});
  }
  bool wants(EventKind k) const {
    switch (s_.logLevel) {
      case LogLevel::All: return true;
      case LogLevel::Protocol:
        return k != EventKind::TxStart && k != EventKind::TxEnd && k != EventKind::RxDetect &&
               k != EventKind::RxDecoded;
      case LogLevel::Cycles:
        return k == EventKind::CycleStart || k == EventKind::CycleEnd || k == EventKind::Warning ||
               k == EventKind::Fault;
    }
    return true;
  }
  bool cut(std::uint32_t a, std::uint32_t b) const {
    return !cuts_.empty() && cuts_.count({std::min(a, b), std::max(a, b)});
  }
  bool asleep(std::uint32_t st) const {
    return nodes_[st].st->phase() == Phase::Failed || silenced_.count(st);
  }
  void update_sleep(std::uint32_t st) {
    auto& n = nodes_[st];
    const bool sleeping = asleep(st);
    if (sleeping && n.sleepSince < 0) n.sleepSince = now_;
    if (!sleeping && n.sleepSince >= 0) {
      n.sleepNs += now_ - n.sleepSince;
      n.sleepSince = -1;
    }
  }

  void begin_tx(std::uint32_t txIdx);
  void deliver(std::uint32_t rxIdx);
  bool decode(const Tx& tx, const Rx& rx, Mpdu& out);
  double loss_probability(double snrDb) const;
  void release_tx(std::uint32_t txIdx) {
    if (--txs_[txIdx].refs == 0) txs_.release(txIdx);
  }
  void apply_fault(const Fault& f);
  void start_cycle();
  void open_window();
  bool more_cycles() const;
  void finish() { stopAt_ = std::min(stopAt_, now_); }
  void live_masters();

  Scenario s_;
  PowerProfile power_;
  bool associationOnly_;
  std::mt19937_64 rng_;
  std::int64_t tNn_ = 0, tIl_ = 0, hop_ = 0, tAcq_ = 0, window_ = 0, heartbeat_ = 0;
  std::uint32_t n_ = 0;
  std::uint32_t coord_ = 0;
  std::optional<std::uint32_t> standby_;
  std::vector<Node> nodes_;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  std::uint64_t logSeq_ = 0;
  std::int64_t now_ = 0;
  std::int64_t stopAt_ = kNever;
  Pool<Tx> txs_;
  Pool<Rx> rxs_;
  std::uint64_t nextTxId_ = 0;
  std::set<std::pair<std::uint32_t, std::uint32_t>> cuts_;
  std::set<std::uint32_t> silenced_;
  RunResult res_;

  // cycle control
  bool cycleRunning_ = false;
  bool statusPending_ = false;
  bool associating_ = false;
  bool halted_ = false;
  std::uint32_t dataDone_ = 0;
  std::uint64_t dataIndex_ = 0;
  std::uint32_t cycleTs_ = 0;
  std::int64_t cycleStart_ = 0;
  std::int64_t lastIdleTx_ = -1;
  std::set<Address> activeAtStart_;
};

void Kernel::build() {
  const auto sensors = s_.sensor_positions();
  std::vector<double> positions{0.0};
  positions.insert(positions.end(), sensors.begin(), sensors.end());
  if (s_.standby) standby_ = n_ + 1;

  ProtocolConfig cfg;
  cfg.tNnNs = tNn_;
  cfg.tIlNs = tIl_;
  cfg.tAcqNs = tAcq_;
  cfg.rampStartDbm = s_.minPowerDbm;
  cfg.maxPowerDbm = s_.maxPowerDbm;
  cfg.heartbeatPeriodNs = s_.standby ? heartbeat_ : 0;
  cfg.missedHeartbeats = s_.missedHeartbeats;

  const std::size_t count = n_ + 1 + (s_.standby ? 1 : 0);
  nodes_.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto& node = nodes_[i];
    node.ctx = std::make_unique<Ctx>(*this, i);
    const auto role = i == 0 ? Station::Role::Master : (standby_ && i == *standby_) ? Station::Role::Standby
                                                                                      : Station::Role::Sensor;
    node.st = std::make_unique<Station>(role, cfg, *node.ctx);
    node.pos = i <= n_ ? positions[i] : 0.0;
    node.actor = i == 0 ? "coordinator" : role == Station::Role::Standby ? "standby" : "node:" + std::to_string(i);
  }
  // Neighbours within reach at full power; positions are sorted so scan outward.
  const double range = (s_.maxPowerDbm - std::max(s_.receiver.sensitivityDbm,
                                                  s_.cable.noiseFloorDbm + s_.receiver.decodeSnrDb)) /
                       std::max(s_.cable.attenuationDbPerM, 1e-12);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t j = 0; j < count; ++j) {
      if (i == j) continue;
      const double d = std::abs(nodes_[i].pos - nodes_[j].pos);
      if (d <= range + 1e-6) nodes_[i].reach.emplace_back(j, d);
    }
  }
  if (s_.preassigned) {
    const auto tables = analytic_tables(positions, s_.cable, s_.receiver, s_.minPowerDbm, s_.maxPowerDbm, cfg.netId);
    std::set<Address> all;
    for (std::uint32_t i = 1; i <= n_; ++i) {
      nodes_[i].st->configure(Address{cfg.netId, i}, tables[i]);
      all.insert(Address{cfg.netId, i});
    }
    nodes_[0].st->configure(Address::coordinator(cfg.netId), tables[0]);
    nodes_[0].st->set_active_nodes(all);
    if (standby_) {
      nodes_[*standby_].st->configure(Address::coordinator(cfg.netId), tables[0]);
      nodes_[*standby_].st->set_active_nodes(all);
    }
  }
}

void Kernel::log(EventKind kind, std::uint32_t st, nlohmann::json details) {
  if (!wants(kind)) return;
  res_.log.push_back(Event{now_, logSeq_++, kind, nodes_[st].actor, std::move(details)});
}

std::int64_t Kernel::transmit(std::uint32_t from, const Mpdu& m, int power, std::int64_t notBefore) {
  auto& node = nodes_[from];
  const std::int64_t start = std::max({now_, node.busyUntil, notBefore});
  node.busyUntil = start + tNn_;
  node.txNs += tNn_;
  ++res_.metrics.transmissions;
  if (!cycleRunning_ && !associating_) lastIdleTx_ = start;
  Tx tx;
  tx.id = nextTxId_++;
  tx.m = m;
  tx.power = power;
  tx.from = from;
  tx.start = start;
  tx.end = start + tNn_;
  tx.refs = 1;
  const auto idx = txs_.alloc(std::move(tx));
  if (start == now_)
    begin_tx(idx);
  else
    push(start, Ev::BeginTx, from, idx);
  return start;
}

void Kernel::begin_tx(std::uint32_t idx) {
  auto& tx = txs_[idx];
  auto& sender = nodes_[tx.from];
  sender.curTxStart = tx.start;
  sender.curTxEnd = tx.end;
  if (wants(EventKind::TxStart)) {
    nlohmann::json d{{"tx", tx.id},
                     {"to", tx.m.currentDestination.nodeId},
                     {"power_dbm", tx.power},
                     {"bucket", to_string(tx.m.type())}};
    if (const auto* mg = std::get_if<Management>(&tx.m.msdu)) d["command"] = to_string(mg->command);
    if (tx.m.type() == BucketType::MeasurementData) d["origin"] = tx.m.originalSource.nodeId;
    log(EventKind::TxStart, tx.from, std::move(d));
    tx.refs++;
    push(tx.end, Ev::EndTx, tx.from, idx);
  }
  // Half duplex: anything the sender was still receiving is lost.
  for (auto r : sender.activeRx) {
    auto& rx = rxs_[r];
    if (rx.end > tx.start && !rx.lost) {
      rx.lost = true;
      ++res_.metrics.collisions;
    }
  }
  for (const auto& [to, dist] : sender.reach) {
    if (cut(tx.from, to) || asleep(to)) continue;
    if (!s_.receiver.decodable(link_budget(s_.cable, tx.power, dist))) continue;
    auto& rnode = nodes_[to];
    Rx rx{idx, to, dist, tx.start, tx.end, false};
    if (rnode.curTxEnd > tx.start) rx.lost = true;
    for (auto other : rnode.activeRx) {
      auto& o = rxs_[other];
      if (o.end > tx.start) {
        o.lost = true;
        rx.lost = true;
      }
    }
    if (rx.lost) ++res_.metrics.collisions;
    const auto ri = rxs_.alloc(rx);
    rnode.activeRx.push_back(ri);
    ++tx.refs;
    if (wants(EventKind::RxDetect)) log(EventKind::RxDetect, to, {{"tx", tx.id}, {"from", tx.from}});
    push(tx.start + hop_, Ev::Deliver, to, ri);
  }
  release_tx(idx);
}

double Kernel::loss_probability(double snrDb) const {
  const double eff = snrDb + s_.fecGainDb;
  const unsigned m = s_.ofdm.qamOrder;
  const double ps = m == 2 ? q_function(std::sqrt(2.0 * std::pow(10.0, eff / 10.0))) : ser_mqam(m, eff);
  // A replica fails if any of its data carriers is wrong; the bucket is lost
  // when at least two of the three replicas fail.
  const double p = 1.0 - std::pow(1.0 - ps, static_cast<double>(s_.ofdm.dataCarrierCount));
  return 3 * p * p - 2 * p * p * p;
}

bool Kernel::decode(const Tx& tx, const Rx& rx, Mpdu& out) {
  if (s_.fidelity == Fidelity::Abstract) {
    if (s_.cable.noiseEnabled) {
      const double snr = link_budget(s_.cable, tx.power, rx.distanceM).snrDb;
      if (std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < loss_probability(snr)) return false;
    }
    out = tx.m;
    return true;
  }
  try {
    auto& t = const_cast<Tx&>(tx);
    if (!t.burst) t.burst = modulate_bucket(serialize_mpdu(tx.m, s_.codec), s_.ofdm, s_.codec, tx.power);
    const auto prop = propagate(*t.burst, s_.cable, rx.distanceM, s_.ofdm.sampleRate,
                                link_seed(s_.rngSeed, tx.id * 4096 + rx.to));
    const auto at = detect_burst(prop.samples, s_.ofdm);
    if (!at) return false;
    const auto demod = demodulate_bucket(prop.samples, *at, s_.ofdm, s_.codec);
    out = parse_mpdu(demod.mpdu, s_.codec);
    return true;
  } catch (const Error&) {
    return false;
  }
}

void Kernel::deliver(std::uint32_t ri) {
  const Rx rx = rxs_[ri];
  auto& node = nodes_[rx.to];
  std::erase(node.activeRx, ri);
  rxs_.release(ri);
  const auto txIdx = rx.tx;
  if (!rx.lost && !asleep(rx.to)) {
    ++res_.metrics.receptions;
    Mpdu m;
    if (decode(txs_[txIdx], rx, m)) {
      if (wants(EventKind::RxDecoded)) {
        const Address self = node.st->address();
        if (m.currentDestination == self || m.currentDestination == kBroadcast ||
            (self.isUnassigned() && m.currentDestination.isUnassigned()))
          log(EventKind::RxDecoded, rx.to, {{"tx", txs_[txIdx].id}, {"from", txs_[txIdx].from}});
      }
      node.st->on_receive(m);
    } else {
      ++res_.metrics.bucketErrors;
    }
  }
  release_tx(txIdx);
}

void Kernel::apply_fault(const Fault& f) {
  const std::uint32_t target = f.kind == FaultKind::CoordinatorFail ? coord_ : f.target;
  nlohmann::json d{{"fault", to_string(f.kind)}, {"target", f.target}};
  if (f.kind == FaultKind::LinkCut) d["peer"] = f.peer;
  log(EventKind::Fault, target, std::move(d));
  switch (f.kind) {
    case FaultKind::NodeFail: nodes_[target].st->fail(); break;
    case FaultKind::NodeOrphan:
      nodes_[target].st->silence();
      silenced_.insert(target);
      push(now_ + to_ns(s_.orphanRestoreS), Ev::Restore, target);
      break;
    case FaultKind::CoordinatorFail:
      nodes_[target].st->fail();
      if (!standby_) {
        halted_ = true;
        res_.halted = true;
        log(EventKind::Warning, target, {{"code", "NetworkHalted"}, {"reason", "no standby coordinator"}});
        finish();
      }
      break;
    case FaultKind::LinkCut: cuts_.insert({std::min(f.target, f.peer), std::max(f.target, f.peer)}); break;
  }
  update_sleep(target);
}

bool Kernel::more_cycles() const {
  if (halted_ || associationOnly_) return false;
  if (s_.durationS > 0) return true;
  return dataDone_ < s_.cycles;
}

void Kernel::start_cycle() {
  if (halted_ || cycleRunning_) return;
  auto& c = *nodes_[coord_].st;
  if (c.phase() == Phase::Failed) return;  // resumes on promotion
  const bool status = statusPending_;
  if (!status && !more_cycles()) return;
  if (s_.durationS > 0 && now_ >= stopAt_) return;
  statusPending_ = false;
  cycleRunning_ = true;
  cycleStart_ = now_;
  cycleTs_ = std::max<std::uint32_t>(cycleTs_ + 1, static_cast<std::uint32_t>(now_ / 1'000'000));
  activeAtStart_ = c.active_nodes();
  const double tAcq = status ? static_cast<double>(activeAtStart_.size() + 2) * (hop_ * 1e-9) : s_.tAcqS;
  const double estimate = latency_estimate({n_, s_.tNn(), s_.tIl(), tAcq});
  const auto deadline = now_ + to_ns(s_.deadlineFactor * estimate);
  c.start_cycle(status ? CycleKind::Status : CycleKind::Data, cycleTs_, deadline, status ? 0 : ++dataIndex_);
}

void Kernel::cycle_finished(const CycleReport& r) {
  cycleRunning_ = false;
  CycleMetrics cm;
  cm.index = r.index;
  cm.kind = r.kind;
  cm.startS = r.startNs * 1e-9;
  cm.latencyS = (r.lastArrivalNs > 0 ? r.lastArrivalNs : r.endNs) * 1e-9 - cm.startS;
  cm.delivered = static_cast<std::uint32_t>(r.readings.size());
  for (const auto& a : r.arrivalOrder) cm.arrivalOrder.push_back(a.nodeId);
  std::set<std::uint32_t> accounted;
  for (const auto& [id, _] : r.readings) accounted.insert(id);
  std::uint32_t missing = 0;
  for (const auto& a : r.missing)
    if (accounted.insert(a.nodeId).second) ++missing;
  if (r.timedOut)
    cm.timedOut = missing;
  else
    cm.lostToFaults = missing;
  // Nodes dropped from the active set before this cycle began.
  for (std::uint32_t id = 1; id <= n_; ++id)
    if (!accounted.count(id)) ++cm.lostToFaults;
  res_.metrics.cycles.push_back(std::move(cm));
  res_.cycleReports.push_back(r);
  if (r.kind == CycleKind::Data) ++dataDone_;
  open_window();
}

void Kernel::open_window() {
  std::vector<TransmitIntent> intents;
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    nodes_[i].st->event_window();
    if (nodes_[i].st->has_event_bucket()) intents.push_back({i, false, i, true});
  }
  if (!intents.empty()) {
    const auto plan = arbitrate(intents, ArbitrationPhase::EventPeriod, s_.csma, tNn_ * 1e-3, rng_);
    res_.metrics.collisions += plan.collisionEpochs;
    for (const auto& tx : plan.order) push(now_ + std::llround(tx.startUs * 1e3), Ev::SendEvent, tx.id);
  }
  push(now_ + window_, Ev::WindowEnd, 0);
}

void Kernel::association_finished(const AssociationReport& r) {
  associating_ = false;
  AssociationReport out = r;
  out.complete = !r.stalled;
  res_.association = out;
  if (r.stalled) {
    finish();
    return;
  }
  if (standby_) {
    nodes_[coord_].st->start_heartbeats();
    nodes_[*standby_].st->start_heartbeats();
  }
  statusPending_ = true;
  push(now_, Ev::StartCycle, coord_);
}

void Kernel::live_masters() {
  std::size_t live = 0;
  for (const auto& n : nodes_)
    if (n.st->role() == Station::Role::Master && n.st->phase() != Phase::Failed) ++live;
  res_.maxLiveMasters = std::max(res_.maxLiveMasters, live);
}

void Kernel::promoted(std::uint32_t st) {
  ++res_.promotions;
  coord_ = st;
  cycleRunning_ = false;  // an interrupted cycle on the failed master is abandoned
  live_masters();
  push(now_, Ev::StartCycle, coord_);
}

RunResult Kernel::run() {
  live_masters();
  for (const auto& f : s_.faults) push(to_ns(f.timeS), Ev::Fault, 0, &f - s_.faults.data());
  if (s_.preassigned) {
    if (standby_) {
      nodes_[coord_].st->start_heartbeats();
      nodes_[*standby_].st->start_heartbeats();
    }
    push(0, Ev::StartCycle, coord_);
  } else {
    associating_ = true;
    // Ample: every node ramps the full power range with repeats.
    const auto levels = static_cast<std::int64_t>(s_.maxPowerDbm - s_.minPowerDbm + 1);
    const auto deadline = static_cast<std::int64_t>(n_) * levels * 9 * 6 * hop_ + 1'000'000'000;
    nodes_[coord_].st->begin_association(n_, deadline);
  }

  while (!queue_.empty()) {
    const Item it = queue_.top();
    if (it.t > stopAt_) break;
    queue_.pop();
    now_ = it.t;
    switch (it.kind) {
      case Ev::Timer: {
        const auto id = static_cast<TimerId>(it.arg & 0xFF);
        if (nodes_[it.station].timerGen[static_cast<std::size_t>(id)] != (it.arg >> 8)) break;
        nodes_[it.station].st->on_timer(id);
        break;
      }
      case Ev::BeginTx: begin_tx(static_cast<std::uint32_t>(it.arg)); break;
      case Ev::EndTx: {
        const auto idx = static_cast<std::uint32_t>(it.arg);
        log(EventKind::TxEnd, it.station, {{"tx", txs_[idx].id}});
        release_tx(idx);
        break;
      }
      case Ev::Deliver: deliver(static_cast<std::uint32_t>(it.arg)); break;
      case Ev::Fault: apply_fault(s_.faults[it.arg]); break;
      case Ev::Restore:
        silenced_.erase(it.station);
        nodes_[it.station].st->restore_as_orphan();
        update_sleep(it.station);
        break;
      case Ev::StartCycle: start_cycle(); break;
      case Ev::SendEvent: nodes_[it.station].st->send_event_bucket(); break;
      case Ev::WindowEnd:
        if (cycleRunning_) break;
        if (lastIdleTx_ >= 0 && lastIdleTx_ + 3 * hop_ > now_) {
          // Event traffic still moving; keep the window open.
          push(lastIdleTx_ + 3 * hop_, Ev::WindowEnd, 0);
          break;
        }
        if (!more_cycles()) {
          finish();
          break;
        }
        push(std::max(now_, cycleStart_ + to_ns(s_.cyclePeriodS)), Ev::StartCycle, coord_);
        break;
    }
  }

  const std::int64_t end = stopAt_ == kNever ? now_ : std::max(now_, stopAt_);
  auto& m = res_.metrics;
  m.simulatedS = end * 1e-9;
  m.energy.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    const std::int64_t sleep = n.sleepNs + (n.sleepSince >= 0 ? end - n.sleepSince : 0);
    const std::int64_t tx = std::min(n.txNs, end - sleep);
    auto& e = m.energy[i];
    e.sleepS = sleep * 1e-9;
    e.txS = tx * 1e-9;
    e.idleS = (end - sleep - tx) * 1e-9;
    e.joules = power_.supplyV * (power_.txA * e.txS + power_.idleA * e.idleS + power_.sleepA * e.sleepS);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    res_.tables.push_back(nodes_[i].st->table());
    res_.addresses.push_back(nodes_[i].st->address());
    res_.phases.push_back(nodes_[i].st->phase());
  }
  return std::move(res_);
}

std::int64_t Ctx::now() const { return k_.now(); }
std::int64_t Ctx::transmit(const Mpdu& m, int powerDbm, std::int64_t notBefore) {
  return k_.transmit(idx_, m, powerDbm, notBefore);
}
void Ctx::set_timer(TimerId id, std::int64_t at) { k_.set_timer(idx_, id, at); }
void Ctx::cancel_timer(TimerId id) { k_.cancel_timer(idx_, id); }
void Ctx::log(EventKind kind, nlohmann::json details) { k_.log(kind, idx_, std::move(details)); }
std::uint64_t Ctx::random_below(std::uint64_t bound) { return k_.random_below(bound); }
MeasurementData Ctx::acquire() { return k_.acquire(idx_); }
void Ctx::count_retry() { k_.count_retry(); }
void Ctx::cycle_finished(const CycleReport& r) { k_.cycle_finished(r); }
void Ctx::association_finished(const AssociationReport& r) { k_.association_finished(r); }
void Ctx::promoted() { k_.promoted(idx_); }

}  // namespace

RunResult run_scenario(const Scenario& s, const PowerProfile& power) { return Kernel(s, power, false).run(); }

RunResult run_association(Scenario s) {
  s.preassigned = false;
  s.faults.clear();
  auto r = Kernel(s, {}, true).run();
  if (!r.association || r.association->stalled) {
    const auto last = r.association ? r.association->lastReached.nodeId : 0u;
    throw Error(ErrorCode::AssociationStalled,
                "association reached node " + std::to_string(last) + " of " + std::to_string(s.nodeCount));
  }
  return r;
}

}  // namespace bucketline
