#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bucketline/channel.hpp"
#include "bucketline/events.hpp"
#include "bucketline/mpdu.hpp"

namespace bucketline {

/// Sent in currentDestination to reach every listener in range.
inline constexpr Address kBroadcast{0xFF, 0xFFFFFE};

enum class Direction { Upstream, Downstream };

struct NeighborEntry {
  Address address;
  Direction direction = Direction::Downstream;
  int minTxPowerDbm = 0;
  std::uint32_t lastSeenMs = 0;
  bool active = true;
};

/// Reachable neighbours of one station. Nodes sit in a queue numbered by
/// NodeID, so rank is the NodeID difference and the coordinator is rank 0.
class NeighborTable {
 public:
  explicit NeighborTable(Address self = {}) : self_(self) {}

  void set_self(Address self);
  Address self() const { return self_; }

  /// Inserts or lowers the stored power for `a`; reactivates the entry.
  void upsert(Address a, int minTxPowerDbm, std::uint32_t seenMs = 0);
  void set_active(Address a, bool active);
  /// Records traffic from `a` and reactivates its entry.
  void touch(Address a, std::uint32_t seenMs);
  const NeighborEntry* find(Address a) const;
  bool contains(Address a) const { return find(a) != nullptr; }

  /// Closest active neighbour on one side.
  std::optional<NeighborEntry> nearest(Direction d) const;
  /// Closest active neighbour on one side strictly beyond `after`.
  std::optional<NeighborEntry> next_beyond(Direction d, Address after) const;

  /// Entries sorted by side, then by distance rank (closest first).
  const std::vector<NeighborEntry>& entries() const { return entries_; }
  std::size_t count(Direction d, bool activeOnly = true) const;

 private:
  Direction side_of(Address a) const;
  std::uint32_t rank(Address a) const;
  void sort();

  Address self_;
  std::vector<NeighborEntry> entries_;
};

enum class Phase { Unassociated, Associating, Idle, Measuring, RelayingUp, AwaitingAck, Orphan, Failed };
std::string_view to_string(Phase p);

/// Contention parameters for event-driven traffic.
struct CsmaParams {
  double cifsUs = 51.2;
  unsigned prpSlots = 2;
  double rifsUs = 25.6;
  double backoffSlotUs = 25.6;
  unsigned cwMin = 8;
  unsigned cwMax = 64;
  void validate() const;
};

struct TransmitIntent {
  std::size_t id = 0;
  bool coordinatorTraffic = false;  // from or to the coordinator
  std::size_t depth = 0;            // position in the queue, 0 = coordinator
  bool eventDriven = false;
};

enum class ArbitrationPhase { MeasurementCycle, EventPeriod };

struct ScheduledTx {
  std::size_t id = 0;
  double startUs = 0;        // from the start of arbitration
  unsigned backoffSlots = 0;  // winning draw
  unsigned collisions = 0;    // epochs this intent lost to a tie
};

struct Arbitration {
  std::vector<ScheduledTx> order;
  std::vector<std::size_t> deferred;  // event buckets held until the cycle ends
  unsigned collisionEpochs = 0;
};

/// Orders pending transmissions. Coordinator traffic always goes first.
/// During a measurement cycle shallower nodes win and event buckets are
/// deferred; in the event period deeper nodes win. Equal priorities contend
/// with binary exponential backoff; a tie at the minimum draw is a collision.
Arbitration arbitrate(const std::vector<TransmitIntent>& pending, ArbitrationPhase phase, const CsmaParams& csma,
                      double bucketUs, std::mt19937_64& rng);

/// Returns the queue index the orphan at `orphan` should address to rejoin:
/// the nearest alive station it can reach at maxDbm, upstream preferred.
/// Throws OrphanUnreachable when there is none.
std::size_t plan_orphan_recovery(const std::vector<double>& positions, std::size_t orphan,
                                 const std::vector<bool>& alive, const CableModel& cable, const ReceiverModel& rx,
                                 int maxDbm);

/// Neighbour tables a completed association produces, derived from the link
/// budget directly. positions[0] is the coordinator.
std::vector<NeighborTable> analytic_tables(const std::vector<double>& positions, const CableModel& cable,
                                           const ReceiverModel& rx, int minDbm, int maxDbm, std::uint8_t netId);

struct ProtocolConfig {
  std::int64_t tNnNs = 332'800;
  std::int64_t tIlNs = 33'280;
  std::int64_t tAcqNs = 1'000'000'000;
  unsigned ackTimeoutHops = 3;
  unsigned maxRetries = 3;
  int rampStartDbm = -5;
  int maxPowerDbm = 10;
  unsigned replyWindow = 4;  // hello replies are spread over this many hops
  std::uint8_t netId = 1;
  std::int64_t heartbeatPeriodNs = 0;  // 0 disables heartbeats
  unsigned missedHeartbeats = 3;

  std::int64_t hop() const { return tNnNs + tIlNs; }
};

enum class TimerId {
  ForwardAck,
  DataAck,
  DownstreamWait,
  SendOwn,
  CycleDeadline,
  CycleSettle,
  Heartbeat,
  Watchdog,
  RampStep,
  HelloReply,
  AssociationDeadline,
  Count
};

enum class CycleKind { Data, Status };

struct CycleReport {
  std::uint64_t index = 0;
  CycleKind kind = CycleKind::Data;
  std::uint32_t timestampMs = 0;
  std::int64_t startNs = 0;
  std::int64_t endNs = 0;
  std::int64_t lastArrivalNs = 0;
  std::vector<Address> arrivalOrder;
  std::map<std::uint32_t, MeasurementData> readings;  // by NodeID
  std::vector<Address> missing;
  bool timedOut = false;
};

struct AssociationReport {
  bool complete = false;
  bool stalled = false;
  std::uint32_t assigned = 0;
  Address lastReached;
  std::int64_t endNs = 0;
};

/// Services a station needs from whatever drives it.
class NodeContext {
 public:
  virtual ~NodeContext() = default;
  virtual std::int64_t now() const = 0;
  /// Starts a transmission at notBefore or as soon as the station's radio is
  /// free after it, and returns the actual start time.
  virtual std::int64_t transmit(const Mpdu& m, int powerDbm, std::int64_t notBefore) = 0;
  virtual void set_timer(TimerId id, std::int64_t at) = 0;
  virtual void cancel_timer(TimerId id) = 0;
  virtual void log(EventKind kind, nlohmann::json details) = 0;
  virtual std::uint64_t random_below(std::uint64_t bound) = 0;
  virtual MeasurementData acquire() = 0;
  virtual void count_retry() {}
  virtual void cycle_finished(const CycleReport&) {}
  virtual void association_finished(const AssociationReport&) {}
  virtual void promoted() {}
};

/// One station on the cable: a sensor node, the master coordinator or a
/// standby coordinator shadowing the master.
class Station {
 public:
  enum class Role { Sensor, Master, Standby };

  Station(Role role, const ProtocolConfig& cfg, NodeContext& ctx);

  Role role() const { return role_; }
  bool isCoordinator() const { return role_ != Role::Sensor; }
  Address address() const { return table_.self(); }
  Phase phase() const { return phase_; }
  const NeighborTable& table() const { return table_; }
  NeighborTable& table() { return table_; }

  /// Preassigned address and table; the station goes straight to Idle.
  void configure(Address a, NeighborTable t);

  void on_receive(const Mpdu& m);
  void on_timer(TimerId id);

  // Coordinator entry points.
  void begin_association(std::uint32_t expectedNodes, std::int64_t deadlineNs);
  void start_cycle(CycleKind kind, std::uint32_t timestampMs, std::int64_t deadlineNs, std::uint64_t index);
  bool cycle_running() const { return coord_.running; }
  const std::set<Address>& active_nodes() const { return coord_.active; }
  void set_active_nodes(std::set<Address> s) { coord_.active = std::move(s); }
  void start_heartbeats();

  // Faults.
  void fail();
  void silence();
  void restore_as_orphan();
  /// Called when an event period opens; re-arms a pending rejoin attempt.
  void event_window();
  bool has_event_bucket() const { return orphan_.pending; }
  void send_event_bucket();
  unsigned orphan_attempts() const { return orphan_.attempts; }

 private:
  void set_phase(Phase p);
  int power_to(Address a) const;
  int power_for(Address target, std::optional<Address> listener) const;
  std::int64_t send(Mpdu m, int power);
  std::int64_t slot_after(std::int64_t t) const;
  void upstream_busy();
  bool heard_recently(Address a) const;
  void back_off(unsigned tries);
  Mpdu make(Address dest, Address finalDest, std::uint32_t ts, Msdu msdu) const;

  // Association.
  void ramp_step();
  void on_hello(const Mpdu& m, const Management& mg);
  void on_hello_reply(const Mpdu& m);
  void finish_ramp();
  void on_association_end(const Mpdu& m, const Management& mg);
  void on_set_address(const Mpdu& m, const Management& mg);

  // Brigade.
  void begin_cycle_as_node(const Mpdu& req, CycleKind kind, bool explicitPoll);
  void forward_request();
  void forward_failed();
  void on_request(const Mpdu& m, CycleKind kind);
  void on_node_data_request(const Mpdu& m);
  void on_data(const Mpdu& m);
  void on_ack(const Mpdu& m);
  void overheard(const Mpdu& m);
  void try_send();
  void send_in_flight();
  void data_ack_timeout();
  void downstream_wait_timeout();
  void arm_downstream_wait();
  void ack_to(Address to, Address finalDest);
  void mark_skipped_upstream(Address requester);
  void data_acked();
  void forward_acked();
  void note_downstream_heard();
  Msdu own_payload();

  // Coordinator.
  void shadow(const Mpdu& m);
  void send_heartbeat();
  void record(const Mpdu& m);
  void maybe_end_cycle();
  void end_cycle(bool timedOut);
  void on_association_request(const Mpdu& m);
  void route_down(const Mpdu& m);

  Role role_;
  ProtocolConfig cfg_;
  NodeContext& ctx_;
  NeighborTable table_;
  Phase phase_ = Phase::Unassociated;

  struct Ramp {
    bool active = false;
    int power = 0;
    bool gotReply = false;
    std::uint32_t nextFreeId = 1;
    unsigned repeats = 0;
  } ramp_;

  struct PendingReply {
    bool pending = false;
    bool sent = false;
    Address to;
    int power = 0;
    std::uint32_t nonce = 0;
    unsigned repeats = 0;
  } reply_;
  std::map<Address, int> heardHelloPower_;
  std::map<std::uint32_t, std::int64_t> heardNs_;  // last decoded frame per NodeID

  struct Cycle {
    bool active = false;
    CycleKind kind = CycleKind::Data;
    std::uint32_t ts = 0;
    Address upstream;
    std::optional<Address> downstream;
    Address requester;
    // request forwarding
    bool fwdPending = false;
    unsigned fwdTries = 0;
    std::int64_t fwdSentNs = 0;
    std::int64_t fwdAckNs = -1;
    std::int64_t tacqNs = 0;
    // own reading
    bool polled = false;
    std::int64_t pollReadyNs = 0;
    std::int64_t acqDoneNs = 0;
    bool ownQueued = false;
    bool ownAcked = false;
    std::int64_t ownSentNs = -1;
    std::int64_t lastSlotNs = -1;
    // relay
    struct Pending {
      Mpdu m;
      std::optional<Address> listener;
    };
    std::deque<Pending> queue;
    std::optional<Pending> inFlight;
    unsigned inFlightTries = 0;
    unsigned inFlightRounds = 0;     // retry rounds forgiven because upstream was audibly busy
    std::int64_t holdUntilNs = -1;   // retry backoff
    std::set<std::uint32_t> seen;     // originalSource NodeIDs taken on
    std::set<std::uint32_t> settled;  // originalSource NodeIDs acknowledged upstream
    // downstream wait
    bool downstreamHeard = false;
    unsigned dsTries = 0;
  } cycle_;

  struct CoordinatorState {
    bool running = false;
    std::set<Address> active;
    CycleReport report;
    std::int64_t deadlineNs = 0;
    std::uint32_t expected = 0;
    bool associating = false;
    // standby view
    std::int64_t lastHeartbeatNs = 0;
    std::uint32_t observedTs = 0;
    std::set<Address> observedThisCycle;
    std::optional<int> shadowHelloPower;
    bool heartbeatDeferred = false;
  } coord_;

  struct OrphanState {
    bool pending = false;
    unsigned attempts = 0;
    bool gaveUp = false;
  } orphan_;
};

}  // namespace bucketline
