#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "manetir/crypto.hpp"
#include "manetir/esom.hpp"
#include "manetir/graph.hpp"
#include "manetir/wire.hpp"

namespace manetir {

class Group;

/// Sliding window over the last `capacity` classified verdicts of one node.
/// Unclassified verdicts are not recorded.
class CoverageWindow {
 public:
  static constexpr std::size_t kDefaultCapacity = 30;

  explicit CoverageWindow(std::size_t capacity = kDefaultCapacity);
  void record(Verdict v);
  std::size_t size() const { return samples_.size(); }
  std::size_t attacks() const { return attacks_; }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<bool> samples_;
  std::size_t attacks_ = 0;
};

/// map_i as exchanged: owner, epoch, the attack share of its current window and
/// a hash commitment to the serialized eSOM grid.
struct SecurityMap {
  NodeId owner{};
  std::uint64_t epoch = 0;
  std::uint32_t window = 0;   // classified samples in the window
  std::uint32_t attacks = 0;  // of which Attack
  Bytes grid_hash;

  double coverage() const { return window ? double(attacks) / double(window) : 0.0; }
  Bytes serialize() const;
  static SecurityMap read(ByteReader& r);
  friend bool operator==(const SecurityMap&, const SecurityMap&) = default;
};

SecurityMap make_security_map(NodeId owner, std::uint64_t epoch, const CoverageWindow& w,
                              const CipherSuite& suite, const SomGrid* grid);

struct MapEntry {
  std::uint32_t window = 0;
  std::uint32_t attacks = 0;
  /// Attack when more than half of the window is attack.
  Verdict summary = Verdict::Normal;

  double coverage() const { return window ? double(attacks) / double(window) : 0.0; }
  bool attack_dominant() const { return summary == Verdict::Attack; }
  friend bool operator==(const MapEntry&, const MapEntry&) = default;
};

struct GlobalLocalMap {
  NodeId owner{};
  double composed_at = 0.0;
  std::map<NodeId, MapEntry> entries;

  Bytes serialize() const;
  static GlobalLocalMap read(ByteReader& r);
  friend bool operator==(const GlobalLocalMap&, const GlobalLocalMap&) = default;
};

/// Per-node summary table of the owner and every verified neighbour map.
GlobalLocalMap compose_global_local_map(const SecurityMap& own, const std::vector<SecurityMap>& verified,
                                        double now);

/// Non-quarantined, non-attack-dominant candidate with the lowest coverage;
/// ties go to the lowest id. Throws NoSecureNeighbor when none qualifies.
NodeId select_forwarding_node(const GlobalLocalMap& glm, const std::set<NodeId>& candidates,
                              const std::set<NodeId>& quarantined = {});

/// True iff attacks exceed two thirds of the window (strictly). Throws
/// InsufficientWindow when fewer than `min_window` samples were classified.
bool check_global_trigger(const SecurityMap& map, std::size_t min_window = CoverageWindow::kDefaultCapacity);

/// Next hops over the connectivity graph that never use a quarantined node.
struct RoutingTable {
  std::map<NodeId, NodeId> next_hop;
  std::set<NodeId> quarantined;

  bool references(NodeId n) const;
  friend bool operator==(const RoutingTable&, const RoutingTable&) = default;
};

RoutingTable compute_routes(const Graph& g, NodeId self, const std::set<NodeId>& quarantined);

struct TraceEvent {
  double time = 0.0;
  std::string kind;
  NodeId node{};
  std::optional<NodeId> peer;
  std::string detail;
};

/// Newline-delimited `time,event_kind,node,peer,detail` records.
class Trace {
 public:
  void add(double time, std::string kind, NodeId node, std::optional<NodeId> peer = {},
           std::string detail = {});
  const std::vector<TraceEvent>& events() const { return events_; }
  std::size_t count(std::string_view kind) const;
  std::string csv(bool header = true) const;

 private:
  std::vector<TraceEvent> events_;
};

/// The keys the response protocols run under: LK_j on root / level-1 edges,
/// GK everywhere else.
struct ResponseKeys {
  CipherSuite suite;
  std::uint64_t epoch = 0;
  NodeId root{};
  KeyMaterial global_key;
  std::map<NodeId, KeyMaterial> local_keys;
  std::set<NodeId> members;  // parties holding GK

  static ResponseKeys from_group(const Group& g);
  /// Key for the link a-b, absent when either end is outside the group.
  std::optional<KeyMaterial> link(NodeId a, NodeId b) const;
};

/// Adversary hook on every response PDU in flight: returns the wire bytes to
/// deliver (possibly altered) or nothing to lose the message.
using WireFault = std::function<std::optional<Bytes>(const ProtocolMessage&, Bytes wire)>;

struct LocalMapOutcome {
  GlobalLocalMap map;
  std::set<NodeId> excluded;     // neighbours whose reply was lost or failed
  std::set<NodeId> accepted_by;  // neighbours that verified the composed map
  std::size_t tampers = 0;
};

struct AlarmOutcome {
  std::set<NodeId> accepted;
  std::set<NodeId> rejected;
};

/// Response-module state of every node plus the two distribution protocols.
class ResponseEngine {
 public:
  ResponseEngine(Graph graph, ResponseKeys keys, std::uint64_t seed,
                 std::size_t window = CoverageWindow::kDefaultCapacity);

  void set_time(double t) { now_ = t; }
  double now() const { return now_; }
  void set_fault(WireFault f) { fault_ = std::move(f); }
  void set_graph(Graph g);
  const Graph& graph() const { return graph_; }
  /// New epoch keys. Quarantine on every node is lifted for the parties in
  /// `reauthenticated`.
  void set_keys(ResponseKeys keys, const std::set<NodeId>& reauthenticated = {});
  const ResponseKeys& keys() const { return keys_; }
  void set_grid(const SomGrid* grid) { grid_ = grid; }

  void observe(NodeId n, Verdict v);
  const CoverageWindow& window(NodeId n) const;
  SecurityMap security_map(NodeId n) const;

  /// Steps 1-4 of the local map exchange started by `initiator`.
  LocalMapOutcome distribute_local_maps(NodeId initiator);
  /// Global alarm of `victim`: requires its trigger to hold, then every node
  /// in its range verifies the alarm under GK and quarantines the victim.
  AlarmOutcome global_alarm(NodeId victim);
  /// Delivers raw alarm bytes to `receiver` (forgery and replay tests).
  bool receive_alarm(NodeId receiver, const Bytes& wire);

  const RoutingTable& routes(NodeId n) const;
  std::optional<GlobalLocalMap> local_map(NodeId n) const;
  const Trace& trace() const { return trace_; }
  Trace& trace() { return trace_; }
  std::size_t tamper_count() const { return tampers_; }
  std::vector<NodeId> nodes() const { return graph_.nodes(); }

 private:
  struct NodeState {
    CoverageWindow window;
    RoutingTable routes;
    std::optional<GlobalLocalMap> glm;
    std::set<std::uint64_t> seen_alarms;
  };
  NodeState& state(NodeId n);
  std::optional<Bytes> transmit(const ProtocolMessage& msg);
  ProtocolMessage seal(ProtocolMessage msg, const Bytes& body, std::uint64_t nonce, const KeyMaterial& key) const;
  /// Decodes, checks kind and peers, verifies the digest; returns the body
  /// reader's source bytes and the nonce on success.
  std::optional<std::pair<Bytes, std::uint64_t>> open(const Bytes& wire, MessageKind kind, NodeId from,
                                                       NodeId to, const KeyMaterial& key) const;
  void reroute(NodeId n);
  void tamper(NodeId at, std::optional<NodeId> peer, std::string detail);

  Graph graph_;
  ResponseKeys keys_;
  Rng rng_;
  std::size_t window_capacity_;
  std::map<NodeId, NodeState> nodes_;
  const SomGrid* grid_ = nullptr;
  WireFault fault_;
  Trace trace_;
  double now_ = 0.0;
  std::size_t tampers_ = 0;
};

}  // namespace manetir
