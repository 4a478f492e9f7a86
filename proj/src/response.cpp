#include "manetir/response.hpp"

#include <algorithm>
#include <deque>

#include "manetir/error.hpp"
#include "manetir/gka_group.hpp"

namespace manetir {

// ---- coverage --------------------------------------------------------------

CoverageWindow::CoverageWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(ErrorCode::InvalidConfig, "coverage window must hold at least one sample");
}

void CoverageWindow::record(Verdict v) {
  if (v == Verdict::Unclassified) return;
  const bool attack = v == Verdict::Attack;
  samples_.push_back(attack);
  attacks_ += attack;
  if (samples_.size() > capacity_) {
    attacks_ -= samples_.front();
    samples_.pop_front();
  }
}

Bytes SecurityMap::serialize() const {
  ByteWriter w;
  w.u32(owner.value).u64(epoch).u32(window).u32(attacks).u8(static_cast<std::uint8_t>(grid_hash.size()));
  w.raw(grid_hash);
  return std::move(w).take();
}

SecurityMap SecurityMap::read(ByteReader& r) {
  SecurityMap m;
  m.owner = NodeId{r.u32()};
  m.epoch = r.u64();
  m.window = r.u32();
  m.attacks = r.u32();
  if (m.attacks > m.window) throw Error(ErrorCode::Malformed, "map claims more attacks than samples");
  const auto n = r.u8();
  const auto h = r.raw(n);
  m.grid_hash.assign(h.begin(), h.end());
  return m;
}

SecurityMap make_security_map(NodeId owner, std::uint64_t epoch, const CoverageWindow& w,
                              const CipherSuite& suite, const SomGrid* grid) {
  SecurityMap m{owner, epoch, static_cast<std::uint32_t>(w.size()), static_cast<std::uint32_t>(w.attacks()), {}};
  if (grid) m.grid_hash = hash(suite, serialize_grid(*grid)).bytes;
  return m;
}

// ---- composition and decisions ---------------------------------------------

Bytes GlobalLocalMap::serialize() const {
  ByteWriter w;
  w.u32(owner.value).f64(composed_at).u16(static_cast<std::uint16_t>(entries.size()));
  for (const auto& [id, e] : entries) {
    w.u32(id.value).u32(e.window).u32(e.attacks).u8(static_cast<std::uint8_t>(e.summary));
  }
  return std::move(w).take();
}

GlobalLocalMap GlobalLocalMap::read(ByteReader& r) {
  GlobalLocalMap m;
  m.owner = NodeId{r.u32()};
  m.composed_at = r.f64();
  const auto n = r.u16();
  for (std::uint16_t i = 0; i < n; ++i) {
    const NodeId id{r.u32()};
    MapEntry e;
    e.window = r.u32();
    e.attacks = r.u32();
    const auto s = r.u8();
    if (s > 1 || e.attacks > e.window) throw Error(ErrorCode::Malformed, "bad local map entry");
    e.summary = static_cast<Verdict>(s);
    if (!m.entries.emplace(id, e).second) throw Error(ErrorCode::Malformed, "duplicate local map entry");
  }
  return m;
}

namespace {

MapEntry entry_of(const SecurityMap& m) {
  MapEntry e{m.window, m.attacks, Verdict::Normal};
  if (2ull * m.attacks > m.window) e.summary = Verdict::Attack;
  return e;
}

}  // namespace

GlobalLocalMap compose_global_local_map(const SecurityMap& own, const std::vector<SecurityMap>& verified,
                                        double now) {
  GlobalLocalMap g{own.owner, now, {}};
  g.entries[own.owner] = entry_of(own);
  for (const auto& m : verified) g.entries[m.owner] = entry_of(m);
  return g;
}

NodeId select_forwarding_node(const GlobalLocalMap& glm, const std::set<NodeId>& candidates,
                              const std::set<NodeId>& quarantined) {
  std::optional<NodeId> best;
  MapEntry best_e;
  for (NodeId c : candidates) {
    const auto it = glm.entries.find(c);
    if (it == glm.entries.end() || quarantined.contains(c) || it->second.attack_dominant()) continue;
    const MapEntry& e = it->second;
    // Exact comparison of attacks/window fractions; empty windows count as 0.
    const auto lhs = std::uint64_t{e.attacks} * std::max<std::uint32_t>(best_e.window, 1);
    const auto rhs = std::uint64_t{best_e.attacks} * std::max<std::uint32_t>(e.window, 1);
    if (!best || lhs < rhs) {
      best = c;
      best_e = e;
    }
  }
  if (!best) throw Error(ErrorCode::NoSecureNeighbor, "every candidate is quarantined or attack-dominant");
  return *best;
}

bool check_global_trigger(const SecurityMap& map, std::size_t min_window) {
  if (map.window < min_window) {
    throw Error(ErrorCode::InsufficientWindow,
                std::to_string(map.window) + " classified samples, need " + std::to_string(min_window),
                {map.owner});
  }
  return 3ull * map.attacks > 2ull * map.window;
}

bool RoutingTable::references(NodeId n) const {
  if (next_hop.contains(n)) return true;
  return std::any_of(next_hop.begin(), next_hop.end(), [&](const auto& kv) { return kv.second == n; });
}

RoutingTable compute_routes(const Graph& g, NodeId self, const std::set<NodeId>& quarantined) {
  RoutingTable t;
  t.quarantined = quarantined;
  if (!g.contains(self)) return t;
  // One BFS in ascending-id order; each node inherits its parent's first hop.
  std::deque<NodeId> q{self};
  std::set<NodeId> seen{self};
  while (!q.empty()) {
    const NodeId n = q.front();
    q.pop_front();
    for (NodeId m : g.neighbors(n)) {
      if (quarantined.contains(m) || !seen.insert(m).second) continue;
      t.next_hop[m] = n == self ? m : t.next_hop.at(n);
      q.push_back(m);
    }
  }
  return t;
}

// ---- trace -----------------------------------------------------------------

void Trace::add(double time, std::string kind, NodeId node, std::optional<NodeId> peer, std::string detail) {
  events_.push_back({time, std::move(kind), node, peer, std::move(detail)});
}

std::size_t Trace::count(std::string_view kind) const {
  return static_cast<std::size_t>(
      std::count_if(events_.begin(), events_.end(), [&](const TraceEvent& e) { return e.kind == kind; }));
}

std::string Trace::csv(bool header) const {
  std::string out = header ? "time,event_kind,node,peer,detail\n" : "";
  for (const auto& e : events_) {
    out += format_double(e.time);
    out += ',';
    out += e.kind;
    out += ',';
    out += to_string(e.node);
    out += ',';
    if (e.peer) out += to_string(*e.peer);
    out += ',';
    out += e.detail;
    out += '\n';
  }
  return out;
}

// ---- keys ------------------------------------------------------------------

ResponseKeys ResponseKeys::from_group(const Group& g) {
  ResponseKeys k;
  const SessionKeys s = g.keys();
  k.suite = g.config().suite;
  k.epoch = s.epoch;
  k.root = g.tree().root();
  k.global_key = s.global_key;
  k.local_keys = s.local_keys;
  const auto parts = g.participants();
  k.members.insert(parts.begin(), parts.end());
  return k;
}

std::optional<KeyMaterial> ResponseKeys::link(NodeId a, NodeId b) const {
  if (!members.contains(a) || !members.contains(b)) return std::nullopt;
  if (a == root && local_keys.contains(b)) return local_keys.at(b);
  if (b == root && local_keys.contains(a)) return local_keys.at(a);
  return global_key;
}

// ---- engine ----------------------------------------------------------------

ResponseEngine::ResponseEngine(Graph graph, ResponseKeys keys, std::uint64_t seed, std::size_t window)
    : graph_(std::move(graph)), keys_(std::move(keys)), rng_(Rng::derive(seed, 0x72657370ULL)),
      window_capacity_(window) {
  for (NodeId n : graph_.nodes()) reroute(n);
}

ResponseEngine::NodeState& ResponseEngine::state(NodeId n) {
  auto it = nodes_.find(n);
  if (it == nodes_.end()) it = nodes_.emplace(n, NodeState{CoverageWindow(window_capacity_), {}, {}, {}}).first;
  return it->second;
}

void ResponseEngine::set_graph(Graph g) {
  graph_ = std::move(g);
  for (NodeId n : graph_.nodes()) reroute(n);
}

void ResponseEngine::set_keys(ResponseKeys keys, const std::set<NodeId>& reauthenticated) {
  keys_ = std::move(keys);
  for (auto& [id, s] : nodes_) {
    std::size_t lifted = 0;
    for (NodeId r : reauthenticated) lifted += s.routes.quarantined.erase(r);
    if (lifted) {
      trace_.add(now_, "quarantine_lifted", id, std::nullopt, std::to_string(lifted));
      reroute(id);
    }
  }
}

void ResponseEngine::observe(NodeId n, Verdict v) { state(n).window.record(v); }

const CoverageWindow& ResponseEngine::window(NodeId n) const {
  static const CoverageWindow empty;
  const auto it = nodes_.find(n);
  return it == nodes_.end() ? empty : it->second.window;
}

SecurityMap ResponseEngine::security_map(NodeId n) const {
  return make_security_map(n, keys_.epoch, window(n), keys_.suite, grid_);
}

const RoutingTable& ResponseEngine::routes(NodeId n) const {
  static const RoutingTable none;
  const auto it = nodes_.find(n);
  return it == nodes_.end() ? none : it->second.routes;
}

std::optional<GlobalLocalMap> ResponseEngine::local_map(NodeId n) const {
  const auto it = nodes_.find(n);
  return it == nodes_.end() ? std::nullopt : it->second.glm;
}

void ResponseEngine::reroute(NodeId n) {
  auto& s = state(n);
  s.routes = compute_routes(graph_, n, s.routes.quarantined);
}

void ResponseEngine::tamper(NodeId at, std::optional<NodeId> peer, std::string detail) {
  ++tampers_;
  trace_.add(now_, "tamper", at, peer, std::move(detail));
}

std::optional<Bytes> ResponseEngine::transmit(const ProtocolMessage& msg) {
  Bytes wire = encode(msg);
  if (!fault_) return wire;
  return fault_(msg, std::move(wire));
}

// Payload: body || nonce(8) || H_K(header || body || nonce).
ProtocolMessage ResponseEngine::seal(ProtocolMessage msg, const Bytes& body, std::uint64_t nonce,
                                     const KeyMaterial& key) const {
  ByteWriter w;
  w.raw(body).u64(nonce);
  Bytes covered = header_bytes(msg);
  const Bytes& tail = w.bytes();
  covered.insert(covered.end(), tail.begin(), tail.end());
  msg.payload = tail;
  const Digest d = keyed_hash(keys_.suite, key, covered);
  msg.payload.insert(msg.payload.end(), d.bytes.begin(), d.bytes.end());
  return msg;
}

std::optional<std::pair<Bytes, std::uint64_t>> ResponseEngine::open(const Bytes& wire, MessageKind kind,
                                                                     NodeId from, NodeId to,
                                                                     const KeyMaterial& key) const {
  ProtocolMessage msg;
  try {
    msg = decode(wire);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (msg.kind != kind || msg.sender != from || msg.receiver != to) return std::nullopt;
  const std::size_t tag = digest_size(keys_.suite.hash);
  if (msg.payload.size() < tag + 8) return std::nullopt;
  const std::size_t signed_len = msg.payload.size() - tag;
  Bytes covered = header_bytes(msg);
  covered.insert(covered.end(), msg.payload.begin(), msg.payload.begin() + static_cast<long>(signed_len));
  const Digest d{Bytes(msg.payload.begin() + static_cast<long>(signed_len), msg.payload.end())};
  if (!verify_keyed_hash(keys_.suite, key, covered, d)) return std::nullopt;
  ByteReader nr(std::span(msg.payload).subspan(signed_len - 8, 8));
  const std::uint64_t nonce = nr.u64();
  return std::make_pair(Bytes(msg.payload.begin(), msg.payload.begin() + static_cast<long>(signed_len - 8)), nonce);
}

LocalMapOutcome ResponseEngine::distribute_local_maps(NodeId initiator) {
  if (!graph_.contains(initiator)) throw Error(ErrorCode::UnknownNode, "initiator not in the network", {initiator});
  LocalMapOutcome out;
  const std::size_t tampers_before = tampers_;
  const SecurityMap own = security_map(initiator);
  const std::uint64_t nonce1 = rng_.below(UINT64_MAX - 2);
  trace_.add(now_, "map_exchange", initiator, std::nullopt, "neighbours=" + std::to_string(graph_.degree(initiator)));

  std::vector<SecurityMap> verified;
  std::map<NodeId, KeyMaterial> session;
  for (NodeId nb : graph_.neighbors(initiator)) {
    const auto key = keys_.link(initiator, nb);
    if (!key) {
      out.excluded.insert(nb);
      trace_.add(now_, "map_excluded", initiator, nb, "no_key");
      continue;
    }
    // Step 1: map_A and nonce_1 to the neighbour.
    const auto step1 = transmit(seal({MessageKind::MapStep1, initiator, nb, {initiator}, {}}, own.serialize(), nonce1, *key));
    if (!step1) {
      out.excluded.insert(nb);
      trace_.add(now_, "map_excluded", initiator, nb, "lost");
      continue;
    }
    const auto got1 = open(*step1, MessageKind::MapStep1, initiator, nb, *key);
    if (!got1) {
      tamper(nb, initiator, "MapStep1");
      out.excluded.insert(nb);
      continue;
    }
    // Step 2: map_i with nonce_1 + 1.
    const SecurityMap reply = security_map(nb);
    const auto step2 = transmit(seal({MessageKind::MapStep2, nb, initiator, {nb}, {}}, reply.serialize(), got1->second + 1, *key));
    if (!step2) {
      out.excluded.insert(nb);
      trace_.add(now_, "map_excluded", initiator, nb, "lost");
      continue;
    }
    const auto got2 = open(*step2, MessageKind::MapStep2, nb, initiator, *key);
    if (!got2 || got2->second != nonce1 + 1) {
      tamper(initiator, nb, "MapStep2");
      out.excluded.insert(nb);
      continue;
    }
    ByteReader r(got2->first);
    SecurityMap m;
    try {
      m = SecurityMap::read(r);
      r.expect_end();
    } catch (const Error&) {
      tamper(initiator, nb, "MapStep2");
      out.excluded.insert(nb);
      continue;
    }
    if (m.owner != nb || m.epoch != keys_.epoch) {
      tamper(initiator, nb, "MapStep2");
      out.excluded.insert(nb);
      continue;
    }
    verified.push_back(m);
    session.emplace(nb, *key);
  }

  // Step 3: compose; Step 4: composed map back to every verified neighbour.
  out.map = compose_global_local_map(own, verified, now_);
  state(initiator).glm = out.map;
  const Bytes body = out.map.serialize();
  for (const auto& [nb, key] : session) {
    const auto step4 = transmit(seal({MessageKind::MapStep4, initiator, nb, {initiator}, {}}, body, nonce1 + 2, key));
    if (!step4) continue;
    const auto got4 = open(*step4, MessageKind::MapStep4, initiator, nb, key);
    if (!got4 || got4->second != nonce1 + 2) {
      tamper(nb, initiator, "MapStep4");
      continue;
    }
    try {
      ByteReader r(got4->first);
      auto glm = GlobalLocalMap::read(r);
      r.expect_end();
      state(nb).glm = std::move(glm);
    } catch (const Error&) {
      tamper(nb, initiator, "MapStep4");
      continue;
    }
    out.accepted_by.insert(nb);
  }
  out.tampers = tampers_ - tampers_before;
  trace_.add(now_, "local_map", initiator, std::nullopt,
             "entries=" + std::to_string(out.map.entries.size()) + " excluded=" + std::to_string(out.excluded.size()));
  return out;
}

AlarmOutcome ResponseEngine::global_alarm(NodeId victim) {
  if (!graph_.contains(victim)) throw Error(ErrorCode::UnknownNode, "victim not in the network", {victim});
  const SecurityMap map = security_map(victim);
  if (!check_global_trigger(map, window_capacity_)) {
    throw Error(ErrorCode::ProtocolAbort, "attack coverage does not exceed two thirds", {victim});
  }
  if (!keys_.members.contains(victim)) throw Error(ErrorCode::ProtocolAbort, "victim holds no group key", {victim});
  trace_.add(now_, "global_alarm", victim, std::nullopt, "coverage=" + format_double(map.coverage()));
  const std::uint64_t nonce = rng_.below(UINT64_MAX - 2);
  const ProtocolMessage alarm = seal({MessageKind::GlobalAlarm, victim, kBroadcast, {victim}, {}},
                                     map.serialize(), nonce, keys_.global_key);
  AlarmOutcome out;
  for (NodeId nb : graph_.neighbors(victim)) {
    const auto wire = transmit(alarm);
    if (!wire) continue;
    (receive_alarm(nb, *wire) ? out.accepted : out.rejected).insert(nb);
  }
  return out;
}

bool ResponseEngine::receive_alarm(NodeId receiver, const Bytes& wire) {
  ProtocolMessage msg;
  try {
    msg = decode(wire);
  } catch (const Error&) {
    tamper(receiver, std::nullopt, "GlobalAlarm");
    return false;
  }
  const NodeId victim = msg.sender;
  auto& s = state(receiver);
  if (!keys_.members.contains(receiver)) {
    // Outside the group: no GK to verify with, which is not evidence of tampering.
    trace_.add(now_, "alarm_no_key", receiver, victim);
    return false;
  }
  const auto got = open(wire, MessageKind::GlobalAlarm, victim, kBroadcast, keys_.global_key);
  if (!got) {
    tamper(receiver, victim, "GlobalAlarm");
    return false;
  }
  if (!s.seen_alarms.insert(got->second).second) {
    trace_.add(now_, "alarm_replay", receiver, victim);
    return false;
  }
  SecurityMap map;
  try {
    ByteReader r(got->first);
    map = SecurityMap::read(r);
    r.expect_end();
  } catch (const Error&) {
    tamper(receiver, victim, "GlobalAlarm");
    return false;
  }
  if (map.owner != victim || map.epoch != keys_.epoch || !check_global_trigger(map, 0)) {
    tamper(receiver, victim, "GlobalAlarm");
    return false;
  }
  s.routes.quarantined.insert(victim);
  reroute(receiver);
  trace_.add(now_, "quarantine", receiver, victim);
  return true;
}

}  // namespace manetir
