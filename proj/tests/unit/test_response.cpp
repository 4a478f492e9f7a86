#include <doctest.h>

#include "manetir/error.hpp"
#include "manetir/gka_group.hpp"
#include "manetir/response.hpp"
#include "manetir/topologies.hpp"

using namespace manetir;

namespace {

NodeId N(std::uint32_t v) { return NodeId{v}; }

std::set<NodeId> all_of(const Graph& g) {
  const auto v = g.nodes();
  return {v.begin(), v.end()};
}

// A formed group over every node of `g`, rooted at `root`; leaf 7 checks.
struct Net {
  Graph graph;
  Group group;
  ResponseEngine engine;

  Net(Graph g, NodeId root, std::uint64_t seed)
      : graph(std::move(g)),
        group(GroupConfig{}, graph.nodes(), seed),
        engine(graph, (group.form(build_tree(root, all_of(graph), graph, NodeId{7})), ResponseKeys::from_group(group)),
               seed) {}
};

void feed(ResponseEngine& e, NodeId n, std::size_t attacks, std::size_t normals) {
  for (std::size_t i = 0; i < normals; ++i) e.observe(n, Verdict::Normal);
  for (std::size_t i = 0; i < attacks; ++i) e.observe(n, Verdict::Attack);
}

SecurityMap with_counts(std::uint32_t attacks, std::uint32_t window, NodeId owner = N(1)) {
  return SecurityMap{owner, 1, window, attacks, {}};
}

Bytes flip(Bytes wire, std::size_t bit) {
  wire[bit / 8] ^= static_cast<std::uint8_t>(0x80u >> (bit % 8));
  return wire;
}

}  // namespace

TEST_CASE("coverage window") {
  CoverageWindow w(4);
  for (auto v : {Verdict::Attack, Verdict::Unclassified, Verdict::Normal, Verdict::Attack}) w.record(v);
  CHECK(w.size() == 3);
  CHECK(w.attacks() == 2);
  w.record(Verdict::Normal);
  w.record(Verdict::Normal);
  // Oldest attack slid out.
  CHECK(w.size() == 4);
  CHECK(w.attacks() == 1);
  CHECK_THROWS_AS(CoverageWindow(0), Error);
}

TEST_CASE("global trigger") {
  CHECK(check_global_trigger(with_counts(21, 30)));
  CHECK_FALSE(check_global_trigger(with_counts(20, 30)));
  CHECK_FALSE(check_global_trigger(with_counts(18, 30)));
  CHECK(check_global_trigger(with_counts(30, 30)));

  SUBCASE("short windows are refused") {
    try {
      check_global_trigger(with_counts(29, 29));
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InsufficientWindow);
    }
    CHECK(check_global_trigger(with_counts(3, 4), 4));
  }
  SUBCASE("monotone in coverage") {
    for (std::uint32_t w = 30; w <= 90; w += 7) {
      bool fired = false;
      for (std::uint32_t a = 0; a <= w; ++a) {
        const bool t = check_global_trigger(with_counts(a, w));
        CHECK((!fired || t));
        fired = fired || t;
        CHECK(t == (a * 3 > w * 2));
      }
    }
  }
}

TEST_CASE("global local map composition") {
  const SecurityMap own = with_counts(0, 30, N(1));
  SUBCASE("quiet neighbourhood") {
    const auto g = compose_global_local_map(own, {with_counts(0, 30, N(2)), with_counts(0, 10, N(3))}, 5.0);
    CHECK(g.entries.size() == 3);
    for (const auto& [id, e] : g.entries) {
      CHECK(e.coverage() == 0.0);
      CHECK(e.summary == Verdict::Normal);
    }
  }
  SUBCASE("attack-dominant neighbour") {
    const auto g = compose_global_local_map(own, {with_counts(27, 30, N(2)), with_counts(15, 30, N(3))}, 5.0);
    CHECK(g.entries.at(N(2)).attack_dominant());
    // Exactly one half is not dominant.
    CHECK_FALSE(g.entries.at(N(3)).attack_dominant());
  }
  SUBCASE("serialization round trip is byte-stable") {
    const auto g = compose_global_local_map(own, {with_counts(3, 30, N(9)), with_counts(12, 20, N(4))}, 7.25);
    const Bytes b = g.serialize();
    ByteReader r(b);
    const auto back = GlobalLocalMap::read(r);
    CHECK(back == g);
    CHECK(back.serialize() == b);
    CHECK(compose_global_local_map(own, {with_counts(12, 20, N(4)), with_counts(3, 30, N(9))}, 7.25).serialize() == b);
  }
}

TEST_CASE("forwarding node selection") {
  GlobalLocalMap g;
  g.entries[N(2)] = {30, 3, Verdict::Normal};
  g.entries[N(3)] = {30, 12, Verdict::Normal};
  g.entries[N(4)] = {10, 1, Verdict::Normal};
  g.entries[N(5)] = {30, 27, Verdict::Attack};

  CHECK(select_forwarding_node(g, {N(3)}) == N(3));
  CHECK(select_forwarding_node(g, {N(2), N(3), N(4)}) == N(2));
  CHECK(select_forwarding_node(g, {N(2), N(3), N(4)}, {N(2)}) == N(4));
  CHECK(select_forwarding_node(g, {N(3), N(5)}) == N(3));
  try {
    select_forwarding_node(g, {N(2), N(5)}, {N(2)});
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoSecureNeighbor);
  }
}

TEST_CASE("routes avoid quarantined nodes") {
  const Graph g = topologies::three_clusters();
  for (NodeId self : g.nodes()) {
    const auto plain = compute_routes(g, self, {});
    // Every other node is reachable and the first hop is a neighbour on a
    // shortest path.
    const auto levels = g.bfs_levels(self);
    CHECK(plain.next_hop.size() == g.node_count() - 1);
    for (const auto& [dest, hop] : plain.next_hop) {
      CHECK(g.has_edge(self, hop));
      CHECK(g.bfs_levels(hop).at(dest) == levels.at(dest) - 1);
    }
    if (self == topologies::kClusterVictim) continue;
    const auto q = compute_routes(g, self, {topologies::kClusterVictim});
    CHECK_FALSE(q.references(topologies::kClusterVictim));
  }
}

TEST_CASE("local map exchange") {
  Net net(topologies::neighbourhood(), N(1), 11);
  auto& e = net.engine;
  feed(e, N(3), 27, 3);

  SUBCASE("one-hop neighbourhood") {
    const auto out = e.distribute_local_maps(N(1));
    std::set<NodeId> ids;
    for (const auto& [id, entry] : out.map.entries) ids.insert(id);
    CHECK(ids == std::set<NodeId>{N(1), N(2), N(3), N(4), N(7)});
    CHECK(out.accepted_by == std::set<NodeId>{N(2), N(3), N(4), N(7)});
    CHECK(out.tampers == 0);
    CHECK(out.map.entries.at(N(3)).attack_dominant());
    REQUIRE(e.local_map(N(4)));
    CHECK(*e.local_map(N(4)) == out.map);
    CHECK(select_forwarding_node(out.map, {N(2), N(3), N(4)}) == N(2));
  }
  SUBCASE("a flipped reply digest drops that neighbour") {
    e.set_fault([](const ProtocolMessage& m, Bytes wire) -> std::optional<Bytes> {
      if (m.kind == MessageKind::MapStep2 && m.sender == NodeId{4}) return flip(std::move(wire), wire.size() * 8 - 1);
      return wire;
    });
    const auto out = e.distribute_local_maps(N(1));
    CHECK_FALSE(out.map.entries.contains(N(4)));
    CHECK(out.map.entries.size() == 4);
    CHECK(out.tampers == 1);
    CHECK(e.tamper_count() == 1);
    CHECK(e.trace().count("tamper") == 1);
  }
  SUBCASE("a lost reply excludes without a tamper") {
    e.set_fault([](const ProtocolMessage& m, Bytes wire) -> std::optional<Bytes> {
      if (m.kind == MessageKind::MapStep2 && m.sender == NodeId{7}) return std::nullopt;
      return wire;
    });
    const auto out = e.distribute_local_maps(N(1));
    CHECK(out.excluded == std::set<NodeId>{N(7)});
    CHECK(out.tampers == 0);
  }
  SUBCASE("no neighbours") {
    Graph g = topologies::neighbourhood();
    g.add_node(N(9));
    e.set_graph(g);
    const auto out = e.distribute_local_maps(N(9));
    CHECK(out.map.entries.size() == 1);
    CHECK(out.map.entries.contains(N(9)));
  }
  SUBCASE("identical inputs compose identical bytes") {
    const auto a = e.distribute_local_maps(N(1));
    const auto b = e.distribute_local_maps(N(1));
    CHECK(a.map.serialize() == b.map.serialize());
  }
}

TEST_CASE("global alarm quarantines the victim") {
  Net net(topologies::three_clusters(), N(3), 12);
  auto& e = net.engine;
  const NodeId victim = topologies::kClusterVictim;

  SUBCASE("verified alarm") {
    // Before: some neighbour routes through the victim.
    bool referenced = false;
    for (NodeId n : e.nodes()) referenced = referenced || (n != victim && e.routes(n).references(victim));
    REQUIRE(referenced);

    feed(e, victim, 21, 9);
    const auto out = e.global_alarm(victim);
    CHECK(out.accepted == std::set<NodeId>{N(3), N(5), N(9)});
    CHECK(out.rejected.empty());
    for (NodeId n : e.nodes()) {
      if (n == victim) continue;
      for (const auto& [dest, hop] : e.routes(n).next_hop) CHECK(hop != victim);
    }
    for (NodeId n : out.accepted) {
      CHECK_FALSE(e.routes(n).references(victim));
      // Still reachable: 1 -> 3 -> 8 -> 10 -> 9 around the victim.
      CHECK(e.routes(n).next_hop.size() == e.graph().node_count() - 2);
    }
    CHECK(e.routes(N(3)).next_hop.at(N(9)) == N(8));

    SUBCASE("quarantined nodes are never chosen as forwarders") {
      feed(e, N(8), 25, 5);
      const auto lm = e.distribute_local_maps(N(3));
      try {
        const NodeId f = select_forwarding_node(lm.map, {victim, N(8)}, e.routes(N(3)).quarantined);
        CHECK(f != victim);
      } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::NoSecureNeighbor);
      }
    }
    SUBCASE("quarantine lifts on re-authentication") {
      net.group.global_rekey();
      e.set_keys(ResponseKeys::from_group(net.group), {victim});
      CHECK(e.routes(N(3)).next_hop.at(N(9)) == victim);
      CHECK(e.trace().count("quarantine_lifted") == 3);
    }
  }
  SUBCASE("coverage at two thirds does not alarm") {
    feed(e, victim, 20, 10);
    CHECK_THROWS_AS(e.global_alarm(victim), Error);
  }
  SUBCASE("forged alarm is ignored") {
    Rng rng(3);
    const SecurityMap m = with_counts(30, 30, victim);
    ProtocolMessage forged{MessageKind::GlobalAlarm, victim, kBroadcast, {victim}, {}};
    ByteWriter w;
    w.raw(m.serialize()).u64(99);
    Bytes covered = header_bytes(forged);
    covered.insert(covered.end(), w.bytes().begin(), w.bytes().end());
    forged.payload = w.bytes();
    const auto tag = keyed_hash(CipherSuite{}, KeyMaterial::random(rng, 16), covered);
    forged.payload.insert(forged.payload.end(), tag.bytes.begin(), tag.bytes.end());
    for (NodeId n : e.graph().neighbors(victim)) CHECK_FALSE(e.receive_alarm(n, encode(forged)));
    for (NodeId n : e.nodes()) CHECK(e.routes(n).quarantined.empty());
    CHECK(e.tamper_count() == 3);
  }
  SUBCASE("a replayed alarm is not processed twice") {
    Bytes captured;
    e.set_fault([&](const ProtocolMessage&, Bytes wire) -> std::optional<Bytes> {
      captured = wire;
      return wire;
    });
    feed(e, victim, 30, 0);
    e.global_alarm(victim);
    CHECK_FALSE(e.receive_alarm(N(3), captured));
    CHECK(e.trace().count("alarm_replay") == 1);
  }
  SUBCASE("victim with nobody in range") {
    Graph g = e.graph();
    g.remove_node(victim);
    g.add_node(victim);
    e.set_graph(g);
    std::map<NodeId, RoutingTable> before;
    for (NodeId n : e.nodes()) before[n] = e.routes(n);
    feed(e, victim, 30, 0);
    const auto out = e.global_alarm(victim);
    CHECK(out.accepted.empty());
    for (NodeId n : e.nodes()) CHECK(e.routes(n) == before[n]);
  }
}

TEST_CASE("single-bit tampering is always rejected") {
  Net local(topologies::neighbourhood(), N(1), 13);
  Net global(topologies::three_clusters(), N(3), 14);
  Rng rng(15);
  std::size_t rejected = 0;
  const std::array<MessageKind, 4> kinds{MessageKind::MapStep1, MessageKind::MapStep2, MessageKind::MapStep4,
                                         MessageKind::GlobalAlarm};
  for (int trial = 0; trial < 1000; ++trial) {
    const MessageKind kind = kinds[static_cast<std::size_t>(trial) % kinds.size()];
    const NodeId target = kind == MessageKind::GlobalAlarm ? N(9) : N(4);
    bool hit = false;
    const std::uint64_t pick = rng.next();
    WireFault fault = [&](const ProtocolMessage& m, Bytes wire) -> std::optional<Bytes> {
      const bool chosen = m.kind == kind && (kind == MessageKind::GlobalAlarm ? !hit : (m.sender == target || m.receiver == target));
      if (!chosen) return wire;
      hit = true;
      return flip(std::move(wire), pick % (wire.size() * 8));
    };
    if (kind == MessageKind::GlobalAlarm) {
      // Fresh engine per alarm so earlier quarantines do not interfere.
      ResponseEngine e(global.graph, ResponseKeys::from_group(global.group), static_cast<std::uint64_t>(trial));
      feed(e, topologies::kClusterVictim, 30, 0);
      e.set_fault(fault);
      const auto out = e.global_alarm(topologies::kClusterVictim);
      // The first delivered copy (to node 3) carries the flip.
      rejected += out.rejected.contains(N(3)) && !out.accepted.contains(N(3));
    } else {
      auto& e = local.engine;
      e.set_fault(fault);
      const auto out = e.distribute_local_maps(N(1));
      if (kind == MessageKind::MapStep4) {
        rejected += !out.accepted_by.contains(target);
      } else {
        rejected += !out.map.entries.contains(target);
      }
    }
    CHECK(hit);
  }
  CHECK(rejected == 1000);
}
