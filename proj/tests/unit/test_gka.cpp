#include <doctest.h>

#include "manetir/error.hpp"
#include "manetir/gka_group.hpp"
#include "manetir/topologies.hpp"

using namespace manetir;

namespace {

NodeId N(std::uint32_t v) { return NodeId{v}; }

std::set<NodeId> ids(std::uint32_t lo, std::uint32_t hi) {
  std::set<NodeId> out;
  for (auto v = lo; v <= hi; ++v) out.insert(N(v));
  return out;
}

std::vector<NodeId> universe(std::uint32_t hi) {
  std::vector<NodeId> out;
  for (std::uint32_t v = 1; v <= hi; ++v) out.push_back(N(v));
  return out;
}

KeyTree layered_tree() { return build_tree(N(1), ids(1, 18), topologies::layered(), N(5)); }

KeyMaterial ledger_xor(const Group& g) {
  std::vector<KeyMaterial> parts;
  for (const auto& [_, s] : g.share_ledger()) parts.push_back(s);
  return xor_combine(parts);
}

void check_converged(const Group& g) {
  const auto gk = g.keys().global_key;
  for (NodeId p : g.participants()) CHECK(g.node(p).session_key == gk);
  CHECK(gk == ledger_xor(g));
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("wire encoding round trip and layout") {
  ProtocolMessage m;
  m.kind = MessageKind::AuthStep1;
  m.sender = N(2);
  m.receiver = N(1);
  m.ids = {N(2), N(1)};
  m.payload = {0xAA, 0xBB};
  const Bytes wire = encode(m);
  CHECK(to_hex(wire) == "010000000200000001020000000200000001" "0002aabb");
  CHECK(decode(wire) == m);
  CHECK(to_hex(header_bytes(m)) == "0100000002000000010200000002000000" "01");

  auto truncated = wire;
  truncated.pop_back();
  CHECK(code_of([&] { decode(truncated); }) == ErrorCode::Malformed);
  auto trailing = wire;
  trailing.push_back(0);
  CHECK(code_of([&] { decode(trailing); }) == ErrorCode::Malformed);
  auto unknown = wire;
  unknown[0] = 0x7F;
  CHECK(code_of([&] { decode(unknown); }) == ErrorCode::Malformed);
}

TEST_CASE("leaf with zero share sends a zero contribution") {
  Graph g;
  g.add_edge(N(1), N(2));
  g.add_edge(N(1), N(3));
  const auto tree = build_tree(N(1), {N(1), N(2), N(3)}, g, N(3));
  const auto master = KeyMaterial::from_hex("00112233445566778899aabbccddeeff");
  GroupConfig cfg;
  cfg.master_key = master;
  Group group(cfg, universe(3), 1);
  std::optional<Bytes> contribution;
  group.add_tap([&](const ProtocolMessage& m, const Bytes&) {
    if (m.kind != MessageKind::AuthStep3) return;
    const Bytes pt = decrypt(cfg.suite, master, Ciphertext{m.payload}, header_bytes(m));
    contribution = Bytes(pt.begin() + 16, pt.begin() + 32);
  });
  std::map<NodeId, KeyMaterial> shares{{N(1), KeyMaterial::from_hex("0102030405060708090a0b0c0d0e0f10")},
                                       {N(2), KeyMaterial::zero(16)}};
  const auto r = group.initiate(tree, &shares);
  REQUIRE(contribution.has_value());
  CHECK(KeyMaterial(*contribution).is_zero());
  CHECK(r.subkey == shares.at(N(1)));
  CHECK(r.local_keys.at(N(2)) == shares.at(N(1)));
}

TEST_CASE("parent contribution is its share xor its children's") {
  Rng rng(4);
  const auto tree = layered_tree();
  std::map<NodeId, KeyMaterial> shares;
  for (NodeId m : tree.members()) shares[m] = KeyMaterial::random(rng, 16);
  Group group(GroupConfig{}, universe(18), 2);
  group.initiate(tree, &shares);
  CHECK(group.node(N(13)).intermediate == (shares[N(13)] ^ shares[N(17)] ^ shares[N(18)]));
  CHECK(group.node(N(14)).intermediate == shares[N(14)]);
}

TEST_CASE("initiation: zero shares give zero keys") {
  const auto tree = layered_tree();
  std::map<NodeId, KeyMaterial> shares;
  for (NodeId m : tree.members()) shares[m] = KeyMaterial::zero(16);
  Rng rng(1);
  const auto r = run_key_initiation(tree, shares, KeyMaterial::random(rng, 16));
  CHECK(r.subkey.is_zero());
  CHECK(r.local_keys.size() == 3);
  for (const auto& [_, lk] : r.local_keys) CHECK(lk.is_zero());
}

TEST_CASE("initiation: subkey is the xor of the 17 member shares") {
  Rng rng(8);
  const auto tree = layered_tree();
  for (int trial = 0; trial < 20; ++trial) {
    std::map<NodeId, KeyMaterial> shares;
    std::vector<KeyMaterial> parts;
    for (NodeId m : tree.members()) {
      shares[m] = KeyMaterial::random(rng, 16);
      parts.push_back(shares[m]);
    }
    const auto r = run_key_initiation(tree, shares, KeyMaterial::random(rng, 16), {}, trial);
    CHECK(r.subkey == xor_combine(parts));
    for (const auto& [j, lk] : r.local_keys) CHECK(lk == (r.subkey ^ shares[j]));
  }
}

TEST_CASE("session agreement") {
  Rng rng(10);
  const auto tree = layered_tree();
  std::map<NodeId, KeyMaterial> shares;
  for (NodeId m : tree.members()) shares[m] = KeyMaterial::zero(16);
  shares[N(5)] = KeyMaterial::random(rng, 16);
  CHECK(run_session_agreement(tree, shares, KeyMaterial::random(rng, 16)) == shares[N(5)]);

  std::vector<KeyMaterial> parts;
  for (auto& [n, s] : shares) {
    s = KeyMaterial::random(rng, 16);
    parts.push_back(s);
  }
  CHECK(run_session_agreement(tree, shares, KeyMaterial::random(rng, 16)) == xor_combine(parts));
}

TEST_CASE("formation converges for every cipher suite") {
  for (auto aead : {AeadAlgorithm::AesGcm, AeadAlgorithm::ChaCha20Poly1305}) {
    for (auto h : {HashAlgorithm::Sha256, HashAlgorithm::Sha3_256, HashAlgorithm::Blake2s256}) {
      GroupConfig cfg;
      cfg.suite = {aead, h};
      cfg.key_bytes = aead == AeadAlgorithm::AesGcm ? 16 : 32;
      Group group(cfg, universe(19), 3);
      const auto keys = group.form(layered_tree());
      CHECK(keys.epoch == 1);
      CHECK(keys.global_key.width_bytes() == cfg.key_bytes);
      check_converged(group);
      CHECK(group.node(N(5)).agreement_verified);
    }
  }
}

TEST_CASE("replayed handshake changes nothing") {
  Group group(GroupConfig{}, universe(19), 5);
  std::vector<ProtocolMessage> seen;
  group.add_tap([&](const ProtocolMessage& m, const Bytes&) { seen.push_back(m); });
  group.form(layered_tree());
  int replays = 0;
  for (const auto& m : seen) {
    const NodeId to = m.is_broadcast() ? N(7) : m.receiver;
    if (to == m.sender) continue;
    const Bytes before = serialize(group.node(to));
    const auto dropped = group.inject(m, to);
    CHECK(dropped.has_value());
    CHECK(serialize(group.node(to)) == before);
    ++replays;
  }
  CHECK(replays == static_cast<int>(seen.size()));
}

TEST_CASE("without nonce checks a replayed step 1 is accepted") {
  GroupConfig cfg;
  cfg.options.verify_nonces = false;
  Group group(cfg, universe(19), 5);
  std::vector<ProtocolMessage> seen;
  group.add_tap([&](const ProtocolMessage& m, const Bytes&) { seen.push_back(m); });
  group.form(layered_tree());
  bool changed = false;
  for (const auto& m : seen) {
    if (m.kind != MessageKind::AuthStep1) continue;
    const Bytes before = serialize(group.node(m.receiver));
    group.inject(m, m.receiver);
    changed |= serialize(group.node(m.receiver)) != before;
  }
  CHECK(changed);
}

TEST_CASE("join refreshes exactly the key path") {
  const Graph g = topologies::layered();
  Group group(GroupConfig{}, universe(19), 6);
  const auto before = group.form(layered_tree());
  const auto old_ledger = group.share_ledger();
  const auto old_master = group.node(N(1)).master_key;
  const auto after = group.join(N(19), g);
  CHECK(after.epoch == before.epoch + 1);
  CHECK(group.last_refreshed() == std::set{N(19), N(6), N(2), N(1)});
  const auto ledger = group.share_ledger();
  for (const auto& [n, s] : old_ledger) {
    if (!group.last_refreshed().contains(n)) CHECK(ledger.at(n) == s);
    else CHECK(ledger.at(n) != s);
  }
  check_converged(group);
  CHECK(group.tree().parent(N(19)) == N(6));
  CHECK(group.node(N(19)).master_key == group.node(N(1)).master_key);
  CHECK(group.node(N(19)).master_key != old_master);
  CHECK(after.global_key != before.global_key);
}

TEST_CASE("join into a one-member group matches a two-party formation") {
  Graph g;
  g.add_edge(N(1), N(2));
  g.add_edge(N(1), N(3));
  Group group(GroupConfig{}, universe(3), 7);
  group.form(build_tree(N(1), {N(1), N(2)}, g, N(2)));
  const auto keys = group.join(N(3), g);
  CHECK(group.tree().size() == 2);
  CHECK(group.last_refreshed() == std::set{N(1), N(3)});
  check_converged(group);
  CHECK(keys.local_keys.size() == 1);
}

TEST_CASE("leaves") {
  const Graph g = topologies::layered();
  Group group(GroupConfig{}, universe(19), 8);
  group.form(layered_tree());

  SUBCASE("leaf") {
    const auto old_checker_share = group.share_ledger().at(N(5));
    group.leave(N(14), g);
    CHECK(group.last_refreshed() == std::set{N(10), N(6), N(2), N(1)});
    CHECK(group.share_ledger().at(N(5)) == old_checker_share);
    check_converged(group);
  }
  SUBCASE("checker") {
    const auto old_share = group.share_ledger().at(N(5));
    group.leave(N(5), g);
    const NodeId checker = group.tree().checker();
    CHECK(checker != N(5));
    CHECK(g.has_edge(checker, N(1)));
    CHECK(group.last_refreshed().contains(checker));
    CHECK(group.share_ledger().at(checker) != old_share);
    // Every root neighbour here is the sole link to its subtree.
    CHECK_FALSE(group.last_dropped().empty());
    for (NodeId d : group.last_dropped()) CHECK_FALSE(group.is_participant(d));
    check_converged(group);
  }
  SUBCASE("checker with a connectivity-preserving replacement") {
    Graph g2 = g;
    g2.add_edge(N(8), N(4));
    group.leave(N(5), g2);
    CHECK(group.tree().checker() == N(3));
    CHECK(group.last_dropped().empty());
    CHECK(group.tree().parent(N(8)) == N(4));
    check_converged(group);
  }
  SUBCASE("root") {
    group.leave(N(1), g);
    CHECK(group.tree().root() == N(2));
    check_converged(group);
  }
  SUBCASE("partitioning leave drops the cut-off members") {
    group.leave(N(13), g);
    CHECK(group.last_dropped() == std::set{N(17), N(18)});
    CHECK_FALSE(group.is_participant(N(17)));
    check_converged(group);
  }
}

TEST_CASE("master key after a leave") {
  const Graph g = topologies::layered();
  for (auto policy : {LeaveMasterKeyPolicy::Fresh, LeaveMasterKeyPolicy::HashChain}) {
    GroupConfig cfg;
    cfg.leave_policy = policy;
    Group group(cfg, universe(19), 9);
    group.form(layered_tree());
    const auto leaver_master = group.node(N(14)).master_key;
    group.leave(N(14), g);
    const auto recomputed = hash_chain_master_key(cfg.suite, leaver_master, group.node(N(1)).epoch,
                                                  group.participants());
    CHECK((recomputed == group.node(N(1)).master_key) == (policy == LeaveMasterKeyPolicy::HashChain));
    check_converged(group);
  }
}

TEST_CASE("periodic global rekey") {
  Group group(GroupConfig{}, universe(19), 11);
  const auto k0 = group.form(layered_tree());
  const auto k1 = group.global_rekey(KeyMaterial::zero(16));
  CHECK(k1.global_key == k0.global_key);
  CHECK(k1.epoch == k0.epoch + 1);
  Rng rng(12);
  auto prev = k1;
  for (int i = 0; i < 25; ++i) {
    const auto update = KeyMaterial::random(rng, 16);
    const auto next = group.global_rekey(update);
    CHECK((next.global_key ^ prev.global_key) == update);
    check_converged(group);
    prev = next;
  }
}

TEST_CASE("periodic local rekey") {
  Group group(GroupConfig{}, universe(19), 13);
  group.form(layered_tree());
  const auto old = group.keys().local_keys.at(N(3));
  CHECK(group.local_rekey(N(3), KeyMaterial::zero(16)) == old);
  Rng rng(14);
  auto prev = old;
  for (int i = 0; i < 25; ++i) {
    const auto update = KeyMaterial::random(rng, 16);
    const auto next = group.local_rekey(N(3), update);
    CHECK((next ^ prev) == update);
    CHECK(group.node(N(1)).local_keys.at(N(3)) == group.node(N(3)).local_keys.at(N(1)));
    prev = next;
  }
  CHECK(code_of([&] { group.local_rekey(N(6)); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("edge timeout aborts and keeps the old epoch") {
  GroupConfig cfg;
  cfg.latency = 3.0;
  cfg.options.edge_timeout = 5.0;
  Group slow(cfg, universe(19), 15);
  CHECK(code_of([&] { slow.form(layered_tree()); }) == ErrorCode::Timeout);
  CHECK(slow.epoch() == 0);
  CHECK_FALSE(slow.formed());

  cfg.latency = 2.0;
  Group ok(cfg, universe(19), 15);
  ok.form(layered_tree());
  check_converged(ok);
}

TEST_CASE("lost messages abort with the responsible parties") {
  const Graph g = topologies::layered();
  Group group(GroupConfig{}, universe(19), 16);
  const auto keys = group.form(layered_tree());

  group.set_delivery_filter([](const ProtocolMessage& m, NodeId) {
    return !(m.kind == MessageKind::JoinStepC && m.sender == N(19));
  });
  try {
    group.join(N(19), g);
    FAIL("expected Timeout");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Timeout);
    CHECK(e.nodes() == std::vector{N(6), N(19)});
  }
  CHECK(group.keys() == keys);
  CHECK_FALSE(group.is_participant(N(19)));

  group.set_delivery_filter([](const ProtocolMessage& m, NodeId) {
    return !(m.kind == MessageKind::AgreeStep3 && m.sender == N(7));
  });
  try {
    group.join(N(19), g);
    FAIL("expected CheckerVerificationFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CheckerVerificationFailure);
    CHECK(e.nodes() == std::vector{N(7)});
  }
  CHECK(group.epoch() == keys.epoch);

  group.set_delivery_filter([](const ProtocolMessage& m, NodeId) {
    return m.kind != MessageKind::GlobalRekeyConfirm || m.sender != N(12);
  });
  CHECK(code_of([&] { group.global_rekey(); }) == ErrorCode::CheckerVerificationFailure);
  CHECK(group.keys() == keys);
  for (NodeId p : group.participants()) CHECK(group.node(p).session_key == keys.global_key);

  group.set_delivery_filter({});
  group.join(N(19), g);
  check_converged(group);
}

TEST_CASE("determinism") {
  auto run = [] {
    Group group(GroupConfig{}, universe(19), 42);
    std::vector<Bytes> wire;
    group.add_tap([&](const ProtocolMessage&, const Bytes& w) { wire.push_back(w); });
    group.form(layered_tree());
    group.join(N(19), topologies::layered());
    group.global_rekey();
    return std::pair{group.keys(), wire};
  };
  CHECK(run() == run());
}
