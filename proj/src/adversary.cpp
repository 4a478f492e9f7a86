#include "manetir/adversary.hpp"

#include <algorithm>
#include <chrono>
#include <map>

#include "manetir/error.hpp"
#include "manetir/topologies.hpp"

namespace manetir {

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::uint64_t load_be64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
  return v;
}

bool bit_at(std::span<const std::uint8_t> data, std::size_t bit) {
  return (data[bit / 8] >> (7 - bit % 8)) & 1u;
}

std::vector<NodeId> universe_upto(std::uint32_t hi) {
  std::vector<NodeId> out;
  for (std::uint32_t v = 1; v <= hi; ++v) out.push_back(NodeId{v});
  return out;
}

KeyTree layered_tree(const Graph& g) {
  std::set<NodeId> members;
  for (std::uint32_t v = 1; v <= 18; ++v) members.insert(NodeId{v});
  return build_tree(topologies::kLayeredRoot, members, g, topologies::kLayeredChecker);
}

std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t trial) {
  return Rng::derive(seed, stream, trial).next();
}

/// A few rekeys so that trials start from varied epochs.
void warm_up(Group& group, Rng& rng) {
  const auto rounds = rng.below(3);
  for (std::uint64_t i = 0; i < rounds; ++i) {
    if (rng.below(2) == 0) {
      group.global_rekey();
    } else {
      const auto level1 = group.tree().at_level(1);
      group.local_rekey(level1[rng.below(level1.size())]);
    }
  }
}

}  // namespace

std::vector<KeyMaterial> secrets_of(const NodeProtocolState& s) {
  std::vector<KeyMaterial> out;
  auto add = [&](const KeyMaterial& k) {
    if (!k.empty()) out.push_back(k);
  };
  add(s.master_key);
  for (const auto& [_, k] : s.link_keys) add(k);
  add(s.share);
  if (s.intermediate) add(*s.intermediate);
  if (s.subkey) add(*s.subkey);
  if (s.session_key) add(*s.session_key);
  if (s.pending_session_key) add(*s.pending_session_key);
  for (const auto& [_, k] : s.local_keys) add(k);
  for (const auto& [_, k] : s.level1_shares) add(k);
  for (const auto& [_, k] : s.children_received) add(k);
  for (const auto& [_, p] : s.pending_local) add(p.new_key);
  return out;
}

// ---- TranscriptScanner -----------------------------------------------------

void TranscriptScanner::append(std::span<const std::uint8_t> wire) {
  const std::size_t old_size = data_.size();
  data_.insert(data_.end(), wire.begin(), wire.end());
  if (data_.size() < 8) return;
  const std::size_t first = old_size >= 7 ? old_size - 7 : 0;
  for (std::size_t i = first; i + 8 <= data_.size(); ++i) windows_.insert(load_be64(&data_[i]));
}

std::vector<std::size_t> TranscriptScanner::occurrences(const KeyMaterial& key) const {
  const auto k = key.bytes();
  if (k.size() < 9) throw Error(ErrorCode::InvalidArgument, "scanned keys must be at least 9 bytes");
  bool candidate = false;
  for (unsigned s = 0; s < 8 && !candidate; ++s) {
    // Bits s..s+63 of the key, as a big-endian word.
    const std::uint64_t hi = load_be64(k.data());
    const std::uint64_t next = k[8];
    const std::uint64_t w = s == 0 ? hi : (hi << s) | (next >> (8 - s));
    candidate = windows_.contains(w);
  }
  std::vector<std::size_t> hits;
  if (!candidate) return hits;
  const std::size_t kbits = k.size() * 8;
  const std::size_t dbits = data_.size() * 8;
  for (std::size_t p = 0; p + kbits <= dbits; ++p) {
    std::size_t i = 0;
    while (i < kbits && bit_at(data_, p + i) == bit_at(k, i)) ++i;
    if (i == kbits) hits.push_back(p);
  }
  return hits;
}

// ---- KnowledgeOracle -------------------------------------------------------

KnowledgeOracle::KnowledgeOracle(CipherSuite suite, std::size_t key_bytes)
    : suite_(suite), key_bytes_(key_bytes) {}

bool KnowledgeOracle::learn_new(const KeyMaterial& k) {
  if (k.width_bytes() != key_bytes_) return false;
  if (!known_.insert(k).second) return false;
  order_.push_back(k);
  return true;
}

void KnowledgeOracle::learn(const KeyMaterial& k) { learn_new(k); }

void KnowledgeOracle::learn_state(const NodeProtocolState& s) {
  for (const auto& k : secrets_of(s)) learn_new(k);
}

void KnowledgeOracle::add_hash_chain_context(std::uint64_t epoch, std::vector<NodeId> members) {
  std::sort(members.begin(), members.end());
  chains_.emplace_back(epoch, std::move(members));
}

void KnowledgeOracle::absorb(const std::vector<ProtocolMessage>& transcript) {
  constexpr std::size_t kMinSealed = 12 + kTagBytes;
  constexpr std::size_t kFieldAlign = 4;
  struct Slot {
    Ciphertext ct;
    Bytes aad;
    std::size_t tried = 0;  // prefix of order_ already attempted
    bool open = false;
  };
  std::vector<Slot> slots;
  for (const auto& m : transcript) {
    if (m.payload.size() >= kMinSealed) slots.push_back(Slot{Ciphertext{m.payload}, header_bytes(m)});
  }
  std::size_t chained = 0;  // prefix of order_ already pushed through the hash chains
  bool progress = true;
  while (progress) {
    progress = false;
    for (auto& slot : slots) {
      while (!slot.open && slot.tried < order_.size()) {
        const KeyMaterial key = order_[slot.tried++];
        const auto plain_opt = try_decrypt(suite_, key, slot.ct, slot.aad);
        if (!plain_opt) continue;
        const Bytes& plain = *plain_opt;
        slot.open = true;
        ++opened_;
        // Plaintext fields are whole multiples of 4 bytes, so every embedded
        // key starts on a 4-byte boundary.
        for (std::size_t i = 0; i + key_bytes_ <= plain.size(); i += kFieldAlign) {
          const auto first = plain.begin() + static_cast<std::ptrdiff_t>(i);
          progress |= learn_new(KeyMaterial(Bytes(first, first + static_cast<std::ptrdiff_t>(key_bytes_))));
        }
      }
    }
    // One derivation step per context: chain outputs are not chained again.
    const std::size_t end = order_.size();
    for (; chained < end; ++chained) {
      const KeyMaterial k = order_[chained];
      if (chain_outputs_.contains(k)) continue;
      for (const auto& [epoch, members] : chains_) {
        const KeyMaterial next = hash_chain_master_key(suite_, k, epoch, members);
        if (learn_new(next)) {
          chain_outputs_.insert(next);
          progress = true;
        }
      }
    }
  }
}

bool KnowledgeOracle::can_compute(const KeyMaterial& target) const {
  if (known_.contains(target)) return true;
  return std::any_of(known_.begin(), known_.end(),
                     [&](const KeyMaterial& k) { return known_.contains(target ^ k); });
}

// ---- goals -----------------------------------------------------------------

bool AttackSuiteReport::all_pass() const {
  return std::all_of(goals.begin(), goals.end(), [](const GoalVerdict& g) { return g.pass; });
}

GoalVerdict run_transcript_scan(const AttackSuiteConfig& cfg, GoalVerdict* independence) {
  Stopwatch clock;
  const Graph g = topologies::layered();
  Group group(cfg.group, universe_upto(19), cfg.seed);
  TranscriptScanner scanner;
  group.add_tap([&](const ProtocolMessage&, const Bytes& wire) { scanner.append(wire); });

  std::set<KeyMaterial> secrets;
  auto harvest = [&] {
    for (NodeId p : group.participants()) {
      for (const auto& k : secrets_of(group.node(p))) {
        if (!k.is_zero()) secrets.insert(k);
      }
    }
  };
  group.form(layered_tree(g));
  harvest();

  Rng rng = Rng::derive(cfg.seed, 0x7363616eULL);
  std::set<NodeId> outside{topologies::kLayeredJoiner};
  std::vector<KeyMaterial> membership_deltas;
  std::set<KeyMaterial> seen_gk{group.keys().global_key};
  std::set<KeyMaterial> seen_lk;
  for (const auto& [_, lk] : group.keys().local_keys) seen_lk.insert(lk);
  std::size_t repeats = 0;
  std::size_t aborted = 0;
  std::map<std::string, std::size_t> ops;
  while (group.epoch() < cfg.transcript_epochs) {
    const KeyMaterial before = group.keys().global_key;
    const auto before_lks = group.keys().local_keys;
    auto before_lk = before_lks;
    const std::uint64_t epoch_before = group.epoch();
    const KeyTree& t = group.tree();
    std::vector<NodeId> joinable;
    for (NodeId n : outside) {
      for (NodeId nb : g.neighbors(n)) {
        if (t.contains(nb)) {
          joinable.push_back(n);
          break;
        }
      }
    }
    std::vector<NodeId> leaves;
    for (NodeId m : t.members()) {
      if (m != t.root() && t.is_leaf(m)) leaves.push_back(m);
    }
    // Leaves stop at ten members so the walk keeps a deep tree.
    constexpr std::size_t kMinMembers = 10;
    const auto level1 = t.at_level(1);
    const double u = rng.uniform01();
    bool membership = false;
    try {
      if (u >= 0.5 && u < 0.7 && !level1.empty()) {
        group.local_rekey(level1[rng.below(level1.size())]);
        ++ops["local_rekey"];
      } else if (u >= 0.7 && u < 0.85 && !joinable.empty()) {
        const NodeId n = joinable[rng.below(joinable.size())];
        group.join(n, g);
        outside.erase(n);
        membership = true;
        ++ops["join"];
      } else if (u >= 0.85 && !leaves.empty() && t.size() > kMinMembers) {
        const NodeId n = leaves[rng.below(leaves.size())];
        group.leave(n, g);
        outside.insert(n);
        membership = true;
        ++ops["leave"];
      } else {
        group.global_rekey();
        ++ops["global_rekey"];
      }
    } catch (const Error&) {
      ++aborted;
    }
    if (membership) membership_deltas.push_back(before ^ group.keys().global_key);
    if (group.epoch() != epoch_before) {
      const SessionKeys& now = group.keys();
      if (now.global_key != before && !seen_gk.insert(now.global_key).second) ++repeats;
      for (const auto& [j, lk] : now.local_keys) {
        if (lk != before_lk[j] && !seen_lk.insert(lk).second) ++repeats;
      }
      // A rekey that changed nothing would leave the epoch key in place.
      if (now.global_key == before && now.local_keys == before_lks) ++repeats;
    }
    harvest();
  }

  std::size_t matches = 0;
  for (const auto& k : secrets) matches += scanner.occurrences(k).size();

  GoalVerdict v;
  v.goal = "key_secrecy";
  v.trials = static_cast<std::size_t>(group.epoch());
  v.failures = matches;
  v.pass = matches == 0 && aborted == 0 && group.epoch() >= cfg.transcript_epochs;
  v.detail = "epochs=" + std::to_string(group.epoch()) + " transcript_bytes=" +
             std::to_string(scanner.size_bytes()) + " secrets=" + std::to_string(secrets.size()) +
             " matches=" + std::to_string(matches) + " aborted=" + std::to_string(aborted);
  for (const auto& [name, n] : ops) v.detail += " " + name + "=" + std::to_string(n);
  v.seconds = clock.seconds();

  if (independence) {
    std::size_t delta_hits = 0;
    for (const auto& d : membership_deltas) delta_hits += scanner.occurrences(d).size();
    independence->goal = "key_independence";
    independence->trials = group.history().size();
    independence->failures = repeats + delta_hits;
    independence->pass = independence->failures == 0;
    independence->detail = "epochs=" + std::to_string(group.history().size()) +
                           " distinct_gk=" + std::to_string(seen_gk.size()) +
                           " distinct_lk=" + std::to_string(seen_lk.size()) +
                           " repeated=" + std::to_string(repeats) +
                           " membership_deltas=" + std::to_string(membership_deltas.size()) +
                           " delta_matches=" + std::to_string(delta_hits);
  }
  return v;
}

GoalVerdict run_replay_trials(const AttackSuiteConfig& cfg) {
  Stopwatch clock;
  const Graph g = topologies::layered();
  const auto universe = universe_upto(19);
  Group group(cfg.group, universe, trial_seed(cfg.seed, 0x7265706cULL, 0));

  std::vector<std::pair<ProtocolMessage, NodeId>> copies;
  group.set_delivery_filter([&](const ProtocolMessage& m, NodeId r) {
    copies.emplace_back(m, r);
    return true;
  });
  group.form(layered_tree(g));
  group.join(topologies::kLayeredJoiner, g);
  group.global_rekey();
  group.local_rekey(group.tree().at_level(1).front());
  group.leave(NodeId{14}, g);
  group.global_rekey();
  group.set_delivery_filter({});

  std::map<MessageKind, std::vector<std::size_t>> by_kind;
  for (std::size_t i = 0; i < copies.size(); ++i) by_kind[copies[i].first.kind].push_back(i);
  std::vector<MessageKind> kinds;
  for (const auto& [k, _] : by_kind) kinds.push_back(k);

  auto image = [&] {
    std::vector<Bytes> out;
    for (NodeId n : universe) out.push_back(serialize(group.node(n)));
    return out;
  };

  Rng rng = Rng::derive(cfg.seed, 0x7265706cULL, 1);
  GoalVerdict v;
  v.goal = "replay_resistance";
  std::map<MessageKind, std::size_t> changed_by_kind;
  for (std::size_t t = 0; t < cfg.replay_trials; ++t) {
    const auto& bucket = by_kind[kinds[t % kinds.size()]];
    const auto& [msg, receiver] = copies[bucket[rng.below(bucket.size())]];
    const auto before = image();
    try {
      group.inject(msg, receiver);
    } catch (const Error&) {
    }
    if (image() != before) {
      ++v.failures;
      ++changed_by_kind[msg.kind];
    }
    ++v.trials;
  }
  v.pass = v.failures == 0;
  v.detail = "recorded=" + std::to_string(copies.size()) + " kinds=" + std::to_string(kinds.size()) +
             " unchanged=" + std::to_string(v.trials - v.failures) + "/" + std::to_string(v.trials);
  for (const auto& [k, n] : changed_by_kind) {
    v.detail += " changed_by_" + std::string(name_of(k)) + "=" + std::to_string(n);
  }
  v.seconds = clock.seconds();
  return v;
}

GoalVerdict run_leaver_trials(const AttackSuiteConfig& cfg) {
  Stopwatch clock;
  const Graph g = topologies::layered();
  GoalVerdict v;
  v.goal = "forward_secrecy";
  std::size_t aborted = 0;
  std::size_t opened = 0;
  for (std::size_t t = 0; t < cfg.leaver_trials; ++t) {
    const std::uint64_t seed = trial_seed(cfg.seed, 0x6c656176ULL, t);
    Rng rng(seed);
    Group group(cfg.group, universe_upto(18), seed);
    std::vector<ProtocolMessage> transcript;
    group.add_tap([&](const ProtocolMessage& m, const Bytes&) { transcript.push_back(m); });
    ++v.trials;
    try {
      group.form(layered_tree(g));
      warm_up(group, rng);
      const auto parties = group.participants();
      const NodeId leaver = parties[rng.below(parties.size())];
      KnowledgeOracle oracle(cfg.group.suite, cfg.group.key_bytes);
      oracle.learn_state(group.node(leaver));
      group.leave(leaver, g);
      oracle.add_hash_chain_context(group.epoch(), group.participants());
      oracle.absorb(transcript);
      opened += oracle.opened_count();
      const SessionKeys now = group.keys();
      bool broken = oracle.can_compute(now.global_key);
      for (const auto& [_, lk] : now.local_keys) broken = broken || oracle.can_compute(lk);
      if (broken) ++v.failures;
    } catch (const Error&) {
      ++aborted;
    }
  }
  v.pass = v.failures == 0 && aborted == 0;
  v.detail = "policy=" + std::string(name_of(cfg.group.leave_policy)) +
             " recovered=" + std::to_string(v.failures) + "/" + std::to_string(v.trials) +
             " aborted=" + std::to_string(aborted) + " ciphertexts_opened=" + std::to_string(opened);
  v.seconds = clock.seconds();
  return v;
}

GoalVerdict run_joiner_trials(const AttackSuiteConfig& cfg) {
  Stopwatch clock;
  Graph base = topologies::layered();
  base.remove_node(topologies::kLayeredJoiner);
  GoalVerdict v;
  v.goal = "backward_secrecy";
  std::size_t aborted = 0;
  std::size_t opened = 0;
  for (std::size_t t = 0; t < cfg.joiner_trials; ++t) {
    const std::uint64_t seed = trial_seed(cfg.seed, 0x6a6f696eULL, t);
    Rng rng(seed);
    const NodeId joiner = topologies::kLayeredJoiner;
    Group group(cfg.group, universe_upto(19), seed);
    std::vector<ProtocolMessage> transcript;
    group.add_tap([&](const ProtocolMessage& m, const Bytes&) { transcript.push_back(m); });
    ++v.trials;
    try {
      const KeyTree tree = layered_tree(base);
      group.form(tree);
      warm_up(group, rng);
      // Attach the joiner to one to three random members.
      Graph g = base;
      const auto members = group.tree().members();
      const auto links = 1 + rng.below(3);
      for (std::uint64_t i = 0; i < links; ++i) g.add_edge(joiner, members[rng.below(members.size())]);
      const std::vector<SessionKeys> past = group.history();
      group.join(joiner, g);

      KnowledgeOracle oracle(cfg.group.suite, cfg.group.key_bytes);
      oracle.learn_state(group.node(joiner));
      oracle.add_hash_chain_context(group.epoch(), group.participants());
      oracle.absorb(transcript);
      opened += oracle.opened_count();
      bool broken = false;
      for (const auto& keys : past) {
        broken = broken || oracle.can_compute(keys.global_key);
        for (const auto& [_, lk] : keys.local_keys) broken = broken || oracle.can_compute(lk);
      }
      if (broken) ++v.failures;
    } catch (const Error&) {
      ++aborted;
    }
  }
  v.pass = v.failures == 0 && aborted == 0;
  v.detail = "recovered=" + std::to_string(v.failures) + "/" + std::to_string(v.trials) +
             " aborted=" + std::to_string(aborted) + " ciphertexts_opened=" + std::to_string(opened);
  v.seconds = clock.seconds();
  return v;
}

AttackSuiteReport run_attack_suite(const AttackSuiteConfig& cfg) {
  Stopwatch clock;
  AttackSuiteReport report;
  GoalVerdict independence;
  report.goals.push_back(run_transcript_scan(cfg, &independence));
  report.goals.push_back(independence);
  report.goals.push_back(run_replay_trials(cfg));
  report.goals.push_back(run_leaver_trials(cfg));
  report.goals.push_back(run_joiner_trials(cfg));
  report.seconds = clock.seconds();
  return report;
}

}  // namespace manetir
