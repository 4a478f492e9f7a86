#include "manetir/gka_group.hpp"

#include <algorithm>

#include "manetir/error.hpp"

namespace manetir {

LeaveMasterKeyPolicy parse_leave_policy(std::string_view name) {
  if (name == "fresh") return LeaveMasterKeyPolicy::Fresh;
  if (name == "hash_chain") return LeaveMasterKeyPolicy::HashChain;
  throw Error(ErrorCode::InvalidArgument, "unknown leave master key policy '" + std::string(name) + "'");
}

std::string_view name_of(LeaveMasterKeyPolicy p) {
  return p == LeaveMasterKeyPolicy::Fresh ? "fresh" : "hash_chain";
}

KeyDealer::KeyDealer(const CipherSuite& suite, std::size_t key_bytes, std::uint64_t seed,
                     std::optional<KeyMaterial> master)
    : suite_(suite), key_bytes_(key_bytes) {
  Rng rng = Rng::derive(seed, 0x6465616c6572ULL);
  master_ = master ? std::move(*master) : KeyMaterial::random(rng, key_bytes);
  if (master_.width_bytes() != key_bytes) {
    throw Error(ErrorCode::WidthMismatch, "master key width differs from the scenario key width");
  }
  secret_ = KeyMaterial::random(rng, 32);
}

KeyMaterial KeyDealer::link_key(NodeId a, NodeId b) const {
  const auto [lo, hi] = std::minmax(a, b);
  ByteWriter w;
  w.raw(secret_.bytes()).u32(lo.value).u32(hi.value);
  return derive_key(suite_, w.bytes(), key_bytes_);
}

std::map<NodeId, KeyMaterial> KeyDealer::link_keys_for(NodeId n,
                                                       const std::vector<NodeId>& universe) const {
  std::map<NodeId, KeyMaterial> out;
  for (NodeId other : universe) {
    if (other != n) out.emplace(other, link_key(n, other));
  }
  return out;
}

struct Group::Snapshot {
  std::map<NodeId, NodeProtocolState> nodes;
  std::optional<KeyTree> tree;
  std::uint64_t epoch;
  double now;
  std::vector<SessionKeys> history;
  std::set<NodeId> last_refreshed;
  std::set<NodeId> last_dropped;
  std::set<NodeId> audience;
  Rng rng;
};

Group::Group(GroupConfig config, std::vector<NodeId> universe, std::uint64_t seed)
    : config_(std::move(config)),
      ctx_{config_.suite, config_.options},
      universe_(std::move(universe)),
      seed_(seed),
      dealer_(config_.suite, config_.key_bytes, seed, config_.master_key),
      rng_(Rng::derive(seed, 0x67726f7570ULL)) {
  std::sort(universe_.begin(), universe_.end());
  universe_.erase(std::unique(universe_.begin(), universe_.end()), universe_.end());
}

Group::Snapshot Group::snapshot() const {
  return Snapshot{nodes_, tree_, epoch_, now_, history_, last_refreshed_, last_dropped_, audience_, rng_};
}

void Group::restore(Snapshot s) {
  nodes_ = std::move(s.nodes);
  tree_ = std::move(s.tree);
  epoch_ = s.epoch;
  now_ = s.now;
  history_ = std::move(s.history);
  last_refreshed_ = std::move(s.last_refreshed);
  last_dropped_ = std::move(s.last_dropped);
  audience_ = std::move(s.audience);
  rng_ = s.rng;
  queue_.clear();
}

template <typename F>
auto Group::transactional(F&& body) {
  Snapshot before = snapshot();
  try {
    return body();
  } catch (...) {
    restore(std::move(before));
    throw;
  }
}

const KeyTree& Group::tree() const {
  if (!tree_) throw Error(ErrorCode::ProtocolAbort, "group not formed");
  return *tree_;
}

std::vector<NodeId> Group::participants() const {
  if (!tree_) return {};
  auto out = tree_->members();
  out.push_back(tree_->checker());
  std::sort(out.begin(), out.end());
  return out;
}

bool Group::is_participant(NodeId n) const {
  return tree_ && (tree_->contains(n) || tree_->checker() == n);
}

const NodeProtocolState& Group::node(NodeId n) const {
  auto it = nodes_.find(n);
  if (it == nodes_.end()) throw Error(ErrorCode::UnknownNode, "no state for node " + to_string(n), {n});
  return it->second;
}

NodeProtocolState& Group::state(NodeId n) {
  auto it = nodes_.find(n);
  if (it == nodes_.end()) throw Error(ErrorCode::UnknownNode, "no state for node " + to_string(n), {n});
  return it->second;
}

void Group::ensure_node(NodeId n) {
  if (nodes_.contains(n)) return;
  if (!std::binary_search(universe_.begin(), universe_.end(), n)) {
    throw Error(ErrorCode::UnknownNode, "node " + to_string(n) + " was never provisioned", {n});
  }
  nodes_.emplace(n, make_node(n, dealer_.link_keys_for(n, universe_), seed_));
}

std::map<NodeId, KeyMaterial> Group::share_ledger() const {
  std::map<NodeId, KeyMaterial> out;
  for (NodeId n : participants()) out.emplace(n, node(n).share);
  return out;
}

SessionKeys Group::keys() const {
  if (history_.empty()) throw Error(ErrorCode::ProtocolAbort, "no agreed session key yet");
  return history_.back();
}

namespace {

bool later(const auto& a, const auto& b) { return a.at != b.at ? a.at > b.at : a.seq > b.seq; }

}  // namespace

void Group::send(const ProtocolMessage& msg) {
  const Bytes wire = encode(msg);
  for (const auto& tap : taps_) tap(msg, wire);
  auto enqueue = [&](NodeId r) {
    if (!nodes_.contains(r)) return;
    if (filter_ && !filter_(msg, r)) return;
    queue_.push_back(Pending{now_ + config_.latency, seq_++, r, wire});
    std::push_heap(queue_.begin(), queue_.end(), [](const auto& a, const auto& b) { return later(a, b); });
  };
  if (msg.is_broadcast()) {
    for (NodeId r : audience_) {
      if (r != msg.sender) enqueue(r);
    }
  } else {
    enqueue(msg.receiver);
  }
}

void Group::run_bus() {
  constexpr std::size_t kMaxDeliveries = 10'000'000;
  std::size_t steps = 0;
  while (!queue_.empty()) {
    if (++steps > kMaxDeliveries) {
      queue_.clear();
      throw Error(ErrorCode::ProtocolAbort, "message bus did not quiesce");
    }
    std::pop_heap(queue_.begin(), queue_.end(), [](const auto& a, const auto& b) { return later(a, b); });
    Pending p = std::move(queue_.back());
    queue_.pop_back();
    now_ = std::max(now_, p.at);
    const ProtocolMessage msg = decode(p.wire);
    NodeProtocolState& st = state(p.receiver);
    StepResult r = step_node(st, msg, now_, ctx_);
    if (r.dropped) {
      ++drops_;
      if (drop_observer_) drop_observer_(msg, p.receiver, *r.dropped);
      continue;
    }
    ++delivered_;
    st = std::move(r.state);
    for (const auto& out : r.outgoing) send(out);
  }
}

void Group::run_round(const KeyTree& tree, const std::set<NodeId>& run,
                      const std::set<NodeId>& refresh, bool path_round,
                      const std::map<NodeId, KeyMaterial>* shares) {
  std::vector<NodeId> group = tree.members();
  group.push_back(tree.checker());
  std::sort(group.begin(), group.end());
  audience_ = std::set<NodeId>(group.begin(), group.end());

  for (NodeId n : group) {
    ensure_node(n);
    RoundSpec spec;
    spec.role = n == tree.root() ? Role::Root : n == tree.checker() ? Role::Checker : Role::Member;
    spec.root = tree.root();
    spec.checker = tree.checker();
    spec.group = group;
    if (spec.role != Role::Checker) {
      spec.parent = tree.parent(n);
      spec.children = tree.children(n);
      spec.participates = run.contains(n);
      if (spec.participates) {
        for (NodeId c : spec.children) {
          if (run.contains(c)) spec.awaiting.insert(c);
        }
      }
    }
    spec.refresh_share = refresh.contains(n);
    spec.path_round = path_round;
    NodeProtocolState& st = state(n);
    begin_round(st, spec, config_.key_bytes);
    if (shares) {
      auto it = shares->find(n);
      if (it != shares->end()) {
        if (it->second.width_bytes() != config_.key_bytes) {
          throw Error(ErrorCode::WidthMismatch, "share of " + to_string(n) + " has the wrong width", {n});
        }
        st.share = it->second;
      }
    }
  }

  for (NodeId n : run) {
    for (const auto& m : start_upward(state(n), now_, ctx_)) send(m);
  }
  run_bus();

  // Report the deepest stalled edge: a waiting parent whose child is not
  // itself waiting.
  for (NodeId n : run) {
    for (NodeId child : node(n).awaiting_children) {
      if (!node(child).awaiting_children.empty()) continue;
      throw Error(ErrorCode::Timeout,
                  "edge " + to_string(child) + "->" + to_string(n) + " did not complete",
                  {n, child});
    }
  }
  if (!node(tree.root()).round_complete) {
    throw Error(ErrorCode::Timeout, "root did not obtain the subkey", {tree.root()});
  }
}

void Group::run_agreement() {
  const KeyTree& t = tree();
  for (const auto& m : start_agreement(state(t.root()), ctx_)) send(m);
  run_bus();
  const auto& checker = node(t.checker());
  if (!checker.agreement_verified) {
    std::vector<NodeId> missing(checker.awaiting_confirmations.begin(),
                                checker.awaiting_confirmations.end());
    if (missing.empty()) missing = participants();
    std::string list;
    for (NodeId n : missing) list += (list.empty() ? "" : " ") + to_string(n);
    throw Error(ErrorCode::CheckerVerificationFailure, "no valid key confirmation from: " + list,
                missing);
  }
}

SessionKeys Group::commit_epoch() {
  const KeyTree& t = tree();
  SessionKeys keys;
  keys.global_key = *node(t.checker()).session_key;
  keys.local_keys = node(t.root()).local_keys;
  keys.epoch = ++epoch_;
  history_.push_back(keys);
  return keys;
}

void Group::distribute_master_key(NodeId sender, const std::vector<NodeId>& receivers,
                                  const KeyMaterial& master, std::uint64_t epoch) {
  install_master_key(state(sender), master, epoch);
  for (NodeId r : receivers) {
    if (r == sender) continue;
    ensure_node(r);
    send(make_master_key_update(state(sender), r, master, epoch, ctx_));
  }
  run_bus();
  for (NodeId r : receivers) {
    if (node(r).master_key != master) {
      throw Error(ErrorCode::Timeout,
                  "master key update " + to_string(sender) + "->" + to_string(r) + " not received",
                  {sender, r});
    }
  }
}

KeyMaterial Group::next_master_key(LeaveMasterKeyPolicy policy, NodeId issuer,
                                   const std::vector<NodeId>& members, std::uint64_t epoch) {
  if (policy == LeaveMasterKeyPolicy::HashChain) {
    const KeyMaterial next = hash_chain_master_key(config_.suite, node(issuer).master_key, epoch, members);
    for (NodeId m : members) install_master_key(state(m), next, epoch);
    return next;
  }
  const KeyMaterial next = KeyMaterial::random(state(issuer).rng, config_.key_bytes);
  distribute_master_key(issuer, members, next, epoch);
  return next;
}

InitiationResult Group::initiate(const KeyTree& tree, const std::map<NodeId, KeyMaterial>* shares) {
  return transactional([&] {
    std::vector<NodeId> group = tree.members();
    group.push_back(tree.checker());
    for (NodeId n : group) {
      ensure_node(n);
      if (state(n).master_key.empty()) install_master_key(state(n), dealer_.master_key(), 0);
    }
    std::set<NodeId> all(group.begin(), group.end());
    std::set<NodeId> members = all;
    members.erase(tree.checker());
    run_round(tree, members, all, false, shares);
    tree_ = tree;
    last_refreshed_ = all;
    last_dropped_.clear();
    const auto& root = node(tree.root());
    return InitiationResult{*root.subkey, root.local_keys};
  });
}

SessionKeys Group::agree() {
  return transactional([&] {
    run_agreement();
    return commit_epoch();
  });
}

SessionKeys Group::form(const KeyTree& tree, const std::map<NodeId, KeyMaterial>* shares) {
  if (tree_) throw Error(ErrorCode::InvalidArgument, "group already formed");
  return transactional([&] {
    initiate(tree, shares);
    return agree();
  });
}

SessionKeys Group::form(NodeId root, const std::set<NodeId>& members, const Graph& graph) {
  return transactional([&] {
    std::set<NodeId> candidates = members;
    candidates.erase(root);
    const NodeId checker = select_checker(root, graph, rng_, &candidates);
    return form(build_tree(root, members, graph, checker));
  });
}

namespace {

std::set<NodeId> path_closure(const KeyTree& tree, const std::set<NodeId>& seeds) {
  std::set<NodeId> out;
  for (NodeId s : seeds) {
    if (!tree.contains(s)) continue;
    for (NodeId p : key_path(tree, s)) out.insert(p);
  }
  return out;
}

std::vector<NodeId> parties_of(const KeyTree& tree) {
  auto out = tree.members();
  out.push_back(tree.checker());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

SessionKeys Group::join(NodeId joiner, const Graph& graph) {
  return transactional([&] {
    const KeyTree old = tree();
    if (is_participant(joiner)) {
      throw Error(ErrorCode::InvalidArgument, "node " + to_string(joiner) + " is already a member",
                  {joiner});
    }
    ensure_node(joiner);
    const auto current = participants();
    audience_ = std::set<NodeId>(current.begin(), current.end());
    send(make_join_request(joiner));
    run_bus();

    const KeyTree next = attach_member(old, joiner, graph);
    const std::uint64_t new_epoch = epoch_ + 1;
    const auto parties = parties_of(next);
    const KeyMaterial master =
        hash_chain_master_key(config_.suite, node(old.root()).master_key, new_epoch, parties);
    for (NodeId n : parties) {
      if (n != joiner) install_master_key(state(n), master, new_epoch);
    }
    // The joiner never learns K_M; its parent hands over K_M' on their link key.
    const NodeId parent = *next.parent(joiner);
    send(make_master_key_update(state(parent), joiner, master, new_epoch, ctx_));
    run_bus();
    if (node(joiner).master_key != master) {
      throw Error(ErrorCode::Timeout, "joiner did not receive the master key", {parent, joiner});
    }

    std::set<NodeId> seeds = structural_changes(old, next);
    seeds.insert(joiner);
    const std::set<NodeId> run = path_closure(next, seeds);
    run_round(next, run, run, true, nullptr);
    tree_ = next;
    run_agreement();
    last_refreshed_ = run;
    last_dropped_.clear();
    return commit_epoch();
  });
}

SessionKeys Group::leave(NodeId leaver, const Graph& graph) {
  return transactional([&] {
    const KeyTree old = tree();
    if (!is_participant(leaver)) {
      throw Error(ErrorCode::UnknownNode, "leaver " + to_string(leaver) + " not in group", {leaver});
    }
    if (leaver == old.root()) return reform_without(leaver, graph);

    KeyTree next;
    std::set<NodeId> seeds;
    std::set<NodeId> refresh_extra;
    last_dropped_.clear();
    if (leaver == old.checker()) {
      // Prefer a neighbour of the root whose removal keeps the tree connected;
      // otherwise the members it cut off are dropped as in a partitioning leave.
      const auto old_members = old.members();
      std::set<NodeId> members(old_members.begin(), old_members.end());
      std::vector<NodeId> candidates;
      std::vector<NodeId> viable;
      for (NodeId c : graph.neighbors(old.root())) {
        if (!old.contains(c) || c == old.root()) continue;
        candidates.push_back(c);
        try {
          build_tree(old.root(), members, graph, c);
          viable.push_back(c);
        } catch (const Error&) {
        }
      }
      if (candidates.empty()) {
        throw Error(ErrorCode::IsolatedRoot, "root has no neighbour left to act as checker",
                    {old.root()});
      }
      const auto& pool = viable.empty() ? candidates : viable;
      const NodeId checker = pool[rng_.below(pool.size())];
      std::set<NodeId> tree_members = members;
      tree_members.erase(checker);
      const auto reach_without = graph.bfs_levels(old.root(), &tree_members);
      for (NodeId m : tree_members) {
        if (!reach_without.contains(m)) last_dropped_.insert(m);
      }
      for (NodeId d : last_dropped_) members.erase(d);
      members.insert(checker);
      next = build_tree(old.root(), members, graph, checker);
      seeds = structural_changes(old, next);
      seeds.insert(old.root());
      refresh_extra.insert(checker);
    } else {
      DetachResult d = detach_member(old, leaver, graph);
      next = d.tree;
      seeds = d.affected;
      for (NodeId s : structural_changes(old, next)) seeds.insert(s);
      last_dropped_ = d.dropped;
    }

    const std::uint64_t new_epoch = epoch_ + 1;
    next_master_key(config_.leave_policy, next.root(), parties_of(next), new_epoch);

    const std::set<NodeId> run = path_closure(next, seeds);
    std::set<NodeId> refresh = run;
    refresh.insert(refresh_extra.begin(), refresh_extra.end());
    run_round(next, run, refresh, true, nullptr);
    tree_ = next;
    run_agreement();
    last_refreshed_ = refresh;
    return commit_epoch();
  });
}

SessionKeys Group::reform_without(NodeId leaver, const Graph& graph) {
  const KeyTree old = tree();
  std::set<NodeId> remaining;
  for (NodeId n : participants()) {
    if (n != leaver) remaining.insert(n);
  }
  std::optional<NodeId> new_root;
  for (NodeId c : old.children(leaver)) {
    if (!new_root) new_root = c;
  }
  if (!new_root) {
    for (NodeId m : old.members()) {
      if (m != leaver) {
        new_root = m;
        break;
      }
    }
  }
  if (!new_root) {
    throw Error(ErrorCode::InvalidArgument, "group would have no member left besides the checker",
                {leaver});
  }
  std::set<NodeId> candidates = remaining;
  candidates.erase(*new_root);
  const NodeId checker = select_checker(*new_root, graph, rng_, &candidates);

  std::set<NodeId> tree_members = remaining;
  tree_members.erase(checker);
  const auto reach = graph.bfs_levels(*new_root, &tree_members);
  last_dropped_.clear();
  for (NodeId m : tree_members) {
    if (!reach.contains(m)) last_dropped_.insert(m);
  }
  for (NodeId d : last_dropped_) remaining.erase(d);
  const KeyTree next = build_tree(*new_root, remaining, graph, checker);

  const std::uint64_t new_epoch = epoch_ + 1;
  next_master_key(config_.leave_policy, *new_root, parties_of(next), new_epoch);

  const auto next_members = next.members();
  std::set<NodeId> run(next_members.begin(), next_members.end());
  std::set<NodeId> all = run;
  all.insert(checker);
  run_round(next, run, all, false, nullptr);
  tree_ = next;
  run_agreement();
  last_refreshed_ = all;
  return commit_epoch();
}

SessionKeys Group::global_rekey(std::optional<KeyMaterial> update) {
  return transactional([&] {
    const NodeId checker = tree().checker();
    const auto current = participants();
    audience_ = std::set<NodeId>(current.begin(), current.end());
    for (const auto& m : start_global_rekey(state(checker), ctx_, std::move(update))) send(m);
    run_bus();
    const auto& st = node(checker);
    if (!st.agreement_verified) {
      std::vector<NodeId> missing(st.awaiting_confirmations.begin(), st.awaiting_confirmations.end());
      throw Error(ErrorCode::CheckerVerificationFailure, "global rekey not confirmed by every member",
                  missing);
    }
    last_refreshed_.clear();
    return commit_epoch();
  });
}

KeyMaterial Group::local_rekey(NodeId member, std::optional<KeyMaterial> update) {
  return transactional([&] {
    const NodeId root = tree().root();
    if (!is_participant(member) || !node(member).is_level1()) {
      throw Error(ErrorCode::InvalidArgument, "node " + to_string(member) + " is not a level-1 member",
                  {member});
    }
    for (const auto& m : start_local_rekey(state(member), ctx_, std::move(update))) send(m);
    run_bus();
    const KeyMaterial& mine = node(member).local_keys.at(root);
    auto it = node(root).local_keys.find(member);
    if (it == node(root).local_keys.end() || it->second != mine) {
      throw Error(ErrorCode::ProtocolAbort, "root rejected the local key update", {member, root});
    }
    last_refreshed_.clear();
    commit_epoch();
    return mine;
  });
}

std::optional<DropReason> Group::inject(const ProtocolMessage& msg, NodeId receiver) {
  NodeProtocolState& st = state(receiver);
  StepResult r = step_node(st, decode(encode(msg)), now_, ctx_);
  if (r.dropped) {
    ++drops_;
    if (drop_observer_) drop_observer_(msg, receiver, *r.dropped);
    return r.dropped;
  }
  ++delivered_;
  st = std::move(r.state);
  for (const auto& out : r.outgoing) send(out);
  run_bus();
  return std::nullopt;
}

InitiationResult run_key_initiation(const KeyTree& tree, const std::map<NodeId, KeyMaterial>& shares,
                                    const KeyMaterial& master, const CipherSuite& suite,
                                    std::uint64_t seed) {
  GroupConfig cfg;
  cfg.suite = suite;
  cfg.key_bytes = master.width_bytes();
  cfg.master_key = master;
  for (NodeId m : tree.members()) {
    if (!shares.contains(m)) {
      throw Error(ErrorCode::InvalidArgument, "no share for member " + to_string(m), {m});
    }
  }
  Group g(cfg, parties_of(tree), seed);
  return g.initiate(tree, &shares);
}

KeyMaterial run_session_agreement(const KeyTree& tree, const std::map<NodeId, KeyMaterial>& shares,
                                  const KeyMaterial& master, const CipherSuite& suite,
                                  std::uint64_t seed) {
  GroupConfig cfg;
  cfg.suite = suite;
  cfg.key_bytes = master.width_bytes();
  cfg.master_key = master;
  for (NodeId m : parties_of(tree)) {
    if (!shares.contains(m)) {
      throw Error(ErrorCode::InvalidArgument, "no share for party " + to_string(m), {m});
    }
  }
  Group g(cfg, parties_of(tree), seed);
  g.initiate(tree, &shares);
  return g.agree().global_key;
}

}  // namespace manetir
