#include "manetir/gka_node.hpp"

#include <algorithm>

#include "manetir/error.hpp"

namespace manetir {

std::string_view name_of(Role r) {
  switch (r) {
    case Role::Outsider: return "outsider";
    case Role::Root: return "root";
    case Role::Checker: return "checker";
    case Role::Member: return "member";
  }
  return "?";
}

std::string_view name_of(DropReason r) {
  switch (r) {
    case DropReason::IntegrityFailure: return "integrity-failure";
    case DropReason::NonceMismatch: return "nonce-mismatch";
    case DropReason::UnexpectedKind: return "unexpected-kind";
    case DropReason::Malformed: return "malformed";
    case DropReason::Expired: return "expired";
    case DropReason::DigestMismatch: return "digest-mismatch";
  }
  return "?";
}

namespace {

struct Drop {
  DropReason reason;
};

[[noreturn]] void drop(DropReason r) { throw Drop{r}; }

void require(bool cond, DropReason r = DropReason::UnexpectedKind) {
  if (!cond) drop(r);
}

bool contains(const std::vector<NodeId>& v, NodeId n) {
  return std::find(v.begin(), v.end(), n) != v.end();
}

void seal(ProtocolMessage& msg, const ProtocolContext& ctx, const KeyMaterial& key,
          const Bytes& plaintext, Rng& rng) {
  msg.payload = encrypt(ctx.suite, key, plaintext, header_bytes(msg), rng).bytes;
}

Bytes open(const ProtocolMessage& msg, const ProtocolContext& ctx, const KeyMaterial& key) {
  if (key.empty()) drop(DropReason::UnexpectedKind);
  return decrypt(ctx.suite, key, Ciphertext{msg.payload}, header_bytes(msg));
}

KeyMaterial read_key(ByteReader& r, std::size_t width) {
  auto b = r.raw(width);
  return KeyMaterial(Bytes(b.begin(), b.end()));
}

NodeId read_id(ByteReader& r) { return NodeId{r.u32()}; }

bool seen(const NodeProtocolState& s, Nonce n) {
  return s.seen_nonces.contains({n.issuer.value, n.value});
}

void remember(NodeProtocolState& s, Nonce n) { s.seen_nonces.insert({n.issuer.value, n.value}); }

/// Freshness of a received nonce (skipped by the negative-control switch).
void require_fresh(const NodeProtocolState& s, Nonce n, const ProtocolContext& ctx) {
  if (ctx.options.verify_nonces && seen(s, n)) drop(DropReason::NonceMismatch);
}

void require_successor(std::uint64_t echoed, Nonce mine, const ProtocolContext& ctx) {
  if (!ctx.options.verify_nonces) return;
  if (mine.value == UINT64_MAX || echoed != mine.value + 1) drop(DropReason::NonceMismatch);
}

void require_ids(const ProtocolMessage& m, std::initializer_list<NodeId> ids) {
  require(m.ids.size() == ids.size() && std::equal(ids.begin(), ids.end(), m.ids.begin()),
          DropReason::Malformed);
}

std::size_t key_width(const NodeProtocolState& s) {
  if (!s.master_key.empty()) return s.master_key.width_bytes();
  if (!s.link_keys.empty()) return s.link_keys.begin()->second.width_bytes();
  return kDefaultKeyBytes;
}

MessageKind reply_kind(MessageKind k) {
  switch (k) {
    case MessageKind::AuthStep1: return MessageKind::AuthStep2;
    case MessageKind::AuthStep2: return MessageKind::AuthStep3;
    case MessageKind::JoinStepA: return MessageKind::JoinStepB;
    case MessageKind::JoinStepB: return MessageKind::JoinStepC;
    default: return k;
  }
}

/// Computes K_i' (or z at the root) once nothing is awaited, and starts the
/// handshake with the parent.
void advance(NodeProtocolState& s, double now, const ProtocolContext& ctx,
             std::vector<ProtocolMessage>& out) {
  if (!s.in_round || s.round_complete || !s.awaiting_children.empty()) return;
  KeyMaterial acc = s.share;
  for (NodeId c : s.children) {
    auto it = s.children_received.find(c);
    if (it == s.children_received.end()) {
      throw Error(ErrorCode::ProtocolAbort,
                  "node " + to_string(s.my_id) + " lacks a contribution from child " +
                      to_string(c),
                  {s.my_id, c});
    }
    acc ^= it->second;
  }
  s.intermediate = acc;

  if (s.role == Role::Root) {
    s.subkey = acc;
    s.local_keys.clear();
    for (NodeId c : s.children) {
      auto sh = s.level1_shares.find(c);
      if (sh == s.level1_shares.end()) {
        throw Error(ErrorCode::ProtocolAbort, "root lacks the share of level-1 member " + to_string(c),
                    {c});
      }
      s.local_keys[c] = acc ^ sh->second;
    }
    s.round_complete = true;
    return;
  }

  if (!s.parent) throw Error(ErrorCode::ProtocolAbort, "non-root node without parent", {s.my_id});
  const NodeId parent = *s.parent;
  const Nonce mine = s.nonces.fresh(s.rng);
  s.pending[parent] = PendingHandshake{mine, now};
  s.round_complete = true;

  ProtocolMessage m;
  m.kind = s.path_round ? MessageKind::JoinStepA : MessageKind::AuthStep1;
  m.sender = s.my_id;
  m.receiver = parent;
  m.ids = {s.my_id, parent};
  Bytes pt = ByteWriter().u32(s.my_id.value).u32(parent.value).u64(mine.value).bytes();
  seal(m, ctx, s.master_key, pt, s.rng);
  out.push_back(std::move(m));
}

void on_step1(NodeProtocolState& s, const ProtocolMessage& m, double now,
              const ProtocolContext& ctx, std::vector<ProtocolMessage>& out) {
  require(m.receiver == s.my_id);
  require_ids(m, {m.sender, s.my_id});
  require(contains(s.children, m.sender));
  const Bytes pt = open(m, ctx, s.master_key);
  ByteReader r(pt);
  require(read_id(r) == m.sender && read_id(r) == s.my_id, DropReason::Malformed);
  const Nonce theirs{r.u64(), m.sender};
  r.expect_end();
  require_fresh(s, theirs, ctx);
  remember(s, theirs);

  const Nonce mine = s.nonces.fresh(s.rng);
  s.pending[m.sender] = PendingHandshake{mine, now};

  ProtocolMessage reply;
  reply.kind = reply_kind(m.kind);
  reply.sender = s.my_id;
  reply.receiver = m.sender;
  reply.ids = {s.my_id, m.sender};
  Bytes body = ByteWriter()
                   .u32(s.my_id.value)
                   .u32(m.sender.value)
                   .u64(succ(theirs).value)
                   .u64(mine.value)
                   .bytes();
  seal(reply, ctx, s.master_key, body, s.rng);
  out.push_back(std::move(reply));
}

void on_step2(NodeProtocolState& s, const ProtocolMessage& m, double now,
              const ProtocolContext& ctx, std::vector<ProtocolMessage>& out) {
  require(m.receiver == s.my_id);
  require_ids(m, {m.sender, s.my_id});
  require(s.parent && *s.parent == m.sender);
  auto pend = s.pending.find(m.sender);
  require(pend != s.pending.end());
  require(now - pend->second.started_at <= ctx.options.edge_timeout, DropReason::Expired);
  require(s.intermediate.has_value());

  const Bytes pt = open(m, ctx, s.master_key);
  ByteReader r(pt);
  require(read_id(r) == m.sender && read_id(r) == s.my_id, DropReason::Malformed);
  const std::uint64_t echoed = r.u64();
  const Nonce theirs{r.u64(), m.sender};
  r.expect_end();
  require_successor(echoed, pend->second.mine, ctx);
  require_fresh(s, theirs, ctx);
  remember(s, theirs);
  s.pending.erase(pend);

  ProtocolMessage reply;
  reply.kind = reply_kind(m.kind);
  reply.sender = s.my_id;
  reply.receiver = m.sender;
  reply.ids = {m.sender, s.my_id};
  ByteWriter w;
  w.u32(m.sender.value).u32(s.my_id.value).u64(succ(theirs).value).raw(s.intermediate->bytes());
  // The root needs S_j of its level-1 children to form LK_j = z xor S_j.
  if (m.sender == s.root) w.raw(s.share.bytes());
  seal(reply, ctx, s.master_key, w.bytes(), s.rng);
  s.upward_done = true;
  out.push_back(std::move(reply));
}

void on_step3(NodeProtocolState& s, const ProtocolMessage& m, double now,
              const ProtocolContext& ctx, std::vector<ProtocolMessage>& out) {
  require(m.receiver == s.my_id);
  require_ids(m, {s.my_id, m.sender});
  require(contains(s.children, m.sender));
  auto pend = s.pending.find(m.sender);
  require(pend != s.pending.end());
  require(now - pend->second.started_at <= ctx.options.edge_timeout, DropReason::Expired);

  const Bytes pt = open(m, ctx, s.master_key);
  const std::size_t width = key_width(s);
  ByteReader r(pt);
  require(read_id(r) == s.my_id && read_id(r) == m.sender, DropReason::Malformed);
  const std::uint64_t echoed = r.u64();
  KeyMaterial contribution = read_key(r, width);
  std::optional<KeyMaterial> child_share;
  if (s.role == Role::Root) child_share = read_key(r, width);
  r.expect_end();
  require_successor(echoed, pend->second.mine, ctx);

  s.pending.erase(pend);
  s.children_received[m.sender] = std::move(contribution);
  if (child_share) s.level1_shares[m.sender] = std::move(*child_share);
  s.awaiting_children.erase(m.sender);
  advance(s, now, ctx, out);
}

void on_agree1(NodeProtocolState& s, const ProtocolMessage& m, const ProtocolContext& ctx,
               std::vector<ProtocolMessage>& out) {
  require(m.is_broadcast());
  require(s.role == Role::Member || s.role == Role::Checker);
  require(m.sender == s.root);
  require_ids(m, {s.root});
  const Bytes pt = open(m, ctx, s.master_key);
  ByteReader r(pt);
  require(read_id(r) == s.root, DropReason::Malformed);
  KeyMaterial z = read_key(r, key_width(s));
  const Nonce root_nonce{r.u64(), s.root};
  r.expect_end();
  require_fresh(s, root_nonce, ctx);
  remember(s, root_nonce);

  s.root_nonce = root_nonce;
  s.subkey = z;
  if (s.is_level1()) s.local_keys = {{s.root, z ^ s.share}};

  if (s.role != Role::Checker) return;
  s.session_key = z ^ s.share;
  const Nonce mine = s.nonces.fresh(s.rng);
  s.checker_nonce = mine;
  s.pending_session_key.reset();
  s.awaiting_confirmations.clear();
  for (NodeId n : s.group) {
    if (n != s.my_id) s.awaiting_confirmations.insert(n);
  }
  s.confirmed.clear();
  s.agreement_verified = s.awaiting_confirmations.empty();

  ProtocolMessage reply;
  reply.kind = MessageKind::AgreeStep2;
  reply.sender = s.my_id;
  reply.receiver = kBroadcast;
  reply.ids = {s.my_id};
  Bytes body = ByteWriter()
                   .u32(s.my_id.value)
                   .raw(s.share.bytes())
                   .u64(succ(root_nonce).value)
                   .u64(mine.value)
                   .bytes();
  seal(reply, ctx, s.master_key, body, s.rng);
  out.push_back(std::move(reply));
}

void on_agree2(NodeProtocolState& s, const ProtocolMessage& m, const ProtocolContext& ctx,
               std::vector<ProtocolMessage>& out) {
  require(m.is_broadcast());
  require(s.role == Role::Member || s.role == Role::Root);
  require(m.sender == s.checker);
  require_ids(m, {s.checker});
  require(s.root_nonce.has_value() && s.subkey.has_value());
  const Bytes pt = open(m, ctx, s.master_key);
  ByteReader r(pt);
  require(read_id(r) == s.checker, DropReason::Malformed);
  KeyMaterial checker_share = read_key(r, key_width(s));
  const std::uint64_t echoed = r.u64();
  const Nonce checker_nonce{r.u64(), s.checker};
  r.expect_end();
  require_successor(echoed, *s.root_nonce, ctx);
  require_fresh(s, checker_nonce, ctx);
  remember(s, checker_nonce);

  s.session_key = *s.subkey ^ checker_share;
  s.checker_nonce = checker_nonce;

  ProtocolMessage reply;
  reply.kind = MessageKind::AgreeStep3;
  reply.sender = s.my_id;
  reply.receiver = s.checker;
  reply.ids = {s.my_id, s.checker};
  reply.payload = agreement_digest(ctx.suite, s.checker, checker_nonce, *s.session_key).bytes;
  out.push_back(std::move(reply));
}

void on_agree3(NodeProtocolState& s, const ProtocolMessage& m, const ProtocolContext& ctx) {
  require(s.role == Role::Checker && m.receiver == s.my_id);
  require_ids(m, {m.sender, s.my_id});
  require(s.awaiting_confirmations.contains(m.sender));
  require(s.checker_nonce && s.session_key && !s.pending_session_key);
  const Digest expected = agreement_digest(ctx.suite, s.my_id, *s.checker_nonce, *s.session_key);
  require(Digest{m.payload} == expected, DropReason::DigestMismatch);
  s.awaiting_confirmations.erase(m.sender);
  s.confirmed.insert(m.sender);
  s.agreement_verified = s.awaiting_confirmations.empty();
}

void on_global_rekey(NodeProtocolState& s, const ProtocolMessage& m, const ProtocolContext& ctx,
                     std::vector<ProtocolMessage>& out) {
  require(m.is_broadcast());
  require(s.role == Role::Member || s.role == Role::Root);
  require(m.sender == s.checker);
  require_ids(m, {s.checker});
  require(s.session_key.has_value());
  const Bytes pt = open(m, ctx, *s.session_key);
  ByteReader r(pt);
  require(read_id(r) == s.checker, DropReason::Malformed);
  KeyMaterial update = read_key(r, key_width(s));
  const Nonce checker_nonce{r.u64(), s.checker};
  r.expect_end();
  require_fresh(s, checker_nonce, ctx);
  remember(s, checker_nonce);

  s.session_key = *s.session_key ^ update;
  s.checker_nonce = checker_nonce;

  ProtocolMessage reply;
  reply.kind = MessageKind::GlobalRekeyConfirm;
  reply.sender = s.my_id;
  reply.receiver = s.checker;
  reply.ids = {s.my_id, s.checker};
  Bytes data = ByteWriter().u32(s.my_id.value).u64(succ(checker_nonce).value).bytes();
  reply.payload = keyed_hash(ctx.suite, *s.session_key, data).bytes;
  out.push_back(std::move(reply));
}

void on_global_rekey_confirm(NodeProtocolState& s, const ProtocolMessage& m,
                             const ProtocolContext& ctx) {
  require(s.role == Role::Checker && m.receiver == s.my_id);
  require_ids(m, {m.sender, s.my_id});
  require(s.pending_session_key && s.checker_nonce);
  require(s.awaiting_confirmations.contains(m.sender));
  Bytes data = ByteWriter().u32(m.sender.value).u64(succ(*s.checker_nonce).value).bytes();
  require(verify_keyed_hash(ctx.suite, *s.pending_session_key, data, Digest{m.payload}),
          DropReason::DigestMismatch);
  s.awaiting_confirmations.erase(m.sender);
  s.confirmed.insert(m.sender);
  if (s.awaiting_confirmations.empty()) {
    s.share ^= *s.pending_session_key ^ *s.session_key;
    s.session_key = *s.pending_session_key;
    s.pending_session_key.reset();
    s.agreement_verified = true;
  }
}

void on_local_rekey1(NodeProtocolState& s, const ProtocolMessage& m, const ProtocolContext& ctx) {
  require(s.role == Role::Root && m.receiver == s.my_id);
  require_ids(m, {m.sender});
  auto lk = s.local_keys.find(m.sender);
  require(lk != s.local_keys.end());
  const Bytes pt = open(m, ctx, lk->second);
  ByteReader r(pt);
  require(read_id(r) == m.sender, DropReason::Malformed);
  KeyMaterial update = read_key(r, key_width(s));
  const Nonce theirs{r.u64(), m.sender};
  r.expect_end();
  require_fresh(s, theirs, ctx);
  remember(s, theirs);
  s.pending_local[m.sender] = PendingLocalRekey{lk->second ^ update, theirs};
}

void on_local_rekey3(NodeProtocolState& s, const ProtocolMessage& m, const ProtocolContext& ctx) {
  require(s.role == Role::Root && m.receiver == s.my_id);
  require_ids(m, {m.sender});
  auto pend = s.pending_local.find(m.sender);
  require(pend != s.pending_local.end());
  const Digest expected =
      local_rekey_digest(ctx.suite, m.sender, pend->second.nonce, pend->second.new_key);
  require(Digest{m.payload} == expected, DropReason::DigestMismatch);
  s.local_keys[m.sender] = pend->second.new_key;
  s.pending_local.erase(pend);
}

void on_master_key_update(NodeProtocolState& s, const ProtocolMessage& m,
                          const ProtocolContext& ctx) {
  require(m.receiver == s.my_id);
  require_ids(m, {m.sender, s.my_id});
  auto link = s.link_keys.find(m.sender);
  require(link != s.link_keys.end());
  const Bytes pt = open(m, ctx, link->second);
  ByteReader r(pt);
  require(read_id(r) == m.sender && read_id(r) == s.my_id, DropReason::Malformed);
  const std::uint64_t epoch = r.u64();
  KeyMaterial master = read_key(r, link->second.width_bytes());
  const Nonce theirs{r.u64(), m.sender};
  r.expect_end();
  require(epoch > s.epoch, DropReason::NonceMismatch);
  require_fresh(s, theirs, ctx);
  remember(s, theirs);
  s.master_key = std::move(master);
  s.epoch = epoch;
}

void dispatch(NodeProtocolState& s, const ProtocolMessage& m, double now,
              const ProtocolContext& ctx, std::vector<ProtocolMessage>& out) {
  require(m.receiver == s.my_id || m.is_broadcast());
  require(m.sender != s.my_id);
  switch (m.kind) {
    case MessageKind::AuthStep1:
    case MessageKind::JoinStepA:
      on_step1(s, m, now, ctx, out);
      return;
    case MessageKind::AuthStep2:
    case MessageKind::JoinStepB:
      on_step2(s, m, now, ctx, out);
      return;
    case MessageKind::AuthStep3:
    case MessageKind::JoinStepC:
      on_step3(s, m, now, ctx, out);
      return;
    case MessageKind::AgreeStep1: on_agree1(s, m, ctx, out); return;
    case MessageKind::AgreeStep2: on_agree2(s, m, ctx, out); return;
    case MessageKind::AgreeStep3: on_agree3(s, m, ctx); return;
    case MessageKind::GlobalRekey: on_global_rekey(s, m, ctx, out); return;
    case MessageKind::GlobalRekeyConfirm: on_global_rekey_confirm(s, m, ctx); return;
    case MessageKind::LocalRekeyStep1: on_local_rekey1(s, m, ctx); return;
    case MessageKind::LocalRekeyStep3: on_local_rekey3(s, m, ctx); return;
    case MessageKind::MasterKeyUpdate: on_master_key_update(s, m, ctx); return;
    case MessageKind::JoinRequest:
      // Admission is a group policy decision; the request carries no key state.
      require(m.is_broadcast() && m.ids.size() == 1 && m.ids[0] == m.sender, DropReason::Malformed);
      return;
    default:
      drop(DropReason::UnexpectedKind);
  }
}

}  // namespace

StepResult step_node(const NodeProtocolState& state, const ProtocolMessage& msg, double now,
                     const ProtocolContext& ctx) {
  StepResult result{state, {}, std::nullopt};
  try {
    dispatch(result.state, msg, now, ctx, result.outgoing);
    return result;
  } catch (const Drop& d) {
    return StepResult{state, {}, d.reason};
  } catch (const Error& e) {
    DropReason reason = DropReason::Malformed;
    if (e.code() == ErrorCode::IntegrityFailure) reason = DropReason::IntegrityFailure;
    else if (e.code() == ErrorCode::NonceOverflow) reason = DropReason::NonceMismatch;
    else if (e.code() != ErrorCode::Malformed && e.code() != ErrorCode::WidthMismatch) throw;
    return StepResult{state, {}, reason};
  }
}

NodeProtocolState make_node(NodeId id, std::map<NodeId, KeyMaterial> link_keys, std::uint64_t seed) {
  NodeProtocolState s;
  s.my_id = id;
  s.link_keys = std::move(link_keys);
  s.nonces = NonceIssuer(id);
  s.rng = Rng::derive(seed, id.value, 0x6b6579);
  return s;
}

void begin_round(NodeProtocolState& s, const RoundSpec& spec, std::size_t key_bytes) {
  s.role = spec.role;
  s.root = spec.root;
  s.checker = spec.checker;
  s.parent = spec.parent;
  s.children = spec.children;
  s.group = spec.group;
  std::erase_if(s.children_received, [&](const auto& kv) { return !contains(s.children, kv.first); });
  std::erase_if(s.level1_shares, [&](const auto& kv) {
    return s.role != Role::Root || !contains(s.children, kv.first);
  });
  if (spec.role != Role::Root) {
    s.local_keys.clear();
    s.pending_local.clear();
  }
  if (spec.refresh_share || s.share.empty()) s.share = KeyMaterial::random(s.rng, key_bytes);
  s.path_round = spec.path_round;
  s.in_round = spec.participates;
  s.round_complete = !spec.participates;
  s.upward_done = !spec.participates || spec.role == Role::Root;
  s.awaiting_children = spec.awaiting;
  s.pending.clear();
}

std::vector<ProtocolMessage> start_upward(NodeProtocolState& s, double now,
                                          const ProtocolContext& ctx) {
  std::vector<ProtocolMessage> out;
  advance(s, now, ctx, out);
  return out;
}

std::vector<ProtocolMessage> start_agreement(NodeProtocolState& root, const ProtocolContext& ctx) {
  if (root.role != Role::Root || !root.subkey) {
    throw Error(ErrorCode::ProtocolAbort, "session agreement requires a root holding z", {root.my_id});
  }
  const Nonce mine = root.nonces.fresh(root.rng);
  root.root_nonce = mine;
  ProtocolMessage m;
  m.kind = MessageKind::AgreeStep1;
  m.sender = root.my_id;
  m.receiver = kBroadcast;
  m.ids = {root.my_id};
  Bytes pt = ByteWriter().u32(root.my_id.value).raw(root.subkey->bytes()).u64(mine.value).bytes();
  seal(m, ctx, root.master_key, pt, root.rng);
  return {std::move(m)};
}

std::vector<ProtocolMessage> start_global_rekey(NodeProtocolState& checker,
                                                const ProtocolContext& ctx,
                                                std::optional<KeyMaterial> forced) {
  if (checker.role != Role::Checker || !checker.session_key) {
    throw Error(ErrorCode::ProtocolAbort, "global rekey requires the checker holding GK",
                {checker.my_id});
  }
  KeyMaterial update = forced ? std::move(*forced)
                             : KeyMaterial::random(checker.rng, checker.session_key->width_bytes());
  const Nonce mine = checker.nonces.fresh(checker.rng);
  checker.checker_nonce = mine;
  checker.pending_session_key = *checker.session_key ^ update;
  checker.awaiting_confirmations.clear();
  for (NodeId n : checker.group) {
    if (n != checker.my_id) checker.awaiting_confirmations.insert(n);
  }
  checker.confirmed.clear();
  checker.agreement_verified = false;

  ProtocolMessage m;
  m.kind = MessageKind::GlobalRekey;
  m.sender = checker.my_id;
  m.receiver = kBroadcast;
  m.ids = {checker.my_id};
  Bytes pt = ByteWriter().u32(checker.my_id.value).raw(update.bytes()).u64(mine.value).bytes();
  seal(m, ctx, *checker.session_key, pt, checker.rng);
  return {std::move(m)};
}

std::vector<ProtocolMessage> start_local_rekey(NodeProtocolState& member,
                                               const ProtocolContext& ctx,
                                               std::optional<KeyMaterial> forced) {
  auto lk = member.local_keys.find(member.root);
  if (!member.is_level1() || lk == member.local_keys.end()) {
    throw Error(ErrorCode::ProtocolAbort, "local rekey requires a level-1 member holding LK",
                {member.my_id});
  }
  const KeyMaterial old_key = lk->second;
  KeyMaterial update =
      forced ? std::move(*forced) : KeyMaterial::random(member.rng, old_key.width_bytes());
  const Nonce mine = member.nonces.fresh(member.rng);
  const KeyMaterial new_key = old_key ^ update;

  ProtocolMessage step1;
  step1.kind = MessageKind::LocalRekeyStep1;
  step1.sender = member.my_id;
  step1.receiver = member.root;
  step1.ids = {member.my_id};
  Bytes pt = ByteWriter().u32(member.my_id.value).raw(update.bytes()).u64(mine.value).bytes();
  seal(step1, ctx, old_key, pt, member.rng);

  ProtocolMessage step3;
  step3.kind = MessageKind::LocalRekeyStep3;
  step3.sender = member.my_id;
  step3.receiver = member.root;
  step3.ids = {member.my_id};
  step3.payload = local_rekey_digest(ctx.suite, member.my_id, mine, new_key).bytes;

  lk->second = new_key;
  return {std::move(step1), std::move(step3)};
}

ProtocolMessage make_master_key_update(NodeProtocolState& sender, NodeId receiver,
                                       const KeyMaterial& new_master, std::uint64_t new_epoch,
                                       const ProtocolContext& ctx) {
  auto link = sender.link_keys.find(receiver);
  if (link == sender.link_keys.end()) {
    throw Error(ErrorCode::ProtocolAbort,
                "no link key between " + to_string(sender.my_id) + " and " + to_string(receiver),
                {sender.my_id, receiver});
  }
  const Nonce mine = sender.nonces.fresh(sender.rng);
  ProtocolMessage m;
  m.kind = MessageKind::MasterKeyUpdate;
  m.sender = sender.my_id;
  m.receiver = receiver;
  m.ids = {sender.my_id, receiver};
  Bytes pt = ByteWriter()
                 .u32(sender.my_id.value)
                 .u32(receiver.value)
                 .u64(new_epoch)
                 .raw(new_master.bytes())
                 .u64(mine.value)
                 .bytes();
  seal(m, ctx, link->second, pt, sender.rng);
  return m;
}

void install_master_key(NodeProtocolState& s, KeyMaterial master, std::uint64_t epoch) {
  s.master_key = std::move(master);
  s.epoch = epoch;
}

ProtocolMessage make_join_request(NodeId joiner) {
  ProtocolMessage m;
  m.kind = MessageKind::JoinRequest;
  m.sender = joiner;
  m.receiver = kBroadcast;
  m.ids = {joiner};
  return m;
}

KeyMaterial hash_chain_master_key(const CipherSuite& suite, const KeyMaterial& master,
                                  std::uint64_t epoch, const std::vector<NodeId>& members) {
  std::vector<NodeId> sorted = members;
  std::sort(sorted.begin(), sorted.end());
  ByteWriter w;
  w.raw(master.bytes()).u64(epoch);
  for (NodeId id : sorted) w.u32(id.value);
  return derive_key(suite, w.bytes(), master.width_bytes());
}

Digest agreement_digest(const CipherSuite& suite, NodeId checker, Nonce checker_nonce,
                        const KeyMaterial& session_key) {
  ByteWriter w;
  w.u32(checker.value).u64(succ(checker_nonce).value).raw(session_key.bytes());
  return hash(suite, w.bytes());
}

Digest local_rekey_digest(const CipherSuite& suite, NodeId member, Nonce member_nonce,
                          const KeyMaterial& new_local_key) {
  ByteWriter w;
  w.u32(member.value).u64(succ(member_nonce).value).raw(new_local_key.bytes());
  return hash(suite, w.bytes());
}

namespace {

void put_key(ByteWriter& w, const KeyMaterial& k) {
  w.u16(static_cast<std::uint16_t>(k.width_bytes())).raw(k.bytes());
}

void put_opt_key(ByteWriter& w, const std::optional<KeyMaterial>& k) {
  w.u8(k ? 1 : 0);
  if (k) put_key(w, *k);
}

void put_key_map(ByteWriter& w, const std::map<NodeId, KeyMaterial>& m) {
  w.u32(static_cast<std::uint32_t>(m.size()));
  for (const auto& [id, k] : m) {
    w.u32(id.value);
    put_key(w, k);
  }
}

void put_ids(ByteWriter& w, const auto& ids) {
  w.u32(static_cast<std::uint32_t>(ids.size()));
  for (NodeId id : ids) w.u32(id.value);
}

void put_opt_nonce(ByteWriter& w, const std::optional<Nonce>& n) {
  w.u8(n ? 1 : 0);
  if (n) w.u64(n->value).u32(n->issuer.value);
}

}  // namespace

Bytes serialize(const NodeProtocolState& s) {
  ByteWriter w;
  w.u32(s.my_id.value).u8(static_cast<std::uint8_t>(s.role)).u64(s.epoch);
  put_key(w, s.master_key);
  put_key_map(w, s.link_keys);
  put_key(w, s.share);
  put_opt_key(w, s.intermediate);
  put_opt_key(w, s.subkey);
  put_opt_key(w, s.session_key);
  put_key_map(w, s.local_keys);
  put_key_map(w, s.level1_shares);
  put_key_map(w, s.children_received);
  w.u32(s.root.value).u32(s.checker.value);
  w.u8(s.parent ? 1 : 0).u32(s.parent ? s.parent->value : 0);
  put_ids(w, s.children);
  put_ids(w, s.group);
  w.u8(s.path_round).u8(s.in_round).u8(s.round_complete).u8(s.upward_done);
  put_ids(w, s.awaiting_children);
  w.u32(static_cast<std::uint32_t>(s.pending.size()));
  for (const auto& [id, p] : s.pending) w.u32(id.value).u64(p.mine.value).f64(p.started_at);
  put_opt_nonce(w, s.root_nonce);
  put_opt_nonce(w, s.checker_nonce);
  put_opt_key(w, s.pending_session_key);
  put_ids(w, s.awaiting_confirmations);
  put_ids(w, s.confirmed);
  w.u8(s.agreement_verified);
  w.u32(static_cast<std::uint32_t>(s.pending_local.size()));
  for (const auto& [id, p] : s.pending_local) {
    w.u32(id.value).u64(p.nonce.value);
    put_key(w, p.new_key);
  }
  w.u32(static_cast<std::uint32_t>(s.seen_nonces.size()));
  for (const auto& [issuer, v] : s.seen_nonces) w.u32(issuer).u64(v);
  w.u32(static_cast<std::uint32_t>(s.nonces.count()));
  for (auto v : s.nonces.used()) w.u64(v);
  const std::string rng = s.rng.state();
  w.u32(static_cast<std::uint32_t>(rng.size()));
  w.raw(std::span(reinterpret_cast<const std::uint8_t*>(rng.data()), rng.size()));
  return std::move(w).take();
}

}  // namespace manetir
