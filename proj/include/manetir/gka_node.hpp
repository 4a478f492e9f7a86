#pragma once

#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "manetir/crypto.hpp"
#include "manetir/wire.hpp"

namespace manetir {

enum class Role : std::uint8_t { Outsider, Root, Checker, Member };

std::string_view name_of(Role r);

struct ProtocolOptions {
  /// Simulated seconds an ascendant/descendant waits for the next step of a
  /// handshake before treating late replies as expired.
  double edge_timeout = 5.0;
  /// Test-only negative control. When false, nonce freshness and nonce+1
  /// checks are skipped, which re-opens the protocol to replays.
  bool verify_nonces = true;
};

struct ProtocolContext {
  CipherSuite suite;
  ProtocolOptions options;
};

struct PendingHandshake {
  Nonce mine;
  double started_at = 0.0;
  friend bool operator==(const PendingHandshake&, const PendingHandshake&) = default;
};

struct PendingLocalRekey {
  KeyMaterial new_key;
  Nonce nonce;
  friend bool operator==(const PendingLocalRekey&, const PendingLocalRekey&) = default;
};

/// Everything one node knows. `step_node` is the only message-driven mutator;
/// the `begin_*`/`start_*` functions below are the node's local triggers.
struct NodeProtocolState {
  NodeId my_id{};
  Role role = Role::Outsider;
  std::uint64_t epoch = 0;

  KeyMaterial master_key;                    // K_M; empty until provisioned
  std::map<NodeId, KeyMaterial> link_keys;   // pre-provisioned pairwise keys
  KeyMaterial share;                         // S_i (S_Ch for the checker)
  std::optional<KeyMaterial> intermediate;   // K_i'
  std::optional<KeyMaterial> subkey;         // z
  std::optional<KeyMaterial> session_key;    // K = GK
  std::map<NodeId, KeyMaterial> local_keys;  // root: LK_j per level-1 j; j: {root: LK_j}
  std::map<NodeId, KeyMaterial> level1_shares;      // root only: S_j of level-1 children
  std::map<NodeId, KeyMaterial> children_received;  // K'_c per child

  // Topology as known to this node.
  NodeId root{};
  NodeId checker{};
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  std::vector<NodeId> group;  // every participant, checker included

  // Current initiation round.
  bool path_round = false;
  bool in_round = false;
  bool round_complete = false;
  bool upward_done = false;
  std::set<NodeId> awaiting_children;
  std::map<NodeId, PendingHandshake> pending;

  // Session agreement / periodic updates.
  std::optional<Nonce> root_nonce;     // nonce_1 (issued by root, received by others)
  std::optional<Nonce> checker_nonce;  // nonce_Ch
  std::optional<KeyMaterial> pending_session_key;
  std::set<NodeId> awaiting_confirmations;
  std::set<NodeId> confirmed;
  bool agreement_verified = false;
  std::map<NodeId, PendingLocalRekey> pending_local;

  std::set<std::pair<std::uint32_t, std::uint64_t>> seen_nonces;
  NonceIssuer nonces;
  Rng rng;

  bool is_level1() const { return parent.has_value() && *parent == root && role == Role::Member; }
  friend bool operator==(const NodeProtocolState&, const NodeProtocolState&) = default;
};

/// Canonical byte image of a state, used for replay-resistance comparisons.
Bytes serialize(const NodeProtocolState& s);

enum class DropReason : std::uint8_t {
  IntegrityFailure,
  NonceMismatch,
  UnexpectedKind,
  Malformed,
  Expired,
  DigestMismatch,
};

std::string_view name_of(DropReason r);

struct StepResult {
  NodeProtocolState state;
  std::vector<ProtocolMessage> outgoing;
  std::optional<DropReason> dropped;
};

/// Processes one received message. A dropped message leaves the state
/// untouched and produces no output.
StepResult step_node(const NodeProtocolState& state, const ProtocolMessage& msg, double now,
                     const ProtocolContext& ctx);

// ---- local triggers -------------------------------------------------------

/// Fresh node state holding only its pairwise link keys.
NodeProtocolState make_node(NodeId id, std::map<NodeId, KeyMaterial> link_keys, std::uint64_t seed);

struct RoundSpec {
  Role role = Role::Member;
  NodeId root{};
  NodeId checker{};
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  std::vector<NodeId> group;
  /// Children this node must hear Step 3 / Step c from in this round.
  std::set<NodeId> awaiting;
  /// Node runs the upward handshake (or, for the root, recomputes z).
  bool participates = false;
  bool refresh_share = false;
  bool path_round = false;
};

/// Installs topology for a new round. Drops cached contributions of nodes that
/// are no longer children. With `refresh_share` a new S_i is drawn.
void begin_round(NodeProtocolState& s, const RoundSpec& spec, std::size_t key_bytes);

/// Emits Step 1 / Step a towards the parent, or, at the root, computes z and
/// the local keys, once every awaited child has completed.
std::vector<ProtocolMessage> start_upward(NodeProtocolState& s, double now,
                                          const ProtocolContext& ctx);

/// Root: Step 1 of the session agreement.
std::vector<ProtocolMessage> start_agreement(NodeProtocolState& root, const ProtocolContext& ctx);

/// Checker: distributes S_Ch'' under the current global key. A random update
/// is drawn unless one is given. Once every member has confirmed, the checker
/// folds the update into S_Ch so that GK stays the XOR of the share ledger.
std::vector<ProtocolMessage> start_global_rekey(NodeProtocolState& checker,
                                                const ProtocolContext& ctx,
                                                std::optional<KeyMaterial> update = {});

/// Level-1 member: periodic local key update with the root.
std::vector<ProtocolMessage> start_local_rekey(NodeProtocolState& member,
                                               const ProtocolContext& ctx,
                                               std::optional<KeyMaterial> update = {});

/// Replaces K_M after a membership change computed or received out of band.
void install_master_key(NodeProtocolState& s, KeyMaterial master, std::uint64_t epoch);

/// Sends `new_master` to `receiver` under their pairwise link key.
ProtocolMessage make_master_key_update(NodeProtocolState& sender, NodeId receiver,
                                       const KeyMaterial& new_master, std::uint64_t new_epoch,
                                       const ProtocolContext& ctx);

ProtocolMessage make_join_request(NodeId joiner);

/// K_M' = leading bytes of H(K_M || epoch || ascending member ids).
KeyMaterial hash_chain_master_key(const CipherSuite& suite, const KeyMaterial& master,
                                  std::uint64_t epoch, const std::vector<NodeId>& members);

/// Digest a member sends the checker in agreement Step 3.
Digest agreement_digest(const CipherSuite& suite, NodeId checker, Nonce checker_nonce,
                        const KeyMaterial& session_key);
/// Digest a level-1 member sends the root in local rekey Step 3.
Digest local_rekey_digest(const CipherSuite& suite, NodeId member, Nonce member_nonce,
                          const KeyMaterial& new_local_key);

}  // namespace manetir
