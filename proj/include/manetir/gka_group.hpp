#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "manetir/gka_node.hpp"
#include "manetir/graph.hpp"
#include "manetir/key_tree.hpp"

namespace manetir {

/// How K_M' is produced when a member leaves.
enum class LeaveMasterKeyPolicy : std::uint8_t {
  /// The root draws a fresh K_M' and sends it to every remaining party under
  /// pairwise link keys. Default.
  Fresh,
  /// K_M' = H(K_M || epoch || ids). Kept only to show that a leaver holding
  /// K_M recomputes it.
  HashChain,
};

LeaveMasterKeyPolicy parse_leave_policy(std::string_view name);
std::string_view name_of(LeaveMasterKeyPolicy p);

struct GroupConfig {
  CipherSuite suite;
  std::size_t key_bytes = kDefaultKeyBytes;
  ProtocolOptions options;
  LeaveMasterKeyPolicy leave_policy = LeaveMasterKeyPolicy::Fresh;
  /// Simulated one-hop delivery delay in seconds.
  double latency = 0.0;
  /// Initial K_M; drawn by the dealer when absent.
  std::optional<KeyMaterial> master_key;
};

struct InitiationResult {
  KeyMaterial subkey;                        // z
  std::map<NodeId, KeyMaterial> local_keys;  // LK_j per level-1 member
};

struct SessionKeys {
  KeyMaterial global_key;
  std::map<NodeId, KeyMaterial> local_keys;  // level-1 member -> LK_j
  std::uint64_t epoch = 0;

  friend bool operator==(const SessionKeys&, const SessionKeys&) = default;
};

/// Offline provisioning authority: the initial K_M and one pairwise link key
/// per unordered node pair. Link keys are derived from a dealer secret so any
/// pair can be provisioned lazily.
class KeyDealer {
 public:
  KeyDealer(const CipherSuite& suite, std::size_t key_bytes, std::uint64_t seed,
            std::optional<KeyMaterial> master = {});

  const KeyMaterial& master_key() const { return master_; }
  KeyMaterial link_key(NodeId a, NodeId b) const;
  std::map<NodeId, KeyMaterial> link_keys_for(NodeId n, const std::vector<NodeId>& universe) const;

 private:
  CipherSuite suite_;
  std::size_t key_bytes_;
  KeyMaterial master_;
  KeyMaterial secret_;
};

/// Observer of every transmitted PDU (wire bytes as sent).
using WireTap = std::function<void(const ProtocolMessage&, const Bytes&)>;
/// Returns false to lose the copy addressed to `receiver`.
using DeliveryFilter = std::function<bool(const ProtocolMessage&, NodeId receiver)>;
using DropObserver = std::function<void(const ProtocolMessage&, NodeId receiver, DropReason)>;

/// Drives the per-node state machines of one group over an in-memory bus.
///
/// Tree edges are one-hop links and group broadcasts reach every party, as in
/// the protocol description. Every delivery goes through encode/decode. Any
/// failed operation restores the complete pre-operation state.
class Group {
 public:
  Group(GroupConfig config, std::vector<NodeId> universe, std::uint64_t seed);

  /// Key initiation plus session agreement over a given tree. Every party
  /// draws a fresh share unless `shares` supplies all of them (checker
  /// included).
  SessionKeys form(const KeyTree& tree, const std::map<NodeId, KeyMaterial>* shares = nullptr);
  /// Selects a checker among root's neighbours, builds the tree and forms.
  SessionKeys form(NodeId root, const std::set<NodeId>& members, const Graph& graph);

  /// The two halves of `form`: Steps 1-3 on every tree edge, then the
  /// four-step session agreement, which opens a new epoch.
  InitiationResult initiate(const KeyTree& tree,
                            const std::map<NodeId, KeyMaterial>* shares = nullptr);
  SessionKeys agree();

  SessionKeys join(NodeId joiner, const Graph& graph);
  SessionKeys leave(NodeId leaver, const Graph& graph);
  SessionKeys global_rekey(std::optional<KeyMaterial> update = {});
  /// Returns the new LK shared by `member` and the root.
  KeyMaterial local_rekey(NodeId member, std::optional<KeyMaterial> update = {});

  /// Delivers `msg` to `receiver` outside any operation (adversarial
  /// injection). Resulting traffic is processed. Returns the drop reason, if
  /// the message was dropped.
  std::optional<DropReason> inject(const ProtocolMessage& msg, NodeId receiver);

  bool formed() const { return tree_.has_value(); }
  const KeyTree& tree() const;
  const GroupConfig& config() const { return config_; }
  const ProtocolContext& context() const { return ctx_; }
  std::uint64_t epoch() const { return epoch_; }
  double now() const { return now_; }
  SessionKeys keys() const;
  /// Keys of every completed epoch, oldest first.
  const std::vector<SessionKeys>& history() const { return history_; }

  /// Tree members plus the checker.
  std::vector<NodeId> participants() const;
  bool is_participant(NodeId n) const;
  const NodeProtocolState& node(NodeId n) const;
  /// Current S_i of every party, S_Ch included.
  std::map<NodeId, KeyMaterial> share_ledger() const;
  /// Parties that drew a fresh share in the last membership operation.
  const std::set<NodeId>& last_refreshed() const { return last_refreshed_; }
  /// Members dropped by the last leave because they lost every path to the root.
  const std::set<NodeId>& last_dropped() const { return last_dropped_; }

  void add_tap(WireTap tap) { taps_.push_back(std::move(tap)); }
  void set_delivery_filter(DeliveryFilter f) { filter_ = std::move(f); }
  void set_drop_observer(DropObserver f) { drop_observer_ = std::move(f); }
  std::size_t drop_count() const { return drops_; }
  std::size_t delivered_count() const { return delivered_; }

 private:
  struct Snapshot;
  Snapshot snapshot() const;
  void restore(Snapshot s);
  template <typename F>
  auto transactional(F&& body);

  NodeProtocolState& state(NodeId n);
  void ensure_node(NodeId n);
  void send(const ProtocolMessage& msg);
  void run_bus();

  /// One tree initiation round. `run` must be closed under parent.
  void run_round(const KeyTree& tree, const std::set<NodeId>& run,
                 const std::set<NodeId>& refresh, bool path_round,
                 const std::map<NodeId, KeyMaterial>* shares);
  void run_agreement();
  SessionKeys commit_epoch();
  void distribute_master_key(NodeId sender, const std::vector<NodeId>& receivers,
                             const KeyMaterial& master, std::uint64_t epoch);
  KeyMaterial next_master_key(LeaveMasterKeyPolicy policy, NodeId issuer,
                              const std::vector<NodeId>& members, std::uint64_t epoch);
  SessionKeys reform_without(NodeId leaver, const Graph& graph);

  GroupConfig config_;
  ProtocolContext ctx_;
  std::vector<NodeId> universe_;
  std::uint64_t seed_;
  KeyDealer dealer_;
  Rng rng_;

  std::map<NodeId, NodeProtocolState> nodes_;
  std::optional<KeyTree> tree_;
  std::uint64_t epoch_ = 0;
  double now_ = 0.0;
  std::vector<SessionKeys> history_;
  std::set<NodeId> last_refreshed_;
  std::set<NodeId> last_dropped_;

  struct Pending {
    double at;
    std::uint64_t seq;
    NodeId receiver;
    Bytes wire;
  };
  std::vector<Pending> queue_;  // min-heap on (at, seq)
  std::set<NodeId> audience_;   // broadcast recipients
  std::uint64_t seq_ = 0;

  std::vector<WireTap> taps_;
  DeliveryFilter filter_;
  DropObserver drop_observer_;
  std::size_t drops_ = 0;
  std::size_t delivered_ = 0;
};

/// Runs Steps 1-3 on every tree edge with the given shares (one per tree
/// member) under `master`. The checker's share is drawn at random.
InitiationResult run_key_initiation(const KeyTree& tree, const std::map<NodeId, KeyMaterial>& shares,
                                    const KeyMaterial& master, const CipherSuite& suite = {},
                                    std::uint64_t seed = 0);

/// Key initiation followed by the four-step agreement; returns GK as held by
/// the checker after it verified every member's digest. `shares` covers the
/// checker too.
KeyMaterial run_session_agreement(const KeyTree& tree, const std::map<NodeId, KeyMaterial>& shares,
                                  const KeyMaterial& master, const CipherSuite& suite = {},
                                  std::uint64_t seed = 0);

}  // namespace manetir
