#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "manetir/gka_group.hpp"

namespace manetir {

/// Every key-like value a node holds: K_M, link keys, S_i, K_i', z, GK, LKs,
/// cached child contributions and level-1 shares.
std::vector<KeyMaterial> secrets_of(const NodeProtocolState& s);

/// Concatenated cleartext of observed wire messages, indexed so that a key can
/// be searched for as a contiguous bit string at every bit offset.
///
/// Every byte-aligned 8-byte window goes into a hash set. A key occurring at
/// bit offset p puts its bits s..s+63 (s = -p mod 8) on a byte-aligned window,
/// so eight lookups decide whether a full bit-level scan is needed.
class TranscriptScanner {
 public:
  void append(std::span<const std::uint8_t> wire);
  /// Bit offsets at which `key` occurs. Keys must be at least 9 bytes wide.
  std::vector<std::size_t> occurrences(const KeyMaterial& key) const;
  std::size_t size_bytes() const { return data_.size(); }

 private:
  Bytes data_;
  std::unordered_set<std::uint64_t> windows_;
};

/// What a party can learn from its own secrets and recorded traffic: every
/// ciphertext it can open yields each key-width window of the plaintext as a
/// new candidate key, repeated to a fixpoint. Public hash-chain contexts let
/// it apply the K_M' derivation to every candidate as well.
class KnowledgeOracle {
 public:
  KnowledgeOracle(CipherSuite suite, std::size_t key_bytes);

  void learn(const KeyMaterial& k);
  void learn_state(const NodeProtocolState& s);
  void add_hash_chain_context(std::uint64_t epoch, std::vector<NodeId> members);
  void absorb(const std::vector<ProtocolMessage>& transcript);

  /// True when `target` is known outright or is the XOR of two known values.
  bool can_compute(const KeyMaterial& target) const;
  std::size_t known_count() const { return known_.size(); }
  std::size_t opened_count() const { return opened_; }

 private:
  bool learn_new(const KeyMaterial& k);

  CipherSuite suite_;
  std::size_t key_bytes_;
  std::set<KeyMaterial> known_;
  std::vector<KeyMaterial> order_;  // known_ in discovery order
  std::vector<std::pair<std::uint64_t, std::vector<NodeId>>> chains_;
  std::set<KeyMaterial> chain_outputs_;
  std::size_t opened_ = 0;
};

struct GoalVerdict {
  std::string goal;
  bool pass = false;
  std::size_t trials = 0;
  std::size_t failures = 0;
  std::string detail;
  double seconds = 0.0;
};

struct AttackSuiteConfig {
  GroupConfig group;
  std::uint64_t seed = 1;
  std::size_t transcript_epochs = 1000;
  std::size_t replay_trials = 100;
  std::size_t leaver_trials = 1000;
  std::size_t joiner_trials = 1000;
};

struct AttackSuiteReport {
  std::vector<GoalVerdict> goals;
  double seconds = 0.0;
  bool all_pass() const;
};

/// Eavesdropper: runs at least `epochs` epochs of mixed rekeys and membership
/// changes on the layered topology and scans the whole transcript for every
/// secret any party held in any epoch. Also reports epoch independence: every
/// rekeyed GK or LK is one never seen before, and no GK difference across a
/// membership change appears on the wire.
GoalVerdict run_transcript_scan(const AttackSuiteConfig& cfg, GoalVerdict* independence = nullptr);
/// Replayer: re-delivers recorded copies (every kind in turn) and compares
/// the byte image of every node before and after.
GoalVerdict run_replay_trials(const AttackSuiteConfig& cfg);
/// Forward secrecy: a leaver's complete pre-leave knowledge plus the whole
/// transcript never yields the post-leave GK.
GoalVerdict run_leaver_trials(const AttackSuiteConfig& cfg);
/// Backward secrecy: a joiner's post-join knowledge plus the whole pre-join
/// transcript never yields any pre-join GK.
GoalVerdict run_joiner_trials(const AttackSuiteConfig& cfg);

AttackSuiteReport run_attack_suite(const AttackSuiteConfig& cfg);

}  // namespace manetir
