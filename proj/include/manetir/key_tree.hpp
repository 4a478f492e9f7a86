#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "manetir/graph.hpp"
#include "manetir/node_id.hpp"
#include "manetir/rng.hpp"

namespace manetir {

/// Member -> ... -> root.
using KeyPath = std::vector<NodeId>;

/// Rooted key tree layered by hop distance from the root. The checker is
/// recorded alongside the tree but is never a tree member.
///
/// Trees are immutable values; attach/detach return new trees.
class KeyTree {
 public:
  NodeId root() const { return root_; }
  NodeId checker() const { return checker_; }
  int height() const { return height_; }
  std::size_t size() const { return level_.size(); }

  bool contains(NodeId n) const { return level_.contains(n); }
  /// Throws UnknownNode for non-members.
  int level(NodeId n) const;
  std::optional<NodeId> parent(NodeId n) const;
  /// Ascending ids.
  const std::vector<NodeId>& children(NodeId n) const;
  bool is_leaf(NodeId n) const { return children(n).empty(); }
  /// Ascending ids.
  std::vector<NodeId> members() const;
  std::vector<NodeId> at_level(int l) const;
  const std::map<NodeId, int>& levels() const { return level_; }

  /// Header `checker,<id>` then `level,id,parent_id` per member sorted by
  /// (level, id); the root's parent is written as `-`.
  std::string dump() const;

  friend bool operator==(const KeyTree&, const KeyTree&) = default;

 private:
  friend KeyTree build_tree(NodeId, const std::set<NodeId>&, const Graph&, NodeId);

  NodeId root_{};
  NodeId checker_{};
  int height_ = 0;
  std::map<NodeId, NodeId> parent_;
  std::map<NodeId, std::vector<NodeId>> children_;
  std::map<NodeId, int> level_;
};

/// Uniformly random one-hop neighbour of `root`. When `allowed` is given only
/// neighbours in it are candidates. Throws IsolatedRoot when there is none.
NodeId select_checker(NodeId root, const Graph& graph, Rng& rng,
                      const std::set<NodeId>* allowed = nullptr);

/// BFS layering from `root` over members minus the checker. Each node's parent
/// is its lowest-id neighbour on the previous level. Throws Unreachable listing
/// members outside the root's component.
KeyTree build_tree(NodeId root, const std::set<NodeId>& members, const Graph& graph,
                   NodeId checker);

/// Throws UnknownNode for non-members.
KeyPath key_path(const KeyTree& tree, NodeId node);

/// Places `new_node` one level below its shallowest in-tree neighbour, under
/// the lowest-id neighbour on that level. Throws Disconnected when it has no
/// in-tree neighbour.
KeyTree attach_member(const KeyTree& tree, NodeId new_node, const Graph& graph);

struct DetachResult {
  KeyTree tree;
  /// Members that must draw fresh shares: the leaver's former ancestors plus
  /// every re-attached node. {root} when the checker leaves.
  std::set<NodeId> affected;
  /// Members left without any path to the root; removed from the group.
  std::set<NodeId> dropped;
};

/// Removes `leaver` (a member or the checker). Orphans are re-attached by the
/// same shallowest-level / lowest-id rule used by attach_member. Removing the
/// root is not a structural update; callers re-form the group instead.
DetachResult detach_member(const KeyTree& tree, NodeId leaver, const Graph& graph);

/// Members whose parent or child list differ between two trees.
std::set<NodeId> structural_changes(const KeyTree& before, const KeyTree& after);

}  // namespace manetir
