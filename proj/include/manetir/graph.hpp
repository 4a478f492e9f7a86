#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "manetir/node_id.hpp"

namespace manetir {

/// Undirected connectivity graph with deterministic (ascending-id) iteration.
class Graph {
 public:
  void add_node(NodeId n) { adj_.try_emplace(n); }
  void add_edge(NodeId a, NodeId b);
  void remove_node(NodeId n);

  bool contains(NodeId n) const { return adj_.contains(n); }
  bool has_edge(NodeId a, NodeId b) const;
  /// Ascending ids; empty for unknown nodes.
  const std::set<NodeId>& neighbors(NodeId n) const;
  std::size_t degree(NodeId n) const { return neighbors(n).size(); }
  std::vector<NodeId> nodes() const;
  std::size_t node_count() const { return adj_.size(); }
  std::size_t edge_count() const;

  /// Hop distances from `source`, restricted to `allowed` when given.
  std::map<NodeId, int> bfs_levels(NodeId source,
                                   const std::set<NodeId>* allowed = nullptr) const;
  /// Shortest hop path source..target (inclusive) avoiding `blocked` as
  /// intermediate hops; lowest-id tie-breaks. Empty when unreachable.
  std::vector<NodeId> shortest_path(NodeId source, NodeId target,
                                    const std::set<NodeId>& blocked = {}) const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::map<NodeId, std::set<NodeId>> adj_;
};

}  // namespace manetir
