#include "manetir/graph.hpp"

#include <algorithm>
#include <deque>

namespace manetir {

void Graph::add_edge(NodeId a, NodeId b) {
  if (a == b) return;
  adj_[a].insert(b);
  adj_[b].insert(a);
}

void Graph::remove_node(NodeId n) {
  auto it = adj_.find(n);
  if (it == adj_.end()) return;
  for (NodeId m : it->second) adj_[m].erase(n);
  adj_.erase(it);
}

bool Graph::has_edge(NodeId a, NodeId b) const {
  auto it = adj_.find(a);
  return it != adj_.end() && it->second.contains(b);
}

const std::set<NodeId>& Graph::neighbors(NodeId n) const {
  static const std::set<NodeId> kEmpty;
  auto it = adj_.find(n);
  return it == adj_.end() ? kEmpty : it->second;
}

std::vector<NodeId> Graph::nodes() const {
  std::vector<NodeId> out;
  out.reserve(adj_.size());
  for (const auto& [n, _] : adj_) out.push_back(n);
  return out;
}

std::size_t Graph::edge_count() const {
  std::size_t total = 0;
  for (const auto& [_, nb] : adj_) total += nb.size();
  return total / 2;
}

std::map<NodeId, int> Graph::bfs_levels(NodeId source, const std::set<NodeId>* allowed) const {
  std::map<NodeId, int> level;
  if (!contains(source) || (allowed && !allowed->contains(source))) return level;
  std::deque<NodeId> queue{source};
  level[source] = 0;
  while (!queue.empty()) {
    NodeId u = queue.front();
    queue.pop_front();
    for (NodeId v : neighbors(u)) {
      if (allowed && !allowed->contains(v)) continue;
      if (level.contains(v)) continue;
      level[v] = level[u] + 1;
      queue.push_back(v);
    }
  }
  return level;
}

std::vector<NodeId> Graph::shortest_path(NodeId source, NodeId target,
                                         const std::set<NodeId>& blocked) const {
  if (!contains(source) || !contains(target)) return {};
  if (source == target) return {source};
  std::map<NodeId, NodeId> prev;
  std::set<NodeId> seen{source};
  std::deque<NodeId> queue{source};
  while (!queue.empty()) {
    NodeId u = queue.front();
    queue.pop_front();
    for (NodeId v : neighbors(u)) {
      if (seen.contains(v)) continue;
      if (v != target && blocked.contains(v)) continue;
      seen.insert(v);
      prev[v] = u;
      if (v == target) {
        std::vector<NodeId> path{target};
        for (NodeId cur = target; cur != source;) {
          cur = prev.at(cur);
          path.push_back(cur);
        }
        std::reverse(path.begin(), path.end());
        return path;
      }
      queue.push_back(v);
    }
  }
  return {};
}

}  // namespace manetir
