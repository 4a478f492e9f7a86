#include "manetir/key_tree.hpp"

#include <algorithm>
#include <sstream>

#include "manetir/error.hpp"

namespace manetir {

int KeyTree::level(NodeId n) const {
  auto it = level_.find(n);
  if (it == level_.end()) throw Error(ErrorCode::UnknownNode, "node " + to_string(n) + " not in tree", {n});
  return it->second;
}

std::optional<NodeId> KeyTree::parent(NodeId n) const {
  if (!contains(n)) throw Error(ErrorCode::UnknownNode, "node " + to_string(n) + " not in tree", {n});
  auto it = parent_.find(n);
  if (it == parent_.end()) return std::nullopt;
  return it->second;
}

const std::vector<NodeId>& KeyTree::children(NodeId n) const {
  static const std::vector<NodeId> kNone;
  auto it = children_.find(n);
  return it == children_.end() ? kNone : it->second;
}

std::vector<NodeId> KeyTree::members() const {
  std::vector<NodeId> out;
  out.reserve(level_.size());
  for (const auto& [n, _] : level_) out.push_back(n);
  return out;
}

std::vector<NodeId> KeyTree::at_level(int l) const {
  std::vector<NodeId> out;
  for (const auto& [n, lv] : level_) {
    if (lv == l) out.push_back(n);
  }
  return out;
}

std::string KeyTree::dump() const {
  std::ostringstream os;
  os << "checker," << checker_ << '\n';
  for (int l = 0; l <= height_; ++l) {
    for (NodeId n : at_level(l)) {
      os << l << ',' << n << ',';
      auto p = parent_.find(n);
      if (p == parent_.end()) {
        os << '-';
      } else {
        os << p->second;
      }
      os << '\n';
    }
  }
  return os.str();
}

NodeId select_checker(NodeId root, const Graph& graph, Rng& rng, const std::set<NodeId>* allowed) {
  std::vector<NodeId> candidates;
  for (NodeId n : graph.neighbors(root)) {
    if (!allowed || allowed->contains(n)) candidates.push_back(n);
  }
  if (candidates.empty()) {
    throw Error(ErrorCode::IsolatedRoot, "root " + to_string(root) + " has no one-hop neighbour",
                {root});
  }
  return candidates[rng.below(candidates.size())];
}

KeyTree build_tree(NodeId root, const std::set<NodeId>& members, const Graph& graph,
                   NodeId checker) {
  if (!members.contains(root)) {
    throw Error(ErrorCode::InvalidArgument, "root " + to_string(root) + " is not a member");
  }
  if (!members.contains(checker)) {
    throw Error(ErrorCode::InvalidArgument, "checker " + to_string(checker) + " is not a member");
  }
  if (checker == root) throw Error(ErrorCode::InvalidArgument, "root cannot be the checker");

  std::set<NodeId> tree_members = members;
  tree_members.erase(checker);
  const auto levels = graph.bfs_levels(root, &tree_members);

  std::vector<NodeId> unreachable;
  for (NodeId m : tree_members) {
    if (!levels.contains(m)) unreachable.push_back(m);
  }
  if (!unreachable.empty()) {
    std::string list;
    for (NodeId u : unreachable) list += (list.empty() ? "" : " ") + to_string(u);
    throw Error(ErrorCode::Unreachable, "members unreachable from root: " + list, unreachable);
  }

  KeyTree tree;
  tree.root_ = root;
  tree.checker_ = checker;
  tree.level_ = levels;
  for (const auto& [n, l] : levels) {
    tree.height_ = std::max(tree.height_, l);
    if (n == root) continue;
    for (NodeId nb : graph.neighbors(n)) {  // ascending: first hit is the lowest id
      auto it = levels.find(nb);
      if (it != levels.end() && it->second == l - 1) {
        tree.parent_[n] = nb;
        tree.children_[nb].push_back(n);
        break;
      }
    }
  }
  for (auto& [_, kids] : tree.children_) std::sort(kids.begin(), kids.end());
  return tree;
}

KeyPath key_path(const KeyTree& tree, NodeId node) {
  KeyPath path{node};
  for (auto p = tree.parent(node); p; p = tree.parent(*p)) path.push_back(*p);
  return path;
}

namespace {

std::set<NodeId> member_set(const KeyTree& tree) {
  auto m = tree.members();
  std::set<NodeId> out(m.begin(), m.end());
  out.insert(tree.checker());
  return out;
}

}  // namespace

KeyTree attach_member(const KeyTree& tree, NodeId new_node, const Graph& graph) {
  if (tree.contains(new_node) || new_node == tree.checker()) {
    throw Error(ErrorCode::InvalidArgument, "node " + to_string(new_node) + " is already a member",
                {new_node});
  }
  bool has_tree_neighbor = false;
  for (NodeId nb : graph.neighbors(new_node)) has_tree_neighbor |= tree.contains(nb);
  if (!has_tree_neighbor) {
    throw Error(ErrorCode::Disconnected,
                "joiner " + to_string(new_node) + " has no neighbour in the key tree", {new_node});
  }
  // Rebuilding over the enlarged membership applies the shallowest-level /
  // lowest-id rule to the joiner and keeps every other layer a BFS layer.
  auto members = member_set(tree);
  members.insert(new_node);
  return build_tree(tree.root(), members, graph, tree.checker());
}

DetachResult detach_member(const KeyTree& tree, NodeId leaver, const Graph& graph) {
  if (leaver == tree.checker()) return DetachResult{tree, {tree.root()}, {}};
  if (!tree.contains(leaver)) {
    throw Error(ErrorCode::UnknownNode, "leaver " + to_string(leaver) + " not in group", {leaver});
  }
  if (leaver == tree.root()) {
    throw Error(ErrorCode::InvalidArgument, "the root cannot be detached; re-form the group",
                {leaver});
  }

  auto members = member_set(tree);
  members.erase(leaver);
  Graph reduced = graph;
  reduced.remove_node(leaver);

  DetachResult result;
  std::set<NodeId> tree_members = members;
  tree_members.erase(tree.checker());
  const auto reach = reduced.bfs_levels(tree.root(), &tree_members);
  for (NodeId m : tree_members) {
    if (!reach.contains(m)) result.dropped.insert(m);
  }
  for (NodeId d : result.dropped) members.erase(d);
  result.tree = build_tree(tree.root(), members, reduced, tree.checker());

  for (auto p = tree.parent(leaver); p; p = tree.parent(*p)) result.affected.insert(*p);
  for (NodeId m : result.tree.members()) {
    if (m == tree.root()) continue;
    if (tree.parent(m) != result.tree.parent(m)) result.affected.insert(m);
  }
  return result;
}

std::set<NodeId> structural_changes(const KeyTree& before, const KeyTree& after) {
  std::set<NodeId> out;
  for (NodeId m : after.members()) {
    if (!before.contains(m)) {
      out.insert(m);
      continue;
    }
    if (before.parent(m) != after.parent(m) || before.children(m) != after.children(m)) {
      out.insert(m);
    }
  }
  return out;
}

}  // namespace manetir
