#include <doctest.h>

#include <cmath>
#include <deque>

#include "manetir/error.hpp"
#include "manetir/key_tree.hpp"
#include "manetir/topologies.hpp"

using namespace manetir;

namespace {

NodeId N(std::uint32_t v) { return NodeId{v}; }

std::set<NodeId> ids(std::uint32_t lo, std::uint32_t hi) {
  std::set<NodeId> out;
  for (auto v = lo; v <= hi; ++v) out.insert(N(v));
  return out;
}

/// Plain queue BFS, written independently of Graph::bfs_levels.
std::map<NodeId, int> oracle_bfs(const Graph& g, NodeId src, const std::set<NodeId>& allowed) {
  std::map<NodeId, int> dist{{src, 0}};
  std::deque<NodeId> q{src};
  while (!q.empty()) {
    NodeId u = q.front();
    q.pop_front();
    for (NodeId v : g.nodes()) {
      if (!g.has_edge(u, v) || !allowed.contains(v) || dist.contains(v)) continue;
      dist[v] = dist[u] + 1;
      q.push_back(v);
    }
  }
  return dist;
}

Graph random_geometric(Rng& rng, int n, double radius) {
  Graph g;
  std::vector<std::pair<double, double>> pos;
  for (int i = 0; i < n; ++i) {
    pos.emplace_back(rng.uniform01(), rng.uniform01());
    g.add_node(N(static_cast<std::uint32_t>(i + 1)));
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (std::hypot(pos[i].first - pos[j].first, pos[i].second - pos[j].second) <= radius) {
        g.add_edge(N(static_cast<std::uint32_t>(i + 1)), N(static_cast<std::uint32_t>(j + 1)));
      }
    }
  }
  return g;
}

void check_bfs_invariant(const KeyTree& t, const Graph& g) {
  std::set<NodeId> members;
  for (NodeId m : t.members()) members.insert(m);
  const auto dist = oracle_bfs(g, t.root(), members);
  CHECK(dist.size() == members.size());
  for (NodeId m : members) {
    CHECK(t.level(m) == dist.at(m));
    if (m == t.root()) continue;
    const NodeId p = *t.parent(m);
    CHECK(g.has_edge(m, p));
    CHECK(t.level(p) == t.level(m) - 1);
  }
  CHECK_FALSE(t.contains(t.checker()));
}

}  // namespace

TEST_CASE("select_checker") {
  Graph g;
  g.add_edge(N(1), N(2));
  Rng rng(1);
  CHECK(select_checker(N(1), g, rng) == N(2));

  Graph lonely;
  lonely.add_node(N(9));
  CHECK_THROWS_AS(select_checker(N(9), lonely, rng), Error);
  try {
    select_checker(N(9), lonely, rng);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IsolatedRoot);
  }
}

TEST_CASE("select_checker is uniform over four neighbours") {
  Graph g;
  for (std::uint32_t v = 2; v <= 5; ++v) g.add_edge(N(1), N(v));
  Rng rng(2024);
  std::map<NodeId, int> counts;
  constexpr int kDraws = 10000;
  for (int i = 0; i < kDraws; ++i) ++counts[select_checker(N(1), g, rng)];
  double chi2 = 0.0;
  for (auto [_, c] : counts) chi2 += std::pow(c - kDraws / 4.0, 2) / (kDraws / 4.0);
  CHECK(counts.size() == 4);
  // 3 degrees of freedom, p = 0.001 critical value.
  CHECK(chi2 < 16.27);
  for (auto [_, c] : counts) CHECK(std::abs(c - 2500) < 3 * std::sqrt(10000 * 0.25 * 0.75));
}

TEST_CASE("degenerate tree has height zero") {
  Graph g;
  g.add_edge(N(1), N(2));
  const auto t = build_tree(N(1), {N(1), N(2)}, g, N(2));
  CHECK(t.height() == 0);
  CHECK(t.size() == 1);
  CHECK(key_path(t, N(1)) == KeyPath{N(1)});
}

TEST_CASE("layered sample tree") {
  const Graph g = topologies::layered();
  const auto t = build_tree(N(1), ids(1, 18), g, N(5));
  CHECK(t.height() == 4);
  CHECK(t.level(N(1)) == 0);
  CHECK(t.size() == 17);
  CHECK_FALSE(t.contains(N(5)));
  CHECK(t.at_level(1) == std::vector{N(2), N(3), N(4)});
  CHECK(t.children(N(13)) == std::vector{N(17), N(18)});
  check_bfs_invariant(t, g);
  CHECK(t.dump().starts_with("checker,5\n0,1,-\n1,2,1\n1,3,1\n1,4,1\n2,6,2\n"));
}

TEST_CASE("joiner path through 6") {
  const Graph g = topologies::layered();
  const auto t = build_tree(N(1), ids(1, 18), g, N(5));
  const auto joined = attach_member(t, N(19), g);
  CHECK(joined.level(N(19)) == 3);
  CHECK(joined.is_leaf(N(19)));
  CHECK(key_path(joined, N(19)) == KeyPath{N(19), N(6), N(2), N(1)});
  CHECK(structural_changes(t, joined) == std::set{N(6), N(19)});
}

TEST_CASE("random geometric graphs: levels equal BFS distances") {
  Rng rng(77);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Graph g = random_geometric(rng, 30, 0.3);
    const NodeId root = N(1);
    if (g.degree(root) == 0) continue;
    std::set<NodeId> all;
    for (NodeId n : g.nodes()) all.insert(n);
    std::set<NodeId> comp;
    for (auto [n, _] : oracle_bfs(g, root, all)) comp.insert(n);
    Rng pick(trial);
    const NodeId checker = select_checker(root, g, pick);
    std::set<NodeId> members;
    std::set<NodeId> without_checker = comp;
    without_checker.erase(checker);
    for (auto [n, _] : oracle_bfs(g, root, without_checker)) members.insert(n);
    members.insert(checker);
    const auto t = build_tree(root, members, g, checker);
    check_bfs_invariant(t, g);
    for (NodeId m : t.members()) {
      const auto path = key_path(t, m);
      CHECK(path.size() == static_cast<std::size_t>(t.level(m) + 1));
      CHECK(path.back() == root);
      CHECK(std::find(path.begin(), path.end(), checker) == path.end());
    }
    CHECK(build_tree(root, members, g, checker) == t);
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("build_tree errors") {
  Graph g;
  g.add_edge(N(1), N(2));
  g.add_edge(N(3), N(4));
  try {
    build_tree(N(1), {N(1), N(2), N(3)}, g, N(2));
    FAIL("expected Unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Unreachable);
    CHECK(e.nodes() == std::vector{N(3)});
  }
  CHECK_THROWS_AS(build_tree(N(1), {N(1)}, g, N(2)), Error);
  CHECK_THROWS_AS(key_path(build_tree(N(1), {N(1), N(2)}, g, N(2)), N(7)), Error);
}

TEST_CASE("attach rules") {
  Graph g;
  g.add_edge(N(1), N(2));
  g.add_edge(N(1), N(3));
  g.add_edge(N(3), N(9));
  const auto t = build_tree(N(1), {N(1), N(2), N(3)}, g, N(2));
  g.add_edge(N(1), N(8));
  const auto a = attach_member(t, N(8), g);
  CHECK(a.level(N(8)) == 1);
  CHECK(a.parent(N(8)) == N(1));

  Graph far = g;
  far.add_node(N(50));
  try {
    attach_member(t, N(50), far);
    FAIL("expected Disconnected");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Disconnected);
  }
}

TEST_CASE("attach rule holds on every adjacency of a joiner to a small tree") {
  // Chain 1-2-3-4 with branch 2-5 and 5-6; checker 7 next to the root.
  Graph base;
  for (auto [a, b] : std::vector<std::pair<int, int>>{{1, 2}, {2, 3}, {3, 4}, {2, 5}, {5, 6}, {1, 7}}) {
    base.add_edge(N(a), N(b));
  }
  const auto t = build_tree(N(1), ids(1, 7), base, N(7));
  const std::vector<NodeId> tree_nodes = t.members();
  const NodeId joiner = N(20);
  for (unsigned mask = 1; mask < (1u << tree_nodes.size()); ++mask) {
    Graph g = base;
    int min_level = 1 << 20;
    for (std::size_t i = 0; i < tree_nodes.size(); ++i) {
      if (mask & (1u << i)) {
        g.add_edge(joiner, tree_nodes[i]);
        min_level = std::min(min_level, t.level(tree_nodes[i]));
      }
    }
    NodeId expected_parent{0};
    for (std::size_t i = 0; i < tree_nodes.size(); ++i) {
      if ((mask & (1u << i)) && t.level(tree_nodes[i]) == min_level) {
        expected_parent = tree_nodes[i];
        break;
      }
    }
    const auto a = attach_member(t, joiner, g);
    CHECK(a.level(joiner) == min_level + 1);
    CHECK(a.parent(joiner) == expected_parent);
    check_bfs_invariant(a, g);
  }
}

TEST_CASE("detach") {
  const Graph g = topologies::layered();
  const auto t = build_tree(N(1), ids(1, 18), g, N(5));

  SUBCASE("leaf") {
    const auto d = detach_member(t, N(14), g);
    CHECK(d.affected == std::set{N(10), N(6), N(2), N(1)});
    CHECK(d.dropped.empty());
    CHECK_FALSE(d.tree.contains(N(14)));
  }
  SUBCASE("checker") {
    const auto d = detach_member(t, N(5), g);
    CHECK(d.tree == t);
    CHECK(d.affected == std::set{N(1)});
  }
  SUBCASE("internal node with two children partitions them") {
    const auto d = detach_member(t, N(13), g);
    CHECK(d.dropped == std::set{N(17), N(18)});
    CHECK(d.affected == std::set{N(9), N(4), N(1)});
  }
  SUBCASE("internal node whose children re-attach") {
    Graph g2 = g;
    g2.add_edge(N(15), N(14));
    g2.add_edge(N(11), N(7));
    const auto t2 = build_tree(N(1), ids(1, 18), g2, N(5));
    const auto d = detach_member(t2, N(6), g2);
    CHECK(d.dropped.empty());
    CHECK(d.tree.parent(N(11)) == N(7));
    CHECK(d.affected.contains(N(11)));
    CHECK(d.affected.contains(N(2)));
    Graph reduced = g2;
    reduced.remove_node(N(6));
    auto members = ids(1, 18);
    members.erase(N(6));
    CHECK(build_tree(N(1), members, reduced, N(5)) == d.tree);
    check_bfs_invariant(d.tree, reduced);
  }
  CHECK_THROWS_AS(detach_member(t, N(40), g), Error);
  CHECK_THROWS_AS(detach_member(t, N(1), g), Error);
}
