#include "manetir/topologies.hpp"

#include <utility>

namespace manetir::topologies {

namespace {

Graph from_edges(std::initializer_list<std::pair<std::uint32_t, std::uint32_t>> edges) {
  Graph g;
  for (auto [a, b] : edges) g.add_edge(NodeId{a}, NodeId{b});
  return g;
}

}  // namespace

Graph layered() {
  return from_edges({{1, 2},   {1, 3},   {1, 4},   {1, 5},   {2, 6},   {2, 7},
                     {3, 8},   {4, 9},   {6, 10},  {6, 11},  {8, 12},  {9, 13},
                     {10, 14}, {11, 15}, {12, 16}, {13, 17}, {13, 18}, {6, 19}});
}

Graph neighbourhood() {
  return from_edges({{1, 2}, {1, 3}, {1, 4}, {1, 7}, {2, 5}, {4, 6}});
}

Graph three_clusters() {
  Graph g;
  for (std::uint32_t n : {1, 2, 4, 5, 6, 7, 8}) g.add_edge(NodeId{3}, NodeId{n});
  for (std::uint32_t n : {10, 11, 12, 13, 14, 15}) g.add_edge(NodeId{9}, NodeId{n});
  for (std::uint32_t n : {17, 18, 19, 20, 21, 22, 23}) g.add_edge(NodeId{16}, NodeId{n});
  g.add_edge(NodeId{4}, NodeId{9});
  g.add_edge(NodeId{4}, NodeId{5});
  g.add_edge(NodeId{8}, NodeId{10});
  g.add_edge(NodeId{15}, NodeId{16});
  return g;
}

}  // namespace manetir::topologies
