#pragma once

#include "manetir/graph.hpp"

namespace manetir::topologies {

/// 18-party layered network: root 1, checker 5, tree height 4. Node 19 is an
/// outsider adjacent only to 6, so it joins as a level-3 leaf under 6.
inline constexpr NodeId kLayeredRoot{1};
inline constexpr NodeId kLayeredChecker{5};
inline constexpr NodeId kLayeredJoiner{19};
Graph layered();

/// Node 1 (A) with one-hop neighbours 2 (B), 3 (C), 4 (D) and 7 (G); 5 (E)
/// and 6 (F) sit one hop further out.
Graph neighbourhood();

/// Three local networks around hubs 3 (C), 9 (I) and 16 (P), letters A..W
/// mapped to 1..23. Victim 4 (D) bridges the first two clusters; 8-10 and
/// 15-16 provide the alternative routes.
inline constexpr NodeId kClusterVictim{4};
Graph three_clusters();

}  // namespace manetir::topologies
