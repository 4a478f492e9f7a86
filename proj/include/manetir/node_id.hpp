#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>

namespace manetir {

struct NodeId {
  std::uint32_t value{};

  constexpr NodeId() = default;
  constexpr explicit NodeId(std::uint32_t v) : value(v) {}

  constexpr auto operator<=>(const NodeId&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, NodeId id) { return os << id.value; }
inline std::string to_string(NodeId id) { return std::to_string(id.value); }

}  // namespace manetir

template <>
struct std::hash<manetir::NodeId> {
  std::size_t operator()(manetir::NodeId id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
