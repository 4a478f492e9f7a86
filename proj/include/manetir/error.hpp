#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "manetir/node_id.hpp"

namespace manetir {

enum class ErrorCode {
  EmptyInput,
  WidthMismatch,
  IntegrityFailure,
  NonceExhausted,
  NonceOverflow,
  Malformed,
  IsolatedRoot,
  Unreachable,
  UnknownNode,
  Disconnected,
  Timeout,
  CheckerVerificationFailure,
  ProtocolAbort,
  InsufficientWindow,
  NoSecureNeighbor,
  InvalidConfig,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Error raised by every module. `nodes` names the parties involved when the
/// failure is attributable (unreachable members, timed-out edge endpoints,
/// members whose session key digest did not verify).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::vector<NodeId> nodes = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        nodes_(std::move(nodes)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<NodeId>& nodes() const noexcept { return nodes_; }

 private:
  ErrorCode code_;
  std::vector<NodeId> nodes_;
};

}  // namespace manetir
