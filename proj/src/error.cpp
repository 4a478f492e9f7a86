#include "manetir/error.hpp"

namespace manetir {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::IntegrityFailure: return "IntegrityFailure";
    case ErrorCode::NonceExhausted: return "NonceExhausted";
    case ErrorCode::NonceOverflow: return "NonceOverflow";
    case ErrorCode::Malformed: return "Malformed";
    case ErrorCode::IsolatedRoot: return "IsolatedRoot";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::Disconnected: return "Disconnected";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::CheckerVerificationFailure: return "CheckerVerificationFailure";
    case ErrorCode::ProtocolAbort: return "ProtocolAbort";
    case ErrorCode::InsufficientWindow: return "InsufficientWindow";
    case ErrorCode::NoSecureNeighbor: return "NoSecureNeighbor";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace manetir
