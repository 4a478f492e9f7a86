#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "manetir/bytes.hpp"
#include "manetir/node_id.hpp"

namespace manetir {

enum class MessageKind : std::uint8_t {
  AuthStep1 = 0x01,
  AuthStep2 = 0x02,
  AuthStep3 = 0x03,
  AgreeStep1 = 0x11,
  AgreeStep2 = 0x12,
  AgreeStep3 = 0x13,
  JoinRequest = 0x20,
  JoinStepA = 0x21,
  JoinStepB = 0x22,
  JoinStepC = 0x23,
  MasterKeyUpdate = 0x24,
  GlobalRekey = 0x30,
  GlobalRekeyConfirm = 0x31,
  LocalRekeyStep1 = 0x41,
  LocalRekeyStep3 = 0x43,
  MapStep1 = 0x51,
  MapStep2 = 0x52,
  MapStep4 = 0x54,
  GlobalAlarm = 0x60,
};

std::string_view name_of(MessageKind k);
std::optional<MessageKind> kind_from_byte(std::uint8_t b);

inline constexpr NodeId kBroadcast{0xFFFFFFFFu};

/// One protocol PDU. Only identities travel in the clear header; the payload
/// is a Ciphertext, a Digest, or (map kinds) a map record plus authenticators.
struct ProtocolMessage {
  MessageKind kind{};
  NodeId sender{};
  NodeId receiver = kBroadcast;
  std::vector<NodeId> ids;
  Bytes payload;

  bool is_broadcast() const { return receiver == kBroadcast; }
  friend bool operator==(const ProtocolMessage&, const ProtocolMessage&) = default;
};

/// kind(1) sender(4) receiver(4) id-count(1) ids(4 each) payload-length(2)
/// payload, all big-endian.
Bytes encode(const ProtocolMessage& msg);
/// Throws Error(Malformed) on unknown kinds, truncation or trailing bytes.
ProtocolMessage decode(std::span<const std::uint8_t> wire);

/// The header fields (kind, sender, receiver, id-count, ids) as encoded; used as
/// associated data so that any header change invalidates the payload.
Bytes header_bytes(const ProtocolMessage& msg);

}  // namespace manetir
