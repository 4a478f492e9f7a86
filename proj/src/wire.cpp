#include "manetir/wire.hpp"

#include "manetir/error.hpp"

namespace manetir {

std::string_view name_of(MessageKind k) {
  switch (k) {
    case MessageKind::AuthStep1: return "AuthStep1";
    case MessageKind::AuthStep2: return "AuthStep2";
    case MessageKind::AuthStep3: return "AuthStep3";
    case MessageKind::AgreeStep1: return "AgreeStep1";
    case MessageKind::AgreeStep2: return "AgreeStep2";
    case MessageKind::AgreeStep3: return "AgreeStep3";
    case MessageKind::JoinRequest: return "JoinRequest";
    case MessageKind::JoinStepA: return "JoinStepA";
    case MessageKind::JoinStepB: return "JoinStepB";
    case MessageKind::JoinStepC: return "JoinStepC";
    case MessageKind::MasterKeyUpdate: return "MasterKeyUpdate";
    case MessageKind::GlobalRekey: return "GlobalRekey";
    case MessageKind::GlobalRekeyConfirm: return "GlobalRekeyConfirm";
    case MessageKind::LocalRekeyStep1: return "LocalRekeyStep1";
    case MessageKind::LocalRekeyStep3: return "LocalRekeyStep3";
    case MessageKind::MapStep1: return "MapStep1";
    case MessageKind::MapStep2: return "MapStep2";
    case MessageKind::MapStep4: return "MapStep4";
    case MessageKind::GlobalAlarm: return "GlobalAlarm";
  }
  return "Unknown";
}

std::optional<MessageKind> kind_from_byte(std::uint8_t b) {
  switch (b) {
    case 0x01: case 0x02: case 0x03:
    case 0x11: case 0x12: case 0x13:
    case 0x20: case 0x21: case 0x22: case 0x23: case 0x24:
    case 0x30: case 0x31:
    case 0x41: case 0x43:
    case 0x51: case 0x52: case 0x54:
    case 0x60:
      return static_cast<MessageKind>(b);
    default:
      return std::nullopt;
  }
}

Bytes header_bytes(const ProtocolMessage& msg) {
  if (msg.ids.size() > 0xFF) throw Error(ErrorCode::Malformed, "more than 255 header ids");
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(msg.kind)).u32(msg.sender.value).u32(msg.receiver.value);
  w.u8(static_cast<std::uint8_t>(msg.ids.size()));
  for (NodeId id : msg.ids) w.u32(id.value);
  return std::move(w).take();
}

Bytes encode(const ProtocolMessage& msg) {
  if (msg.payload.size() > 0xFFFF) throw Error(ErrorCode::Malformed, "payload exceeds 65535 bytes");
  Bytes out = header_bytes(msg);
  out.push_back(static_cast<std::uint8_t>(msg.payload.size() >> 8));
  out.push_back(static_cast<std::uint8_t>(msg.payload.size()));
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  return out;
}

ProtocolMessage decode(std::span<const std::uint8_t> wire) {
  ByteReader r(wire);
  ProtocolMessage msg;
  const auto kind = kind_from_byte(r.u8());
  if (!kind) throw Error(ErrorCode::Malformed, "unknown message kind");
  msg.kind = *kind;
  msg.sender = NodeId{r.u32()};
  msg.receiver = NodeId{r.u32()};
  const std::uint8_t count = r.u8();
  msg.ids.reserve(count);
  for (int i = 0; i < count; ++i) msg.ids.push_back(NodeId{r.u32()});
  const std::uint16_t len = r.u16();
  auto body = r.raw(len);
  msg.payload.assign(body.begin(), body.end());
  r.expect_end();
  return msg;
}

}  // namespace manetir
