#pragma once

// Device wire format, v1. Big-endian throughout:
//
//   A7 | 01 | type | device:u32 | resource:u16 | timestamp:u64 | kind | payload | crc:u16
//
// kind 0x01 = float64, 0x02 = bool (one byte, 00/01), 0x03 = UTF-8 text with
// a u16 length prefix. The CRC is CRC-16/CCITT-FALSE over every byte before it.

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "iotarch/kernel.hpp"

namespace iotarch {

inline constexpr std::uint8_t kFrameMagic = 0xA7;
inline constexpr std::uint8_t kFrameVersion = 0x01;

enum class FrameType : std::uint8_t {
  Telemetry = 0x01,
  CommandAck = 0x02,
  Heartbeat = 0x03,
  Command = 0x81,
};

enum class PayloadKind : std::uint8_t { Float = 0x01, Bool = 0x02, Text = 0x03 };

using FrameValue = std::variant<double, bool, std::string>;

PayloadKind kind_of(const FrameValue& value) noexcept;
Json value_to_json(const FrameValue& value);
FrameValue value_from_json(const Json& j);

struct DeviceFrame {
  FrameType type = FrameType::Telemetry;
  std::uint32_t device_id = 0;
  std::uint16_t resource_id = 0;
  Tick timestamp = 0;
  FrameValue payload = 0.0;

  bool operator==(const DeviceFrame&) const = default;
};

std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> bytes) noexcept;

/// Throws Error{PayloadTooLarge} for text longer than 65535 bytes.
std::vector<std::uint8_t> encode_frame(const DeviceFrame& frame);

/// Throws Error with one of BadMagic, UnsupportedVersion, UnknownFrameType,
/// UnknownPayloadKind, Truncated, CrcMismatch.
DeviceFrame decode_frame(std::span<const std::uint8_t> bytes);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(std::string_view hex);

}  // namespace iotarch
