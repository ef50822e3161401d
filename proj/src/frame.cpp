#include "iotarch/frame.hpp"

#include <bit>
#include <cstring>

#include "iotarch/error.hpp"

namespace iotarch {
namespace {

constexpr std::size_t kHeaderSize = 1 + 1 + 1 + 4 + 2 + 8 + 1;
constexpr std::size_t kCrcSize = 2;

template <typename T>
void put_be(std::vector<std::uint8_t>& out, T value) {
  for (int shift = (sizeof(T) - 1) * 8; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::uint8_t>(value >> shift));
  }
}

template <typename T>
T get_be(std::span<const std::uint8_t> bytes, std::size_t at) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value = static_cast<T>((value << 8) | bytes[at + i]);
  return value;
}

bool known_type(std::uint8_t t) noexcept {
  return t == 0x01 || t == 0x02 || t == 0x03 || t == 0x81;
}

}  // namespace

PayloadKind kind_of(const FrameValue& value) noexcept {
  switch (value.index()) {
    case 0: return PayloadKind::Float;
    case 1: return PayloadKind::Bool;
    default: return PayloadKind::Text;
  }
}

Json value_to_json(const FrameValue& value) {
  return std::visit([](const auto& v) { return Json(v); }, value);
}

FrameValue value_from_json(const Json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw Error(Errc::ValueKindMismatch, "value must be a number, bool or string");
}

std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> bytes) noexcept {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t b : bytes) {
    crc ^= static_cast<std::uint16_t>(b) << 8;
    for (int bit = 0; bit < 8; ++bit) {
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                           : static_cast<std::uint16_t>(crc << 1);
    }
  }
  return crc;
}

std::vector<std::uint8_t> encode_frame(const DeviceFrame& frame) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + 10 + kCrcSize);
  out.push_back(kFrameMagic);
  out.push_back(kFrameVersion);
  out.push_back(static_cast<std::uint8_t>(frame.type));
  put_be(out, frame.device_id);
  put_be(out, frame.resource_id);
  put_be(out, frame.timestamp);
  out.push_back(static_cast<std::uint8_t>(kind_of(frame.payload)));
  if (const auto* f = std::get_if<double>(&frame.payload)) {
    put_be(out, std::bit_cast<std::uint64_t>(*f));
  } else if (const auto* b = std::get_if<bool>(&frame.payload)) {
    out.push_back(*b ? 0x01 : 0x00);
  } else {
    const auto& text = std::get<std::string>(frame.payload);
    if (text.size() > 0xFFFF) {
      throw Error(Errc::PayloadTooLarge,
                  "text payload of " + std::to_string(text.size()) + " bytes exceeds 65535");
    }
    put_be(out, static_cast<std::uint16_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
  }
  put_be(out, crc16_ccitt_false(out));
  return out;
}

DeviceFrame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 1) throw Error(Errc::Truncated, "empty frame");
  if (bytes[0] != kFrameMagic) throw Error(Errc::BadMagic, "bad magic byte");
  if (bytes.size() < 2) throw Error(Errc::Truncated, "frame ends before version");
  if (bytes[1] != kFrameVersion) {
    throw Error(Errc::UnsupportedVersion, "unsupported frame version " + std::to_string(bytes[1]));
  }
  if (bytes.size() < kHeaderSize) throw Error(Errc::Truncated, "frame shorter than header");
  if (!known_type(bytes[2])) throw Error(Errc::UnknownFrameType, "unknown frame type");
  const std::uint8_t kind = bytes[kHeaderSize - 1];

  std::size_t payload_size = 0;
  switch (kind) {
    case 0x01: payload_size = 8; break;
    case 0x02: payload_size = 1; break;
    case 0x03:
      if (bytes.size() < kHeaderSize + 2) throw Error(Errc::Truncated, "text length missing");
      payload_size = 2 + get_be<std::uint16_t>(bytes, kHeaderSize);
      break;
    default: throw Error(Errc::UnknownPayloadKind, "unknown payload kind " + std::to_string(kind));
  }
  const std::size_t total = kHeaderSize + payload_size + kCrcSize;
  if (bytes.size() < total) throw Error(Errc::Truncated, "frame shorter than its payload");
  if (bytes.size() > total) throw Error(Errc::Truncated, "trailing bytes after frame");

  const auto expected = get_be<std::uint16_t>(bytes, total - kCrcSize);
  if (crc16_ccitt_false(bytes.first(total - kCrcSize)) != expected) {
    throw Error(Errc::CrcMismatch, "crc mismatch");
  }

  DeviceFrame frame;
  frame.type = static_cast<FrameType>(bytes[2]);
  frame.device_id = get_be<std::uint32_t>(bytes, 3);
  frame.resource_id = get_be<std::uint16_t>(bytes, 7);
  frame.timestamp = get_be<std::uint64_t>(bytes, 9);
  switch (kind) {
    case 0x01: frame.payload = std::bit_cast<double>(get_be<std::uint64_t>(bytes, kHeaderSize)); break;
    case 0x02: {
      const std::uint8_t b = bytes[kHeaderSize];
      if (b > 1) throw Error(Errc::PayloadKindMismatch, "bool payload must be 0x00 or 0x01");
      frame.payload = (b == 1);
      break;
    }
    default: {
      const auto* text = reinterpret_cast<const char*>(bytes.data() + kHeaderSize + 2);
      frame.payload = std::string(text, payload_size - 2);
    }
  }
  return frame;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char digits[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0F]);
  }
  return out;
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::vector<std::uint8_t> out;
  int high = -1;
  for (char c : hex) {
    if (c == ' ' || c == '\n' || c == '\r' || c == '\t') continue;
    int v = nibble(c);
    if (v < 0) throw Error(Errc::ParseError, "invalid hex digit");
    if (high < 0) {
      high = v;
    } else {
      out.push_back(static_cast<std::uint8_t>((high << 4) | v));
      high = -1;
    }
  }
  if (high >= 0) throw Error(Errc::ParseError, "odd number of hex digits");
  return out;
}

}  // namespace iotarch
