#include <bit>
#include <cmath>
#include <cstring>

#include "doctest.h"
#include "iotarch/error.hpp"
#include "iotarch/frame.hpp"
#include "support.hpp"

using namespace iotarch;

namespace {

struct Golden {
  const char* file;
  DeviceFrame frame;
};

// Field values mirror tests/oracles/golden_frames.py, which produced the hex.
const std::vector<Golden>& goldens() {
  static const std::vector<Golden> g = {
      {"telemetry_dev1_res1_ts0_f0", {FrameType::Telemetry, 1, 1, 0, 0.0}},
      {"telemetry_dev42_res3_ts10_f22_5", {FrameType::Telemetry, 42, 3, 10, 22.5}},
      {"command_dev42_res7_true", {FrameType::Command, 42, 7, 5, true}},
      {"ack_dev42_res7_false", {FrameType::CommandAck, 42, 7, 6, false}},
      {"heartbeat_dev7_ts40", {FrameType::Heartbeat, 7, 0, 40, true}},
      {"text_dev3_res2_hello", {FrameType::Telemetry, 3, 2, 123456789, std::string("hello")}},
  };
  return g;
}

std::vector<std::uint8_t> golden_bytes(const char* name) {
  std::string hex = test::read_file(test::source_path(std::string("tests/data/") + name + ".hex"));
  while (!hex.empty() && (hex.back() == '\n' || hex.back() == '\r')) hex.pop_back();
  return from_hex(hex);
}

Errc decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_frame(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("decode unexpectedly succeeded");
  return Errc::NotFound;
}

std::vector<std::uint8_t> with_crc(std::vector<std::uint8_t> body) {
  const std::uint16_t crc = crc16_ccitt_false(body);
  body.push_back(static_cast<std::uint8_t>(crc >> 8));
  body.push_back(static_cast<std::uint8_t>(crc & 0xFF));
  return body;
}

}  // namespace

TEST_CASE("crc16 ccitt-false check value") {
  const std::string check = "123456789";
  const std::vector<std::uint8_t> bytes(check.begin(), check.end());
  CHECK(crc16_ccitt_false(bytes) == 0x29B1);
}

TEST_CASE("golden fixtures: encode matches the reference bytes and decodes back") {
  for (const auto& g : goldens()) {
    CAPTURE(g.file);
    const auto bytes = golden_bytes(g.file);
    CHECK(encode_frame(g.frame) == bytes);
    CHECK(decode_frame(bytes) == g.frame);
  }
}

TEST_CASE("telemetry float 0.0 layout") {
  const auto bytes = encode_frame({FrameType::Telemetry, 1, 1, 0, 0.0});
  REQUIRE(bytes.size() == 28);
  CHECK(to_hex(bytes).substr(0, 2 * 26) == "A701010000000100010000000000000000010000000000000000");
}

TEST_CASE("bool payload true is a single 0x01 byte") {
  const auto bytes = encode_frame({FrameType::Command, 42, 7, 5, true});
  REQUIRE(bytes.size() == 18 + 1 + 2);
  CHECK(bytes[17] == 0x02);
  CHECK(bytes[18] == 0x01);
}

TEST_CASE("exhaustive single-byte corruption never decodes") {
  for (const auto& g : goldens()) {
    CAPTURE(g.file);
    const auto clean = golden_bytes(g.file);
    for (std::size_t i = 0; i < clean.size(); ++i) {
      for (int v = 0; v < 256; ++v) {
        if (v == clean[i]) continue;
        auto bad = clean;
        bad[i] = static_cast<std::uint8_t>(v);
        bool decoded = false;
        try {
          decode_frame(bad);
          decoded = true;
        } catch (const Error&) {
        }
        if (decoded) {
          CAPTURE(i);
          CAPTURE(v);
          FAIL("corrupted frame decoded");
        }
      }
    }
  }
}

TEST_CASE("1000 randomized round trips") {
  RngStream rng(2024, "frames");
  const FrameType types[] = {FrameType::Telemetry, FrameType::CommandAck, FrameType::Heartbeat, FrameType::Command};
  for (int i = 0; i < 1000; ++i) {
    DeviceFrame f;
    f.type = types[rng.next() % 4];
    f.device_id = static_cast<std::uint32_t>(rng.next());
    f.resource_id = static_cast<std::uint16_t>(rng.next());
    f.timestamp = rng.next();
    switch (rng.next() % 3) {
      case 0: {
        double d = std::bit_cast<double>(rng.next());
        if (std::isnan(d)) d = rng.next_symmetric(1e6);
        f.payload = d;
        break;
      }
      case 1: f.payload = rng.next() % 2 == 1; break;
      default: {
        std::string s(rng.next() % 300, '\0');
        for (auto& c : s) c = static_cast<char>(rng.next() & 0xFF);
        f.payload = s;
      }
    }
    const auto bytes = encode_frame(f);
    const DeviceFrame back = decode_frame(bytes);
    CHECK(back == f);
    CHECK(encode_frame(back) == bytes);
  }
}

TEST_CASE("structural errors are distinct") {
  CHECK(decode_error({}) == Errc::Truncated);
  auto good = encode_frame({FrameType::Telemetry, 1, 1, 0, 1.5});

  auto bad_magic = good;
  bad_magic[0] = 0xA8;
  CHECK(decode_error(bad_magic) == Errc::BadMagic);

  std::vector<std::uint8_t> body(good.begin(), good.end() - 2);
  auto v2 = body;
  v2[1] = 0x02;
  CHECK(decode_error(with_crc(v2)) == Errc::UnsupportedVersion);

  auto type = body;
  type[2] = 0x7F;
  CHECK(decode_error(with_crc(type)) == Errc::UnknownFrameType);

  auto kind = body;
  kind[17] = 0x09;
  CHECK(decode_error(with_crc(kind)) == Errc::UnknownPayloadKind);

  CHECK(decode_error(std::vector<std::uint8_t>(good.begin(), good.end() - 1)) == Errc::Truncated);

  auto crc = good;
  crc.back() ^= 0x01;
  CHECK(decode_error(crc) == Errc::CrcMismatch);
}

TEST_CASE("text longer than 65535 bytes is rejected") {
  try {
    encode_frame({FrameType::Telemetry, 1, 1, 0, std::string(65536, 'x')});
    FAIL("expected PayloadTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::PayloadTooLarge);
  }
  CHECK(decode_frame(encode_frame({FrameType::Telemetry, 1, 1, 0, std::string(65535, 'x')})).payload ==
        FrameValue(std::string(65535, 'x')));
}
