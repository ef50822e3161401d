#include <cmath>

#include "doctest.h"
#include "iotarch/device.hpp"
#include "iotarch/error.hpp"
#include "support.hpp"

using namespace iotarch;

namespace {

Registry room_registry(double drift = 0.1, double initial = 28.0, SampleMode mode = SampleMode::Periodic,
                       double delta = 0.0) {
  Thing room{"room", "room", "r1", {}};
  room.properties.push_back({"temp", "C", ValueKind::Float, {}, initial, drift, 0.0});
  room.properties.push_back({"light", "", ValueKind::Bool, {}, false, 0.0, 0.0});
  room.properties.push_back({"climate", "", ValueKind::Text, {"temp", "light"}, std::string{}, 0.0, 0.0});
  Device thermo{1, "thermo", "r1", "gw", 10, {}, {}};
  thermo.sensors.push_back({1, "temp", "room", "temp", 5, mode, delta, ""});
  Device ac{2, "ac", "r1", "gw", 10, {}, {}};
  ac.actuators.push_back({7, "power", "room", "temp", ActuatorEffect::Rate, -0.5});
  ac.actuators.push_back({8, "lamp", "room", "light", ActuatorEffect::Set, 0.0});
  return Registry({room}, {thermo, ac}, {});
}

DeviceFrame command(std::uint32_t dev, std::uint16_t res, FrameValue v) {
  return DeviceFrame{FrameType::Command, dev, res, 0, std::move(v)};
}

}  // namespace

TEST_CASE("periodic sample passes the current value through") {
  const Registry reg = room_registry(0.0, 22.5);
  DeviceLayer layer(reg);
  const Device& thermo = *reg.device(1);
  const auto frame = layer.sample(thermo, thermo.sensors[0], 10);
  REQUIRE(frame);
  CHECK(frame->type == FrameType::Telemetry);
  CHECK(frame->timestamp == 10);
  CHECK(std::get<double>(frame->payload) == 22.5);
  CHECK_FALSE(layer.sample(thermo, thermo.sensors[0], 11));
}

TEST_CASE("on-change sample respects the delta threshold") {
  const Registry reg = room_registry(0.0, 22.0, SampleMode::OnChange, 0.5);
  DeviceLayer layer(reg);
  const Device& thermo = *reg.device(1);
  Sensor s = thermo.sensors[0];
  s.period = 1;
  REQUIRE(layer.sample(thermo, s, 0));
  layer.set_value("room", "temp", 22.3);
  CHECK_FALSE(layer.sample(thermo, s, 1));
  layer.set_value("room", "temp", 22.6);
  const auto f = layer.sample(thermo, s, 2);
  REQUIRE(f);
  CHECK(std::get<double>(f->payload) == 22.6);
  layer.set_value("room", "temp", 22.9);
  CHECK_FALSE(layer.sample(thermo, s, 3));  // measured from 22.6, not 22.0
}

TEST_CASE("property: on-change frames never exceed total variation / delta + 1") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    CAPTURE(seed);
    RngStream rng(seed, "walk");
    const double delta = 0.1 + rng.next_unit();
    const Registry reg = room_registry(0.0, 20.0, SampleMode::OnChange, delta);
    DeviceLayer layer(reg);
    const Device& thermo = *reg.device(1);
    Sensor s = thermo.sensors[0];
    s.period = 1;
    double value = 20.0, variation = 0.0;
    int frames = 0;
    for (Tick t = 0; t < 500; ++t) {
      if (t > 0) {
        const double step = rng.next_symmetric(0.6);
        value += step;
        variation += std::fabs(step);
        layer.set_value("room", "temp", value);
      }
      if (layer.sample(thermo, s, t)) ++frames;
    }
    CHECK(frames <= variation / delta + 1.0);
  }
}

TEST_CASE("rate actuator engages and the environment step applies it") {
  const Registry reg = room_registry();
  DeviceLayer layer(reg);
  layer.apply_command(*reg.device(2), command(2, 7, true));
  CHECK(layer.engaged(2, 7));
  layer.step_environment("r1", 0);
  CHECK(std::get<double>(layer.value("room", "temp")) == doctest::Approx(27.6).epsilon(1e-12));
}

TEST_CASE("all actuators off with zero drift keeps the value constant") {
  const Registry reg = room_registry(0.0);
  DeviceLayer layer(reg);
  for (Tick t = 0; t < 10; ++t) layer.step_environment("r1", t);
  CHECK(std::get<double>(layer.value("room", "temp")) == 28.0);
}

TEST_CASE("30 steps with the AC on from step 0 reach 16.0") {
  const Registry reg = room_registry();
  DeviceLayer layer(reg);
  layer.apply_command(*reg.device(2), command(2, 7, true));
  for (Tick t = 0; t < 30; ++t) layer.step_environment("r1", t);
  CHECK(std::get<double>(layer.value("room", "temp")) == doctest::Approx(28.0 - 0.4 * 30).epsilon(1e-9));
}

TEST_CASE("set actuator assigns its property; wrong kinds and unknown resources change nothing") {
  const Registry reg = room_registry();
  DeviceLayer layer(reg);
  const Device& ac = *reg.device(2);
  layer.apply_command(ac, command(2, 8, true));
  CHECK(layer.value("room", "light") == FrameValue(true));
  const auto before = layer.state();
  try {
    layer.apply_command(ac, command(2, 99, true));
    FAIL("expected UnknownResource");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnknownResource);
  }
  try {
    layer.apply_command(ac, command(2, 7, 1.0));
    FAIL("expected PayloadKindMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::PayloadKindMismatch);
  }
  CHECK(layer.state() == before);
  CHECK_FALSE(layer.engaged(2, 7));
}

TEST_CASE("duplicate downlink is idempotent and still acked") {
  const Registry reg = room_registry();
  Kernel k;
  DeviceLayer layer(reg);
  std::vector<DeviceFrame> uplinked;
  layer.attach(k, [&](const Device&, std::vector<std::uint8_t> bytes) { uplinked.push_back(decode_frame(bytes)); });
  const auto bytes = encode_frame(command(2, 7, true));
  k.schedule(0, "gw", "down", Json::object(), [&] { layer.on_downlink(2, bytes); });
  k.run(1);
  const auto once = layer.state();
  const bool engaged_once = layer.engaged(2, 7);
  k.schedule(2, "gw", "down", Json::object(), [&] { layer.on_downlink(2, bytes); });
  k.run(3);
  CHECK(layer.state() == once);
  CHECK(layer.engaged(2, 7) == engaged_once);
  const auto acks = test::of_kind(k.log().records(), "ack");
  REQUIRE(acks.size() == 2);
  CHECK(acks[0].tick == 1);
  CHECK(acks[1].tick == 3);
  REQUIRE(uplinked.size() == 2);
  CHECK(uplinked[0].type == FrameType::CommandAck);
  CHECK(uplinked[0].payload == FrameValue(true));
}

TEST_CASE("composed property observes its members in order") {
  const Registry reg = room_registry();
  DeviceLayer layer(reg);
  CHECK(layer.observe("room", "climate") == Json::array({28.0, false}));
}

TEST_CASE("environment trajectory is a pure function of seed and commands") {
  auto run = [](std::uint64_t seed) {
    Thing room{"room", "room", "r1", {}};
    room.properties.push_back({"temp", "C", ValueKind::Float, {}, 25.0, 0.05, 0.2});
    Device ac{2, "ac", "r1", "gw", 10, {}, {}};
    ac.actuators.push_back({7, "power", "room", "temp", ActuatorEffect::Rate, -0.5});
    const Registry reg({room}, {ac}, {});
    Kernel k(seed);
    DeviceLayer layer(reg);
    layer.attach(k, {});
    std::vector<double> trajectory;
    for (Tick t = 0; t < 100; ++t) {
      if (t == 30) layer.apply_command(*reg.device(2), command(2, 7, true));
      if (t == 60) layer.apply_command(*reg.device(2), command(2, 7, false));
      layer.step_all(t);
      trajectory.push_back(std::get<double>(layer.value("room", "temp")));
    }
    return trajectory;
  };
  CHECK(run(5) == run(5));
  CHECK(run(5) != run(6));
}
