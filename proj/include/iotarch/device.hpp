#pragma once

// Sensing layer: things and their properties, devices hosting sensors and
// actuators, the physical environment those actuators perturb.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iotarch/frame.hpp"
#include "iotarch/kernel.hpp"

namespace iotarch {

enum class ValueKind { Float, Bool, Text };

std::string to_string(ValueKind kind);
ValueKind value_kind_from_string(const std::string& text);
bool value_matches(ValueKind kind, const FrameValue& value) noexcept;

struct InterestingProperty {
  std::string name;
  std::string unit;
  ValueKind value_kind = ValueKind::Float;
  std::vector<std::string> composed_of;
  FrameValue initial = 0.0;
  double drift = 0.0;        // per tick, float properties only
  double disturbance = 0.0;  // amplitude of the uniform per-tick disturbance
};

struct Thing {
  std::string id;
  std::string kind;
  std::string region;
  std::vector<InterestingProperty> properties;

  const InterestingProperty* find(const std::string& property) const;
};

struct SignalModel {
  std::string name;
  double amplitude = 0.0;  // uniform noise in [-amplitude, amplitude)
};

enum class SampleMode { Periodic, OnChange };

struct Sensor {
  std::uint16_t id = 0;
  std::string name;
  std::string thing;
  std::string property;
  Tick period = 1;
  SampleMode mode = SampleMode::Periodic;
  double delta = 0.0;
  std::string noise;  // signal model name, empty for none
};

enum class ActuatorEffect { Rate, Set };

struct Actuator {
  std::uint16_t id = 0;
  std::string name;
  std::string thing;
  std::string property;
  ActuatorEffect effect = ActuatorEffect::Rate;
  double rate = 0.0;  // added per environment step while engaged
};

struct Device {
  std::uint32_t id = 0;
  std::string name;
  std::string region;
  std::string gateway;
  Tick heartbeat_period = 10;
  std::vector<Sensor> sensors;
  std::vector<Actuator> actuators;

  const Sensor* sensor(std::uint16_t resource) const;
  const Actuator* actuator(std::uint16_t resource) const;
};

/// Resource resolution shared by the gateway, edge node and app service.
struct ResourceInfo {
  std::uint32_t device_id = 0;
  std::uint16_t resource_id = 0;
  std::string device_name;
  std::string resource_name;
  std::string region;
  std::string thing;
  std::string property;
  std::string unit;
  ValueKind value_kind = ValueKind::Float;
  bool is_sensor = true;
};

class Registry {
 public:
  Registry() = default;
  Registry(std::vector<Thing> things, std::vector<Device> devices,
           std::vector<SignalModel> signal_models);

  const std::vector<Thing>& things() const noexcept { return things_; }
  const std::vector<Device>& devices() const noexcept { return devices_; }
  const std::vector<SignalModel>& signal_models() const noexcept { return signal_models_; }

  const Thing* thing(const std::string& id) const;
  const Device* device(std::uint32_t id) const;
  const Device* device_by_name(const std::string& name) const;
  /// Accepts a numeric id or a device name.
  const Device* resolve_device(const std::string& ref) const;
  const SignalModel* signal_model(const std::string& name) const;

  std::optional<ResourceInfo> resource(std::uint32_t device, std::uint16_t resource) const;
  /// Accepts a numeric resource id or a resource name.
  std::optional<ResourceInfo> resolve_resource(const Device& device, const std::string& ref) const;
  /// First sensor (by device id, then resource id) observing thing.property.
  std::optional<ResourceInfo> sensor_for(const std::string& thing, const std::string& property) const;

  std::vector<std::string> regions() const;

 private:
  std::vector<Thing> things_;
  std::vector<Device> devices_;
  std::vector<SignalModel> signal_models_;
};

/// Mutable physical state plus device behaviour: sampling, command
/// application and the per-region environment step.
class DeviceLayer {
 public:
  using FrameSink = std::function<void(const Device&, std::vector<std::uint8_t>)>;

  explicit DeviceLayer(const Registry& registry);

  /// Periodic sensors report on ticks that are multiples of their period;
  /// on-change sensors only when |value - last reported| >= delta.
  std::optional<DeviceFrame> sample(const Device& device, const Sensor& sensor, Tick tick,
                                    RngStream* noise = nullptr);

  /// Engages/disengages a rate actuator or assigns a set actuator's value.
  /// Throws UnknownResource or PayloadKindMismatch without touching state.
  void apply_command(const Device& device, const DeviceFrame& command);

  void step_environment(const std::string& region, Tick tick,
                        const std::function<RngStream*(const std::string&)>& streams = {});

  FrameValue value(const std::string& thing, const std::string& property) const;
  /// Composed properties yield their members' values in declared order.
  Json observe(const std::string& thing, const std::string& property) const;
  void set_value(const std::string& thing, const std::string& property, FrameValue value);
  bool engaged(std::uint32_t device, std::uint16_t actuator) const;

  /// Wire the layer into a kernel: per-tick sampling and heartbeats, the
  /// environment step, and command frames arriving from gateways.
  void attach(Kernel& kernel, FrameSink uplink);
  void sample_all(Tick tick);
  void step_all(Tick tick);
  /// Handles a downlink frame addressed to a device; emits the ack next tick.
  void on_downlink(std::uint32_t device_id, const std::vector<std::uint8_t>& bytes);

  std::uint64_t frames_emitted() const noexcept { return frames_emitted_; }
  const std::map<std::pair<std::string, std::string>, FrameValue>& state() const noexcept {
    return state_;
  }

 private:
  const Registry& registry_;
  Kernel* kernel_ = nullptr;
  FrameSink uplink_;
  std::map<std::pair<std::string, std::string>, FrameValue> state_;
  std::map<std::pair<std::uint32_t, std::uint16_t>, bool> engaged_;
  std::map<std::pair<std::uint32_t, std::uint16_t>, FrameValue> last_reported_;
  std::uint64_t frames_emitted_ = 0;
};

}  // namespace iotarch
