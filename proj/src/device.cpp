#include "iotarch/device.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "iotarch/error.hpp"

namespace iotarch {

std::string to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::Float: return "float";
    case ValueKind::Bool: return "bool";
    case ValueKind::Text: return "text";
  }
  return "float";
}

ValueKind value_kind_from_string(const std::string& text) {
  if (text == "float") return ValueKind::Float;
  if (text == "bool") return ValueKind::Bool;
  if (text == "text") return ValueKind::Text;
  throw Error(Errc::ValueKindMismatch, "unknown value kind '" + text + "'");
}

bool value_matches(ValueKind kind, const FrameValue& value) noexcept {
  switch (kind) {
    case ValueKind::Float: return std::holds_alternative<double>(value);
    case ValueKind::Bool: return std::holds_alternative<bool>(value);
    case ValueKind::Text: return std::holds_alternative<std::string>(value);
  }
  return false;
}

const InterestingProperty* Thing::find(const std::string& property) const {
  auto it = std::find_if(properties.begin(), properties.end(),
                         [&](const InterestingProperty& p) { return p.name == property; });
  return it == properties.end() ? nullptr : &*it;
}

const Sensor* Device::sensor(std::uint16_t resource) const {
  auto it = std::find_if(sensors.begin(), sensors.end(),
                         [&](const Sensor& s) { return s.id == resource; });
  return it == sensors.end() ? nullptr : &*it;
}

const Actuator* Device::actuator(std::uint16_t resource) const {
  auto it = std::find_if(actuators.begin(), actuators.end(),
                         [&](const Actuator& a) { return a.id == resource; });
  return it == actuators.end() ? nullptr : &*it;
}

Registry::Registry(std::vector<Thing> things, std::vector<Device> devices,
                   std::vector<SignalModel> signal_models)
    : things_(std::move(things)),
      devices_(std::move(devices)),
      signal_models_(std::move(signal_models)) {
  std::sort(devices_.begin(), devices_.end(),
            [](const Device& a, const Device& b) { return a.id < b.id; });
}

const Thing* Registry::thing(const std::string& id) const {
  auto it = std::find_if(things_.begin(), things_.end(), [&](const Thing& t) { return t.id == id; });
  return it == things_.end() ? nullptr : &*it;
}

const Device* Registry::device(std::uint32_t id) const {
  auto it = std::find_if(devices_.begin(), devices_.end(), [&](const Device& d) { return d.id == id; });
  return it == devices_.end() ? nullptr : &*it;
}

const Device* Registry::device_by_name(const std::string& name) const {
  auto it = std::find_if(devices_.begin(), devices_.end(),
                         [&](const Device& d) { return d.name == name; });
  return it == devices_.end() ? nullptr : &*it;
}

const Device* Registry::resolve_device(const std::string& ref) const {
  if (const Device* d = device_by_name(ref)) return d;
  if (!ref.empty() && std::all_of(ref.begin(), ref.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
      ref.size() <= 10) {
    const auto id = std::stoull(ref);
    if (id <= 0xFFFFFFFFULL) return device(static_cast<std::uint32_t>(id));
  }
  return nullptr;
}

const SignalModel* Registry::signal_model(const std::string& name) const {
  auto it = std::find_if(signal_models_.begin(), signal_models_.end(),
                         [&](const SignalModel& m) { return m.name == name; });
  return it == signal_models_.end() ? nullptr : &*it;
}

std::optional<ResourceInfo> Registry::resource(std::uint32_t device_id, std::uint16_t resource) const {
  const Device* dev = device(device_id);
  if (!dev) return std::nullopt;
  ResourceInfo info;
  info.device_id = dev->id;
  info.device_name = dev->name;
  info.region = dev->region;
  info.resource_id = resource;
  if (const Sensor* s = dev->sensor(resource)) {
    info.resource_name = s->name;
    info.thing = s->thing;
    info.property = s->property;
    info.is_sensor = true;
  } else if (const Actuator* a = dev->actuator(resource)) {
    info.resource_name = a->name;
    info.thing = a->thing;
    info.property = a->property;
    info.is_sensor = false;
  } else {
    return std::nullopt;
  }
  if (const Thing* t = thing(info.thing)) {
    if (const InterestingProperty* p = t->find(info.property)) {
      info.unit = p->unit;
      info.value_kind = p->value_kind;
    }
  }
  // Rate actuators take on/off commands regardless of the property they drive.
  if (!info.is_sensor) {
    const Actuator* a = dev->actuator(resource);
    if (a->effect == ActuatorEffect::Rate) info.value_kind = ValueKind::Bool;
  }
  return info;
}

std::optional<ResourceInfo> Registry::resolve_resource(const Device& dev, const std::string& ref) const {
  for (const auto& s : dev.sensors) {
    if (s.name == ref) return resource(dev.id, s.id);
  }
  for (const auto& a : dev.actuators) {
    if (a.name == ref) return resource(dev.id, a.id);
  }
  if (!ref.empty() && ref.size() <= 5 &&
      std::all_of(ref.begin(), ref.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    const auto id = std::stoul(ref);
    if (id <= 0xFFFF) return resource(dev.id, static_cast<std::uint16_t>(id));
  }
  return std::nullopt;
}

std::optional<ResourceInfo> Registry::sensor_for(const std::string& thing_id,
                                                 const std::string& property) const {
  for (const auto& dev : devices_) {
    std::vector<const Sensor*> sensors;
    for (const auto& s : dev.sensors) sensors.push_back(&s);
    std::sort(sensors.begin(), sensors.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (const Sensor* s : sensors) {
      if (s->thing == thing_id && s->property == property) return resource(dev.id, s->id);
    }
  }
  return std::nullopt;
}

std::vector<std::string> Registry::regions() const {
  std::set<std::string> out;
  for (const auto& d : devices_) out.insert(d.region);
  for (const auto& t : things_) out.insert(t.region);
  return {out.begin(), out.end()};
}

DeviceLayer::DeviceLayer(const Registry& registry) : registry_(registry) {
  for (const auto& thing : registry_.things()) {
    for (const auto& p : thing.properties) {
      if (p.composed_of.empty()) state_[{thing.id, p.name}] = p.initial;
    }
  }
  for (const auto& dev : registry_.devices()) {
    for (const auto& a : dev.actuators) {
      if (a.effect == ActuatorEffect::Rate) engaged_[{dev.id, a.id}] = false;
    }
  }
}

FrameValue DeviceLayer::value(const std::string& thing, const std::string& property) const {
  auto it = state_.find({thing, property});
  if (it == state_.end()) {
    throw Error(Errc::UnresolvedReference, "no state for " + thing + "." + property);
  }
  return it->second;
}

Json DeviceLayer::observe(const std::string& thing_id, const std::string& property) const {
  const Thing* t = registry_.thing(thing_id);
  const InterestingProperty* p = t ? t->find(property) : nullptr;
  if (p && !p->composed_of.empty()) {
    Json members = Json::array();
    for (const auto& member : p->composed_of) members.push_back(observe(thing_id, member));
    return members;
  }
  return value_to_json(value(thing_id, property));
}

void DeviceLayer::set_value(const std::string& thing, const std::string& property, FrameValue v) {
  state_[{thing, property}] = std::move(v);
}

bool DeviceLayer::engaged(std::uint32_t device, std::uint16_t actuator) const {
  auto it = engaged_.find({device, actuator});
  return it != engaged_.end() && it->second;
}

std::optional<DeviceFrame> DeviceLayer::sample(const Device& device, const Sensor& sensor, Tick tick,
                                               RngStream* noise) {
  if (sensor.period == 0 || tick % sensor.period != 0) return std::nullopt;
  FrameValue reading = value(sensor.thing, sensor.property);
  if (auto* f = std::get_if<double>(&reading); f && noise) {
    if (const SignalModel* model = registry_.signal_model(sensor.noise); model && model->amplitude > 0) {
      *f += noise->next_symmetric(model->amplitude);
    }
  }
  const auto key = std::make_pair(device.id, sensor.id);
  if (sensor.mode == SampleMode::OnChange) {
    auto last = last_reported_.find(key);
    if (last != last_reported_.end()) {
      if (const auto* now_f = std::get_if<double>(&reading)) {
        if (std::fabs(*now_f - std::get<double>(last->second)) < sensor.delta) return std::nullopt;
      } else if (last->second == reading) {
        return std::nullopt;
      }
    }
  }
  last_reported_[key] = reading;
  return DeviceFrame{FrameType::Telemetry, device.id, sensor.id, tick, reading};
}

void DeviceLayer::apply_command(const Device& device, const DeviceFrame& command) {
  const Actuator* act = device.actuator(command.resource_id);
  if (!act) {
    throw Error(Errc::UnknownResource, "device " + std::to_string(device.id) + " has no actuator " +
                                           std::to_string(command.resource_id));
  }
  if (act->effect == ActuatorEffect::Rate) {
    const auto* on = std::get_if<bool>(&command.payload);
    if (!on) throw Error(Errc::PayloadKindMismatch, "rate actuator " + act->name + " takes a bool");
    engaged_[{device.id, act->id}] = *on;
    return;
  }
  const Thing* t = registry_.thing(act->thing);
  const InterestingProperty* p = t ? t->find(act->property) : nullptr;
  if (!p || !value_matches(p->value_kind, command.payload)) {
    throw Error(Errc::PayloadKindMismatch, "payload kind does not match " + act->thing + "." + act->property);
  }
  state_[{act->thing, act->property}] = command.payload;
}

void DeviceLayer::step_environment(const std::string& region, Tick /*tick*/,
                                   const std::function<RngStream*(const std::string&)>& streams) {
  for (const auto& thing : registry_.things()) {
    if (thing.region != region) continue;
    for (const auto& p : thing.properties) {
      if (p.value_kind != ValueKind::Float || !p.composed_of.empty()) continue;
      double rate = p.drift;
      for (const auto& dev : registry_.devices()) {
        for (const auto& a : dev.actuators) {
          if (a.effect == ActuatorEffect::Rate && a.thing == thing.id && a.property == p.name &&
              engaged(dev.id, a.id)) {
            rate += a.rate;
          }
        }
      }
      if (p.disturbance > 0 && streams) {
        if (RngStream* rng = streams("env/" + thing.id + "/" + p.name)) {
          rate += rng->next_symmetric(p.disturbance);
        }
      }
      std::get<double>(state_[{thing.id, p.name}]) += rate;
    }
  }
}

void DeviceLayer::attach(Kernel& kernel, FrameSink uplink) {
  kernel_ = &kernel;
  uplink_ = std::move(uplink);
}

void DeviceLayer::sample_all(Tick tick) {
  for (const auto& dev : registry_.devices()) {
    for (const auto& sensor : dev.sensors) {
      RngStream* noise = nullptr;
      if (kernel_ && !sensor.noise.empty()) {
        noise = &kernel_->stream("noise/" + std::to_string(dev.id) + "/" + std::to_string(sensor.id));
      }
      if (auto frame = sample(dev, sensor, tick, noise)) {
        ++frames_emitted_;
        if (uplink_) uplink_(dev, encode_frame(*frame));
      }
    }
    if (dev.heartbeat_period > 0 && tick % dev.heartbeat_period == 0) {
      ++frames_emitted_;
      if (uplink_) uplink_(dev, encode_frame(DeviceFrame{FrameType::Heartbeat, dev.id, 0, tick, true}));
    }
  }
}

void DeviceLayer::step_all(Tick tick) {
  auto streams = [this](const std::string& id) -> RngStream* {
    return kernel_ ? &kernel_->stream(id) : nullptr;
  };
  for (const auto& region : registry_.regions()) step_environment(region, tick, streams);
}

void DeviceLayer::on_downlink(std::uint32_t device_id, const std::vector<std::uint8_t>& bytes) {
  const Device* dev = registry_.device(device_id);
  const std::string target = "device/" + std::to_string(device_id);
  try {
    if (!dev) throw Error(Errc::UnknownDevice, "no device " + std::to_string(device_id));
    DeviceFrame command = decode_frame(bytes);
    if (command.type != FrameType::Command || command.device_id != device_id) {
      throw Error(Errc::UnknownFrameType, "downlink is not a command for this device");
    }
    apply_command(*dev, command);
    if (!kernel_) return;
    const Tick ack_at = kernel_->now() + 1;
    kernel_->schedule(ack_at, target, "ack",
                      Json{{"resource", command.resource_id}, {"value", value_to_json(command.payload)}},
                      [this, dev, command, ack_at] {
                        ++frames_emitted_;
                        if (uplink_) {
                          uplink_(*dev, encode_frame(DeviceFrame{FrameType::CommandAck, dev->id,
                                                                 command.resource_id, ack_at,
                                                                 command.payload}));
                        }
                      });
  } catch (const Error& e) {
    if (kernel_) {
      kernel_->record(target, "err", Json{{"code", std::string(to_string(e.code()))}, {"message", e.what()}});
    }
  }
}

}  // namespace iotarch
