#include "iotarch/gateway.hpp"

#include <algorithm>

#include "iotarch/error.hpp"

namespace iotarch {

bool GatewayConfig::attached(std::uint32_t device) const {
  return std::find(attached_devices.begin(), attached_devices.end(), device) != attached_devices.end();
}

std::string telemetry_topic(const std::string& region, std::uint32_t device, const std::string& property) {
  return "telemetry/" + region + "/" + std::to_string(device) + "/" + property;
}

Envelope translate(const DeviceFrame& frame, const GatewayConfig& cfg, const Registry& registry) {
  if (!cfg.attached(frame.device_id)) {
    throw Error(Errc::UnattachedDevice,
                "device " + std::to_string(frame.device_id) + " is not attached to " + cfg.id);
  }
  auto info = registry.resource(frame.device_id, frame.resource_id);
  if (!info || !info->is_sensor) {
    throw Error(Errc::UnknownResource, "device " + std::to_string(frame.device_id) +
                                           " has no sensor " + std::to_string(frame.resource_id));
  }
  Envelope e;
  e.schema = "telemetry/1";
  e.publisher = cfg.id;
  e.topic = telemetry_topic(cfg.region, frame.device_id, info->property);
  e.body = Json{{"deviceId", frame.device_id},
                {"resourceId", frame.resource_id},
                {"thing", info->thing},
                {"property", info->property},
                {"value", value_to_json(frame.payload)},
                {"unit", std::holds_alternative<double>(frame.payload) ? info->unit : std::string{}},
                {"ts", frame.timestamp},
                {"regionId", cfg.region},
                {"gatewayId", cfg.id},
                {"aggregated", false},
                {"count", 1}};
  return e;
}

std::optional<Envelope> aggregate(const GatewayConfig& cfg, const std::vector<Json>& buffered) {
  if (buffered.empty() || cfg.aggregation.mode == Aggregation::Mode::None) return std::nullopt;
  std::size_t take = buffered.size();
  if (cfg.aggregation.mode == Aggregation::Mode::Batch) {
    if (buffered.size() < cfg.aggregation.size) return std::nullopt;
    take = cfg.aggregation.size;
  }
  const Json& last = buffered[take - 1];
  Envelope e;
  e.schema = "telemetry/1";
  e.publisher = cfg.id;
  e.topic = telemetry_topic(last.at("regionId").get<std::string>(), last.at("deviceId").get<std::uint32_t>(),
                            last.at("property").get<std::string>());
  e.body = last;
  if (take == 1) return e;
  double sum = 0.0;
  for (std::size_t i = 0; i < take; ++i) sum += buffered[i].at("value").get<double>();
  e.body["value"] = sum / static_cast<double>(take);
  e.body["aggregated"] = true;
  e.body["count"] = take;
  return e;
}

Gateway::Gateway(GatewayConfig cfg, const Registry& registry, Broker& broker)
    : cfg_(std::move(cfg)), registry_(registry), broker_(broker) {}

void Gateway::attach(DownlinkSink sink) {
  sink_ = std::move(sink);
  broker_.subscribe(cfg_.id, "commands/*", [this](const Envelope& e) { on_command(e); });
}

std::uint64_t Gateway::translated(std::uint32_t device, const std::string& property) const {
  auto it = translated_.find({device, property});
  return it == translated_.end() ? 0 : it->second;
}

void Gateway::count_error(const Error& e, const Json& context) {
  const std::string code(to_string(e.code()));
  ++errors_[code];
  broker_.kernel().record(cfg_.id, "err", Json{{"code", code}, {"message", e.what()}, {"context", context}});
}

void Gateway::emit(Envelope envelope) {
  const std::string topic = envelope.topic;
  broker_.publish(topic, std::move(envelope));
}

void Gateway::on_frame(const std::vector<std::uint8_t>& bytes) {
  DeviceFrame frame;
  try {
    frame = decode_frame(bytes);
  } catch (const Error& e) {
    count_error(e, Json{{"hex", to_hex(bytes)}});
    return;
  }
  try {
    const Device* dev = registry_.device(frame.device_id);
    if (!dev || !cfg_.attached(frame.device_id)) {
      throw Error(Errc::UnattachedDevice,
                  "device " + std::to_string(frame.device_id) + " is not attached to " + cfg_.id);
    }
    switch (frame.type) {
      case FrameType::Heartbeat:
        broker_.publish("status/" + cfg_.region + "/" + std::to_string(frame.device_id), "heartbeat/1",
                        cfg_.id,
                        Json{{"deviceId", frame.device_id}, {"ts", frame.timestamp}, {"regionId", cfg_.region}});
        return;
      case FrameType::CommandAck: {
        auto& queue = in_flight_[{frame.device_id, frame.resource_id}];
        std::string command_id;
        if (!queue.empty()) {
          command_id = queue.front();
          queue.pop_front();
        }
        broker_.publish("acks/" + std::to_string(frame.device_id), "ack/1", cfg_.id,
                        Json{{"commandId", command_id},
                             {"deviceId", frame.device_id},
                             {"resourceId", frame.resource_id},
                             {"value", value_to_json(frame.payload)},
                             {"ts", frame.timestamp}});
        return;
      }
      case FrameType::Command:
        throw Error(Errc::UnknownFrameType, "command frames travel downlink only");
      case FrameType::Telemetry: break;
    }
    Envelope e = translate(frame, cfg_, registry_);
    const std::string property = e.body.at("property").get<std::string>();
    ++translated_[{frame.device_id, property}];
    if (cfg_.aggregation.mode == Aggregation::Mode::None || !std::holds_alternative<double>(frame.payload)) {
      emit(std::move(e));
      return;
    }
    auto& buffer = buffers_[{frame.device_id, frame.resource_id}];
    buffer.push_back(e.body);
    if (cfg_.aggregation.mode == Aggregation::Mode::Batch) {
      if (auto out = aggregate(cfg_, buffer)) {
        buffer.erase(buffer.begin(), buffer.begin() + cfg_.aggregation.size);
        emit(std::move(*out));
      }
    }
  } catch (const Error& e) {
    count_error(e, Json{{"deviceId", frame.device_id}, {"resourceId", frame.resource_id}});
  }
}

void Gateway::flush_windows(Tick tick) {
  if (cfg_.aggregation.mode != Aggregation::Mode::Window) return;
  if ((tick + 1) % cfg_.aggregation.size != 0) return;
  for (auto& [key, buffer] : buffers_) {
    if (auto out = aggregate(cfg_, buffer)) emit(std::move(*out));
    buffer.clear();
  }
}

DeviceFrame Gateway::downlink(const Envelope& command) {
  const auto device_id = command.body.at("deviceId").get<std::uint32_t>();
  if (!cfg_.attached(device_id)) {
    throw Error(Errc::UnattachedDevice, "device " + std::to_string(device_id) + " is not attached");
  }
  const auto resource_id = command.body.at("resourceId").get<std::uint16_t>();
  auto info = registry_.resource(device_id, resource_id);
  if (!info || info->is_sensor) {
    throw Error(Errc::UnknownResource, "device " + std::to_string(device_id) + " has no actuator " +
                                           std::to_string(resource_id));
  }
  FrameValue value = value_from_json(command.body.at("value"));
  if (!value_matches(info->value_kind, value)) {
    throw Error(Errc::ValueKindMismatch, "actuator " + info->resource_name + " expects a " +
                                             to_string(info->value_kind) + " value");
  }
  return DeviceFrame{FrameType::Command, device_id, resource_id, broker_.kernel().now(), value};
}

void Gateway::on_command(const Envelope& command) {
  const auto device_id = command.body.at("deviceId").get<std::uint32_t>();
  const bool mine = cfg_.attached(device_id);
  if (!mine && !orphans_.count(device_id)) return;
  try {
    DeviceFrame frame = downlink(command);
    in_flight_[{frame.device_id, frame.resource_id}].push_back(command.body.value("commandId", std::string{}));
    if (sink_) sink_(frame.device_id, encode_frame(frame));
  } catch (const Error& e) {
    count_error(e, Json{{"deviceId", device_id}, {"commandId", command.body.value("commandId", std::string{})}});
    broker_.publish("notify/command-failed", "notify/1", cfg_.id,
                    Json{{"message", "command failed: " + std::string(to_string(e.code()))},
                         {"reason", std::string(to_string(e.code()))},
                         {"commandId", command.body.value("commandId", std::string{})},
                         {"deviceId", device_id}});
  }
}

}  // namespace iotarch
