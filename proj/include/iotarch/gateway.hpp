#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iotarch/broker.hpp"
#include "iotarch/device.hpp"
#include "iotarch/error.hpp"
#include "iotarch/frame.hpp"

namespace iotarch {

struct Aggregation {
  enum class Mode { None, Batch, Window };
  Mode mode = Mode::None;
  std::uint32_t size = 1;  // n for batch, m (ticks) for window
};

struct GatewayConfig {
  std::string id;
  std::string region;
  std::vector<std::uint32_t> attached_devices;
  Aggregation aggregation;

  bool attached(std::uint32_t device) const;
};

/// Canonical telemetry/1 topic for a device property.
std::string telemetry_topic(const std::string& region, std::uint32_t device, const std::string& property);

/// Frame to telemetry/1 envelope. Throws UnattachedDevice or UnknownResource.
Envelope translate(const DeviceFrame& frame, const GatewayConfig& cfg, const Registry& registry);

/// Mean-only aggregation over telemetry/1 bodies that share (device, property).
/// Batch emits once `buffered` holds n samples (using the first n); window
/// emits over whatever the window holds. A single sample is passed through
/// unaggregated so that count == 1 iff aggregated == false.
std::optional<Envelope> aggregate(const GatewayConfig& cfg, const std::vector<Json>& buffered);

/// Networking-layer bridge between device frames and broker envelopes.
class Gateway {
 public:
  using DownlinkSink = std::function<void(std::uint32_t device, std::vector<std::uint8_t> bytes)>;

  Gateway(GatewayConfig cfg, const Registry& registry, Broker& broker);

  const GatewayConfig& config() const noexcept { return cfg_; }
  const std::string& id() const noexcept { return cfg_.id; }

  /// Subscribes to commands/* and routes downlinks through `sink`.
  void attach(DownlinkSink sink);
  /// Devices of this region that no gateway attaches; this gateway reports
  /// command failures for them.
  void set_orphans(std::set<std::uint32_t> orphans) { orphans_ = std::move(orphans); }

  void on_frame(const std::vector<std::uint8_t>& bytes);
  /// command/1 envelope to a 0x81 frame. Throws UnattachedDevice,
  /// UnknownResource or ValueKindMismatch.
  DeviceFrame downlink(const Envelope& command);
  void flush_windows(Tick tick);

  const std::map<std::string, std::uint64_t>& errors() const noexcept { return errors_; }
  std::uint64_t translated(std::uint32_t device, const std::string& property) const;

 private:
  void on_command(const Envelope& command);
  void count_error(const Error& e, const Json& context);
  void emit(Envelope envelope);

  GatewayConfig cfg_;
  const Registry& registry_;
  Broker& broker_;
  DownlinkSink sink_;
  std::set<std::uint32_t> orphans_;
  std::map<std::pair<std::uint32_t, std::uint16_t>, std::vector<Json>> buffers_;
  std::map<std::pair<std::uint32_t, std::uint16_t>, std::deque<std::string>> in_flight_;
  std::map<std::pair<std::uint32_t, std::string>, std::uint64_t> translated_;
  std::map<std::string, std::uint64_t> errors_;
};

}  // namespace iotarch
