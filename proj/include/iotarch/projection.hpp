#pragma once

// Dashboard state folded from event-log records. The live service and
// replay feed the same records through the same projection, which is what
// makes a replayed snapshot equal to the live one.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iotarch/edge_node.hpp"
#include "iotarch/kernel.hpp"

namespace iotarch {

class Projection {
 public:
  void apply(const LogRecord& record);

  /// Tick-boundary view; pure.
  Json snapshot() const;

  Tick tick() const noexcept { return tick_; }
  bool empty() const noexcept { return records_ == 0; }
  const std::map<std::string, Json>& plans() const noexcept { return plans_; }
  const std::map<std::string, Json>& rules() const noexcept { return rules_; }
  /// Device view: registry data from the run header plus reported values.
  Json devices() const;
  Json loops() const;

 private:
  struct DeviceView {
    Json info;
    Tick last_seen = 0;
    std::map<std::string, Json> values;
  };
  struct LoopView {
    std::string region;
    std::map<std::string, std::uint64_t> counters;
    std::uint64_t completed = 0;
    std::uint64_t partial = 0;
    Json last_plan;
  };

  void apply_pub(const Json& body);
  DeviceStatus status(const DeviceView& d) const;

  std::uint64_t records_ = 0;
  Tick tick_ = 0;
  Json run_ = Json::object();
  bool ended_ = false;
  HeartbeatPolicy policy_;
  std::map<std::uint32_t, DeviceView> devices_;
  std::map<std::string, LoopView> loops_;
  std::map<std::string, Json> rules_;
  std::map<std::string, Json> plans_;
  std::map<std::string, std::uint64_t> messages_;
  std::map<std::string, std::int64_t> unread_;
  std::uint64_t notifications_ = 0;
  std::uint64_t users_ = 0;
  std::map<std::string, std::uint64_t> command_outcomes_;
  std::map<std::string, std::uint64_t> store_;
};

/// Final snapshot reconstructed from a JSONL log. Throws CorruptLog naming
/// the 1-based line, or IoError.
Json replay(const std::string& path);
Json replay_lines(std::istream& in);

}  // namespace iotarch
