#pragma once

// Processing node hosted at each region's edge: the device manager, the rule
// engine, windowed analytics, and the query surface the application layer
// re-exports.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iotarch/analytics.hpp"
#include "iotarch/device.hpp"
#include "iotarch/rule.hpp"

namespace iotarch {

enum class DeviceStatus { Online, Stale, Offline };
std::string to_string(DeviceStatus status);

struct DeviceRecord {
  std::uint32_t device_id = 0;
  std::string name;
  std::string region;
  std::vector<ResourceInfo> resources;
  DeviceStatus status = DeviceStatus::Online;
  Tick last_seen = 0;
};

struct HeartbeatPolicy {
  Tick heartbeat_timeout = 15;
  Tick offline_timeout = 30;
};

DeviceStatus status_for(Tick now, Tick last_seen, const HeartbeatPolicy& policy) noexcept;

class DeviceManager {
 public:
  DeviceManager(const Registry& registry, std::string region, HeartbeatPolicy policy);

  void seen(std::uint32_t device, Tick tick);
  /// Recomputes statuses at `now`; returns the devices that just went offline.
  std::vector<std::uint32_t> refresh(Tick now);
  /// Statuses as of `now` without recording transitions.
  std::vector<DeviceRecord> device_status(Tick now) const;
  const HeartbeatPolicy& policy() const noexcept { return policy_; }

 private:
  HeartbeatPolicy policy_;
  std::map<std::uint32_t, DeviceRecord> records_;
};

enum class SymptomKind { RuleViolation, Anomaly, DeviceOffline };
std::string to_string(SymptomKind kind);
SymptomKind symptom_kind_from_string(const std::string& text);

struct Evidence {
  std::string key;
  double value = 0.0;
  Tick tick = 0;
  bool operator==(const Evidence&) const = default;
};

struct Symptom {
  std::string id;
  SymptomKind kind = SymptomKind::RuleViolation;
  std::string source;  // rule id or detector name
  std::set<std::string> scope;
  std::vector<Evidence> evidence;
  Tick detected_at = 0;
  double z = 0.0;  // anomaly score, 0 for other kinds

  Json to_json() const;
  static Symptom from_json(const Json& j);
  bool operator==(const Symptom&) const = default;
};

using SeriesMap = std::map<SeriesKey, SeriesWindow>;

/// Value of an operand against the windows: the latest sample or the
/// aggregate over its last n samples. Throws MissingData.
double operand_value(const Operand& op, const RuleLink& link, const SeriesMap& series);
bool evaluate_condition(const Condition& cond, const RuleLink& link, const SeriesMap& series);

/// Rules held by one engine, with per-rule sustain state.
class RuleEngine {
 public:
  /// Rule must already be linked.
  void install(Rule rule);
  bool remove(const std::string& id);
  bool set_enabled(const std::string& id, bool enabled);
  const Rule* find(const std::string& id) const;
  const std::vector<Rule>& rules() const noexcept { return rules_; }

  /// Evaluates one rule. Without FOR the rule fires whenever its condition
  /// holds; with FOR n the condition must have held on n consecutive ticks
  /// ending at `tick`. Throws MissingData (and resets the streak).
  std::optional<Symptom> evaluate_rule(const Rule& rule, const SeriesMap& series, Tick tick);
  /// Evaluates every enabled rule in install order; skipped rules are counted.
  std::vector<Symptom> evaluate_all(const SeriesMap& series, Tick tick);

  std::uint64_t skipped() const noexcept { return skipped_; }

 private:
  struct Streak {
    Tick last_true = 0;
    std::uint32_t length = 0;
  };
  std::vector<Rule> rules_;
  std::map<std::string, Streak> streaks_;
  std::uint64_t skipped_ = 0;
};

struct AnalyticsConfig {
  std::size_t window_capacity = 20;
  double z_threshold = 3.0;
  bool anomaly_detection = true;
};

class EdgeNode {
 public:
  EdgeNode(const Registry& registry, std::string region, HeartbeatPolicy heartbeat,
           AnalyticsConfig analytics);

  const std::string& region() const noexcept { return region_; }

  /// Feeds one float sample; returns an anomaly symptom (without id) when
  /// the detector fires against the window as it stood before the sample.
  std::optional<Symptom> ingest(std::uint32_t device, const std::string& property, Tick tick, double value);
  void seen(std::uint32_t device, Tick tick) { devices_.seen(device, tick); }

  RuleEngine& rules() noexcept { return rules_; }
  const RuleEngine& rules() const noexcept { return rules_; }
  DeviceManager& devices() noexcept { return devices_; }
  const DeviceManager& devices() const noexcept { return devices_; }
  const SeriesMap& series() const noexcept { return series_; }
  const AnalyticsConfig& analytics() const noexcept { return analytics_; }
  std::uint64_t anomaly_checks_skipped() const noexcept { return anomaly_skipped_; }

  /// Query surface for application developers.
  std::optional<WindowStats> stats(std::uint32_t device, const std::string& property, std::size_t n) const;

 private:
  const Registry& registry_;
  std::string region_;
  DeviceManager devices_;
  RuleEngine rules_;
  AnalyticsConfig analytics_;
  SeriesMap series_;
  std::uint64_t anomaly_skipped_ = 0;
};

}  // namespace iotarch
