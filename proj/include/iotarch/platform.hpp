#pragma once

// Assembles every layer from a scenario config and drives the run.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iotarch/app_service.hpp"
#include "iotarch/config.hpp"
#include "iotarch/gateway.hpp"
#include "iotarch/orchestration.hpp"
#include "iotarch/projection.hpp"

namespace iotarch {

struct RunOverrides {
  std::optional<Tick> ticks;
  std::optional<std::uint64_t> seed;
  std::optional<Mode> mode;
};

struct RunSummary {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string mode;
  Tick ticks = 0;  // ticks executed
  std::map<std::string, std::uint64_t> messages;  // publishes by schema
  std::uint64_t telemetry = 0;
  std::uint64_t symptoms = 0;
  std::uint64_t plans = 0;
  std::uint64_t commands = 0;
  std::map<std::string, Json> final_values;  // thing.property
  std::vector<std::string> violations;
  std::vector<std::string> tasks;

  Json to_json() const;
};

/// Tallies taken from the log alone.
RunSummary summarize(const std::vector<LogRecord>& log);

/// Log predicates: total order, exactly-once delivery, causality from
/// symptom to command, master-slave exclusivity (centralized), at most one
/// execution per action, KB version monotonicity.
std::vector<std::string> check_invariants(const std::vector<LogRecord>& log, Mode mode);

class Platform {
 public:
  explicit Platform(ScenarioConfig config, RunOverrides overrides = {});
  ~Platform();
  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;

  /// Processes ticks up to and including `until`. The first call writes the
  /// run header, installs configured rules and users.
  void advance(Tick until);
  /// Runs the configured horizon, appends the end record, returns the summary.
  RunSummary run();
  /// Appends the end record (once). No-op for an empty run.
  void finish();
  RunSummary summary() const;
  /// run.jsonl, summary.json and cloud-store.jsonl into `dir`.
  void write_outputs(const std::string& dir) const;

  /// Places a linked rule at its engine and logs it.
  void install_rule(const Rule& rule);

  Json snapshot() const { return projection_.snapshot(); }
  const Projection& projection() const noexcept { return projection_; }
  const ScenarioConfig& config() const noexcept { return config_; }
  Mode mode() const noexcept { return config_.mode; }
  Tick horizon() const noexcept { return config_.ticks; }
  bool started() const noexcept { return started_; }
  bool finished() const noexcept { return finished_; }
  /// Last processed tick (0 before the first advance).
  Tick now() const noexcept { return kernel_->now(); }

  Kernel& kernel() noexcept { return *kernel_; }
  Broker& broker() noexcept { return *broker_; }
  const Registry& registry() const noexcept { return *registry_; }
  DeviceLayer& devices() noexcept { return *devices_; }
  const DeviceLayer& devices() const noexcept { return *devices_; }
  AppService& app() noexcept { return *app_; }
  const AppService& app() const noexcept { return *app_; }
  std::vector<MapeLoop*> loops();
  MapeLoop* loop(const std::string& id);
  EdgeNode* edge(const std::string& region);
  GlobalController* global() noexcept { return global_.get(); }
  Gateway* gateway_for(std::uint32_t device);
  const std::vector<std::unique_ptr<Gateway>>& gateways() const noexcept { return gateways_; }

 private:
  void start();
  void activate(const BusinessProcess& bp, std::size_t step);
  Json header() const;

  ScenarioConfig config_;
  std::unique_ptr<Kernel> kernel_;
  std::unique_ptr<Broker> broker_;
  std::unique_ptr<Registry> registry_;
  std::unique_ptr<DeviceLayer> devices_;
  std::vector<std::unique_ptr<Gateway>> gateways_;
  std::map<std::uint32_t, Gateway*> attached_;
  std::map<std::string, std::unique_ptr<EdgeNode>> edges_;
  std::map<std::string, std::unique_ptr<MapeLoop>> loops_;  // by loop id
  std::unique_ptr<GlobalController> global_;
  std::unique_ptr<AppService> app_;
  Projection projection_;
  bool started_ = false;
  bool finished_ = false;
  std::uint64_t next_bp_command_ = 1;
};

}  // namespace iotarch
