#pragma once

// Scenario files (TOML). The schema is documented in docs/config.md.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iotarch/device.hpp"
#include "iotarch/edge_node.hpp"
#include "iotarch/error.hpp"
#include "iotarch/gateway.hpp"
#include "iotarch/orchestration.hpp"

namespace iotarch {

struct ServiceConfig {
  enum class Kind { Device, Rules, Analytics };
  std::string name;
  Kind kind = Kind::Device;
  std::string device;    // device services
  std::string resource;
  Json value;
  std::vector<std::string> rules;  // rule services
  bool enable = true;
  std::string property;  // analytics services: thing.property
  std::uint32_t window = 10;
};

std::string to_string(ServiceConfig::Kind kind);

struct ProcessStep {
  std::string service;
  Tick at = 0;
};

/// A linear sequence of service activations at configured ticks.
struct BusinessProcess {
  std::string name;
  std::vector<ProcessStep> steps;
};

struct TaskConfig {
  std::string name;
  std::vector<std::string> business_processes;
};

struct DomainConfig {
  std::string name;
  std::vector<TaskConfig> tasks;
};

struct RegionConfig {
  std::string id;
  std::string loop;
};

struct RuleConfig {
  std::string id;
  std::string text;
  bool enabled = true;
};

struct UserConfig {
  std::string name;
  std::string email;
  Json preferences = Json::object();
  std::vector<std::string> subscriptions;
};

struct ScenarioConfig {
  std::string name;
  std::uint64_t seed = 42;
  Tick ticks = 200;
  Mode mode = Mode::Centralized;
  DomainConfig domain;
  std::vector<ServiceConfig> services;
  std::vector<BusinessProcess> processes;
  std::vector<RegionConfig> regions;
  std::vector<GatewayConfig> gateways;
  std::vector<SignalModel> signal_models;
  std::vector<Thing> things;
  std::vector<Device> devices;
  std::vector<RuleConfig> rules;
  std::vector<UserConfig> users;
  HeartbeatPolicy heartbeat;
  AnalyticsConfig analytics;
  OrchestrationConfig orchestration;
  std::vector<std::string> muted_loops;  // fault injection: these loops drop assignments

  const RegionConfig* region(const std::string& id) const;
  const ServiceConfig* service(const std::string& name) const;
};

/// Every problem found in one pass, each naming the offending entry.
class ValidationErrors : public Error {
 public:
  explicit ValidationErrors(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const noexcept { return errors_; }

 private:
  std::vector<std::string> errors_;
};

class ConfigParseError : public Error {
 public:
  ConfigParseError(std::size_t line, std::size_t col, const std::string& message);
  std::size_t line() const noexcept { return line_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t line_;
  std::size_t col_;
};

/// Throws IoError, ConfigParseError (code ParseError) or ValidationErrors.
ScenarioConfig parse_config(const std::string& path);
ScenarioConfig parse_config_string(const std::string& text, const std::string& source = "<string>");

/// Semantic checks over an assembled config; empty when valid.
std::vector<std::string> validate(const ScenarioConfig& config);

/// Rules of the config, parsed and linked against its registry.
std::vector<Rule> build_rules(const ScenarioConfig& config, const Registry& registry);

}  // namespace iotarch
