#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "iotarch/config.hpp"
#include "iotarch/kernel.hpp"

namespace test {

inline std::string source_path(const std::string& relative) { return std::string(IOTARCH_SOURCE_DIR) + "/" + relative; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline iotarch::ScenarioConfig scenario(const std::string& name) {
  return iotarch::parse_config(source_path("scenarios/" + name + ".toml"));
}

inline std::vector<iotarch::LogRecord> of_kind(const std::vector<iotarch::LogRecord>& log, const std::string& kind) {
  std::vector<iotarch::LogRecord> out;
  for (const auto& r : log) {
    if (r.kind == kind) out.push_back(r);
  }
  return out;
}

/// Publishes of one schema, from the log.
inline std::vector<iotarch::LogRecord> pubs(const std::vector<iotarch::LogRecord>& log, const std::string& schema) {
  std::vector<iotarch::LogRecord> out;
  for (const auto& r : log) {
    if (r.kind == "pub" && r.body.value("schema", std::string{}) == schema) out.push_back(r);
  }
  return out;
}

struct SymptomLatency {
  std::string symptom;
  iotarch::Tick detected = 0;
  iotarch::Tick landed = 0;  // delivery tick of the first command citing it
  bool global = false;       // that command came from a cloud plan
};

/// Symptoms that led to a command publish, with the delivery tick of the
/// first such command.
inline std::vector<SymptomLatency> command_latencies(const std::vector<iotarch::LogRecord>& log) {
  std::map<std::string, iotarch::Tick> detected;
  std::vector<std::string> order;
  std::map<std::string, SymptomLatency> first;
  for (const auto& r : log) {
    if (r.kind != "pub") continue;
    const std::string schema = r.body.at("schema");
    const auto& body = r.body.at("body");
    if (schema == "symptom/1") {
      detected[body.at("id")] = r.tick;
      order.push_back(body.at("id"));
    } else if (schema == "command/1" && body.contains("cause")) {
      for (const auto& cause : body.at("cause")) {
        const std::string id = cause;
        if (first.count(id) || !detected.count(id)) continue;
        first[id] = SymptomLatency{id, detected[id], r.tick + 1, body.value("origin", std::string{}) == "global"};
      }
    }
  }
  std::vector<SymptomLatency> out;
  for (const auto& id : order) {
    if (first.count(id)) out.push_back(first[id]);
  }
  return out;
}

inline std::string read_scenario_text(const std::string& name) { return read_file(source_path("scenarios/" + name + ".toml")); }

}  // namespace test
