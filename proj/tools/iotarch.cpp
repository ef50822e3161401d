// iotarch command line: run, validate-rules, replay, serve.
//
// Exit codes: 0 ok, 1 validation errors, 2 invariant violation.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "iotarch/config.hpp"
#include "iotarch/platform.hpp"
#include "iotarch/projection.hpp"
#include "iotarch/rule.hpp"
#include "iotarch/server.hpp"

namespace {

using namespace iotarch;

int report(const Error& e) {
  if (const auto* v = dynamic_cast<const ValidationErrors*>(&e)) {
    std::cerr << "invalid config: " << v->errors().size() << " error(s)\n";
    for (const auto& line : v->errors()) std::cerr << "  - " << line << "\n";
    return 1;
  }
  std::cerr << to_string(e.code()) << ": " << e.what() << "\n";
  return 1;
}

int run(const std::string& config_path, const RunOverrides& overrides, const std::string& out) {
  Platform platform(parse_config(config_path), overrides);
  const RunSummary summary = platform.run();
  platform.write_outputs(out);
  std::cout << summary.to_json().dump(2) << "\n";
  if (!summary.violations.empty()) {
    for (const auto& v : summary.violations) std::cerr << "violation: " << v << "\n";
    return 2;
  }
  return 0;
}

int validate_rules(const std::string& path, const std::string& config_path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::optional<ScenarioConfig> config;
  std::optional<Registry> registry;
  if (!config_path.empty()) {
    config = parse_config(config_path);
    registry.emplace(config->things, config->devices, config->signal_models);
  }
  int errors = 0;
  for (auto& entry : parse_rule_file(ss.str())) {
    if (entry.error) {
      ++errors;
      std::cout << path << ":" << entry.line << ":" << entry.error->col() << ": " << to_string(entry.error->code())
                << ": " << entry.error->what() << "\n";
      continue;
    }
    if (registry) {
      try {
        link_rule(*entry.rule, *registry);
      } catch (const Error& e) {
        ++errors;
        std::cout << path << ":" << entry.line << ": " << to_string(e.code()) << ": " << e.what() << "\n";
        continue;
      }
    }
    std::cout << path << ":" << entry.line << ": ok " << print_rule(*entry.rule) << "\n";
  }
  return errors == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IoT edge/cloud orchestration simulator"};
  app.require_subcommand(1);

  std::string config_path, out = ".", mode;
  std::int64_t ticks = -1;
  std::int64_t seed = -1;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario to its horizon");
  run_cmd->add_option("--config,config", config_path, "Scenario TOML")->required();
  run_cmd->add_option("--ticks", ticks, "Override the horizon");
  run_cmd->add_option("--seed", seed, "Override the seed");
  run_cmd->add_option("--mode", mode, "centralized | decentralized");
  run_cmd->add_option("--out", out, "Output directory (default: current)");

  std::string rules_path, rules_config;
  auto* validate_cmd = app.add_subcommand("validate-rules", "Check a rule file (one rule per line)");
  validate_cmd->add_option("file", rules_path, "Rule file")->required();
  validate_cmd->add_option("--config", rules_config, "Link references against this scenario");

  std::string log_path;
  auto* replay_cmd = app.add_subcommand("replay", "Rebuild the final dashboard snapshot from a log");
  replay_cmd->add_option("file", log_path, "run.jsonl")->required();

  std::string serve_config;
  int port = 8080;
  std::int64_t tick_ms = 100;
  auto* serve_cmd = app.add_subcommand("serve", "Run the simulation behind the HTTP/WebSocket API");
  serve_cmd->add_option("--config,config", serve_config, "Scenario TOML")->required();
  serve_cmd->add_option("--port", port, "Listen port");
  serve_cmd->add_option("--tick-ms", tick_ms, "Wall-clock milliseconds per tick");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      RunOverrides overrides;
      if (ticks >= 0) overrides.ticks = static_cast<Tick>(ticks);
      if (seed >= 0) overrides.seed = static_cast<std::uint64_t>(seed);
      if (!mode.empty()) overrides.mode = mode_from_string(mode);
      return run(config_path, overrides, out);
    }
    if (*validate_cmd) return validate_rules(rules_path, rules_config);
    if (*replay_cmd) {
      std::cout << replay(log_path).dump(2) << "\n";
      return 0;
    }
    if (*serve_cmd) {
      Platform platform(parse_config(serve_config));
      return serve(platform, static_cast<unsigned short>(port), static_cast<unsigned>(tick_ms));
    }
  } catch (const Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
