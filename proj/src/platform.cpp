#include "iotarch/platform.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "iotarch/error.hpp"

namespace iotarch {

Json RunSummary::to_json() const {
  return Json{{"scenario", scenario},
              {"seed", seed},
              {"mode", mode},
              {"ticks", ticks},
              {"messages", messages},
              {"telemetry", telemetry},
              {"symptoms", symptoms},
              {"plans", plans},
              {"commands", commands},
              {"finalValues", final_values},
              {"violations", violations},
              {"tasks", tasks}};
}

RunSummary summarize(const std::vector<LogRecord>& log) {
  RunSummary s;
  std::set<std::string> plans;
  for (const auto& r : log) {
    if (r.kind == "run") {
      s.scenario = r.body.value("scenario", std::string{});
      s.seed = r.body.value("seed", std::uint64_t{0});
      s.mode = r.body.value("mode", std::string{});
    }
    if (r.kind == "end") s.ticks = r.body.value("ticks", Tick{0});
    if (r.kind != "pub") continue;
    const std::string schema = r.body.at("schema").get<std::string>();
    ++s.messages[schema];
    if (schema == "plan/1") plans.insert(r.body.at("body").at("id").get<std::string>());
  }
  auto count = [&](const char* schema) {
    auto it = s.messages.find(schema);
    return it == s.messages.end() ? std::uint64_t{0} : it->second;
  };
  s.telemetry = count("telemetry/1");
  s.symptoms = count("symptom/1");
  s.commands = count("command/1");
  s.plans = plans.size();
  return s;
}

std::vector<std::string> check_invariants(const std::vector<LogRecord>& log, Mode mode) {
  std::vector<std::string> v;
  auto fail = [&](std::string message) {
    if (v.size() < 50) v.push_back(std::move(message));
  };
  std::map<std::uint64_t, std::pair<Tick, std::uint64_t>> pubs;  // msg -> (tick, matched)
  std::map<std::uint64_t, std::uint64_t> deliveries;
  std::set<std::pair<std::uint64_t, std::uint64_t>> delivered;
  std::set<std::string> symptoms;
  std::map<std::string, Json> plans;
  std::map<std::string, int> executed;
  std::map<std::pair<std::string, std::string>, std::uint64_t> kb_versions;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const LogRecord& r = log[i];
    if (i > 0) {
      const LogRecord& p = log[i - 1];
      const bool ordered = r.tick > p.tick ? r.seq == 0 : (r.tick == p.tick && r.seq == p.seq + 1);
      if (!ordered) fail("log order broken at line " + std::to_string(i + 1));
    }
    if (r.kind == "pub") {
      const auto msg = r.body.at("msg").get<std::uint64_t>();
      pubs[msg] = {r.tick, r.body.at("matched").get<std::uint64_t>()};
      const std::string schema = r.body.at("schema").get<std::string>();
      const Json& body = r.body.at("body");
      if (schema == "symptom/1") symptoms.insert(body.at("id").get<std::string>());
      if (schema == "plan/1") {
        const std::string id = body.at("id").get<std::string>();
        if (body.at("cause").empty()) fail("plan " + id + " cites no symptom");
        for (const auto& c : body.at("cause")) {
          if (!symptoms.count(c.get<std::string>())) fail("plan " + id + " cites unknown symptom " + c.dump());
        }
        if (mode == Mode::Centralized && body.at("origin") != "global" && body.at("scope").size() > 1) {
          fail("local plan " + id + " has multi-region scope");
        }
        plans.emplace(id, body);
      }
      if (schema == "command/1" && body.contains("planId")) {
        const std::string plan = body.at("planId").get<std::string>();
        if (!plans.count(plan)) fail("command " + body.at("commandId").dump() + " has no originating plan");
      }
    } else if (r.kind == "dlv") {
      const auto msg = r.body.at("msg").get<std::uint64_t>();
      const auto sub = r.body.at("sub").get<std::uint64_t>();
      auto pub = pubs.find(msg);
      if (pub == pubs.end() || pub->second.first + 1 != r.tick) {
        fail("delivery of message " + std::to_string(msg) + " without a publish on the previous tick");
      } else if (++deliveries[msg] > pub->second.second) {
        fail("message " + std::to_string(msg) + " delivered more often than matched");
      }
      if (!delivered.emplace(msg, sub).second) {
        fail("message " + std::to_string(msg) + " delivered twice to subscription " + std::to_string(sub));
      }
    } else if (r.kind == "act") {
      const std::string action = r.body.at("action").get<std::string>();
      if (++executed[action] > 1) fail("action " + action + " executed more than once");
    } else if (r.kind == "kb") {
      auto& last = kb_versions[{r.body.at("ns").get<std::string>(), r.body.at("key").get<std::string>()}];
      const auto version = r.body.at("version").get<std::uint64_t>();
      if (version != last + 1) fail("kb key " + r.body.at("key").dump() + " version did not increase by one");
      last = version;
    }
  }
  return v;
}

Platform::Platform(ScenarioConfig config, RunOverrides overrides) : config_(std::move(config)) {
  if (overrides.ticks) config_.ticks = *overrides.ticks;
  if (overrides.seed) config_.seed = *overrides.seed;
  if (overrides.mode) config_.mode = *overrides.mode;

  for (const auto& g : config_.gateways) {
    for (std::uint32_t id : g.attached_devices) {
      for (auto& d : config_.devices) {
        if (d.id == id) d.gateway = g.id;
      }
    }
  }
  kernel_ = std::make_unique<Kernel>(config_.seed);
  broker_ = std::make_unique<Broker>(*kernel_);
  registry_ = std::make_unique<Registry>(config_.things, config_.devices, config_.signal_models);
  devices_ = std::make_unique<DeviceLayer>(*registry_);
  kernel_->add_log_observer([this](const LogRecord& r) { projection_.apply(r); });

  for (const auto& g : config_.gateways) {
    gateways_.push_back(std::make_unique<Gateway>(g, *registry_, *broker_));
    for (std::uint32_t id : g.attached_devices) attached_[id] = gateways_.back().get();
  }
  for (auto& gw : gateways_) {
    gw->attach([this](std::uint32_t device, std::vector<std::uint8_t> bytes) {
      const Json body{{"hex", to_hex(bytes)}};
      kernel_->schedule(kernel_->now() + 1, "device/" + std::to_string(device), "downlink", body,
                        [this, device, bytes = std::move(bytes)] { devices_->on_downlink(device, bytes); });
    });
  }
  // Devices no gateway attaches: the region's first gateway reports their
  // command failures.
  for (const auto& region : config_.regions) {
    std::set<std::uint32_t> orphans;
    for (const auto& d : config_.devices) {
      if (d.region == region.id && !attached_.count(d.id)) orphans.insert(d.id);
    }
    for (auto& gw : gateways_) {
      if (gw->config().region == region.id) {
        gw->set_orphans(orphans);
        break;
      }
    }
  }
  devices_->attach(*kernel_, [this](const Device& dev, std::vector<std::uint8_t> bytes) {
    Gateway* gw = gateway_for(dev.id);
    if (!gw) {
      kernel_->record("device/" + std::to_string(dev.id), "drop", Json{{"hex", to_hex(bytes)}});
      return;
    }
    Json body{{"device", dev.id}, {"hex", to_hex(bytes)}};
    kernel_->schedule(kernel_->now() + 1, "gw/" + gw->id(), "frame", std::move(body),
                      [gw, bytes = std::move(bytes)] { gw->on_frame(bytes); });
  });

  std::map<std::string, std::string> loops_by_region;
  for (const auto& r : config_.regions) {
    loops_by_region[r.id] = r.loop;
    edges_[r.id] = std::make_unique<EdgeNode>(*registry_, r.id, config_.heartbeat, config_.analytics);
    auto loop = std::make_unique<MapeLoop>(r.loop, r.id, config_.mode, *kernel_, *broker_, *edges_[r.id],
                                           *registry_, config_.orchestration,
                                           [this](std::uint32_t device) { return attached_.count(device) > 0; });
    loop->kb().on_write([this](const std::string& ns, const KBEntry& e) {
      kernel_->record("kb/" + ns, "kb",
                      Json{{"ns", ns}, {"key", e.key}, {"version", e.version}, {"source", e.source}});
    });
    loops_[r.loop] = std::move(loop);
  }
  for (auto& [id, loop] : loops_) loop->start(loops_by_region);
  for (const auto& muted : config_.muted_loops) loops_.at(muted)->set_muted(true);

  kernel_->add_tick_hook("devices", [this](Tick t) { devices_->sample_all(t); });
  kernel_->add_tick_hook("gateways", [this](Tick t) {
    for (auto& gw : gateways_) gw->flush_windows(t);
  });
  kernel_->add_tick_hook("loops", [this](Tick t) {
    for (auto& [id, loop] : loops_) loop->on_tick(t);
  });
  if (config_.mode == Mode::Centralized) {
    global_ = std::make_unique<GlobalController>(*kernel_, *broker_, *registry_, config_.analytics.z_threshold);
    global_->kb().on_write([this](const std::string& ns, const KBEntry& e) {
      kernel_->record("kb/" + ns, "kb",
                      Json{{"ns", ns}, {"key", e.key}, {"version", e.version}, {"source", e.source}});
    });
    global_->start();
  }
  kernel_->add_tick_hook("environment", [this](Tick t) { devices_->step_all(t); });

  app_ = std::make_unique<AppService>(*kernel_, *broker_, *registry_);
  app_->set_rule_installer([this](const Rule& rule) { install_rule(rule); });
  app_->start();
}

Platform::~Platform() = default;

std::vector<MapeLoop*> Platform::loops() {
  std::vector<MapeLoop*> out;
  for (auto& [id, loop] : loops_) out.push_back(loop.get());
  return out;
}

MapeLoop* Platform::loop(const std::string& id) {
  auto it = loops_.find(id);
  return it == loops_.end() ? nullptr : it->second.get();
}

EdgeNode* Platform::edge(const std::string& region) {
  auto it = edges_.find(region);
  return it == edges_.end() ? nullptr : it->second.get();
}

Gateway* Platform::gateway_for(std::uint32_t device) {
  auto it = attached_.find(device);
  return it == attached_.end() ? nullptr : it->second;
}

Json Platform::header() const {
  Json devices = Json::array();
  for (const auto& d : registry_->devices()) {
    Json resources = Json::array();
    for (const auto& s : d.sensors) {
      resources.push_back(Json{{"id", s.id}, {"name", s.name}, {"thing", s.thing}, {"property", s.property},
                               {"type", "sensor"}});
    }
    for (const auto& a : d.actuators) {
      resources.push_back(Json{{"id", a.id}, {"name", a.name}, {"thing", a.thing}, {"property", a.property},
                               {"type", "actuator"}});
    }
    devices.push_back(Json{{"id", d.id},
                           {"name", d.name},
                           {"region", d.region},
                           {"gateway", d.gateway},
                           {"resources", resources}});
  }
  Json loops = Json::array();
  for (const auto& r : config_.regions) loops.push_back(Json{{"id", r.loop}, {"region", r.id}});
  if (global_) loops.push_back(Json{{"id", "global"}, {"region", "*"}});
  Json tasks = Json::array();
  for (const auto& t : config_.domain.tasks) {
    tasks.push_back(Json{{"name", t.name}, {"businessProcesses", t.business_processes}});
  }
  return Json{{"scenario", config_.name},
              {"seed", config_.seed},
              {"mode", to_string(config_.mode)},
              {"horizon", config_.ticks},
              {"devices", devices},
              {"loops", loops},
              {"domain", Json{{"name", config_.domain.name}, {"tasks", tasks}}},
              {"heartbeat", Json{{"heartbeatTimeout", config_.heartbeat.heartbeat_timeout},
                                 {"offlineTimeout", config_.heartbeat.offline_timeout}}},
              {"zThreshold", config_.analytics.z_threshold}};
}

void Platform::install_rule(const Rule& rule) {
  const std::string& home = rule.link.home_region;
  std::string owner = "edge:" + home;
  EdgeNode* node = edge(home);
  if (!node) throw Error(Errc::UnresolvedReference, "rule " + rule.id + ": no edge node for region " + home);
  MapeLoop* watcher = nullptr;
  for (auto& [id, loop] : loops_) {
    if (loop->region() == home) watcher = loop.get();
  }
  node->rules().install(rule);
  if (rule.link.regions.size() > 1 && global_) {
    // The home edge keeps watching the condition; the cloud owns the action.
    global_->rules().install(rule);
    if (watcher) watcher->set_owner(rule.id, RuleOwner::Cloud);
    owner = "cloud";
  } else if (watcher) {
    watcher->set_owner(rule.id, RuleOwner::Edge);
  }
  kernel_->record("rules", "rule",
                  Json{{"id", rule.id},
                       {"text", print_rule(rule)},
                       {"scope", rule.scope()},
                       {"owner", owner},
                       {"priority", rule.priority},
                       {"enabled", rule.enabled}});
}

void Platform::start() {
  started_ = true;
  kernel_->record("platform", "run", header());
  for (const auto& rule : build_rules(config_, *registry_)) install_rule(rule);
  for (const auto& u : config_.users) {
    const User user = app_->create_user(u.name, u.email, u.preferences);
    for (const auto& pattern : u.subscriptions) app_->subscribe_user(user.id, pattern);
  }
  for (const auto& bp : config_.processes) {
    for (std::size_t i = 0; i < bp.steps.size(); ++i) {
      const ProcessStep& step = bp.steps[i];
      kernel_->schedule(step.at, "bp/" + bp.name, "bp",
                        Json{{"process", bp.name}, {"step", i}, {"service", step.service}},
                        [this, &bp, i] { activate(bp, i); });
    }
  }
}

void Platform::activate(const BusinessProcess& bp, std::size_t step) {
  const ServiceConfig* s = config_.service(bp.steps[step].service);
  if (!s) return;
  switch (s->kind) {
    case ServiceConfig::Kind::Device: {
      const Device* dev = registry_->resolve_device(s->device);
      auto info = registry_->resolve_resource(*dev, s->resource);
      broker_->publish("commands/" + std::to_string(dev->id), "command/1", "bp/" + bp.name,
                       Json{{"commandId", "bp-" + std::to_string(next_bp_command_++)},
                            {"deviceId", dev->id},
                            {"resourceId", info->resource_id},
                            {"value", value_to_json(value_from_json(s->value))},
                            {"process", bp.name}});
      break;
    }
    case ServiceConfig::Kind::Rules:
      for (const auto& id : s->rules) {
        for (auto& [region, node] : edges_) node->rules().set_enabled(id, s->enable);
        if (global_) global_->rules().set_enabled(id, s->enable);
        kernel_->record("rules", "rule-state", Json{{"rule", id}, {"enabled", s->enable}});
      }
      break;
    case ServiceConfig::Kind::Analytics: {
      const auto dot = s->property.find('.');
      auto info = registry_->sensor_for(s->property.substr(0, dot), s->property.substr(dot + 1));
      Json body{{"service", s->name}, {"property", s->property}};
      EdgeNode* node = info ? edge(info->region) : nullptr;
      std::optional<WindowStats> stats;
      if (node) stats = node->stats(info->device_id, info->property, s->window);
      if (stats) {
        body["stats"] = Json{{"mean", stats->mean}, {"min", stats->min}, {"max", stats->max},
                             {"stddev", stats->stddev}, {"count", stats->count}};
      } else {
        body["error"] = "MissingData";
      }
      kernel_->record("bp/" + bp.name, "analytics", std::move(body));
      break;
    }
  }
}

void Platform::advance(Tick until) {
  if (!started_) start();
  kernel_->run(until);
}

void Platform::finish() {
  if (finished_ || !started_) return;
  finished_ = true;
  kernel_->record("platform", "end", Json{{"ticks", kernel_->now() + 1}});
}

RunSummary Platform::run() {
  if (config_.ticks > 0) {
    advance(config_.ticks - 1);
    finish();
  }
  return summary();
}

RunSummary Platform::summary() const {
  RunSummary s = summarize(kernel_->log().records());
  s.scenario = config_.name;
  s.seed = config_.seed;
  s.mode = to_string(config_.mode);
  for (const auto& t : config_.domain.tasks) s.tasks.push_back(t.name);
  if (kernel_->log().empty()) return s;
  if (!finished_) s.ticks = kernel_->now() + 1;
  for (const auto& thing : registry_->things()) {
    for (const auto& p : thing.properties) {
      s.final_values[thing.id + "." + p.name] = devices_->observe(thing.id, p.name);
    }
  }
  s.violations = check_invariants(kernel_->log().records(), config_.mode);
  return s;
}

void Platform::write_outputs(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  kernel_->log().write_jsonl((base / "run.jsonl").string());
  std::ofstream summary(base / "summary.json");
  summary << this->summary().to_json().dump(2) << "\n";
  std::ofstream store(base / "cloud-store.jsonl");
  if (global_) store << global_->store().to_jsonl();
  if (!summary || !store) throw Error(Errc::IoError, "cannot write outputs to " + dir);
}

}  // namespace iotarch
