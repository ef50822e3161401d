#include "iotarch/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "toml.hpp"

namespace iotarch {

std::string to_string(ServiceConfig::Kind kind) {
  switch (kind) {
    case ServiceConfig::Kind::Device: return "device";
    case ServiceConfig::Kind::Rules: return "rules";
    case ServiceConfig::Kind::Analytics: return "analytics";
  }
  return "device";
}

const RegionConfig* ScenarioConfig::region(const std::string& id) const {
  for (const auto& r : regions) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

const ServiceConfig* ScenarioConfig::service(const std::string& name) const {
  for (const auto& s : services) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

namespace {

std::string join(const std::vector<std::string>& errors) {
  std::string out;
  for (const auto& e : errors) out += (out.empty() ? "" : "; ") + e;
  return out;
}

}  // namespace

ValidationErrors::ValidationErrors(std::vector<std::string> errors)
    : Error(Errc::ValidationErrors, std::to_string(errors.size()) + " validation error(s): " + join(errors)),
      errors_(std::move(errors)) {}

ConfigParseError::ConfigParseError(std::size_t line, std::size_t col, const std::string& message)
    : Error(Errc::ParseError, "line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + message),
      line_(line),
      col_(col) {}

namespace {

Json to_json(const toml::node& node) {
  if (auto t = node.as_table()) {
    Json j = Json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = to_json(v);
    return j;
  }
  if (auto a = node.as_array()) {
    Json j = Json::array();
    for (const auto& v : *a) j.push_back(to_json(v));
    return j;
  }
  if (auto v = node.value_exact<bool>()) return *v;
  if (auto v = node.value_exact<std::int64_t>()) return *v;
  if (auto v = node.value_exact<double>()) return *v;
  if (auto v = node.value_exact<std::string>()) return *v;
  return Json{};
}

// Field extraction that records type problems instead of throwing, so one
// pass reports everything.
struct Reader {
  std::vector<std::string>& errors;

  template <typename T>
  std::optional<T> opt(const toml::table& t, std::string_view key, const std::string& where) {
    const toml::node* n = t.get(key);
    if (!n) return std::nullopt;
    std::optional<T> v;
    if constexpr (std::is_same_v<T, double>) {
      v = n->value<double>();
    } else {
      v = n->value_exact<T>();
    }
    if (!v) errors.push_back(where + "." + std::string(key) + ": wrong type");
    return v;
  }

  template <typename T>
  T get(const toml::table& t, std::string_view key, const std::string& where, T fallback) {
    return opt<T>(t, key, where).value_or(fallback);
  }

  template <typename T>
  T required(const toml::table& t, std::string_view key, const std::string& where, T fallback = T{}) {
    if (!t.get(key)) {
      errors.push_back(where + ": missing '" + std::string(key) + "'");
      return fallback;
    }
    return get<T>(t, key, where, fallback);
  }

  std::vector<std::string> strings(const toml::table& t, std::string_view key, const std::string& where) {
    std::vector<std::string> out;
    const toml::node* n = t.get(key);
    if (!n) return out;
    const toml::array* a = n->as_array();
    if (!a) {
      errors.push_back(where + "." + std::string(key) + ": expected an array of strings");
      return out;
    }
    for (const auto& v : *a) {
      if (auto s = v.value_exact<std::string>()) {
        out.push_back(*s);
      } else {
        errors.push_back(where + "." + std::string(key) + ": expected an array of strings");
      }
    }
    return out;
  }

  // Array of tables; `where` names each element as key[i].
  template <typename F>
  void each(const toml::table& t, std::string_view key, const std::string& where, F&& f) {
    const toml::node* n = t.get(key);
    if (!n) return;
    const toml::array* a = n->as_array();
    if (!a) {
      errors.push_back(where + std::string(key) + ": expected an array of tables");
      return;
    }
    std::size_t i = 0;
    for (const auto& v : *a) {
      const std::string at = where + std::string(key) + "[" + std::to_string(i++) + "]";
      if (const toml::table* e = v.as_table()) {
        f(*e, at);
      } else {
        errors.push_back(at + ": expected a table");
      }
    }
  }

  const toml::table* table(const toml::table& t, std::string_view key) {
    const toml::node* n = t.get(key);
    if (!n) return nullptr;
    if (!n->as_table()) errors.push_back(std::string(key) + ": expected a table");
    return n->as_table();
  }
};

FrameValue frame_value(const toml::node* n) {
  if (!n) return 0.0;
  if (auto b = n->value_exact<bool>()) return *b;
  if (auto s = n->value_exact<std::string>()) return *s;
  if (auto d = n->value<double>()) return *d;
  return 0.0;
}

bool segment_ok(const std::string& s) { return !s.empty() && Topic::valid(s) && s.find('/') == std::string::npos; }

Aggregation parse_aggregation(const std::string& text, const std::string& where, std::vector<std::string>& errors) {
  Aggregation a;
  if (text.empty() || text == "none") return a;
  const auto colon = text.find(':');
  const std::string mode = text.substr(0, colon);
  std::uint32_t size = 0;
  if (colon != std::string::npos) {
    try {
      size = static_cast<std::uint32_t>(std::stoul(text.substr(colon + 1)));
    } catch (const std::exception&) {
      size = 0;
    }
  }
  if ((mode != "batch" && mode != "window") || size == 0) {
    errors.push_back(where + ": aggregation must be none, batch:<n> or window:<m>, got '" + text + "'");
    return a;
  }
  a.mode = mode == "batch" ? Aggregation::Mode::Batch : Aggregation::Mode::Window;
  a.size = size;
  return a;
}

ScenarioConfig assemble(const toml::table& root, std::vector<std::string>& errors) {
  Reader r{errors};
  ScenarioConfig c;
  c.name = r.get<std::string>(root, "name", "scenario", "scenario");
  c.seed = static_cast<std::uint64_t>(r.get<std::int64_t>(root, "seed", "scenario", 42));
  const auto ticks = r.get<std::int64_t>(root, "ticks", "scenario", 200);
  if (ticks < 0) errors.push_back("scenario.ticks: must be >= 0");
  c.ticks = static_cast<Tick>(std::max<std::int64_t>(ticks, 0));
  const std::string mode = r.get<std::string>(root, "mode", "scenario", "centralized");
  try {
    c.mode = mode_from_string(mode);
  } catch (const Error&) {
    errors.push_back("scenario.mode: must be centralized or decentralized, got '" + mode + "'");
  }

  if (const toml::table* d = r.table(root, "domain")) {
    c.domain.name = r.get<std::string>(*d, "name", "domain", "");
    r.each(*d, "tasks", "domain.", [&](const toml::table& t, const std::string& at) {
      c.domain.tasks.push_back(TaskConfig{r.required<std::string>(t, "name", at),
                                          r.strings(t, "business_processes", at)});
    });
  }
  if (const toml::table* e = r.table(root, "edge")) {
    c.heartbeat.heartbeat_timeout =
        static_cast<Tick>(r.get<std::int64_t>(*e, "heartbeat_timeout", "edge", 15));
    c.heartbeat.offline_timeout = static_cast<Tick>(r.get<std::int64_t>(*e, "offline_timeout", "edge", 30));
    c.analytics.window_capacity =
        static_cast<std::size_t>(r.get<std::int64_t>(*e, "window_capacity", "edge", 20));
    c.analytics.z_threshold = r.get<double>(*e, "z_threshold", "edge", 3.0);
    c.analytics.anomaly_detection = r.get<bool>(*e, "anomaly_detection", "edge", true);
  }
  if (const toml::table* o = r.table(root, "orchestration")) {
    c.orchestration.ack_timeout = static_cast<Tick>(r.get<std::int64_t>(*o, "ack_timeout", "orchestration", 5));
    c.orchestration.summary_every =
        static_cast<Tick>(r.get<std::int64_t>(*o, "summary_every", "orchestration", 50));
  }
  if (const toml::table* f = r.table(root, "faults")) c.muted_loops = r.strings(*f, "mute_loops", "faults");

  r.each(root, "regions", "", [&](const toml::table& t, const std::string& at) {
    c.regions.push_back(RegionConfig{r.required<std::string>(t, "id", at), r.required<std::string>(t, "loop", at)});
  });
  r.each(root, "gateways", "", [&](const toml::table& t, const std::string& at) {
    GatewayConfig g;
    g.id = r.required<std::string>(t, "id", at);
    g.region = r.required<std::string>(t, "region", at);
    if (const toml::node* n = t.get("attached")) {
      if (const toml::array* a = n->as_array()) {
        for (const auto& v : *a) {
          if (auto id = v.value_exact<std::int64_t>()) {
            g.attached_devices.push_back(static_cast<std::uint32_t>(*id));
          } else {
            errors.push_back(at + ".attached: expected device ids");
          }
        }
      } else {
        errors.push_back(at + ".attached: expected an array of device ids");
      }
    }
    g.aggregation = parse_aggregation(r.get<std::string>(t, "aggregation", at, "none"), at, errors);
    c.gateways.push_back(std::move(g));
  });
  r.each(root, "signal_models", "", [&](const toml::table& t, const std::string& at) {
    c.signal_models.push_back(SignalModel{r.required<std::string>(t, "name", at), r.get<double>(t, "amplitude", at, 0.0)});
  });
  r.each(root, "things", "", [&](const toml::table& t, const std::string& at) {
    Thing th;
    th.id = r.required<std::string>(t, "id", at);
    th.kind = r.get<std::string>(t, "kind", at, "thing");
    th.region = r.required<std::string>(t, "region", at);
    r.each(t, "properties", at + ".", [&](const toml::table& p, const std::string& pat) {
      InterestingProperty prop;
      prop.name = r.required<std::string>(p, "name", pat);
      prop.unit = r.get<std::string>(p, "unit", pat, "");
      const std::string kind = r.get<std::string>(p, "kind", pat, "float");
      if (kind != "float" && kind != "bool" && kind != "text") {
        errors.push_back(pat + ".kind: must be float, bool or text, got '" + kind + "'");
      } else {
        prop.value_kind = value_kind_from_string(kind);
      }
      prop.composed_of = r.strings(p, "composed_of", pat);
      prop.initial = frame_value(p.get("initial"));
      if (!p.get("initial")) {
        if (prop.value_kind == ValueKind::Bool) prop.initial = false;
        if (prop.value_kind == ValueKind::Text) prop.initial = std::string{};
      }
      prop.drift = r.get<double>(p, "drift", pat, 0.0);
      prop.disturbance = r.get<double>(p, "disturbance", pat, 0.0);
      th.properties.push_back(std::move(prop));
    });
    c.things.push_back(std::move(th));
  });
  r.each(root, "devices", "", [&](const toml::table& t, const std::string& at) {
    Device d;
    d.id = static_cast<std::uint32_t>(r.required<std::int64_t>(t, "id", at));
    d.name = r.required<std::string>(t, "name", at);
    d.region = r.required<std::string>(t, "region", at);
    d.heartbeat_period = static_cast<Tick>(r.get<std::int64_t>(t, "heartbeat_period", at, 10));
    r.each(t, "sensors", at + ".", [&](const toml::table& s, const std::string& sat) {
      Sensor sensor;
      sensor.id = static_cast<std::uint16_t>(r.required<std::int64_t>(s, "id", sat));
      sensor.name = r.get<std::string>(s, "name", sat, "");
      sensor.thing = r.required<std::string>(s, "thing", sat);
      sensor.property = r.required<std::string>(s, "property", sat);
      const auto period = r.get<std::int64_t>(s, "period", sat, 1);
      if (period < 1) errors.push_back(sat + ".period: must be >= 1");
      sensor.period = static_cast<Tick>(std::max<std::int64_t>(period, 1));
      const std::string mode = r.get<std::string>(s, "mode", sat, "periodic");
      if (mode == "on-change") {
        sensor.mode = SampleMode::OnChange;
      } else if (mode != "periodic") {
        errors.push_back(sat + ".mode: must be periodic or on-change, got '" + mode + "'");
      }
      sensor.delta = r.get<double>(s, "delta", sat, 0.0);
      sensor.noise = r.get<std::string>(s, "noise", sat, "");
      if (sensor.name.empty()) sensor.name = sensor.property;
      d.sensors.push_back(std::move(sensor));
    });
    r.each(t, "actuators", at + ".", [&](const toml::table& s, const std::string& aat) {
      Actuator a;
      a.id = static_cast<std::uint16_t>(r.required<std::int64_t>(s, "id", aat));
      a.name = r.required<std::string>(s, "name", aat);
      a.thing = r.required<std::string>(s, "thing", aat);
      a.property = r.required<std::string>(s, "property", aat);
      const std::string effect = r.get<std::string>(s, "effect", aat, "rate");
      if (effect == "set") {
        a.effect = ActuatorEffect::Set;
      } else if (effect != "rate") {
        errors.push_back(aat + ".effect: must be rate or set, got '" + effect + "'");
      }
      a.rate = r.get<double>(s, "rate", aat, 0.0);
      d.actuators.push_back(std::move(a));
    });
    c.devices.push_back(std::move(d));
  });
  r.each(root, "rules", "", [&](const toml::table& t, const std::string& at) {
    c.rules.push_back(RuleConfig{r.required<std::string>(t, "id", at), r.required<std::string>(t, "text", at),
                                 r.get<bool>(t, "enabled", at, true)});
  });
  r.each(root, "services", "", [&](const toml::table& t, const std::string& at) {
    ServiceConfig s;
    s.name = r.required<std::string>(t, "name", at);
    const std::string kind = r.required<std::string>(t, "kind", at);
    if (kind == "device") {
      s.kind = ServiceConfig::Kind::Device;
    } else if (kind == "rules") {
      s.kind = ServiceConfig::Kind::Rules;
    } else if (kind == "analytics") {
      s.kind = ServiceConfig::Kind::Analytics;
    } else if (!kind.empty()) {
      errors.push_back(at + ".kind: must be device, rules or analytics, got '" + kind + "'");
    }
    s.device = r.get<std::string>(t, "device", at, "");
    s.resource = r.get<std::string>(t, "resource", at, "");
    if (const toml::node* v = t.get("value")) s.value = to_json(*v);
    s.rules = r.strings(t, "rules", at);
    s.enable = r.get<bool>(t, "enable", at, true);
    s.property = r.get<std::string>(t, "property", at, "");
    s.window = static_cast<std::uint32_t>(r.get<std::int64_t>(t, "window", at, 10));
    c.services.push_back(std::move(s));
  });
  r.each(root, "business_processes", "", [&](const toml::table& t, const std::string& at) {
    BusinessProcess bp;
    bp.name = r.required<std::string>(t, "name", at);
    r.each(t, "steps", at + ".", [&](const toml::table& s, const std::string& sat) {
      const auto tick = r.required<std::int64_t>(s, "at", sat);
      if (tick < 0) errors.push_back(sat + ".at: must be >= 0");
      bp.steps.push_back(ProcessStep{r.required<std::string>(s, "service", sat),
                                     static_cast<Tick>(std::max<std::int64_t>(tick, 0))});
    });
    c.processes.push_back(std::move(bp));
  });
  r.each(root, "users", "", [&](const toml::table& t, const std::string& at) {
    UserConfig u;
    u.name = r.required<std::string>(t, "name", at);
    u.email = r.required<std::string>(t, "email", at);
    if (const toml::node* p = t.get("preferences")) u.preferences = to_json(*p);
    u.subscriptions = r.strings(t, "subscriptions", at);
    c.users.push_back(std::move(u));
  });
  return c;
}

template <typename T, typename Key>
void check_unique(const std::vector<T>& items, Key key, const std::string& what, std::vector<std::string>& errors) {
  std::set<decltype(key(items.front()))> seen;
  for (const auto& item : items) {
    if (!seen.insert(key(item)).second) {
      std::ostringstream os;
      os << "duplicate " << what << " '" << key(item) << "'";
      errors.push_back(os.str());
    }
  }
}

}  // namespace

std::vector<std::string> validate(const ScenarioConfig& c) {
  std::vector<std::string> errors;
  std::set<std::string> regions;
  for (const auto& r : c.regions) {
    regions.insert(r.id);
    if (!segment_ok(r.id)) errors.push_back("region '" + r.id + "': id must match [a-z0-9_-]+");
    if (!segment_ok(r.loop)) errors.push_back("region '" + r.id + "': loop id '" + r.loop + "' must match [a-z0-9_-]+");
    if (r.loop == "global") errors.push_back("region '" + r.id + "': loop id 'global' is reserved");
  }
  if (!c.regions.empty()) {
    check_unique(c.regions, [](const RegionConfig& r) { return r.id; }, "region", errors);
    check_unique(c.regions, [](const RegionConfig& r) { return r.loop; }, "loop id", errors);
  } else {
    errors.push_back("scenario: at least one region is required");
  }
  auto known_region = [&](const std::string& region, const std::string& where) {
    if (!regions.count(region)) errors.push_back(where + ": unknown region '" + region + "'");
  };

  std::set<std::string> models;
  for (const auto& m : c.signal_models) {
    if (!models.insert(m.name).second) errors.push_back("duplicate signal model '" + m.name + "'");
    if (m.amplitude < 0) errors.push_back("signal model '" + m.name + "': amplitude must be >= 0");
  }

  std::map<std::string, const Thing*> things;
  for (const auto& t : c.things) {
    if (!things.emplace(t.id, &t).second) errors.push_back("duplicate thing '" + t.id + "'");
    known_region(t.region, "thing '" + t.id + "'");
    std::set<std::string> props;
    for (const auto& p : t.properties) {
      if (!props.insert(p.name).second) errors.push_back("thing '" + t.id + "': duplicate property '" + p.name + "'");
      if (!value_matches(p.value_kind, p.initial)) {
        errors.push_back("thing '" + t.id + "' property '" + p.name + "': initial value does not match its kind");
      }
    }
    for (const auto& p : t.properties) {
      for (const auto& member : p.composed_of) {
        if (!props.count(member) || member == p.name) {
          errors.push_back("thing '" + t.id + "' property '" + p.name + "': unknown member '" + member + "'");
        }
      }
    }
  }
  auto property = [&](const std::string& thing, const std::string& prop) -> const InterestingProperty* {
    auto it = things.find(thing);
    return it == things.end() ? nullptr : it->second->find(prop);
  };

  std::map<std::uint32_t, const Device*> devices;
  std::set<std::string> names;
  for (const auto& d : c.devices) {
    const std::string where = "device '" + d.name + "' (" + std::to_string(d.id) + ")";
    if (d.id == 0) errors.push_back(where + ": id must be positive");
    if (!devices.emplace(d.id, &d).second) errors.push_back("duplicate device id " + std::to_string(d.id));
    if (!names.insert(d.name).second) errors.push_back("duplicate device name '" + d.name + "'");
    if (!d.name.empty() && std::all_of(d.name.begin(), d.name.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
      errors.push_back(where + ": name must not be numeric");
    }
    known_region(d.region, where);
    std::set<std::uint16_t> resources;
    for (const auto& s : d.sensors) {
      const std::string sw = where + " sensor " + std::to_string(s.id);
      if (!resources.insert(s.id).second) errors.push_back(sw + ": duplicate resource id");
      const InterestingProperty* p = property(s.thing, s.property);
      if (!p) {
        errors.push_back(sw + ": unknown property '" + s.thing + "." + s.property + "'");
      } else if (things.at(s.thing)->region != d.region) {
        errors.push_back(sw + ": thing '" + s.thing + "' is in another region");
      }
      if (s.mode == SampleMode::OnChange && !(s.delta > 0)) errors.push_back(sw + ": on-change sensors need delta > 0");
      if (!s.noise.empty() && !models.count(s.noise)) errors.push_back(sw + ": unknown signal model '" + s.noise + "'");
    }
    for (const auto& a : d.actuators) {
      const std::string aw = where + " actuator " + std::to_string(a.id);
      if (!resources.insert(a.id).second) errors.push_back(aw + ": duplicate resource id");
      const InterestingProperty* p = property(a.thing, a.property);
      if (!p) {
        errors.push_back(aw + ": unknown property '" + a.thing + "." + a.property + "'");
      } else {
        if (a.effect == ActuatorEffect::Rate && p->value_kind != ValueKind::Float) {
          errors.push_back(aw + ": rate actuators need a float property");
        }
        if (!p->composed_of.empty()) errors.push_back(aw + ": cannot actuate a composed property");
      }
    }
  }

  std::set<std::string> gateways;
  std::map<std::uint32_t, std::string> attached_by;
  for (const auto& g : c.gateways) {
    if (!gateways.insert(g.id).second) errors.push_back("duplicate gateway '" + g.id + "'");
    known_region(g.region, "gateway '" + g.id + "'");
    for (std::uint32_t id : g.attached_devices) {
      auto it = devices.find(id);
      if (it == devices.end()) {
        errors.push_back("gateway '" + g.id + "': unknown device " + std::to_string(id));
        continue;
      }
      if (it->second->region != g.region) {
        errors.push_back("gateway '" + g.id + "': device " + std::to_string(id) + " is in another region");
      }
      auto [prev, fresh] = attached_by.emplace(id, g.id);
      if (!fresh) {
        errors.push_back("device " + std::to_string(id) + " is attached to both '" + prev->second + "' and '" + g.id + "'");
      }
    }
  }

  // Rules link against whatever registry can be built, so a broken device
  // model may add cascaded diagnostics but never hides a rule error.
  check_unique(c.rules, [](const RuleConfig& r) { return r.id; }, "rule", errors);
  Registry registry(c.things, c.devices, c.signal_models);
  std::set<std::string> rule_ids;
  for (const auto& rc : c.rules) {
    rule_ids.insert(rc.id);
    try {
      Rule rule = parse_rule(rc.text, rc.id);
      link_rule(rule, registry);
    } catch (const Error& e) {
      errors.push_back("rule '" + rc.id + "': " + std::string(to_string(e.code())) + ": " + e.what());
    }
  }

  std::set<std::string> services;
  for (const auto& s : c.services) {
    const std::string where = "service '" + s.name + "'";
    if (!services.insert(s.name).second) errors.push_back("duplicate service '" + s.name + "'");
    switch (s.kind) {
      case ServiceConfig::Kind::Device: {
        const Device* d = registry.resolve_device(s.device);
        if (!d) {
          errors.push_back(where + ": unknown device '" + s.device + "'");
          break;
        }
        auto info = registry.resolve_resource(*d, s.resource);
        if (!info || info->is_sensor) {
          errors.push_back(where + ": device '" + s.device + "' has no actuator '" + s.resource + "'");
          break;
        }
        try {
          if (!value_matches(info->value_kind, value_from_json(s.value))) {
            errors.push_back(where + ": value does not match the " + to_string(info->value_kind) + " actuator");
          }
        } catch (const std::exception&) {
          errors.push_back(where + ": unsupported value " + s.value.dump());
        }
        break;
      }
      case ServiceConfig::Kind::Rules:
        if (s.rules.empty()) errors.push_back(where + ": lists no rules");
        for (const auto& id : s.rules) {
          if (!rule_ids.count(id)) errors.push_back(where + ": unknown rule '" + id + "'");
        }
        break;
      case ServiceConfig::Kind::Analytics: {
        const auto dot = s.property.find('.');
        if (dot == std::string::npos || !registry.sensor_for(s.property.substr(0, dot), s.property.substr(dot + 1))) {
          errors.push_back(where + ": no sensor observes '" + s.property + "'");
        }
        if (s.window == 0) errors.push_back(where + ": window must be >= 1");
        break;
      }
    }
  }

  std::set<std::string> processes;
  for (const auto& bp : c.processes) {
    if (!processes.insert(bp.name).second) errors.push_back("duplicate business process '" + bp.name + "'");
    Tick last = 0;
    for (const auto& step : bp.steps) {
      if (!services.count(step.service)) {
        errors.push_back("business process '" + bp.name + "': unknown service '" + step.service + "'");
      }
      if (step.at < last) errors.push_back("business process '" + bp.name + "': steps must not go back in time");
      last = step.at;
    }
  }
  for (const auto& task : c.domain.tasks) {
    for (const auto& name : task.business_processes) {
      if (!processes.count(name)) {
        errors.push_back("task '" + task.name + "': unknown business process '" + name + "'");
      }
    }
  }

  std::set<std::string> emails;
  for (const auto& u : c.users) {
    if (u.email.find('@') == std::string::npos) errors.push_back("user '" + u.name + "': invalid email '" + u.email + "'");
    if (!emails.insert(u.email).second) errors.push_back("duplicate user email '" + u.email + "'");
    for (const auto& p : u.subscriptions) {
      const std::string root = p.substr(0, p.find('/'));
      if (!TopicPattern::valid(p) || (root != "notify" && root != "telemetry")) {
        errors.push_back("user '" + u.name + "': malformed subscription '" + p + "'");
      }
    }
  }
  std::set<std::string> loops;
  for (const auto& r : c.regions) loops.insert(r.loop);
  for (const auto& m : c.muted_loops) {
    if (!loops.count(m)) errors.push_back("faults.mute_loops: unknown loop '" + m + "'");
  }
  if (c.heartbeat.offline_timeout < c.heartbeat.heartbeat_timeout) {
    errors.push_back("edge: offline_timeout must be >= heartbeat_timeout");
  }
  if (c.analytics.window_capacity == 0) errors.push_back("edge.window_capacity: must be >= 1");
  if (!(c.analytics.z_threshold > 0)) errors.push_back("edge.z_threshold: must be > 0");
  return errors;
}

std::vector<Rule> build_rules(const ScenarioConfig& config, const Registry& registry) {
  std::vector<Rule> out;
  for (const auto& rc : config.rules) {
    Rule rule = parse_rule(rc.text, rc.id);
    link_rule(rule, registry);
    rule.enabled = rc.enabled;
    out.push_back(std::move(rule));
  }
  return out;
}

ScenarioConfig parse_config_string(const std::string& text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    throw ConfigParseError(e.source().begin.line, e.source().begin.column, std::string(e.description()));
  }
  std::vector<std::string> errors;
  ScenarioConfig config = assemble(root, errors);
  for (auto& e : validate(config)) errors.push_back(std::move(e));
  if (!errors.empty()) throw ValidationErrors(std::move(errors));
  return config;
}

ScenarioConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_string(ss.str(), path);
}

}  // namespace iotarch
