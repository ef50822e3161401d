#include "iotarch/edge_node.hpp"

#include <algorithm>
#include <cmath>

#include "iotarch/error.hpp"

namespace iotarch {

std::string to_string(DeviceStatus status) {
  switch (status) {
    case DeviceStatus::Online: return "online";
    case DeviceStatus::Stale: return "stale";
    case DeviceStatus::Offline: return "offline";
  }
  return "online";
}

DeviceStatus status_for(Tick now, Tick last_seen, const HeartbeatPolicy& policy) noexcept {
  const Tick age = now > last_seen ? now - last_seen : 0;
  if (age <= policy.heartbeat_timeout) return DeviceStatus::Online;
  if (age <= policy.offline_timeout) return DeviceStatus::Stale;
  return DeviceStatus::Offline;
}

DeviceManager::DeviceManager(const Registry& registry, std::string region, HeartbeatPolicy policy)
    : policy_(policy) {
  for (const auto& dev : registry.devices()) {
    if (dev.region != region) continue;
    DeviceRecord r;
    r.device_id = dev.id;
    r.name = dev.name;
    r.region = dev.region;
    for (const auto& s : dev.sensors) {
      if (auto info = registry.resource(dev.id, s.id)) r.resources.push_back(*info);
    }
    for (const auto& a : dev.actuators) {
      if (auto info = registry.resource(dev.id, a.id)) r.resources.push_back(*info);
    }
    records_.emplace(dev.id, std::move(r));
  }
}

void DeviceManager::seen(std::uint32_t device, Tick tick) {
  auto it = records_.find(device);
  if (it != records_.end()) it->second.last_seen = std::max(it->second.last_seen, tick);
}

std::vector<std::uint32_t> DeviceManager::refresh(Tick now) {
  std::vector<std::uint32_t> went_offline;
  for (auto& [id, r] : records_) {
    const DeviceStatus next = status_for(now, r.last_seen, policy_);
    if (next == DeviceStatus::Offline && r.status != DeviceStatus::Offline) went_offline.push_back(id);
    r.status = next;
  }
  return went_offline;
}

std::vector<DeviceRecord> DeviceManager::device_status(Tick now) const {
  std::vector<DeviceRecord> out;
  for (const auto& [id, r] : records_) {
    DeviceRecord copy = r;
    copy.status = status_for(now, r.last_seen, policy_);
    out.push_back(std::move(copy));
  }
  return out;
}

std::string to_string(SymptomKind kind) {
  switch (kind) {
    case SymptomKind::RuleViolation: return "rule-violation";
    case SymptomKind::Anomaly: return "anomaly";
    case SymptomKind::DeviceOffline: return "device-offline";
  }
  return "rule-violation";
}

SymptomKind symptom_kind_from_string(const std::string& text) {
  if (text == "rule-violation") return SymptomKind::RuleViolation;
  if (text == "anomaly") return SymptomKind::Anomaly;
  if (text == "device-offline") return SymptomKind::DeviceOffline;
  throw Error(Errc::BadRequest, "unknown symptom kind '" + text + "'");
}

Json Symptom::to_json() const {
  Json ev = Json::array();
  for (const auto& e : evidence) ev.push_back(Json{{"key", e.key}, {"value", e.value}, {"tick", e.tick}});
  return Json{{"id", id},     {"kind", to_string(kind)}, {"source", source}, {"scope", scope},
              {"evidence", ev}, {"detectedAt", detected_at}, {"z", z}};
}

Symptom Symptom::from_json(const Json& j) {
  Symptom s;
  s.id = j.at("id").get<std::string>();
  s.kind = symptom_kind_from_string(j.at("kind").get<std::string>());
  s.source = j.at("source").get<std::string>();
  s.scope = j.at("scope").get<std::set<std::string>>();
  for (const auto& e : j.at("evidence")) {
    s.evidence.push_back(Evidence{e.at("key").get<std::string>(), e.at("value").get<double>(),
                                  e.at("tick").get<Tick>()});
  }
  s.detected_at = j.at("detectedAt").get<Tick>();
  s.z = j.value("z", 0.0);
  return s;
}

double operand_value(const Operand& op, const RuleLink& link, const SeriesMap& series) {
  auto key = link.operands.find(op.path());
  if (key == link.operands.end()) throw Error(Errc::UnresolvedReference, op.path() + " is not linked");
  auto it = series.find(key->second);
  if (it == series.end() || it->second.empty()) {
    throw Error(Errc::MissingData, "no samples for " + op.path());
  }
  const SeriesWindow& w = it->second;
  switch (op.aggregate) {
    case Aggregate::None: return w.latest().second;
    case Aggregate::Mean: return window_stats(w, op.window).mean;
    case Aggregate::Min: return window_stats(w, op.window).min;
    case Aggregate::Max: return window_stats(w, op.window).max;
    case Aggregate::Stddev: return window_stats(w, op.window).stddev;
    case Aggregate::Ewma: return ewma(w, 2.0 / (static_cast<double>(op.window) + 1.0), op.window);
  }
  return w.latest().second;
}

bool evaluate_condition(const Condition& cond, const RuleLink& link, const SeriesMap& series) {
  switch (cond.kind) {
    case Condition::Kind::And:
      return evaluate_condition(cond.children[0], link, series) &&
             evaluate_condition(cond.children[1], link, series);
    case Condition::Kind::Or:
      return evaluate_condition(cond.children[0], link, series) ||
             evaluate_condition(cond.children[1], link, series);
    case Condition::Kind::Compare: break;
  }
  const double v = operand_value(cond.compare.lhs, link, series);
  const double rhs = cond.compare.rhs;
  switch (cond.compare.op) {
    case Comparator::Gt: return v > rhs;
    case Comparator::Ge: return v >= rhs;
    case Comparator::Lt: return v < rhs;
    case Comparator::Le: return v <= rhs;
    case Comparator::Eq: return v == rhs;
    case Comparator::Ne: return v != rhs;
  }
  return false;
}

namespace {

void collect_evidence(const Condition& c, const RuleLink& link, const SeriesMap& series,
                      std::vector<Evidence>& out) {
  if (c.kind != Condition::Kind::Compare) {
    for (const auto& child : c.children) collect_evidence(child, link, series, out);
    return;
  }
  const Operand& op = c.compare.lhs;
  std::string key = op.aggregate == Aggregate::None
                        ? op.path()
                        : to_string(op.aggregate) + "(" + op.path() + "," + std::to_string(op.window) + ")";
  if (std::any_of(out.begin(), out.end(), [&](const Evidence& e) { return e.key == key; })) return;
  const auto& w = series.at(link.operands.at(op.path()));
  out.push_back(Evidence{key, operand_value(op, link, series), w.latest().first});
}

}  // namespace

void RuleEngine::install(Rule rule) {
  if (!rule.link.linked) throw Error(Errc::UnresolvedReference, "rule " + rule.id + " is not linked");
  remove(rule.id);
  rules_.push_back(std::move(rule));
}

bool RuleEngine::remove(const std::string& id) {
  auto it = std::find_if(rules_.begin(), rules_.end(), [&](const Rule& r) { return r.id == id; });
  if (it == rules_.end()) return false;
  rules_.erase(it);
  streaks_.erase(id);
  return true;
}

bool RuleEngine::set_enabled(const std::string& id, bool enabled) {
  auto it = std::find_if(rules_.begin(), rules_.end(), [&](const Rule& r) { return r.id == id; });
  if (it == rules_.end()) return false;
  it->enabled = enabled;
  if (!enabled) streaks_.erase(id);
  return true;
}

const Rule* RuleEngine::find(const std::string& id) const {
  auto it = std::find_if(rules_.begin(), rules_.end(), [&](const Rule& r) { return r.id == id; });
  return it == rules_.end() ? nullptr : &*it;
}

std::optional<Symptom> RuleEngine::evaluate_rule(const Rule& rule, const SeriesMap& series, Tick tick) {
  Streak& streak = streaks_[rule.id];
  bool holds = false;
  try {
    holds = evaluate_condition(rule.condition, rule.link, series);
  } catch (const Error& e) {
    streak.length = 0;
    throw;
  }
  if (!holds) {
    streak.length = 0;
    return std::nullopt;
  }
  if (streak.length > 0 && streak.last_true + 1 == tick) {
    ++streak.length;
  } else if (!(streak.length > 0 && streak.last_true == tick)) {
    streak.length = 1;
  }
  streak.last_true = tick;
  const std::uint32_t needed = std::max<std::uint32_t>(rule.for_ticks, 1);
  if (streak.length < needed) return std::nullopt;

  Symptom s;
  s.kind = SymptomKind::RuleViolation;
  s.source = rule.id;
  s.scope = rule.link.regions;
  s.detected_at = tick;
  collect_evidence(rule.condition, rule.link, series, s.evidence);
  return s;
}

std::vector<Symptom> RuleEngine::evaluate_all(const SeriesMap& series, Tick tick) {
  std::vector<Symptom> out;
  for (const auto& rule : rules_) {
    if (!rule.enabled) continue;
    try {
      if (auto s = evaluate_rule(rule, series, tick)) out.push_back(std::move(*s));
    } catch (const Error& e) {
      if (e.code() != Errc::MissingData) throw;
      ++skipped_;
    }
  }
  return out;
}

EdgeNode::EdgeNode(const Registry& registry, std::string region, HeartbeatPolicy heartbeat,
                   AnalyticsConfig analytics)
    : registry_(registry),
      region_(region),
      devices_(registry, region, heartbeat),
      analytics_(analytics) {}

std::optional<Symptom> EdgeNode::ingest(std::uint32_t device, const std::string& property, Tick tick,
                                        double value) {
  SeriesKey key{device, property};
  auto it = series_.find(key);
  if (it == series_.end()) it = series_.emplace(key, SeriesWindow(key, analytics_.window_capacity)).first;
  std::optional<Symptom> out;
  if (analytics_.anomaly_detection) {
    if (it->second.size() < kMinAnomalySamples || window_stats(it->second, it->second.size()).stddev == 0.0) {
      ++anomaly_skipped_;
    } else if (auto score = detect_anomaly(it->second, analytics_.z_threshold, value)) {
      Symptom s;
      s.kind = SymptomKind::Anomaly;
      s.source = "zscore";
      s.scope = {region_};
      s.detected_at = tick;
      s.z = score->z;
      s.evidence.push_back(Evidence{std::to_string(device) + "/" + property, value, tick});
      out = std::move(s);
    }
  }
  it->second.push(tick, value);
  devices_.seen(device, tick);
  return out;
}

std::optional<WindowStats> EdgeNode::stats(std::uint32_t device, const std::string& property,
                                           std::size_t n) const {
  auto it = series_.find(SeriesKey{device, property});
  if (it == series_.end() || it->second.empty()) return std::nullopt;
  return window_stats(it->second, n);
}

}  // namespace iotarch
