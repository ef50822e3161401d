#include "iotarch/orchestration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "iotarch/error.hpp"

namespace iotarch {

std::string to_string(Mode mode) {
  return mode == Mode::Centralized ? "centralized" : "decentralized";
}

Mode mode_from_string(const std::string& text) {
  if (text == "centralized") return Mode::Centralized;
  if (text == "decentralized") return Mode::Decentralized;
  throw Error(Errc::BadRequest, "mode must be centralized or decentralized, got '" + text + "'");
}

std::string to_string(Action::Kind kind) {
  switch (kind) {
    case Action::Kind::DeviceCommand: return "device-command";
    case Action::Kind::Notify: return "notify";
    case Action::Kind::RuleToggle: return "rule-toggle";
  }
  return "notify";
}

namespace {

Action::Kind action_kind_from_string(const std::string& text) {
  if (text == "device-command") return Action::Kind::DeviceCommand;
  if (text == "notify") return Action::Kind::Notify;
  if (text == "rule-toggle") return Action::Kind::RuleToggle;
  throw Error(Errc::BadRequest, "unknown action kind '" + text + "'");
}

Severity severity_from_string(const std::string& text) {
  if (text == "info") return Severity::Info;
  if (text == "warn") return Severity::Warn;
  if (text == "critical") return Severity::Critical;
  throw Error(Errc::BadRequest, "unknown severity '" + text + "'");
}

std::vector<std::string> symptom_ids(const std::vector<Symptom>& symptoms) {
  std::vector<std::string> ids;
  for (const auto& s : symptoms) ids.push_back(s.id);
  return ids;
}

bool same_effect(const Action& a, const Action& b) {
  return a.kind == b.kind && a.region == b.region && a.device == b.device && a.resource == b.resource &&
         a.topic == b.topic && a.target_rule == b.target_rule && a.value == b.value && a.message == b.message;
}

}  // namespace

Json Action::to_json() const {
  return Json{{"id", id},
              {"kind", to_string(kind)},
              {"region", region},
              {"deviceId", device},
              {"resourceId", resource},
              {"topic", topic},
              {"targetRule", target_rule},
              {"value", value},
              {"message", message},
              {"rule", rule},
              {"priority", priority}};
}

Action Action::from_json(const Json& j) {
  Action a;
  a.id = j.value("id", std::string{});
  a.kind = action_kind_from_string(j.at("kind").get<std::string>());
  a.region = j.at("region").get<std::string>();
  a.device = j.value("deviceId", std::uint32_t{0});
  a.resource = j.value("resourceId", std::uint16_t{0});
  a.topic = j.value("topic", std::string{});
  a.target_rule = j.value("targetRule", std::string{});
  a.value = j.value("value", Json{});
  a.message = j.value("message", std::string{});
  a.rule = j.value("rule", std::string{});
  a.priority = j.value("priority", std::int64_t{0});
  return a;
}

Action action_for_rule(const Rule& rule) {
  Action a;
  a.rule = rule.id;
  a.priority = rule.priority;
  a.region = rule.link.home_region;
  switch (rule.action.kind) {
    case RuleAction::Kind::Set:
      a.kind = Action::Kind::DeviceCommand;
      a.device = rule.link.target->device_id;
      a.resource = rule.link.target->resource_id;
      a.region = rule.link.target->region;
      a.value = value_to_json(rule.action.value);
      break;
    case RuleAction::Kind::Notify:
      a.kind = Action::Kind::Notify;
      a.topic = rule.action.topic;
      a.message = rule.action.message;
      break;
    case RuleAction::Kind::Escalate:
      a.kind = Action::Kind::Notify;
      a.topic = "escalations";
      a.message = rule.action.message;
      break;
  }
  return a;
}

void order_actions(std::vector<Action>& actions) {
  std::stable_sort(actions.begin(), actions.end(), [](const Action& a, const Action& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.rule < b.rule;
  });
}

std::string to_string(Severity severity) {
  switch (severity) {
    case Severity::Info: return "info";
    case Severity::Warn: return "warn";
    case Severity::Critical: return "critical";
  }
  return "info";
}

Severity severity_for(const std::vector<Symptom>& symptoms, double z_threshold) {
  if (symptoms.empty()) return Severity::Info;
  for (const auto& s : symptoms) {
    if (s.kind == SymptomKind::DeviceOffline) return Severity::Critical;
    if (s.kind == SymptomKind::Anomaly && std::abs(s.z) > 2.0 * z_threshold) return Severity::Critical;
  }
  return Severity::Warn;
}

Json AnalysisReport::to_json() const {
  Json syms = Json::array();
  for (const auto& s : symptoms) syms.push_back(s.to_json());
  return Json{{"id", id},         {"loop", loop},
              {"tick", tick},     {"symptoms", syms},
              {"matchedRules", matched_rules}, {"severity", to_string(severity)},
              {"scope", scope}};
}

AnalysisReport AnalysisReport::from_json(const Json& j) {
  AnalysisReport r;
  r.id = j.at("id").get<std::string>();
  r.loop = j.at("loop").get<std::string>();
  r.tick = j.at("tick").get<Tick>();
  for (const auto& s : j.at("symptoms")) r.symptoms.push_back(Symptom::from_json(s));
  r.matched_rules = j.at("matchedRules").get<std::vector<std::string>>();
  r.severity = severity_from_string(j.at("severity").get<std::string>());
  r.scope = j.at("scope").get<std::set<std::string>>();
  return r;
}

Json Plan::to_json() const {
  Json acts = Json::array();
  for (const auto& a : actions) acts.push_back(a.to_json());
  return Json{{"id", id},         {"origin", origin},     {"actions", acts},
              {"scope", scope},   {"cause", cause},       {"priority", priority},
              {"createdAt", created_at}, {"severity", to_string(severity)}, {"shared", shared},
              {"involved", involved}};
}

Plan Plan::from_json(const Json& j) {
  Plan p;
  p.id = j.at("id").get<std::string>();
  p.origin = j.at("origin").get<std::string>();
  for (const auto& a : j.at("actions")) p.actions.push_back(Action::from_json(a));
  p.scope = j.at("scope").get<std::set<std::string>>();
  p.cause = j.at("cause").get<std::vector<std::string>>();
  p.priority = j.at("priority").get<std::int64_t>();
  p.created_at = j.at("createdAt").get<Tick>();
  p.severity = severity_from_string(j.value("severity", std::string{"warn"}));
  p.shared = j.value("shared", false);
  p.involved = j.value("involved", std::vector<std::string>{});
  return p;
}

void Plan::finalize() {
  if (actions.empty()) throw Error(Errc::BadRequest, "plan " + id + " has no actions");
  priority = actions.front().priority;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (!scope.count(actions[i].region)) {
      throw Error(Errc::BadRequest, "plan " + id + ": action region " + actions[i].region + " outside scope");
    }
    actions[i].id = id + "/a" + std::to_string(i);
    priority = std::max(priority, actions[i].priority);
  }
}

std::string elect_coordinator(const std::string& plan_id, const std::set<std::string>& involved) {
  if (involved.empty()) throw Error(Errc::BadRequest, "plan " + plan_id + " involves no loops");
  return *involved.begin();
}

std::vector<std::vector<std::size_t>> group_by_scope(const std::vector<std::set<std::string>>& scopes) {
  std::vector<std::size_t> parent(scopes.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  std::map<std::string, std::size_t> owner;
  for (std::size_t i = 0; i < scopes.size(); ++i) {
    for (const auto& region : scopes[i]) {
      auto [it, fresh] = owner.emplace(region, i);
      if (!fresh) {
        const std::size_t a = find(it->second), b = find(i);
        parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::size_t, std::size_t> index;
  for (std::size_t i = 0; i < scopes.size(); ++i) {
    const std::size_t root = find(i);
    auto [it, fresh] = index.emplace(root, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  return groups;
}

MapeLoop::MapeLoop(std::string id, std::string region, Mode mode, Kernel& kernel, Broker& broker,
                   EdgeNode& edge, const Registry& registry, OrchestrationConfig config,
                   Reachability reachable)
    : id_(std::move(id)),
      region_(std::move(region)),
      mode_(mode),
      kernel_(kernel),
      broker_(broker),
      edge_(edge),
      registry_(registry),
      config_(config),
      reachable_(std::move(reachable)),
      kb_(id_) {}

RuleOwner MapeLoop::owner(const std::string& rule) const {
  auto it = owners_.find(rule);
  return it == owners_.end() ? RuleOwner::Edge : it->second;
}

void MapeLoop::start(std::map<std::string, std::string> loops_by_region) {
  loops_by_region_ = std::move(loops_by_region);
  const std::string me = "loop/" + id_;
  auto buffer = [this](std::vector<Envelope> Inboxes::*box) {
    return [this, box](const Envelope& e) { (phases_.*box).push_back(e); };
  };
  broker_.subscribe(me, "telemetry/" + region_ + "/#", [this](const Envelope& e) { inbox_.push_back(e); });
  broker_.subscribe(me, "status/" + region_ + "/#", [this](const Envelope& e) { inbox_.push_back(e); });
  broker_.subscribe(me, "kb/" + id_ + "/symptoms", buffer(&Inboxes::symptoms));
  broker_.subscribe(me, "kb/" + id_ + "/reports", buffer(&Inboxes::reports));
  broker_.subscribe(me, "plans/" + region_, buffer(&Inboxes::plans));
  if (mode_ == Mode::Centralized) {
    broker_.subscribe(me, "plans/global/" + region_, buffer(&Inboxes::global_plans));
  } else {
    broker_.subscribe(me, "plans/shared", buffer(&Inboxes::shared));
    broker_.subscribe(me, "coord/" + id_ + "/assign", buffer(&Inboxes::assignments));
    broker_.subscribe(me, "coord/" + id_ + "/acks", buffer(&Inboxes::acks));
  }
}

void MapeLoop::mape_record(const std::string& phase, Json body) {
  ++counters_[phase];
  body["loop"] = id_;
  body["phase"] = phase;
  kernel_.record("loop/" + id_, "mape", std::move(body));
}

void MapeLoop::on_tick(Tick tick) {
  Inboxes box = std::exchange(phases_, Inboxes{});

  monitor_step(tick);

  if (!box.symptoms.empty()) {
    for (const auto& e : box.symptoms) unconsumed_.push_back(Symptom::from_json(e.body));
    if (auto report = analyse_step()) {
      kb_.write("reports/" + report->id, report->to_json(), tick, id_ + "/analyse");
      broker_.publish("kb/" + id_ + "/reports", "report/1", id_, report->to_json());
    }
  }
  for (const auto& e : box.reports) plan_step(AnalysisReport::from_json(e.body));
  for (const auto& e : box.global_plans) on_global_plan(e);
  for (const auto& e : box.plans) on_plan(e);
  for (const auto& e : box.shared) on_shared_plan(e);
  for (const auto& e : box.assignments) on_assignment(e);
  for (const auto& e : box.acks) on_ack(e);
  check_timeouts(tick);

  if (mode_ == Mode::Centralized && config_.summary_every > 0 && tick > 0 && tick % config_.summary_every == 0) {
    Json devices = Json::object();
    for (const auto& d : edge_.devices().device_status(tick)) {
      devices[std::to_string(d.device_id)] = to_string(d.status);
    }
    broker_.publish("summaries/" + region_, "summary/1", id_,
                    Json{{"region", region_}, {"loop", id_}, {"tick", tick}, {"counters", counters_},
                         {"devices", devices}});
  }
}

void MapeLoop::monitor_step(Tick tick) {
  std::vector<Envelope> delivered = std::exchange(inbox_, {});
  std::vector<Symptom> found;
  std::size_t samples = 0;
  for (const auto& e : delivered) {
    const Json& b = e.body;
    const auto device = b.at("deviceId").get<std::uint32_t>();
    const auto ts = b.at("ts").get<Tick>();
    if (e.schema == "heartbeat/1") {
      edge_.seen(device, ts);
      continue;
    }
    const std::string property = b.at("property").get<std::string>();
    ++samples;
    kb_.write("series/" + std::to_string(device) + "/" + property, Json{{"value", b.at("value")}, {"ts", ts}},
              tick, id_ + "/monitor");
    if (b.at("value").is_number()) {
      if (auto anomaly = edge_.ingest(device, property, ts, b.at("value").get<double>())) {
        anomaly->detected_at = tick;
        found.push_back(std::move(*anomaly));
      }
    } else {
      edge_.seen(device, ts);
    }
  }
  if (samples > 0) {
    for (auto& s : edge_.rules().evaluate_all(edge_.series(), tick)) found.push_back(std::move(s));
  }
  for (std::uint32_t device : edge_.devices().refresh(tick)) {
    Symptom s;
    s.kind = SymptomKind::DeviceOffline;
    s.source = "heartbeat";
    s.scope = {region_};
    s.detected_at = tick;
    s.evidence.push_back(Evidence{"device/" + std::to_string(device), 0.0, tick});
    found.push_back(std::move(s));
  }
  if (delivered.empty() && found.empty()) return;
  Json ids = Json::array();
  for (auto& s : found) {
    s.id = id_ + "-s" + std::to_string(next_symptom_++);
    ids.push_back(s.id);
    emit_symptom(std::move(s), tick);
  }
  mape_record("monitor", Json{{"samples", samples}, {"symptoms", ids}});
}

void MapeLoop::emit_symptom(Symptom symptom, Tick tick) {
  kb_.write("symptoms/" + symptom.id, symptom.to_json(), tick, id_ + "/monitor");
  broker_.publish("kb/" + id_ + "/symptoms", "symptom/1", id_, symptom.to_json());
}

std::optional<AnalysisReport> MapeLoop::analyse_step() {
  if (unconsumed_.empty()) return std::nullopt;
  AnalysisReport r;
  r.id = id_ + "-r" + std::to_string(next_report_++);
  r.loop = id_;
  r.tick = kernel_.now();
  r.symptoms = std::move(unconsumed_);
  unconsumed_.clear();
  for (const auto& s : r.symptoms) {
    r.scope.insert(s.scope.begin(), s.scope.end());
    if (s.kind != SymptomKind::RuleViolation || !edge_.rules().find(s.source)) continue;
    if (std::find(r.matched_rules.begin(), r.matched_rules.end(), s.source) == r.matched_rules.end()) {
      r.matched_rules.push_back(s.source);
    }
  }
  r.severity = severity_for(r.symptoms, edge_.analytics().z_threshold);
  mape_record("analyse", Json{{"report", r.id},
                              {"symptoms", symptom_ids(r.symptoms)},
                              {"severity", to_string(r.severity)},
                              {"scope", r.scope}});
  return r;
}

std::vector<Action> MapeLoop::actions_for(const std::vector<std::string>& rules) const {
  std::vector<Action> out;
  for (const auto& id : rules) {
    if (owner(id) == RuleOwner::Cloud) continue;
    const Rule* rule = edge_.rules().find(id);
    if (!rule) continue;
    Action a = action_for_rule(*rule);
    if (std::none_of(out.begin(), out.end(), [&](const Action& b) { return same_effect(a, b); })) {
      out.push_back(std::move(a));
    }
  }
  order_actions(out);
  return out;
}

Plan MapeLoop::notify_plan(const AnalysisReport& report, const std::string& why) const {
  Plan p;
  p.origin = id_;
  p.scope = {region_};
  p.cause = symptom_ids(report.symptoms);
  p.created_at = kernel_.now();
  p.severity = report.severity;
  std::string kinds;
  for (const auto& s : report.symptoms) {
    const std::string k = to_string(s.kind);
    if (kinds.find(k) == std::string::npos) kinds += (kinds.empty() ? "" : ",") + k;
  }
  Action a;
  a.kind = Action::Kind::Notify;
  a.region = region_;
  a.topic = "symptoms";
  a.message = to_string(report.severity) + ": " + std::to_string(report.symptoms.size()) + " symptom(s) [" +
              kinds + "] " + why;
  p.actions.push_back(std::move(a));
  return p;
}

void MapeLoop::plan_step(const AnalysisReport& report) {
  if (report.symptoms.empty()) return;
  const Tick now = kernel_.now();
  const bool local_scope = report.scope.size() <= 1 && (report.scope.empty() || *report.scope.begin() == region_);
  bool escalate_rule = false;
  for (const auto& id : report.matched_rules) {
    const Rule* rule = edge_.rules().find(id);
    if (rule && owner(id) == RuleOwner::Edge && rule->action.kind == RuleAction::Kind::Escalate) {
      escalate_rule = true;
    }
  }
  std::vector<Action> actions = actions_for(report.matched_rules);

  if (mode_ == Mode::Centralized && (!local_scope || escalate_rule)) {
    Json candidates = Json::array();
    for (const auto& a : actions) candidates.push_back(a.to_json());
    broker_.publish("plans/escalations", "escalation/1", id_,
                    Json{{"report", report.to_json()}, {"candidateActions", candidates}, {"origin", id_},
                         {"region", region_}});
    kb_.write("escalations/" + report.id, Json{{"report", report.id}, {"candidates", candidates.size()}}, now,
              id_ + "/plan");
    mape_record("plan", Json{{"report", report.id}, {"route", "escalated"}, {"plan", nullptr},
                             {"scope", report.scope}, {"actions", actions.size()}});
    return;
  }

  Plan p;
  std::string route = "local";
  if (actions.empty()) {
    p = notify_plan(report, "without applicable action");
  } else {
    p.origin = id_;
    p.actions = std::move(actions);
    p.cause = symptom_ids(report.symptoms);
    p.created_at = now;
    p.severity = report.severity;
    p.scope = local_scope ? std::set<std::string>{region_} : report.scope;
    for (const auto& a : p.actions) p.scope.insert(a.region);
  }
  p.id = id_ + "-p" + std::to_string(next_plan_++);
  if (p.scope.size() > 1) {
    route = "shared";
    p.shared = true;
    for (const auto& region : p.scope) {
      auto it = loops_by_region_.find(region);
      if (it == loops_by_region_.end()) throw Error(Errc::UnknownLoop, "no loop for region " + region);
      p.involved.push_back(it->second);
    }
    std::sort(p.involved.begin(), p.involved.end());
  }
  p.finalize();
  kb_.write("plans/" + p.id, p.to_json(), now, id_ + "/plan");
  broker_.publish(p.shared ? "plans/shared" : "plans/" + region_, "plan/1", id_, p.to_json());
  mape_record("plan", Json{{"report", report.id}, {"route", route}, {"plan", p.id}, {"scope", p.scope},
                           {"actions", p.actions.size()}});
}

ActionOutcome MapeLoop::dispatch(const Plan& plan, const Action& action) {
  ActionOutcome out{action.id, true, {}};
  try {
    switch (action.kind) {
      case Action::Kind::DeviceCommand: {
        if (!registry_.device(action.device)) {
          throw Error(Errc::UnknownDevice, "no device " + std::to_string(action.device));
        }
        if (reachable_ && !reachable_(action.device)) {
          throw Error(Errc::DispatchFailure, "device " + std::to_string(action.device) + " is unattached");
        }
        broker_.publish("commands/" + std::to_string(action.device), "command/1", id_,
                        Json{{"commandId", action.id},
                             {"deviceId", action.device},
                             {"resourceId", action.resource},
                             {"value", action.value},
                             {"planId", plan.id},
                             {"cause", plan.cause},
                             {"origin", plan.origin}});
        break;
      }
      case Action::Kind::Notify:
        broker_.publish("notify/" + action.topic, "notify/1", id_,
                        Json{{"message", action.message},
                             {"planId", plan.id},
                             {"cause", plan.cause},
                             {"severity", to_string(plan.severity)},
                             {"region", action.region}});
        break;
      case Action::Kind::RuleToggle: {
        const bool enabled = action.value.is_boolean() ? action.value.get<bool>() : true;
        if (!edge_.rules().set_enabled(action.target_rule, enabled)) {
          throw Error(Errc::UnknownRule, "no rule " + action.target_rule + " at " + id_);
        }
        kernel_.record("loop/" + id_, "rule-state", Json{{"rule", action.target_rule}, {"enabled", enabled}});
        break;
      }
    }
  } catch (const Error& e) {
    out.ok = false;
    out.error = std::string(to_string(e.code())) + ": " + e.what();
  }
  Json body{{"action", action.id}, {"plan", plan.id},   {"kind", to_string(action.kind)},
            {"region", action.region}, {"outcome", out.ok ? "ok" : "failed"}};
  if (!out.ok) body["error"] = out.error;
  kernel_.record("loop/" + id_, "act", std::move(body));
  return out;
}

namespace {

Json outcomes_json(const std::vector<ActionOutcome>& outcomes) {
  Json arr = Json::array();
  for (const auto& o : outcomes) {
    Json j{{"action", o.action}, {"ok", o.ok}};
    if (!o.ok) j["error"] = o.error;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<ActionOutcome> outcomes_from_json(const Json& arr) {
  std::vector<ActionOutcome> out;
  for (const auto& j : arr) {
    out.push_back(ActionOutcome{j.at("action").get<std::string>(), j.at("ok").get<bool>(),
                                j.value("error", std::string{})});
  }
  return out;
}

}  // namespace

std::vector<ActionOutcome> MapeLoop::execute_step(const Plan& plan, bool all_regions) {
  std::vector<ActionOutcome> outcomes;
  for (const auto& a : plan.actions) {
    if (!all_regions && a.region != region_) continue;
    outcomes.push_back(dispatch(plan, a));
  }
  return outcomes;
}

void MapeLoop::complete(const Plan& plan, const std::vector<ActionOutcome>& outcomes,
                        const std::string& status, Json extra) {
  Json body{{"plan", plan.id}, {"status", status}, {"outcomes", outcomes_json(outcomes)}};
  for (auto& [k, v] : extra.items()) body[k] = v;
  kb_.write("plans/" + plan.id + "/completion", body, kernel_.now(), id_ + "/execute");
  body.erase("outcomes");
  body["actions"] = outcomes.size();
  body["failed"] = std::count_if(outcomes.begin(), outcomes.end(), [](const ActionOutcome& o) { return !o.ok; });
  mape_record("execute", std::move(body));
}

void MapeLoop::on_plan(const Envelope& env) {
  Plan plan = Plan::from_json(env.body);
  if (!executed_.insert(plan.id).second) {
    kernel_.record("loop/" + id_, "dup", Json{{"plan", plan.id}});
    return;
  }
  complete(plan, execute_step(plan), "complete");
}

void MapeLoop::on_global_plan(const Envelope& env) {
  // The processing node forwards cloud plans to its own loop's Execute.
  broker_.publish("plans/" + region_, "plan/1", id_, env.body);
  mape_record("relay", Json{{"plan", env.body.at("id")}});
}

void MapeLoop::on_shared_plan(const Envelope& env) {
  Plan plan = Plan::from_json(env.body);
  if (std::find(plan.involved.begin(), plan.involved.end(), id_) == plan.involved.end()) return;
  const std::set<std::string> involved(plan.involved.begin(), plan.involved.end());
  if (elect_coordinator(plan.id, involved) != id_) return;
  if (!executed_.insert(plan.id).second) {
    kernel_.record("loop/" + id_, "dup", Json{{"plan", plan.id}});
    return;
  }
  mape_record("coordinate", Json{{"plan", plan.id}, {"coordinator", id_}, {"involved", plan.involved}});
  PendingCoordination pending;
  pending.plan = plan;
  pending.deadline = kernel_.now() + config_.ack_timeout;
  pending.outcomes = execute_step(plan, false);
  for (const auto& loop : plan.involved) {
    if (loop == id_) continue;
    pending.waiting.insert(loop);
    broker_.publish("coord/" + loop + "/assign", "coord/1", id_,
                    Json{{"planId", plan.id}, {"type", "assign"}, {"loop", loop}, {"coordinator", id_},
                         {"plan", plan.to_json()}});
  }
  if (pending.waiting.empty()) {
    complete(plan, pending.outcomes, "complete", Json{{"coordinator", id_}});
    return;
  }
  pending_.emplace(plan.id, std::move(pending));
}

void MapeLoop::on_assignment(const Envelope& env) {
  if (muted_) return;
  Plan plan = Plan::from_json(env.body.at("plan"));
  const std::string coordinator = env.body.at("coordinator").get<std::string>();
  std::vector<ActionOutcome> outcomes;
  if (executed_.insert(plan.id).second) outcomes = execute_step(plan, false);
  broker_.publish("coord/" + coordinator + "/acks", "coord/1", id_,
                  Json{{"planId", plan.id}, {"type", "ack"}, {"loop", id_}, {"outcomes", outcomes_json(outcomes)}});
}

void MapeLoop::on_ack(const Envelope& env) {
  auto it = pending_.find(env.body.at("planId").get<std::string>());
  if (it == pending_.end()) return;  // late ack after a timeout
  PendingCoordination& p = it->second;
  const std::string loop = env.body.at("loop").get<std::string>();
  if (!p.waiting.erase(loop)) return;
  for (auto& o : outcomes_from_json(env.body.value("outcomes", Json::array()))) p.outcomes.push_back(std::move(o));
  if (!p.waiting.empty()) return;
  complete(p.plan, p.outcomes, "complete", Json{{"coordinator", id_}});
  pending_.erase(it);
}

void MapeLoop::check_timeouts(Tick tick) {
  for (auto it = pending_.begin(); it != pending_.end();) {
    PendingCoordination& p = it->second;
    if (tick < p.deadline) {
      ++it;
      continue;
    }
    std::vector<std::string> missing(p.waiting.begin(), p.waiting.end());
    for (const auto& loop : missing) {
      broker_.publish("notify/coordination", "notify/1", id_,
                      Json{{"message", "AckTimeout(" + loop + ")"}, {"planId", p.plan.id}, {"loop", loop},
                           {"code", "AckTimeout"}});
    }
    complete(p.plan, p.outcomes, "partial", Json{{"coordinator", id_}, {"missing", missing}});
    it = pending_.erase(it);
  }
}

void CloudStore::append(Tick tick, const std::string& type, Json body) {
  records_.push_back(Json{{"tick", tick}, {"type", type}, {"body", std::move(body)}});
}

std::map<std::string, std::uint64_t> CloudStore::counts() const {
  std::map<std::string, std::uint64_t> out;
  for (const auto& r : records_) ++out[r.at("type").get<std::string>()];
  return out;
}

std::string CloudStore::to_jsonl() const {
  std::string out;
  for (const auto& r : records_) out += r.dump() + "\n";
  return out;
}

GlobalController::GlobalController(Kernel& kernel, Broker& broker, const Registry& registry, double z_threshold)
    : kernel_(kernel), broker_(broker), registry_(registry), z_threshold_(z_threshold) {}

void GlobalController::mape_record(const std::string& phase, Json body) {
  ++counters_[phase];
  body["loop"] = "global";
  body["phase"] = phase;
  kernel_.record("global", "mape", std::move(body));
}

void GlobalController::persist(const std::string& type, Json body) {
  kernel_.record("global", "store", Json{{"type", type}, {"body", body}});
  store_.append(kernel_.now(), type, std::move(body));
}

void GlobalController::start() {
  auto buffer = [this](std::vector<Envelope> Inboxes::*box) {
    return [this, box](const Envelope& e) { (inbox_.*box).push_back(e); };
  };
  broker_.subscribe("global", "plans/escalations", buffer(&Inboxes::escalations));
  broker_.subscribe("global", "kb/global/escalations", buffer(&Inboxes::notified));
  broker_.subscribe("global", "kb/global/reports", buffer(&Inboxes::reports));
  broker_.subscribe("global", "summaries/#", buffer(&Inboxes::summaries));
  kernel_.add_tick_hook("global", [this](Tick) {
    Inboxes box = std::exchange(inbox_, Inboxes{});
    for (const auto& e : box.summaries) persist("summary", e.body);
    for (const auto& e : box.escalations) intake(e);
    // Analyse sees an escalation only once its intake notification lands.
    for (const auto& e : box.notified) pending_.push_back(e.body);
    analyse_step();
    for (const auto& e : box.reports) {
      std::vector<Action> candidates;
      for (const auto& a : e.body.at("candidateActions")) candidates.push_back(Action::from_json(a));
      plan_step(AnalysisReport::from_json(e.body), candidates);
    }
  });
}

void GlobalController::intake(const Envelope& env) {
  const std::string report = env.body.at("report").at("id").get<std::string>();
  persist("escalation", env.body);
  kb_.write("escalations/" + report, env.body, kernel_.now(), "global/intake");
  broker_.publish("kb/global/escalations", "escalation/1", "global", env.body);
  mape_record("intake", Json{{"report", report}, {"origin", env.body.value("origin", std::string{})}});
}

void GlobalController::analyse_step() {
  if (pending_.empty()) return;
  std::vector<Json> batch = std::move(pending_);
  pending_.clear();
  std::vector<std::set<std::string>> scopes;
  for (const auto& e : batch) scopes.push_back(e.at("report").at("scope").get<std::set<std::string>>());
  for (const auto& group : group_by_scope(scopes)) {
    AnalysisReport merged;
    merged.id = "global-r" + std::to_string(next_report_++);
    merged.loop = "global";
    merged.tick = kernel_.now();
    Json candidates = Json::array();
    Json sources = Json::array();
    std::set<std::string> seen;
    for (std::size_t i : group) {
      const AnalysisReport r = AnalysisReport::from_json(batch[i].at("report"));
      sources.push_back(r.id);
      merged.scope.insert(r.scope.begin(), r.scope.end());
      for (const auto& s : r.symptoms) {
        if (!seen.insert(s.id).second) continue;
        merged.symptoms.push_back(s);
        if (s.kind == SymptomKind::RuleViolation && rules_.find(s.source) &&
            std::find(merged.matched_rules.begin(), merged.matched_rules.end(), s.source) ==
                merged.matched_rules.end()) {
          merged.matched_rules.push_back(s.source);
        }
      }
      for (const auto& rule : r.matched_rules) {
        if (std::find(merged.matched_rules.begin(), merged.matched_rules.end(), rule) == merged.matched_rules.end()) {
          merged.matched_rules.push_back(rule);
        }
      }
      for (const auto& a : batch[i].at("candidateActions")) candidates.push_back(a);
    }
    merged.severity = severity_for(merged.symptoms, z_threshold_);
    Json body = merged.to_json();
    body["candidateActions"] = candidates;
    body["sources"] = sources;
    kb_.write("reports/" + merged.id, body, kernel_.now(), "global/analyse");
    broker_.publish("kb/global/reports", "report/1", "global", body);
    mape_record("analyse", Json{{"report", merged.id},
                                {"sources", sources},
                                {"symptoms", symptom_ids(merged.symptoms)},
                                {"severity", to_string(merged.severity)},
                                {"scope", merged.scope}});
  }
}

void GlobalController::plan_step(const AnalysisReport& report, const std::vector<Action>& candidates) {
  std::vector<Action> actions;
  auto add = [&](Action a) {
    if (std::none_of(actions.begin(), actions.end(), [&](const Action& b) { return same_effect(a, b); })) {
      actions.push_back(std::move(a));
    }
  };
  for (const auto& a : candidates) add(a);
  for (const auto& id : report.matched_rules) {
    if (const Rule* rule = rules_.find(id)) add(action_for_rule(*rule));
  }
  order_actions(actions);

  std::map<std::string, std::vector<Action>> by_region;
  for (auto& a : actions) by_region[a.region].push_back(std::move(a));
  if (by_region.empty()) {
    for (const auto& region : report.scope) {
      Action a;
      a.kind = Action::Kind::Notify;
      a.region = region;
      a.topic = "symptoms";
      a.message = to_string(report.severity) + ": " + std::to_string(report.symptoms.size()) +
                  " symptom(s) across regions without applicable action";
      by_region[region].push_back(std::move(a));
    }
  }
  const std::string base = "global-p" + std::to_string(next_plan_++);
  Json ids = Json::array();
  for (auto& [region, region_actions] : by_region) {
    Plan p;
    p.id = base + "-" + region;
    p.origin = "global";
    p.actions = std::move(region_actions);
    p.scope = {region};
    p.cause = symptom_ids(report.symptoms);
    p.created_at = kernel_.now();
    p.severity = report.severity;
    p.finalize();
    persist("plan", p.to_json());
    kb_.write("plans/" + p.id, p.to_json(), kernel_.now(), "global/plan");
    broker_.publish("plans/global/" + region, "plan/1", "global", p.to_json());
    ids.push_back(p.id);
  }
  mape_record("plan", Json{{"report", report.id}, {"route", "global"}, {"plans", ids}, {"scope", report.scope}});
}

}  // namespace iotarch
