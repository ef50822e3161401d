#include "iotarch/app_service.hpp"

#include <cmath>
#include <sstream>

#include "iotarch/error.hpp"

namespace iotarch {

Json User::to_json() const {
  return Json{{"id", id}, {"name", name}, {"email", email}, {"createdAt", created_at}, {"preferences", preferences}};
}

Json UserSubscription::to_json() const {
  return Json{{"id", id}, {"userId", user}, {"pattern", pattern}, {"createdAt", created_at}};
}

Json Notification::to_json() const {
  return Json{{"id", id},       {"userId", user},   {"envelope", envelope}, {"topic", topic},
              {"message", message}, {"tick", tick}, {"read", read}};
}

std::string to_string(CommandOutcome outcome) {
  switch (outcome) {
    case CommandOutcome::Pending: return "pending";
    case CommandOutcome::Acked: return "acked";
    case CommandOutcome::Failed: return "failed";
  }
  return "pending";
}

Json CommandRequest::to_json() const {
  Json j{{"id", id},         {"userId", user},      {"deviceId", device},
         {"resourceId", resource}, {"value", value}, {"issuedAt", issued_at},
         {"outcome", to_string(outcome)}};
  if (outcome == CommandOutcome::Failed) j["reason"] = reason;
  if (outcome != CommandOutcome::Pending) j["resolvedAt"] = resolved_at;
  if (ack_envelope) j["ackEnvelope"] = ack_envelope;
  return j;
}

std::pair<Json, std::string> display_value(const Json& value, const std::string& unit, const Json& preferences) {
  const bool imperial = preferences.is_object() && preferences.value("units", std::string{}) == "imperial";
  if (imperial && unit == "C" && value.is_number()) return {value.get<double>() * 9.0 / 5.0 + 32.0, "F"};
  return {value, unit};
}

Json rule_diagnostics(const Error& e) {
  Json j{{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
  if (const auto* syntax = dynamic_cast<const RuleSyntaxError*>(&e)) {
    j["position"] = Json{{"line", syntax->line()}, {"col", syntax->col()}};
    j["expected"] = syntax->expected();
  }
  return j;
}

AppService::AppService(Kernel& kernel, Broker& broker, const Registry& registry)
    : kernel_(kernel), broker_(broker), registry_(registry) {}

void AppService::start() {
  broker_.subscribe("app/device-controller", "acks/#", [this](const Envelope& e) {
    resolve(e.body.value("commandId", std::string{}), CommandOutcome::Acked, {}, e.id);
  });
  broker_.subscribe("app/device-controller", "notify/command-failed", [this](const Envelope& e) {
    resolve(e.body.value("commandId", std::string{}), CommandOutcome::Failed,
            e.body.value("reason", std::string{"unknown"}), e.id);
  });
}

void AppService::resolve(const std::string& command, CommandOutcome outcome, const std::string& reason,
                         std::uint64_t envelope) {
  auto it = commands_.find(command);
  if (it == commands_.end() || it->second.outcome != CommandOutcome::Pending) return;
  CommandRequest& c = it->second;
  c.outcome = outcome;
  c.reason = reason;
  c.ack_envelope = envelope;
  c.resolved_at = kernel_.now();
  Json body{{"id", c.id}, {"outcome", to_string(outcome)}, {"envelope", envelope}};
  if (outcome == CommandOutcome::Failed) body["reason"] = reason;
  kernel_.record("app", "cmdout", std::move(body));
}

User AppService::create_user(const std::string& name, const std::string& email, Json preferences) {
  if (email.find('@') == std::string::npos) throw Error(Errc::InvalidEmail, "email must contain '@': " + email);
  for (const auto& [id, u] : users_) {
    if (u.email == email) throw Error(Errc::DuplicateEmail, "email already registered: " + email);
  }
  User u;
  u.id = next_user_++;
  u.name = name;
  u.email = email;
  u.created_at = kernel_.now();
  u.preferences = preferences.is_object() ? std::move(preferences) : Json::object();
  kernel_.record("app", "user", u.to_json());
  return users_.emplace(u.id, u).first->second;
}

const User& AppService::user(std::uint64_t id) const {
  auto it = users_.find(id);
  if (it == users_.end()) throw Error(Errc::UnknownUser, "no user " + std::to_string(id));
  return it->second;
}

UserSubscription AppService::subscribe_user(std::uint64_t user_id, const std::string& pattern) {
  user(user_id);
  if (!TopicPattern::valid(pattern)) throw Error(Errc::MalformedPattern, "malformed pattern '" + pattern + "'");
  const std::string root = pattern.substr(0, pattern.find('/'));
  if (root != "notify" && root != "telemetry") {
    throw Error(Errc::MalformedPattern, "user subscriptions must start with notify/ or telemetry/: " + pattern);
  }
  UserSubscription s;
  s.id = next_subscription_++;
  s.user = user_id;
  s.pattern = pattern;
  s.created_at = kernel_.now();
  s.broker_subscription =
      broker_
          .subscribe("app/user/" + std::to_string(user_id), pattern,
                     [this, user_id](const Envelope& e) { on_envelope(user_id, e); })
          .id;
  kernel_.record("app", "usub", s.to_json());
  return subscriptions_.emplace(s.id, s).first->second;
}

void AppService::unsubscribe_user(std::uint64_t id) {
  auto it = subscriptions_.find(id);
  if (it == subscriptions_.end()) throw Error(Errc::NotFound, "no subscription " + std::to_string(id));
  broker_.unsubscribe(it->second.broker_subscription);
  kernel_.record("app", "uunsub", Json{{"id", id}, {"userId", it->second.user}});
  subscriptions_.erase(it);
}

void AppService::on_envelope(std::uint64_t user_id, const Envelope& e) {
  if (!delivered_.emplace(user_id, e.id).second) return;
  Notification n;
  n.id = next_notification_++;
  n.user = user_id;
  n.envelope = e.id;
  n.topic = e.topic;
  n.tick = kernel_.now();
  if (e.body.contains("message") && e.body["message"].is_string()) {
    n.message = e.body["message"].get<std::string>();
  } else if (e.schema == "telemetry/1") {
    const auto [value, unit] = display_value(e.body.at("value"), e.body.value("unit", std::string{}),
                                             user(user_id).preferences);
    n.message = e.body.value("thing", std::string{}) + "." + e.body.value("property", std::string{}) + " = " +
                value.dump() + unit;
  } else {
    n.message = e.schema + " on " + e.topic;
  }
  kernel_.record("app", "notif", Json{{"id", n.id}, {"user", user_id}, {"msg", e.id}, {"topic", e.topic}});
  notifications_.emplace(n.id, std::move(n));
}

std::vector<Notification> AppService::notifications(std::uint64_t user_id) const {
  user(user_id);
  std::vector<Notification> out;
  for (const auto& [id, n] : notifications_) {
    if (n.user == user_id) out.push_back(n);
  }
  return out;
}

Notification AppService::mark_read(std::uint64_t id) {
  auto it = notifications_.find(id);
  if (it == notifications_.end()) throw Error(Errc::UnknownNotification, "no notification " + std::to_string(id));
  if (!it->second.read) {
    it->second.read = true;
    kernel_.record("app", "read", Json{{"id", id}, {"user", it->second.user}});
  }
  return it->second;
}

CommandRequest AppService::issue_command(std::uint64_t user_id, const std::string& device_ref,
                                         const std::string& resource_ref, const Json& value) {
  if (user_id != kOperator) user(user_id);
  const Device* dev = registry_.resolve_device(device_ref);
  if (!dev) throw Error(Errc::UnknownDevice, "no device '" + device_ref + "'");
  auto info = registry_.resolve_resource(*dev, resource_ref);
  if (!info || info->is_sensor) {
    throw Error(Errc::UnknownResource, "device " + dev->name + " has no actuator '" + resource_ref + "'");
  }
  Json v = value;
  if (info->value_kind == ValueKind::Bool && v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "on") v = true;
    if (s == "off") v = false;
  }
  FrameValue fv;
  try {
    fv = value_from_json(v);
  } catch (const std::exception&) {
    throw Error(Errc::ValueKindMismatch, "unsupported command value " + value.dump());
  }
  if (!value_matches(info->value_kind, fv)) {
    throw Error(Errc::ValueKindMismatch,
                info->resource_name + " expects a " + to_string(info->value_kind) + " value, got " + value.dump());
  }
  CommandRequest c;
  c.id = "cmd-" + std::to_string(next_command_++);
  c.user = user_id;
  c.device = dev->id;
  c.resource = info->resource_id;
  c.value = value_to_json(fv);
  c.issued_at = kernel_.now();
  kernel_.record("app", "cmdreq",
                 Json{{"id", c.id}, {"user", user_id}, {"device", c.device}, {"resource", c.resource},
                      {"value", c.value}});
  broker_.publish("commands/" + std::to_string(c.device), "command/1", "app",
                  Json{{"commandId", c.id}, {"deviceId", c.device}, {"resourceId", c.resource}, {"value", c.value},
                       {"userId", user_id}});
  return commands_.emplace(c.id, c).first->second;
}

const CommandRequest* AppService::command(const std::string& id) const {
  auto it = commands_.find(id);
  return it == commands_.end() ? nullptr : &it->second;
}

std::string AppService::submit_rule(const std::string& text) {
  Rule rule = parse_rule(text, "user-" + std::to_string(next_rule_));
  link_rule(rule, registry_);
  ++next_rule_;
  if (install_) install_(rule);
  return rule.id;
}

}  // namespace iotarch
