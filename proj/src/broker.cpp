#include "iotarch/broker.hpp"

#include <algorithm>

#include "iotarch/error.hpp"

namespace iotarch {
namespace {

constexpr std::size_t kMaxSegments = 8;

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto slash = path.find('/', start);
    out.emplace_back(path.substr(start, slash - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return out;
}

bool valid_segment(std::string_view s) noexcept {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

}  // namespace

Topic::Topic(std::string path) : path_(std::move(path)) {
  if (!valid(path_)) throw Error(Errc::MalformedTopic, "malformed topic '" + path_ + "'");
  segments_ = split_path(path_);
}

bool Topic::valid(std::string_view path) noexcept {
  if (path.empty()) return false;
  auto segs = split_path(path);
  if (segs.size() > kMaxSegments) return false;
  return std::all_of(segs.begin(), segs.end(), [](const std::string& s) { return valid_segment(s); });
}

TopicPattern::TopicPattern(std::string path) : path_(std::move(path)) {
  if (!valid(path_)) throw Error(Errc::MalformedPattern, "malformed topic pattern '" + path_ + "'");
  segments_ = split_path(path_);
}

bool TopicPattern::valid(std::string_view path) noexcept {
  if (path.empty()) return false;
  auto segs = split_path(path);
  if (segs.size() > kMaxSegments) return false;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i] == "#") {
      if (i + 1 != segs.size()) return false;
    } else if (segs[i] != "*" && !valid_segment(segs[i])) {
      return false;
    }
  }
  return true;
}

bool TopicPattern::matches(const Topic& topic) const noexcept {
  const auto& t = topic.segments();
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i] == "#") return true;
    if (i >= t.size()) return false;
    if (segments_[i] != "*" && segments_[i] != t[i]) return false;
  }
  return segments_.size() == t.size();
}

Json Envelope::to_json() const {
  return Json{{"id", id},
              {"schema", schema},
              {"topic", topic},
              {"publisher", publisher},
              {"tickPublished", tick_published},
              {"body", body}};
}

Envelope Envelope::from_json(const Json& j) {
  Envelope e;
  e.id = j.value("id", std::uint64_t{0});
  e.schema = j.at("schema").get<std::string>();
  e.topic = j.at("topic").get<std::string>();
  e.publisher = j.value("publisher", std::string{});
  e.tick_published = j.value("tickPublished", Tick{0});
  e.body = j.value("body", Json::object());
  return e;
}

const std::map<std::string, std::vector<std::string>>& known_schemas() {
  static const std::map<std::string, std::vector<std::string>> schemas = {
      {"telemetry/1",
       {"deviceId", "resourceId", "property", "value", "unit", "ts", "regionId", "gatewayId",
        "aggregated", "count"}},
      {"command/1", {"commandId", "deviceId", "resourceId", "value"}},
      {"ack/1", {"commandId", "deviceId", "resourceId", "value", "ts"}},
      {"heartbeat/1", {"deviceId", "ts"}},
      {"symptom/1", {"id", "kind", "source", "scope", "evidence", "detectedAt"}},
      {"report/1", {"id", "loop", "tick", "symptoms", "matchedRules", "severity", "scope"}},
      {"escalation/1", {"report", "candidateActions"}},
      {"plan/1", {"id", "origin", "actions", "scope", "cause", "priority", "createdAt"}},
      {"coord/1", {"planId", "type", "loop"}},
      {"summary/1", {"region", "loop", "tick"}},
      {"notify/1", {"message"}},
  };
  return schemas;
}

Subscription Broker::subscribe(const std::string& subscriber, const std::string& pattern,
                               Handler handler) {
  Subscription sub{next_subscription_id_++, subscriber, TopicPattern(pattern), kernel_.now(), true};
  subscriptions_.emplace(sub.id, sub);
  handlers_.emplace(sub.id, std::move(handler));
  return sub;
}

void Broker::unsubscribe(SubscriptionId id) {
  auto it = subscriptions_.find(id);
  if (it == subscriptions_.end() || !it->second.active) {
    throw Error(Errc::UnknownSubscription, "unknown subscription " + std::to_string(id));
  }
  it->second.active = false;
}

std::size_t Broker::publish(const std::string& topic, Envelope envelope) {
  const Topic parsed(topic);
  const auto& schemas = known_schemas();
  auto schema = schemas.find(envelope.schema);
  if (schema == schemas.end()) {
    throw Error(Errc::UnknownSchema, "unknown schema '" + envelope.schema + "'");
  }
  if (!envelope.body.is_object()) {
    throw Error(Errc::BadRequest, envelope.schema + " body must be an object");
  }
  for (const auto& field : schema->second) {
    if (!envelope.body.contains(field)) {
      throw Error(Errc::BadRequest, envelope.schema + " body is missing '" + field + "'");
    }
  }
  envelope.id = next_message_id_++;
  envelope.topic = topic;
  envelope.tick_published = kernel_.now();

  std::vector<SubscriptionId> matched;
  for (const auto& [id, sub] : subscriptions_) {
    if (sub.active && sub.pattern.matches(parsed)) matched.push_back(id);
  }
  kernel_.record(envelope.publisher, "pub",
                 Json{{"msg", envelope.id},
                      {"topic", topic},
                      {"schema", envelope.schema},
                      {"matched", matched.size()},
                      {"body", envelope.body}});
  const Tick deliver_at = kernel_.now() + 1;
  for (SubscriptionId id : matched) {
    const auto& sub = subscriptions_.at(id);
    kernel_.schedule(deliver_at, sub.subscriber, "dlv",
                     Json{{"msg", envelope.id}, {"sub", id}, {"topic", topic}},
                     [this, id, envelope] { handlers_.at(id)(envelope); });
  }
  for (auto& tap : taps_) tap(envelope);
  return matched.size();
}

std::size_t Broker::publish(const std::string& topic, const std::string& schema,
                            const std::string& publisher, Json body) {
  Envelope e;
  e.schema = schema;
  e.publisher = publisher;
  e.body = std::move(body);
  return publish(topic, std::move(e));
}

}  // namespace iotarch
