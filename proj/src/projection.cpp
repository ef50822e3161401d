#include "iotarch/projection.hpp"

#include <fstream>
#include <sstream>

#include "iotarch/error.hpp"

namespace iotarch {

void Projection::apply(const LogRecord& r) {
  ++records_;
  tick_ = std::max(tick_, r.tick);
  const Json& b = r.body;
  if (r.kind == "run") {
    run_ = b;
    if (b.contains("heartbeat")) {
      policy_.heartbeat_timeout = b["heartbeat"].value("heartbeatTimeout", policy_.heartbeat_timeout);
      policy_.offline_timeout = b["heartbeat"].value("offlineTimeout", policy_.offline_timeout);
    }
    for (const auto& d : b.value("devices", Json::array())) {
      devices_[d.at("id").get<std::uint32_t>()].info = d;
    }
    for (const auto& l : b.value("loops", Json::array())) {
      loops_[l.at("id").get<std::string>()].region = l.at("region").get<std::string>();
    }
  } else if (r.kind == "end") {
    ended_ = true;
  } else if (r.kind == "pub") {
    apply_pub(b);
  } else if (r.kind == "mape") {
    LoopView& loop = loops_[b.at("loop").get<std::string>()];
    const std::string phase = b.at("phase").get<std::string>();
    ++loop.counters[phase];
    if (phase == "execute") {
      const std::string status = b.at("status").get<std::string>();
      (status == "complete" ? loop.completed : loop.partial) += 1;
      loop.last_plan = b.at("plan");
      auto plan = plans_.find(b.at("plan").get<std::string>());
      if (plan != plans_.end()) plan->second["status"] = status;
    }
  } else if (r.kind == "rule") {
    rules_[b.at("id").get<std::string>()] = b;
  } else if (r.kind == "rule-state") {
    auto it = rules_.find(b.at("rule").get<std::string>());
    if (it != rules_.end()) it->second["enabled"] = b.at("enabled");
  } else if (r.kind == "rule-remove") {
    rules_.erase(b.at("rule").get<std::string>());
  } else if (r.kind == "user") {
    ++users_;
  } else if (r.kind == "notif") {
    ++notifications_;
    ++unread_[std::to_string(b.at("user").get<std::uint64_t>())];
  } else if (r.kind == "read") {
    --unread_[std::to_string(b.at("user").get<std::uint64_t>())];
  } else if (r.kind == "cmdreq") {
    ++command_outcomes_["pending"];
  } else if (r.kind == "cmdout") {
    --command_outcomes_["pending"];
    ++command_outcomes_[b.at("outcome").get<std::string>()];
  } else if (r.kind == "store") {
    ++store_[b.at("type").get<std::string>()];
  }
}

void Projection::apply_pub(const Json& b) {
  const std::string schema = b.at("schema").get<std::string>();
  ++messages_[schema];
  const Json& body = b.at("body");
  if (schema == "telemetry/1" || schema == "heartbeat/1") {
    DeviceView& d = devices_[body.at("deviceId").get<std::uint32_t>()];
    const Tick ts = body.at("ts").get<Tick>();
    d.last_seen = std::max(d.last_seen, ts);
    if (schema == "telemetry/1") {
      d.values[body.at("thing").get<std::string>() + "." + body.at("property").get<std::string>()] =
          Json{{"value", body.at("value")}, {"unit", body.at("unit")}, {"ts", ts}};
    }
  } else if (schema == "plan/1") {
    plans_.emplace(body.at("id").get<std::string>(), body);
  }
}

DeviceStatus Projection::status(const DeviceView& d) const { return status_for(tick_, d.last_seen, policy_); }

Json Projection::devices() const {
  Json out = Json::array();
  for (const auto& [id, d] : devices_) {
    Json j = d.info.is_object() ? d.info : Json{{"id", id}};
    j["status"] = to_string(status(d));
    j["lastSeen"] = d.last_seen;
    j["values"] = d.values;
    j["provenance"] = "edge";
    out.push_back(std::move(j));
  }
  return out;
}

Json Projection::loops() const {
  Json out = Json::array();
  for (const auto& [id, l] : loops_) {
    out.push_back(Json{{"id", id},
                       {"region", l.region},
                       {"counters", l.counters},
                       {"plansCompleted", l.completed},
                       {"plansPartial", l.partial},
                       {"lastPlan", l.last_plan},
                       {"provenance", id == "global" ? "cloud" : "edge"}});
  }
  return out;
}

Json Projection::snapshot() const {
  Json rules = Json::array();
  for (const auto& [id, r] : rules_) rules.push_back(r);
  Json unread = Json::object();
  for (const auto& [user, n] : unread_) unread[user] = n;
  std::map<std::string, std::uint64_t> by_origin;
  for (const auto& [id, p] : plans_) ++by_origin[p.at("origin").get<std::string>()];
  return Json{
      {"run", Json{{"tick", tick_},
                   {"seed", run_.value("seed", Json{})},
                   {"mode", run_.value("mode", Json{})},
                   {"scenario", run_.value("scenario", Json{})},
                   {"ended", ended_}}},
      {"devices", devices()},
      {"rules", rules},
      {"loopStates", loops()},
      {"notifications", Json{{"total", notifications_}, {"unread", unread}}},
      {"users", users_},
      {"commands", command_outcomes_},
      {"plans", Json{{"total", plans_.size()}, {"byOrigin", by_origin}}},
      {"globalStore", Json{{"records", store_}, {"provenance", "cloud"}}},
      {"messages", messages_},
  };
}

Json replay_lines(std::istream& in) {
  Projection projection;
  std::string line;
  std::size_t number = 0;
  std::string last_kind;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    LogRecord record;
    try {
      record = parse_log_line(line);
      projection.apply(record);
    } catch (const std::exception& e) {
      throw Error(Errc::CorruptLog, "line " + std::to_string(number) + ": " + e.what());
    }
    last_kind = record.kind;
  }
  // A completed run always ends with an end record; anything else was cut.
  if (number > 0 && last_kind != "end") {
    throw Error(Errc::CorruptLog, "line " + std::to_string(number + 1) + ": log ends without an end record");
  }
  return projection.snapshot();
}

Json replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  return replay_lines(in);
}

}  // namespace iotarch
