#include "iotarch/api.hpp"

#include <charconv>
#include <cctype>

#include "iotarch/error.hpp"
#include "iotarch/rule.hpp"

namespace iotarch {

namespace {

std::string percent_decode(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size() &&
               std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
               std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::vector<std::string> segments(const std::string& path) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < path.size()) {
    const std::size_t slash = path.find('/', start);
    const std::size_t end = slash == std::string::npos ? path.size() : slash;
    if (end > start) out.push_back(path.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

std::uint64_t parse_id(const std::string& text, const std::string& what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(Errc::BadRequest, what + " must be a non-negative integer, got '" + text + "'");
  }
  return v;
}

Json parse_body(const ApiRequest& r) {
  if (r.body.empty()) return Json::object();
  Json j = Json::parse(r.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::BadRequest, "request body must be a JSON object");
  return j;
}

std::string require_string(const Json& body, const std::string& key) {
  if (!body.contains(key) || !body[key].is_string()) throw Error(Errc::BadRequest, "missing string field '" + key + "'");
  return body[key].get<std::string>();
}

std::string ref_of(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_unsigned() || v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw Error(Errc::BadRequest, "expected an id or a name, got " + v.dump());
}

std::optional<std::string> query(const ApiRequest& r, const std::string& key) {
  auto it = r.query.find(key);
  if (it == r.query.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

ApiResponse ok(Json body, int status = 200) { return ApiResponse{status, std::move(body)}; }

}  // namespace

ApiRequest make_request(const std::string& method, const std::string& target, std::string body) {
  ApiRequest r;
  r.method = method;
  r.body = std::move(body);
  const std::size_t q = target.find('?');
  r.path = percent_decode(std::string_view(target).substr(0, q));
  if (q == std::string::npos) return r;
  std::string_view rest = std::string_view(target).substr(q + 1);
  while (!rest.empty()) {
    const std::size_t amp = rest.find('&');
    const std::string_view pair = rest.substr(0, amp);
    const std::size_t eq = pair.find('=');
    if (!pair.empty()) {
      r.query[percent_decode(pair.substr(0, eq))] =
          eq == std::string_view::npos ? std::string{} : percent_decode(pair.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    rest.remove_prefix(amp + 1);
  }
  return r;
}

int http_status(Errc code) noexcept {
  switch (code) {
    case Errc::UnknownUser:
    case Errc::UnknownDevice:
    case Errc::UnknownRule:
    case Errc::UnknownLoop:
    case Errc::UnknownNotification:
    case Errc::NotFound:
      return 404;
    case Errc::DuplicateEmail:
    case Errc::RunEnded:
      return 409;
    case Errc::SyntaxError:
    case Errc::UnknownAggregate:
    case Errc::UnresolvedReference:
    case Errc::ValueKindMismatch:
    case Errc::UnknownResource:
    case Errc::MalformedPattern:
      return 422;
    default:
      return 400;
  }
}

ApiResponse error_response(const Error& e) { return ApiResponse{http_status(e.code()), rule_diagnostics(e)}; }

ApiResponse ApiRouter::handle(const ApiRequest& request) {
  try {
    if (platform_.finished() && request.method != "GET") {
      throw Error(Errc::RunEnded, "the run has reached its horizon; state is read-only");
    }
    return route(request);
  } catch (const Error& e) {
    return error_response(e);
  } catch (const Json::exception& e) {
    return error_response(Error(Errc::BadRequest, e.what()));
  }
}

ApiResponse ApiRouter::route(const ApiRequest& r) {
  const auto seg = segments(r.path);
  const std::string& m = r.method;
  const std::size_t n = seg.size();
  const auto at = [&](std::size_t i, const char* s) { return n > i && seg[i] == s; };
  AppService& app = platform_.app();

  if (at(0, "devices")) {
    if (n == 1 && m == "GET") return ok(platform_.projection().devices());
    if (n >= 2) {
      const Device* dev = platform_.registry().resolve_device(seg[1]);
      if (!dev) throw Error(Errc::UnknownDevice, "no device '" + seg[1] + "'");
      if (n == 2 && m == "GET") {
        for (const auto& d : platform_.projection().devices()) {
          if (d.value("id", 0u) == dev->id) return ok(d);
        }
        throw Error(Errc::UnknownDevice, "no device '" + seg[1] + "'");
      }
      if (n == 3 && seg[2] == "commands" && m == "POST") {
        const Json body = parse_body(r);
        if (!body.contains("resourceId")) throw Error(Errc::BadRequest, "missing field 'resourceId'");
        if (!body.contains("value")) throw Error(Errc::BadRequest, "missing field 'value'");
        const std::uint64_t user = body.contains("userId") ? body["userId"].get<std::uint64_t>() : AppService::kOperator;
        return ok(app.issue_command(user, std::to_string(dev->id), ref_of(body["resourceId"]), body["value"]).to_json(),
                  201);
      }
    }
  }

  if (at(0, "commands") && n == 2 && m == "GET") {
    const CommandRequest* c = app.command(seg[1]);
    if (!c) throw Error(Errc::NotFound, "no command '" + seg[1] + "'");
    return ok(c->to_json());
  }

  if (at(0, "telemetry") && n == 1 && m == "GET") {
    const auto device_ref = query(r, "deviceId");
    if (!device_ref) throw Error(Errc::BadRequest, "deviceId is required");
    const Device* dev = platform_.registry().resolve_device(*device_ref);
    if (!dev) throw Error(Errc::UnknownDevice, "no device '" + *device_ref + "'");
    const Tick since = query(r, "sinceTick") ? parse_id(*query(r, "sinceTick"), "sinceTick") : 0;
    const auto property = query(r, "property");
    Json prefs = Json::object();
    if (const auto user = query(r, "userId")) prefs = app.user(parse_id(*user, "userId")).preferences;
    Json points = Json::array();
    for (const auto& s : dev->sensors) {
      if (property && s.property != *property && s.name != *property) continue;
      const auto info = platform_.registry().resource(dev->id, s.id);
      for (MapeLoop* loop : platform_.loops()) {
        if (loop->region() != dev->region) continue;
        for (const auto& e : loop->kb().history("series/" + std::to_string(dev->id) + "/" + s.property)) {
          const Tick ts = e.value.at("ts").get<Tick>();
          if (ts < since) continue;
          const auto [value, unit] = display_value(e.value.at("value"), info ? info->unit : std::string{}, prefs);
          points.push_back(Json{{"deviceId", dev->id},
                                {"thing", s.thing},
                                {"property", s.property},
                                {"ts", ts},
                                {"receivedAt", e.written_at},
                                {"value", value},
                                {"unit", unit},
                                {"provenance", "edge"}});
        }
      }
    }
    return ok(points);
  }

  if (at(0, "users")) {
    if (n == 1 && m == "POST") {
      const Json body = parse_body(r);
      Json prefs = body.value("preferences", Json::object());
      return ok(app.create_user(require_string(body, "name"), require_string(body, "email"), prefs).to_json(), 201);
    }
    if (n == 2 && m == "GET") return ok(app.user(parse_id(seg[1], "user id")).to_json());
  }

  if (at(0, "subscriptions")) {
    if (n == 1 && m == "POST") {
      const Json body = parse_body(r);
      if (!body.contains("userId")) throw Error(Errc::BadRequest, "missing field 'userId'");
      return ok(app.subscribe_user(body["userId"].get<std::uint64_t>(), require_string(body, "pattern")).to_json(),
                201);
    }
    if (n == 2 && m == "DELETE") {
      const std::uint64_t id = parse_id(seg[1], "subscription id");
      app.unsubscribe_user(id);
      return ok(Json{{"id", id}, {"deleted", true}});
    }
  }

  if (at(0, "notifications")) {
    if (n == 1 && m == "GET") {
      const auto user = query(r, "userId");
      if (!user) throw Error(Errc::BadRequest, "userId is required");
      Json out = Json::array();
      for (const auto& note : app.notifications(parse_id(*user, "userId"))) out.push_back(note.to_json());
      return ok(out);
    }
    if (n == 3 && seg[2] == "read" && m == "POST") {
      return ok(app.mark_read(parse_id(seg[1], "notification id")).to_json());
    }
  }

  if (at(0, "loops")) {
    if (n == 1 && m == "GET") return ok(platform_.projection().loops());
    if (n == 2 && m == "GET") {
      for (const auto& l : platform_.projection().loops()) {
        if (l.at("id") == seg[1]) return ok(l);
      }
      throw Error(Errc::UnknownLoop, "no loop '" + seg[1] + "'");
    }
  }

  if (at(0, "plans") && n == 1 && m == "GET") {
    const auto region = query(r, "region");
    Json out = Json::array();
    for (const auto& [id, p] : platform_.projection().plans()) {
      if (region) {
        bool hit = false;
        for (const auto& s : p.value("scope", Json::array())) hit = hit || s == *region;
        if (!hit) continue;
      }
      out.push_back(p);
    }
    return ok(out);
  }

  if (at(0, "rules") && n == 1) {
    if (m == "GET") {
      Json out = Json::array();
      for (const auto& [id, rule] : platform_.projection().rules()) out.push_back(rule);
      return ok(out);
    }
    if (m == "POST") {
      std::string text = r.body;
      const Json j = Json::parse(r.body, nullptr, false);
      if (!j.is_discarded() && j.is_object() && j.contains("text")) text = j["text"].get<std::string>();
      const std::string id = app.submit_rule(text);
      return ok(platform_.projection().rules().at(id), 201);
    }
  }

  if (at(0, "dashboard") && at(1, "snapshot") && n == 2 && m == "GET") return ok(platform_.snapshot());

  throw Error(Errc::NotFound, "no route " + m + " " + r.path);
}

}  // namespace iotarch
