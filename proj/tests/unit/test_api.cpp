#include "doctest.h"
#include "iotarch/api.hpp"
#include "iotarch/error.hpp"
#include "support.hpp"

using namespace iotarch;

namespace {

struct Fixture {
  Platform platform{test::scenario("smart-home")};
  ApiRouter router{platform};

  Fixture() { platform.advance(30); }

  ApiResponse call(const std::string& method, const std::string& target, const std::string& body = {}) {
    return router.handle(make_request(method, target, body));
  }
  void tick(Tick n) { platform.advance(platform.now() + n); }
};

}  // namespace

TEST_CASE("make_request splits path and decodes the query") {
  const ApiRequest r = make_request("GET", "/telemetry?deviceId=1&property=temp&note=a%20b+c&flag");
  CHECK(r.path == "/telemetry");
  CHECK(r.query.at("deviceId") == "1");
  CHECK(r.query.at("property") == "temp");
  CHECK(r.query.at("note") == "a b c");
  CHECK(r.query.at("flag").empty());
  CHECK(make_request("GET", "/devices").query.empty());
}

TEST_CASE("error codes map to HTTP statuses") {
  CHECK(http_status(Errc::UnknownDevice) == 404);
  CHECK(http_status(Errc::DuplicateEmail) == 409);
  CHECK(http_status(Errc::SyntaxError) == 422);
  CHECK(http_status(Errc::BadRequest) == 400);
  const ApiResponse r = error_response(Error(Errc::UnknownUser, "no user 9"));
  CHECK(r.status == 404);
  CHECK(r.body["code"] == "UnknownUser");
  CHECK(r.body["message"] == "no user 9");
}

TEST_CASE("GET /devices lists every configured device with status and values") {
  Fixture f;
  const ApiResponse r = f.call("GET", "/devices");
  REQUIRE(r.status == 200);
  REQUIRE(r.body.size() == 2);
  CHECK(r.body[0]["id"] == 1);
  CHECK(r.body[1]["id"] == 2);
  CHECK(r.body[0]["status"] == "online");
  CHECK(r.body[0]["values"].contains("room.temp"));

  const ApiResponse by_name = f.call("GET", "/devices/thermo");
  CHECK(by_name.status == 200);
  CHECK(by_name.body == f.call("GET", "/devices/1").body);
  CHECK(f.call("GET", "/devices/99").status == 404);
}

TEST_CASE("GET /telemetry filters by device, property and tick") {
  Fixture f;
  const ApiResponse all = f.call("GET", "/telemetry?deviceId=1&property=temp");
  REQUIRE(all.status == 200);
  REQUIRE(!all.body.empty());
  for (const auto& p : all.body) {
    CHECK(p["deviceId"] == 1);
    CHECK(p["property"] == "temp");
    CHECK(p["unit"] == "C");
    CHECK(p["provenance"] == "edge");
  }
  const ApiResponse late = f.call("GET", "/telemetry?deviceId=1&sinceTick=20");
  REQUIRE(!late.body.empty());
  for (const auto& p : late.body) CHECK(p["ts"].get<Tick>() >= 20);
  CHECK(late.body.size() < all.body.size());

  CHECK(f.call("GET", "/telemetry").status == 400);
  CHECK(f.call("GET", "/telemetry?deviceId=77").status == 404);
  CHECK(f.call("GET", "/telemetry?deviceId=1&sinceTick=soon").status == 400);
}

TEST_CASE("telemetry honours the user's unit preference") {
  Fixture f;
  const ApiResponse u =
      f.call("POST", "/users", R"({"name":"bo","email":"bo@example.org","preferences":{"units":"imperial"}})");
  REQUIRE(u.status == 201);
  const std::string id = std::to_string(u.body["id"].get<std::uint64_t>());
  const ApiResponse c = f.call("GET", "/telemetry?deviceId=1&property=temp");
  const ApiResponse fahrenheit = f.call("GET", "/telemetry?deviceId=1&property=temp&userId=" + id);
  REQUIRE(c.body.size() == fahrenheit.body.size());
  for (std::size_t i = 0; i < c.body.size(); ++i) {
    CHECK(fahrenheit.body[i]["unit"] == "F");
    CHECK(fahrenheit.body[i]["value"].get<double>() ==
          doctest::Approx(c.body[i]["value"].get<double>() * 9.0 / 5.0 + 32.0));
  }
}

TEST_CASE("users, subscriptions and notifications") {
  Fixture f;
  const ApiResponse u = f.call("POST", "/users", R"({"name":"cy","email":"cy@example.org"})");
  REQUIRE(u.status == 201);
  const std::string id = std::to_string(u.body["id"].get<std::uint64_t>());
  CHECK(f.call("GET", "/users/" + id).body == u.body);
  CHECK(f.call("POST", "/users", R"({"name":"cy2","email":"cy@example.org"})").status == 409);
  CHECK(f.call("POST", "/users", R"({"name":"x","email":"nope"})").status == 400);
  CHECK(f.call("POST", "/users", "{not json").status == 400);
  CHECK(f.call("GET", "/users/999").status == 404);

  const ApiResponse s = f.call("POST", "/subscriptions", R"({"userId":)" + id + R"(,"pattern":"notify/#"})");
  REQUIRE(s.status == 201);
  CHECK(f.call("POST", "/subscriptions", R"({"userId":)" + id + R"(,"pattern":"a/#/b"})").status == 422);

  // Fire a notification through a rule submitted over the API.
  const ApiResponse rule =
      f.call("POST", "/rules", "WHEN room.temp > -100 THEN NOTIFY(notify/test, \"always\")");
  REQUIRE(rule.status == 201);
  f.tick(8);
  const ApiResponse notes = f.call("GET", "/notifications?userId=" + id);
  REQUIRE(notes.status == 200);
  REQUIRE(!notes.body.empty());
  CHECK(notes.body[0]["read"] == false);
  const std::string note = std::to_string(notes.body[0]["id"].get<std::uint64_t>());
  CHECK(f.call("POST", "/notifications/" + note + "/read").body["read"] == true);
  CHECK(f.call("POST", "/notifications/424242/read").status == 404);
  CHECK(f.call("GET", "/notifications").status == 400);

  const std::string sub = std::to_string(s.body["id"].get<std::uint64_t>());
  CHECK(f.call("DELETE", "/subscriptions/" + sub).status == 200);
  CHECK(f.call("DELETE", "/subscriptions/" + sub).status != 200);
}

TEST_CASE("POST /devices/{id}/commands issues a command that resolves to acked") {
  Fixture f;
  const ApiResponse r = f.call("POST", "/devices/ac/commands", R"({"resourceId":"power","value":true})");
  REQUIRE(r.status == 201);
  CHECK(r.body["outcome"] == "pending");
  CHECK(r.body["userId"] == AppService::kOperator);
  const std::string id = r.body["id"].get<std::string>();
  f.tick(6);
  const ApiResponse after = f.call("GET", "/commands/" + id);
  REQUIRE(after.status == 200);
  CHECK(after.body["outcome"] == "acked");
  CHECK(after.body["resolvedAt"].get<Tick>() == r.body["issuedAt"].get<Tick>() + 5);

  CHECK(f.call("POST", "/devices/ac/commands", R"({"resourceId":"power","value":"hot"})").status == 422);
  CHECK(f.call("POST", "/devices/ac/commands", R"({"resourceId":"warp","value":true})").status == 422);
  CHECK(f.call("POST", "/devices/ac/commands", R"({"value":true})").status == 400);
  CHECK(f.call("GET", "/commands/none").status == 404);
}

TEST_CASE("POST /rules reports the position of a syntax error") {
  Fixture f;
  const std::size_t before = f.call("GET", "/rules").body.size();
  const ApiResponse bad = f.call("POST", "/rules", R"j({"text":"WHEN r@om.temp > 1 THEN SET(ac, power, on)"})j");
  CHECK(bad.status == 422);
  CHECK(bad.body["code"] == "SyntaxError");
  CHECK(bad.body["position"]["line"] == 1);
  CHECK(bad.body["position"]["col"] == 7);
  const ApiResponse unresolved = f.call("POST", "/rules", "WHEN attic.temp > 1 THEN SET(ac, power, on)");
  CHECK(unresolved.status == 422);
  CHECK(unresolved.body["code"] == "UnresolvedReference");
  CHECK(f.call("GET", "/rules").body.size() == before);

  CHECK(f.call("POST", "/rules", "WHEN room.temp > 30 THEN SET(ac, power, on)").status == 201);
  CHECK(f.call("GET", "/rules").body.size() == before + 1);
}

TEST_CASE("loops, plans and the dashboard snapshot") {
  Fixture f;
  const ApiResponse loops = f.call("GET", "/loops");
  REQUIRE(loops.status == 200);
  REQUIRE(!loops.body.empty());
  CHECK(f.call("GET", "/loops/edge-home").body == loops.body[0]);
  CHECK(f.call("GET", "/loops/nowhere").status == 404);

  const ApiResponse plans = f.call("GET", "/plans?region=home");
  REQUIRE(plans.status == 200);
  CHECK(!plans.body.empty());
  CHECK(f.call("GET", "/plans?region=mars").body.empty());

  const ApiResponse snap = f.call("GET", "/dashboard/snapshot");
  CHECK(snap.status == 200);
  CHECK(snap.body == f.platform.snapshot());
  CHECK(snap.body["run"]["tick"] == 30);
}

TEST_CASE("unknown routes are 404 and mutations after the horizon are 409") {
  Fixture f;
  CHECK(f.call("GET", "/nope").status == 404);
  CHECK(f.call("PATCH", "/devices").status == 404);
  f.platform.run();
  CHECK(f.platform.finished());
  CHECK(f.call("POST", "/users", R"({"name":"late","email":"late@example.org"})").status == 409);
  CHECK(f.call("GET", "/devices").status == 200);
}
