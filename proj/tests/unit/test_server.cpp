#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "iotarch/server.hpp"
#include "support.hpp"

using namespace iotarch;

namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

ScenarioConfig short_run(Tick ticks) {
  ScenarioConfig c = test::scenario("smart-home");
  c.ticks = ticks;
  return c;
}

Json get_json(httplib::Client& client, const std::string& path, int expect = 200) {
  auto res = client.Get(path);
  REQUIRE(res);
  CHECK(res->status == expect);
  return Json::parse(res->body);
}

}  // namespace

TEST_CASE("HTTP endpoints answer over a real socket") {
  Platform platform(short_run(10000));
  Server server(platform, ServerOptions{"127.0.0.1", 0, 1});
  server.start();
  REQUIRE(server.port() != 0);
  httplib::Client client("127.0.0.1", server.port());
  client.set_read_timeout(5, 0);

  const Json devices = get_json(client, "/devices");
  CHECK(devices.size() == 2);

  auto created = client.Post("/users", R"({"name":"dee","email":"dee@example.org"})", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  CHECK(created->get_header_value("Content-Type") == "application/json");
  const Json user = Json::parse(created->body);
  CHECK(get_json(client, "/users/" + std::to_string(user["id"].get<std::uint64_t>())) == user);

  auto dup = client.Post("/users", R"({"name":"dee","email":"dee@example.org"})", "application/json");
  REQUIRE(dup);
  CHECK(dup->status == 409);
  CHECK(Json::parse(dup->body)["code"] == "DuplicateEmail");

  auto bad_rule = client.Post("/rules", "WHEN r@om.temp > 1 THEN SET(ac, power, on)", "text/plain");
  REQUIRE(bad_rule);
  CHECK(bad_rule->status == 422);
  CHECK(Json::parse(bad_rule->body)["position"]["col"] == 7);

  get_json(client, "/no/such/route", 404);

  auto cmd = client.Post("/devices/ac/commands", R"({"resourceId":"power","value":true})", "application/json");
  REQUIRE(cmd);
  CHECK(cmd->status == 201);
  const std::string id = Json::parse(cmd->body)["id"];
  Json outcome;
  for (int i = 0; i < 500; ++i) {
    outcome = get_json(client, "/commands/" + id);
    if (outcome["outcome"] != "pending") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  CHECK(outcome["outcome"] == "acked");

  const Json snap = get_json(client, "/dashboard/snapshot");
  CHECK(snap["run"]["tick"].get<Tick>() > 0);
  server.stop();
}

TEST_CASE("concurrent clients are served through the command queue") {
  Platform platform(short_run(10000));
  Server server(platform, ServerOptions{"127.0.0.1", 0, 1});
  server.start();
  std::atomic<int> ok{0};
  std::vector<std::thread> clients;
  for (int c = 0; c < 8; ++c) {
    clients.emplace_back([&, c] {
      httplib::Client client("127.0.0.1", server.port());
      client.set_read_timeout(5, 0);
      for (int i = 0; i < 10; ++i) {
        const std::string email = "u" + std::to_string(c) + "-" + std::to_string(i) + "@example.org";
        auto res = client.Post("/users", Json{{"name", "u"}, {"email", email}}.dump(), "application/json");
        if (res && res->status == 201) ++ok;
      }
    });
  }
  for (auto& t : clients) t.join();
  CHECK(ok.load() == 80);
  server.stop();
  CHECK(platform.app().users().size() >= 80);
}

TEST_CASE("GET /events streams envelopes filtered by topic prefix") {
  Platform platform(short_run(10000));
  Server server(platform, ServerOptions{"127.0.0.1", 0, 1});
  server.start();

  asio::io_context io;
  tcp::resolver resolver(io);
  websocket::stream<tcp::socket> ws(io);
  asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.port())));
  ws.handshake("127.0.0.1", "/events?prefix=telemetry/");
  for (int i = 0; i < 5; ++i) {
    beast::flat_buffer buffer;
    ws.read(buffer);
    const Json e = Json::parse(beast::buffers_to_string(buffer.data()));
    CHECK(e["topic"].get<std::string>().rfind("telemetry/", 0) == 0);
    CHECK(e["schema"] == "telemetry/1");
    CHECK(e.contains("body"));
  }
  server.stop();
  beast::flat_buffer rest;
  beast::error_code ec;
  while (!ec) ws.read(rest, ec);
  CHECK(ec);
}

TEST_CASE("after the horizon reads still work and mutations are refused") {
  Platform platform(short_run(20));
  Server server(platform, ServerOptions{"127.0.0.1", 0, 1});
  server.start();
  httplib::Client client("127.0.0.1", server.port());
  client.set_read_timeout(5, 0);
  Json snap;
  for (int i = 0; i < 2000; ++i) {
    snap = get_json(client, "/dashboard/snapshot");
    if (snap["run"]["ended"] == true) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  CHECK(snap["run"]["ended"] == true);
  CHECK(snap["run"]["tick"] == 19);
  auto late = client.Post("/users", R"({"name":"late","email":"late@example.org"})", "application/json");
  REQUIRE(late);
  CHECK(late->status == 409);
  server.stop();
}

TEST_CASE("the platform keeps running safely after its server is gone") {
  Platform platform(short_run(10000));
  {
    Server server(platform, ServerOptions{"127.0.0.1", 0, 1});
    server.start();
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  const Tick before = platform.now();
  platform.advance(before + 20);
  CHECK(platform.now() == before + 20);
  CHECK(platform.summary().violations.empty());
}

TEST_CASE("stop is idempotent and call answers 503 once stopped") {
  Platform platform(short_run(10000));
  Server server(platform, ServerOptions{"127.0.0.1", 0, 1});
  server.start();
  CHECK(server.call(make_request("GET", "/devices")).status == 200);
  server.stop();
  server.stop();
  CHECK(server.call(make_request("GET", "/devices")).status == 503);
}
