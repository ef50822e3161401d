#include "doctest.h"
#include "iotarch/app_service.hpp"
#include "iotarch/error.hpp"
#include "iotarch/platform.hpp"
#include "support.hpp"

using namespace iotarch;

namespace {

struct Fixture {
  Kernel kernel;
  Broker broker{kernel};
  Registry registry;
  AppService app{kernel, broker, registry};

  Fixture() {
    Thing room{"room", "room", "r1", {}};
    room.properties.push_back({"temp", "C", ValueKind::Float, {}, 22.0, 0.0, 0.0});
    Device ac{2, "ac", "r1", "gw", 10, {}, {}};
    ac.actuators.push_back({1, "power", "room", "temp", ActuatorEffect::Rate, -0.5});
    registry = Registry({room}, {ac}, {});
    app.start();
  }

  void publish_at(Tick t, const std::string& topic, const std::string& message) {
    kernel.schedule(t, "edge", "go", Json::object(),
                    [this, topic, message] { broker.publish(topic, "notify/1", "edge", Json{{"message", message}}); });
  }
};

template <typename F>
Errc error_of(F f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::NotFound;
}

Platform smart_home(Tick ticks) {
  ScenarioConfig c = test::scenario("smart-home");
  c.ticks = ticks;
  return Platform(c);
}

}  // namespace

TEST_CASE("user creation") {
  Fixture f;
  const User ada = f.app.create_user("ada", "ada@x.io");
  CHECK(ada.id == 1);
  CHECK(f.app.create_user("bob", "bob@x.io").id == 2);
  CHECK(error_of([&] { f.app.create_user("ada2", "ada@x.io"); }) == Errc::DuplicateEmail);
  CHECK(error_of([&] { f.app.create_user("eve", "no-at-sign"); }) == Errc::InvalidEmail);
  CHECK(error_of([&] { f.app.user(42); }) == Errc::UnknownUser);
  CHECK(f.app.users().size() == 2);
}

TEST_CASE("subscriptions turn matching envelopes into one notification per user") {
  Fixture f;
  const auto u1 = f.app.create_user("a", "a@x").id;
  const auto u2 = f.app.create_user("b", "b@x").id;
  const auto u3 = f.app.create_user("c", "c@x").id;
  f.app.subscribe_user(u1, "notify/alerts/#");
  f.app.subscribe_user(u1, "notify/#");  // overlapping: still one notification
  f.app.subscribe_user(u2, "notify/alerts/#");
  f.publish_at(3, "notify/alerts/hot", "hot");
  f.publish_at(3, "notify/other", "other");
  f.kernel.run(5);
  const auto n1 = f.app.notifications(u1);
  const auto n2 = f.app.notifications(u2);
  REQUIRE(n1.size() == 2);
  REQUIRE(n2.size() == 1);
  CHECK(n2[0].tick == 4);
  CHECK(n2[0].message == "hot");
  CHECK(n1[0].envelope == n2[0].envelope);
  CHECK(f.app.notifications(u3).empty());
  CHECK(error_of([&] { f.app.subscribe_user(99, "notify/#"); }) == Errc::UnknownUser);
  CHECK(error_of([&] { f.app.subscribe_user(u1, "notify/#/x"); }) == Errc::MalformedPattern);
  CHECK(error_of([&] { f.app.subscribe_user(u1, "commands/#"); }) == Errc::MalformedPattern);
}

TEST_CASE("unsubscribing stops later notifications; reading marks one") {
  Fixture f;
  const auto u = f.app.create_user("a", "a@x").id;
  const auto sub = f.app.subscribe_user(u, "notify/#");
  f.publish_at(1, "notify/x", "first");
  f.kernel.run(2);
  f.app.unsubscribe_user(sub.id);
  f.publish_at(3, "notify/x", "second");
  f.kernel.run(5);
  const auto inbox = f.app.notifications(u);
  REQUIRE(inbox.size() == 1);
  CHECK_FALSE(inbox[0].read);
  CHECK(f.app.mark_read(inbox[0].id).read);
  CHECK(f.app.notifications(u)[0].read);
  CHECK(error_of([&] { f.app.mark_read(999); }) == Errc::UnknownNotification);
  CHECK(error_of([&] { f.app.unsubscribe_user(sub.id); }) == Errc::NotFound);
}

TEST_CASE("issue_command validates before publishing") {
  Fixture f;
  const auto u = f.app.create_user("a", "a@x").id;
  CHECK(error_of([&] { f.app.issue_command(99, "ac", "power", true); }) == Errc::UnknownUser);
  CHECK(error_of([&] { f.app.issue_command(u, "fridge", "power", true); }) == Errc::UnknownDevice);
  CHECK(error_of([&] { f.app.issue_command(u, "ac", "power", 2.0); }) == Errc::ValueKindMismatch);
  CHECK(test::pubs(f.kernel.log().records(), "command/1").empty());
  const CommandRequest c = f.app.issue_command(u, "ac", "power", true);
  CHECK(c.outcome == CommandOutcome::Pending);
  const auto pubs = test::pubs(f.kernel.log().records(), "command/1");
  REQUIRE(pubs.size() == 1);
  CHECK(pubs[0].body["topic"] == "commands/2");
}

TEST_CASE("a user command through the platform is acked within three ticks") {
  Platform p = smart_home(30);
  p.advance(10);
  std::string id;
  p.kernel().commands().post([&] { id = p.app().issue_command(1, "ac", "power", true).id; });
  p.advance(11);
  REQUIRE_FALSE(id.empty());
  const Tick issued = p.app().command(id)->issued_at;
  CHECK(issued == 11);
  p.advance(20);
  const CommandRequest* c = p.app().command(id);
  CHECK(c->outcome == CommandOutcome::Acked);
  // Publish hop, downlink, ack: the device emits its ack frame at +3.
  // The outcome follows after the gateway decode hop and the broker hop.
  CHECK(c->resolved_at == issued + 5);
  // Audit: the ack it cites is exactly one ack/1 publish for this command.
  std::size_t acks = 0;
  for (const auto& r : test::pubs(p.kernel().log().records(), "ack/1")) {
    if (r.body["body"]["commandId"] == id) {
      ++acks;
      CHECK(r.body["body"]["ts"] == issued + 3);
      CHECK(r.body["msg"] == c->ack_envelope);
    }
  }
  CHECK(acks == 1);
}

TEST_CASE("a command for an unattached device fails with the gateway's reason") {
  std::string text = test::read_scenario_text("smart-home");
  const std::string attached = "attached = [1, 2]";
  text.replace(text.find(attached), attached.size(), "attached = [1]");
  ScenarioConfig c = parse_config_string(text);
  c.ticks = 20;
  c.rules.clear();
  c.services.clear();
  c.processes.clear();
  c.domain.tasks.clear();
  Platform p(c);
  p.advance(2);
  std::string id;
  p.kernel().commands().post([&] { id = p.app().issue_command(AppService::kOperator, "ac", "power", true).id; });
  p.advance(10);
  const CommandRequest* cmd = p.app().command(id);
  REQUIRE(cmd);
  CHECK(cmd->outcome == CommandOutcome::Failed);
  CHECK(cmd->reason == "UnattachedDevice");
}

TEST_CASE("submit_rule installs valid rules and reports diagnostics") {
  Platform p = smart_home(30);
  p.advance(3);
  std::string id;
  p.kernel().commands().post([&] { id = p.app().submit_rule("WHEN room.temp > 30 THEN NOTIFY(alerts/x, \"t\")"); });
  p.advance(4);
  CHECK(p.projection().rules().count(id) == 1);

  try {
    p.app().submit_rule("WHEN r@om.temp > 1 THEN ESCALATE(\"x\")");
    FAIL("expected a syntax error");
  } catch (const RuleSyntaxError& e) {
    const Json d = rule_diagnostics(e);
    CHECK(d["code"] == "SyntaxError");
    CHECK(d["position"]["line"] == 1);
    CHECK(d["position"]["col"] == 7);
  }
  const auto rules_before = p.projection().rules().size();
  try {
    p.app().submit_rule("WHEN room.temp > 1 THEN SET(fridge, power, on)");
    FAIL("expected UnresolvedReference");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnresolvedReference);
  }
  p.advance(5);
  CHECK(p.projection().rules().size() == rules_before);
}

TEST_CASE("imperial users see Fahrenheit") {
  const auto [v, unit] = display_value(20.0, "C", Json{{"units", "imperial"}});
  CHECK(v.get<double>() == doctest::Approx(68.0));
  CHECK(unit == "F");
  const auto [same, c] = display_value(20.0, "C", Json::object());
  CHECK(same == 20.0);
  CHECK(c == "C");
}

TEST_CASE("dashboard snapshot: fresh run and purity") {
  Platform p = smart_home(120);
  p.advance(0);
  const Json fresh = p.snapshot();
  for (const auto& d : fresh["devices"]) CHECK(d["status"] == "online");
  CHECK(fresh["plans"]["total"] == 0);
  p.advance(100);
  const Json a = p.snapshot();
  const Json b = p.snapshot();
  CHECK(a == b);
  std::uint64_t completed = 0;
  for (const auto& loop : a["loopStates"]) completed += loop["plansCompleted"].get<std::uint64_t>();
  CHECK(completed >= 1);
}
