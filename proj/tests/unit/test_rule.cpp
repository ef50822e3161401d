#include "doctest.h"
#include "iotarch/edge_node.hpp"
#include "iotarch/error.hpp"
#include "iotarch/rule.hpp"

using namespace iotarch;

namespace {

Registry registry() {
  Thing room{"room", "room", "r1", {}};
  room.properties.push_back({"temp", "C", ValueKind::Float, {}, 22.0, 0.0, 0.0});
  room.properties.push_back({"hum", "%", ValueKind::Float, {}, 40.0, 0.0, 0.0});
  Thing hall{"hall", "room", "r2", {}};
  hall.properties.push_back({"temp", "C", ValueKind::Float, {}, 22.0, 0.0, 0.0});
  Device thermo{1, "thermo", "r1", "gw1", 10, {}, {}};
  thermo.sensors.push_back({1, "temp", "room", "temp", 1, SampleMode::Periodic, 0.0, ""});
  thermo.sensors.push_back({2, "hum", "room", "hum", 1, SampleMode::Periodic, 0.0, ""});
  Device ac{2, "ac", "r1", "gw1", 10, {}, {}};
  ac.actuators.push_back({1, "power", "room", "temp", ActuatorEffect::Rate, -0.5});
  Device hall_thermo{3, "hall-thermo", "r2", "gw2", 10, {}, {}};
  hall_thermo.sensors.push_back({1, "temp", "hall", "temp", 1, SampleMode::Periodic, 0.0, ""});
  hall_thermo.actuators.push_back({2, "fan", "hall", "temp", ActuatorEffect::Rate, -0.2});
  return Registry({room, hall}, {thermo, ac, hall_thermo}, {});
}

const Comparison& leaf(const Condition& c) {
  REQUIRE(c.kind == Condition::Kind::Compare);
  return c.compare;
}

RuleSyntaxError syntax_error(const std::string& text) {
  try {
    parse_rule(text);
  } catch (const RuleSyntaxError& e) {
    return e;
  }
  FAIL("expected a syntax error for: " << text);
  return RuleSyntaxError(Errc::SyntaxError, 0, 0, {}, "");
}

Condition random_condition(RngStream& rng, int depth) {
  if (depth == 0 || rng.next() % 3 == 0) {
    static const char* paths[][2] = {{"room", "temp"}, {"room", "hum"}, {"a", "x"}, {"b_2", "y-1"}};
    const auto* p = paths[rng.next() % 4];
    Operand op{p[0], p[1], static_cast<Aggregate>(rng.next() % 6), 0};
    if (op.aggregate != Aggregate::None) op.window = 1 + static_cast<std::uint32_t>(rng.next() % 20);
    const double rhs = static_cast<double>(static_cast<std::int64_t>(rng.next() % 2001) - 1000) / 8.0;
    return Condition{Condition::Kind::Compare, {op, static_cast<Comparator>(rng.next() % 6), rhs}, {}};
  }
  Condition c;
  c.kind = rng.next() % 2 ? Condition::Kind::And : Condition::Kind::Or;
  c.children = {random_condition(rng, depth - 1), random_condition(rng, depth - 1)};
  return c;
}

}  // namespace

TEST_CASE("simple SET rule") {
  const Rule r = parse_rule("WHEN room.temp > 23 THEN SET(ac, power, on)");
  const auto& c = leaf(r.condition);
  CHECK(c.lhs == Operand{"room", "temp", Aggregate::None, 0});
  CHECK(c.op == Comparator::Gt);
  CHECK(c.rhs == 23);
  CHECK(r.action.kind == RuleAction::Kind::Set);
  CHECK(r.action.device == "ac");
  CHECK(r.action.resource == "power");
  CHECK(r.action.value == FrameValue(true));
  CHECK(r.for_ticks == 0);
  CHECK(r.priority == 0);
}

TEST_CASE("AND binds tighter than OR") {
  const Rule r = parse_rule(R"(WHEN a.x > 1 OR a.x < 0 AND a.y == 2 THEN NOTIFY(alerts, "m"))");
  REQUIRE(r.condition.kind == Condition::Kind::Or);
  CHECK(leaf(r.condition.children[0]).op == Comparator::Gt);
  const auto& rhs = r.condition.children[1];
  REQUIRE(rhs.kind == Condition::Kind::And);
  CHECK(leaf(rhs.children[0]).op == Comparator::Lt);
  CHECK(leaf(rhs.children[1]).lhs.property == "y");
  CHECK(r.action.kind == RuleAction::Kind::Notify);
  CHECK(r.action.topic == "alerts");
  CHECK(r.action.message == "m");
}

TEST_CASE("operators are left associative and parentheses override precedence") {
  const Rule left = parse_rule(R"(WHEN a.x > 1 OR a.x > 2 OR a.x > 3 THEN ESCALATE("e"))");
  REQUIRE(left.condition.kind == Condition::Kind::Or);
  CHECK(left.condition.children[0].kind == Condition::Kind::Or);
  CHECK(leaf(left.condition.children[1]).rhs == 3);
  const Rule grouped = parse_rule(R"(WHEN (a.x > 1 OR a.x < 0) AND a.y == 2 THEN ESCALATE("e"))");
  REQUIRE(grouped.condition.kind == Condition::Kind::And);
  CHECK(grouped.condition.children[0].kind == Condition::Kind::Or);
}

TEST_CASE("aggregate operand with FOR and PRIORITY") {
  const Rule r = parse_rule(R"(WHEN MEAN(room.temp, 3) > 23 FOR 2 TICKS THEN ESCALATE("hot") PRIORITY 5)");
  const auto& c = leaf(r.condition);
  CHECK(c.lhs.aggregate == Aggregate::Mean);
  CHECK(c.lhs.window == 3);
  CHECK(r.for_ticks == 2);
  CHECK(r.action.kind == RuleAction::Kind::Escalate);
  CHECK(r.action.message == "hot");
  CHECK(r.priority == 5);
}

TEST_CASE("syntax errors carry line, column and the expected set") {
  const auto e = syntax_error("WHEN  > 1 THEN ESCALATE(\"x\")");
  CHECK(e.code() == Errc::SyntaxError);
  CHECK(e.line() == 1);
  CHECK(e.col() == 7);
  CHECK_FALSE(e.expected().empty());

  const auto missing_then = syntax_error("WHEN a.x > 1 SET(ac, power, on)");
  CHECK(missing_then.col() == 14);

  const auto agg = syntax_error("WHEN MEDIAN(a.x, 3) > 1 THEN ESCALATE(\"x\")");
  CHECK(agg.code() == Errc::UnknownAggregate);
  CHECK(agg.col() == 6);

  CHECK(syntax_error("").code() == Errc::SyntaxError);
  CHECK(syntax_error("WHEN a.x > 1 THEN ESCALATE(\"x\") trailing").code() == Errc::SyntaxError);
  CHECK(syntax_error("WHEN a.x > THEN ESCALATE(\"x\")").code() == Errc::SyntaxError);
  CHECK(syntax_error("WHEN MEAN(a.x, 0) > 1 THEN ESCALATE(\"x\")").code() == Errc::SyntaxError);
}

TEST_CASE("rule files report per-line errors and skip comments") {
  const auto entries = parse_rule_file(
      "# comment\n"
      "WHEN a.x > 1 THEN ESCALATE(\"x\")\n"
      "\n"
      "WHEN a.x >> 1 THEN ESCALATE(\"x\")\n");
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].rule.has_value());
  CHECK(entries[0].line == 2);
  REQUIRE(entries[1].error.has_value());
  CHECK(entries[1].error->line() == 4);
  CHECK(entries[1].error->col() == 11);
}

TEST_CASE("property: print then parse is the identity on random rules") {
  RngStream rng(11, "rules");
  for (int i = 0; i < 500; ++i) {
    Rule r;
    r.condition = random_condition(rng, 4);
    r.for_ticks = rng.next() % 2 ? static_cast<std::uint32_t>(1 + rng.next() % 9) : 0;
    r.priority = static_cast<std::int64_t>(rng.next() % 21) - 10;
    switch (rng.next() % 3) {
      case 0: {
        r.action.kind = RuleAction::Kind::Set;
        r.action.device = "ac";
        r.action.resource = "power";
        const FrameValue values[] = {true, false, 21.5, std::string("eco mode")};
        r.action.value = values[rng.next() % 4];
        break;
      }
      case 1:
        r.action.kind = RuleAction::Kind::Notify;
        r.action.topic = "alerts/hot";
        r.action.message = "say \"hi\"";
        break;
      default:
        r.action.kind = RuleAction::Kind::Escalate;
        r.action.message = "x";
    }
    const std::string text = print_rule(r);
    CAPTURE(text);
    const Rule back = parse_rule(text);
    CHECK(back == r);
    CHECK(print_rule(back) == text);
  }
}

TEST_CASE("linking resolves operands and targets, and rejects unknown references") {
  const Registry reg = registry();
  Rule r = parse_rule("WHEN room.temp > 23 THEN SET(ac, power, on)", "r");
  link_rule(r, reg);
  CHECK(r.link.linked);
  CHECK(r.link.operands.at("room.temp") == SeriesKey{1, "temp"});
  CHECK(r.link.home_region == "r1");
  CHECK(r.scope() == "r1");

  Rule wide = parse_rule("WHEN room.temp > 23 THEN SET(hall-thermo, fan, on)", "w");
  link_rule(wide, reg);
  CHECK(wide.link.home_region == "r1");
  CHECK(wide.link.regions == std::set<std::string>{"r1", "r2"});
  CHECK(wide.scope() == "global");

  for (const char* text : {"WHEN room.temp > 23 AND hall.temp > 23 THEN ESCALATE(\"both\")", "WHEN cellar.temp > 1 THEN ESCALATE(\"x\")", "WHEN room.temp > 1 THEN SET(heater, power, on)",
                           "WHEN room.temp > 1 THEN SET(ac, fan, on)"}) {
    CAPTURE(text);
    Rule bad = parse_rule(text);
    try {
      link_rule(bad, reg);
      FAIL("expected UnresolvedReference");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::UnresolvedReference);
    }
  }
  Rule kind = parse_rule("WHEN room.temp > 1 THEN SET(ac, power, 3.5)");
  try {
    link_rule(kind, reg);
    FAIL("expected ValueKindMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ValueKindMismatch);
  }
}

TEST_CASE("evaluation: strict boundary, sustain window, missing data") {
  const Registry reg = registry();
  RuleEngine engine;
  Rule mean = parse_rule("WHEN MEAN(room.temp, 3) > 23 THEN ESCALATE(\"m\")", "mean");
  link_rule(mean, reg);
  Rule sustained = parse_rule("WHEN room.temp > 23 FOR 3 TICKS THEN ESCALATE(\"s\")", "sustained");
  link_rule(sustained, reg);
  Rule humid = parse_rule("WHEN room.hum > 50 THEN ESCALATE(\"h\")", "humid");
  link_rule(humid, reg);
  engine.install(mean);
  engine.install(sustained);
  engine.install(humid);

  SeriesMap series;
  series.emplace(SeriesKey{1, "temp"}, SeriesWindow({1, "temp"}, 20));
  auto& w = series.at({1, "temp"});
  w.push(0, 20);
  w.push(1, 21);
  w.push(2, 28);
  CHECK_FALSE(engine.evaluate_rule(*engine.find("mean"), series, 2));  // mean is exactly 23

  w.push(10, 24);
  CHECK_FALSE(engine.evaluate_rule(*engine.find("sustained"), series, 10));
  w.push(11, 24);
  CHECK_FALSE(engine.evaluate_rule(*engine.find("sustained"), series, 11));
  w.push(12, 22);
  CHECK_FALSE(engine.evaluate_rule(*engine.find("sustained"), series, 12));

  const auto symptoms = engine.evaluate_all(series, 13);
  CHECK(engine.skipped() == 1);  // humid has no samples
  CHECK(symptoms.size() == 1);   // mean of [24, 24, 22] > 23
}

TEST_CASE("property: a FOR n rule firing implies the plain rule fired on the n ticks before") {
  const Registry reg = registry();
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    CAPTURE(seed);
    RngStream rng(seed, "sustain");
    const std::uint32_t n = 1 + static_cast<std::uint32_t>(rng.next() % 5);
    Rule plain = parse_rule("WHEN room.temp > 23 THEN ESCALATE(\"p\")", "plain");
    Rule held = parse_rule("WHEN room.temp > 23 FOR " + std::to_string(n) + " TICKS THEN ESCALATE(\"h\")", "held");
    link_rule(plain, reg);
    link_rule(held, reg);
    RuleEngine engine;
    engine.install(plain);
    engine.install(held);
    SeriesMap series;
    series.emplace(SeriesKey{1, "temp"}, SeriesWindow({1, "temp"}, 20));
    std::vector<bool> plain_fired;
    for (Tick t = 0; t < 200; ++t) {
      series.at({1, "temp"}).push(t, 23 + rng.next_symmetric(1.0) + 0.5);
      const bool p = engine.evaluate_rule(*engine.find("plain"), series, t).has_value();
      const bool h = engine.evaluate_rule(*engine.find("held"), series, t).has_value();
      plain_fired.push_back(p);
      if (h) {
        REQUIRE(t + 1 >= n);
        for (Tick u = t + 1 - n; u <= t; ++u) CHECK(plain_fired[u]);
      }
    }
  }
}
