#include <set>

#include "doctest.h"
#include "iotarch/error.hpp"
#include "iotarch/kernel.hpp"
#include "support.hpp"

using namespace iotarch;

TEST_CASE("same-tick event scheduled during dispatch runs after already-queued events") {
  Kernel k;
  std::vector<std::string> order;
  k.schedule(5, "a", "e", Json::object(), [&] {
    order.push_back("a");
    k.schedule(5, "c", "e", Json::object(), [&] { order.push_back("c"); });
  });
  k.schedule(5, "b", "e", Json::object(), [&] { order.push_back("b"); });
  k.run(5);
  CHECK(order == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("scheduling in the past is rejected") {
  Kernel k;
  k.run(5);
  CHECK(k.now() == 5);
  try {
    k.schedule(3, "x", "e", Json::object());
    FAIL("expected SchedulingInPast");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SchedulingInPast);
  }
}

TEST_CASE("events at one tick dispatch in insertion order") {
  Kernel k;
  std::string seen;
  k.schedule(7, "a", "e", Json::object(), [&] { seen += "A"; });
  k.schedule(7, "b", "e", Json::object(), [&] { seen += "B"; });
  k.run(10);
  CHECK(seen == "AB");
}

TEST_CASE("empty queue advances time and logs nothing") {
  Kernel k;
  const auto log = k.run(10);
  CHECK(log.empty());
  CHECK(k.now() == 10);
}

TEST_CASE("run(0) with one event logs exactly that event") {
  Kernel k;
  k.schedule(0, "t", "ping", Json{{"x", 1}});
  const auto log = k.run(0);
  REQUIRE(log.size() == 1);
  CHECK(log[0].tick == 0);
  CHECK(log[0].seq == 0);
  CHECK(log[0].target == "t");
  CHECK(log[0].kind == "ping");
  CHECK(log[0].body == Json{{"x", 1}});
}

TEST_CASE("tick order: commands, events, hooks, then events the hooks scheduled") {
  Kernel k;
  std::vector<std::string> order;
  k.add_tick_hook("h1", [&](Tick t) {
    order.push_back("h1@" + std::to_string(t));
    if (t == 1) k.schedule(1, "late", "e", Json::object(), [&] { order.push_back("late"); });
  });
  k.add_tick_hook("h2", [&](Tick t) { order.push_back("h2@" + std::to_string(t)); });
  k.schedule(1, "ev", "e", Json::object(), [&] { order.push_back("ev"); });
  k.commands().post([&] { order.push_back("cmd"); });
  k.run(1);
  CHECK(order == std::vector<std::string>{"cmd", "h1@0", "h2@0", "ev", "h1@1", "h2@1", "late"});
}

TEST_CASE("dispatch order is sorted by (at, seq) and the clock never decreases") {
  Kernel k(9);
  RngStream rng(9, "schedule");
  for (int i = 0; i < 300; ++i) {
    const Tick at = rng.next() % 50;
    k.schedule(at, "t", "e", Json::object(), [&k, &rng] {
      if (rng.next() % 3 == 0) k.schedule(k.now() + rng.next() % 4, "t", "child", Json::object());
    });
  }
  Tick last_now = 0;
  k.add_tick_hook("clock", [&](Tick t) {
    CHECK(t >= last_now);
    last_now = t;
  });
  k.run(100);
  const auto& d = k.dispatched();
  for (std::size_t i = 1; i < d.size(); ++i) CHECK(d[i - 1] < d[i]);
  const auto& log = k.log().records();
  for (std::size_t i = 1; i < log.size(); ++i) {
    const bool ordered = log[i - 1].tick < log[i].tick ||
                         (log[i - 1].tick == log[i].tick && log[i - 1].seq + 1 == log[i].seq);
    CHECK(ordered);
  }
}

TEST_CASE("log serialization has the fixed key order and parses back") {
  const LogRecord r{3, 1, "broker", "pub", Json{{"b", 2}, {"a", "x"}}};
  const std::string line = serialize(r);
  CHECK(line == R"({"tick":3,"seq":1,"target":"broker","kind":"pub","body":{"a":"x","b":2}})");
  CHECK(parse_log_line(line) == r);
}

TEST_CASE("rng streams match the reference vectors") {
  const Json ref = Json::parse(test::read_file(test::source_path("tests/data/rng_vectors.json")));
  CHECK(std::to_string(fnv1a64("")) == ref["fnv1a64"][""].get<std::string>());
  CHECK(std::to_string(fnv1a64("a")) == ref["fnv1a64"]["a"].get<std::string>());
  for (const auto& v : ref["vectors"]) {
    RngStream s(v["seed"].get<std::uint64_t>(), v["stream"].get<std::string>());
    for (const auto& draw : v["draws"]) CHECK(std::to_string(s.next()) == draw.get<std::string>());
  }
}

TEST_CASE("rng: distinct streams differ, re-created streams repeat") {
  Kernel k1(42), k2(42);
  std::vector<std::uint64_t> a, b, a2;
  for (int i = 0; i < 100; ++i) {
    a.push_back(k1.rng_next("a"));
    b.push_back(k1.rng_next("b"));
    a2.push_back(k2.rng_next("a"));
  }
  CHECK(a != b);
  CHECK(a == a2);
}

TEST_CASE("rng: 10000 unit draws stay in [0, 1)") {
  RngStream s(1, "range");
  for (int i = 0; i < 10000; ++i) {
    const double u = s.next_unit();
    CHECK((u >= 0.0 && u < 1.0));
  }
  CHECK(s.draws() == 10000);
}

TEST_CASE("command queue is drained at the next tick boundary") {
  Kernel k;
  k.run(3);
  int ran_at = -1;
  k.commands().post([&] { ran_at = static_cast<int>(k.now()); });
  CHECK_FALSE(k.commands().empty());
  k.run(4);
  CHECK(ran_at == 4);
  CHECK(k.commands().empty());
}
