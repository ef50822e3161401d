#pragma once

// Rule DSL:
//
//   rule    := "WHEN" cond ("FOR" INT "TICKS")? "THEN" action ("PRIORITY" INT)?
//   cond    := term ("OR" term)*
//   term    := factor ("AND" factor)*
//   factor  := operand CMP NUMBER | "(" cond ")"
//   operand := PROP_PATH | AGG "(" PROP_PATH "," INT ")"
//   AGG     := MEAN | MIN | MAX | STDDEV | EWMA
//   CMP     := ">" | ">=" | "<" | "<=" | "==" | "!="
//   action  := "SET" "(" DEVICE "," RESOURCE "," VALUE ")"
//            | "NOTIFY" "(" TOPIC "," STRING ")"
//            | "ESCALATE" "(" STRING ")"
//
// PROP_PATH is thing.property. VALUE is on/off/true/false, a number or a
// quoted string. EWMA(p, n) uses alpha = 2 / (n + 1) over the last n samples.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iotarch/analytics.hpp"
#include "iotarch/device.hpp"
#include "iotarch/error.hpp"
#include "iotarch/frame.hpp"

namespace iotarch {

enum class Aggregate { None, Mean, Min, Max, Stddev, Ewma };
enum class Comparator { Gt, Ge, Lt, Le, Eq, Ne };

std::string to_string(Aggregate agg);
std::string to_string(Comparator cmp);

struct Operand {
  std::string thing;
  std::string property;
  Aggregate aggregate = Aggregate::None;
  std::uint32_t window = 0;

  std::string path() const { return thing + "." + property; }
  bool operator==(const Operand&) const = default;
};

struct Comparison {
  Operand lhs;
  Comparator op = Comparator::Gt;
  double rhs = 0.0;

  bool operator==(const Comparison&) const = default;
};

/// Condition tree. Leaves hold a comparison; And/Or nodes hold exactly two
/// children and nest to the left.
struct Condition {
  enum class Kind { Compare, And, Or };
  Kind kind = Kind::Compare;
  Comparison compare;
  std::vector<Condition> children;

  bool operator==(const Condition&) const = default;
};

struct RuleAction {
  enum class Kind { Set, Notify, Escalate };
  Kind kind = Kind::Notify;
  std::string device;
  std::string resource;
  FrameValue value = false;
  std::string topic;
  std::string message;

  bool operator==(const RuleAction&) const = default;
};

std::string to_string(RuleAction::Kind kind);

/// Resolution results filled in by link_rule.
struct RuleLink {
  bool linked = false;
  std::map<std::string, SeriesKey> operands;  // thing.property -> series
  std::optional<ResourceInfo> target;         // SET target
  std::string home_region;                    // region of the condition
  std::set<std::string> regions;              // condition regions + SET target region
};

struct Rule {
  std::string id;
  std::string text;
  Condition condition;
  std::uint32_t for_ticks = 0;
  RuleAction action;
  std::int64_t priority = 0;
  bool enabled = true;
  RuleLink link;

  /// A region id, or "global" when the rule touches several regions.
  std::string scope() const;
  bool operator==(const Rule& other) const;  // compares the parsed form only
};

class RuleSyntaxError : public Error {
 public:
  RuleSyntaxError(Errc code, std::size_t line, std::size_t col, std::vector<std::string> expected,
                  const std::string& message);

  std::size_t line() const noexcept { return line_; }
  std::size_t col() const noexcept { return col_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  std::size_t line_;
  std::size_t col_;
  std::vector<std::string> expected_;
};

/// Throws RuleSyntaxError with code SyntaxError or UnknownAggregate.
Rule parse_rule(const std::string& text, std::string id = {});

/// Canonical text form; parse_rule(print_rule(r)) == r.
std::string print_rule(const Rule& rule);
std::string print_condition(const Condition& cond);

/// Resolves property paths and SET targets against the registry. Throws
/// UnresolvedReference (or ValueKindMismatch for a SET value of the wrong
/// kind).
void link_rule(Rule& rule, const Registry& registry);

/// Parsed rules from a rule file: one per line, `#` starts a comment.
struct RuleFileEntry {
  std::size_t line = 0;
  std::optional<Rule> rule;
  std::optional<RuleSyntaxError> error;
};
std::vector<RuleFileEntry> parse_rule_file(const std::string& content);

}  // namespace iotarch
