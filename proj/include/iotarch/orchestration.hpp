#pragma once

// MAPE-K loops at the edge, the cloud global controller, and the peer
// coordination used when loops run without a master.
//
// Every phase runs inside a kernel handler and hands over to the next phase
// through the broker, so each hop costs exactly one tick:
//
//   local:        M(t) -> A(t+1) -> P(t+2) -> E(t+3) -> command lands t+4
//   centralized:  M(t) -> A(t+1) -> P(t+2) -> intake(t+3) -> global A(t+4)
//                 -> global P(t+5) -> edge relay(t+6) -> E(t+7) -> lands t+8

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iotarch/broker.hpp"
#include "iotarch/edge_node.hpp"
#include "iotarch/knowledge.hpp"

namespace iotarch {

enum class Mode { Centralized, Decentralized };
std::string to_string(Mode mode);
Mode mode_from_string(const std::string& text);

struct Action {
  enum class Kind { DeviceCommand, Notify, RuleToggle };
  std::string id;  // <plan id>/a<index>, assigned when the plan is built
  Kind kind = Kind::Notify;
  std::string region;
  std::uint32_t device = 0;
  std::uint16_t resource = 0;
  std::string topic;        // notify: published on notify/<topic>
  std::string target_rule;  // rule-toggle
  Json value;
  std::string message;
  std::string rule;  // producing rule, empty for synthesized actions
  std::int64_t priority = 0;

  Json to_json() const;
  static Action from_json(const Json& j);
};

std::string to_string(Action::Kind kind);

/// Action carried out by a linked rule. Escalate has no direct action and
/// maps to a notification on notify/escalations.
Action action_for_rule(const Rule& rule);

/// (priority desc, rule id asc); stable for equal keys.
void order_actions(std::vector<Action>& actions);

enum class Severity { Info, Warn, Critical };
std::string to_string(Severity severity);

struct AnalysisReport {
  std::string id;
  std::string loop;
  Tick tick = 0;
  std::vector<Symptom> symptoms;
  std::vector<std::string> matched_rules;
  Severity severity = Severity::Info;
  std::set<std::string> scope;

  Json to_json() const;
  static AnalysisReport from_json(const Json& j);
};

/// Critical if any device went offline or any anomaly exceeds twice the
/// threshold; warn otherwise (info for an empty set).
Severity severity_for(const std::vector<Symptom>& symptoms, double z_threshold);

struct Plan {
  std::string id;
  std::string origin;  // loop id or "global"
  std::vector<Action> actions;
  std::set<std::string> scope;
  std::vector<std::string> cause;
  std::int64_t priority = 0;
  Tick created_at = 0;
  Severity severity = Severity::Warn;
  bool shared = false;
  std::vector<std::string> involved;  // loop ids, shared plans only

  Json to_json() const;
  static Plan from_json(const Json& j);
  /// Assigns action ids and checks the plan invariants (non-empty actions,
  /// every action region inside the scope).
  void finalize();
};

/// Lexicographically smallest involved loop. Throws BadRequest when empty.
std::string elect_coordinator(const std::string& plan_id, const std::set<std::string>& involved);

/// Groups items whose scopes overlap (transitively). Groups are ordered by
/// their first member; members keep input order.
std::vector<std::vector<std::size_t>> group_by_scope(const std::vector<std::set<std::string>>& scopes);

struct OrchestrationConfig {
  Tick ack_timeout = 5;
  Tick summary_every = 50;  // 0 disables region summaries
};

struct ActionOutcome {
  std::string action;
  bool ok = true;
  std::string error;
};

/// Rule ownership: which engine plans a rule's action.
enum class RuleOwner { Edge, Cloud };

class MapeLoop {
 public:
  /// True when some gateway attaches the device (commands can be delivered).
  using Reachability = std::function<bool(std::uint32_t device)>;

  MapeLoop(std::string id, std::string region, Mode mode, Kernel& kernel, Broker& broker,
           EdgeNode& edge, const Registry& registry, OrchestrationConfig config,
           Reachability reachable);

  /// Subscribes the phases. `loops_by_region` is the static topology used to
  /// address shared plans.
  void start(std::map<std::string, std::string> loops_by_region);

  /// End-of-tick hook: Monitor over this tick's deliveries, coordination
  /// timeouts and region summaries.
  void on_tick(Tick tick);

  std::optional<AnalysisReport> analyse_step();
  /// Publishes a local plan, an escalation or a shared plan for the report.
  void plan_step(const AnalysisReport& report);
  /// Runs the actions of `plan` that belong to this loop's region (all of
  /// them when `all_regions`). Idempotent by plan id.
  std::vector<ActionOutcome> execute_step(const Plan& plan, bool all_regions = true);

  /// Rules whose condition this loop watches but whose action the cloud
  /// plans (centralized mode, multi-region rules).
  void set_owner(const std::string& rule, RuleOwner owner) { owners_[rule] = owner; }
  RuleOwner owner(const std::string& rule) const;

  /// Fault hook: a muted loop drops coordination assignments.
  void set_muted(bool muted) { muted_ = muted; }

  const std::string& id() const noexcept { return id_; }
  const std::string& region() const noexcept { return region_; }
  Mode mode() const noexcept { return mode_; }
  KnowledgeBase& kb() noexcept { return kb_; }
  const KnowledgeBase& kb() const noexcept { return kb_; }
  EdgeNode& edge() noexcept { return edge_; }
  const std::map<std::string, std::uint64_t>& counters() const noexcept { return counters_; }

 private:
  struct PendingCoordination {
    Plan plan;
    std::set<std::string> waiting;
    Tick deadline = 0;
    std::vector<ActionOutcome> outcomes;
  };

  void monitor_step(Tick tick);
  void emit_symptom(Symptom symptom, Tick tick);
  void on_plan(const Envelope& env);
  void on_global_plan(const Envelope& env);
  void on_shared_plan(const Envelope& env);
  void on_assignment(const Envelope& env);
  void on_ack(const Envelope& env);
  void check_timeouts(Tick tick);
  void complete(const Plan& plan, const std::vector<ActionOutcome>& outcomes, const std::string& status,
                Json extra = Json::object());
  ActionOutcome dispatch(const Plan& plan, const Action& action);
  std::vector<Action> actions_for(const std::vector<std::string>& rules) const;
  Plan notify_plan(const AnalysisReport& report, const std::string& why) const;
  void mape_record(const std::string& phase, Json body);

  std::string id_;
  std::string region_;
  Mode mode_;
  Kernel& kernel_;
  Broker& broker_;
  EdgeNode& edge_;
  const Registry& registry_;
  OrchestrationConfig config_;
  Reachability reachable_;
  KnowledgeBase kb_;
  std::map<std::string, std::string> loops_by_region_;
  std::map<std::string, RuleOwner> owners_;

  // Deliveries buffered per phase until the end-of-tick hook.
  struct Inboxes {
    std::vector<Envelope> symptoms, reports, plans, global_plans, shared, assignments, acks;
  };

  std::vector<Envelope> inbox_;  // this tick's telemetry and heartbeats
  Inboxes phases_;
  std::vector<Symptom> unconsumed_;
  std::set<std::string> executed_;
  std::map<std::string, PendingCoordination> pending_;
  std::map<std::string, std::uint64_t> counters_;
  std::uint64_t next_symptom_ = 1;
  std::uint64_t next_report_ = 1;
  std::uint64_t next_plan_ = 1;
  bool muted_ = false;
};

/// Append-only global data storage (escalations, plans, region summaries).
class CloudStore {
 public:
  void append(Tick tick, const std::string& type, Json body);
  const std::vector<Json>& records() const noexcept { return records_; }
  std::map<std::string, std::uint64_t> counts() const;
  std::string to_jsonl() const;

 private:
  std::vector<Json> records_;
};

/// Cloud analysis and planning for multi-region situations (centralized mode).
class GlobalController {
 public:
  GlobalController(Kernel& kernel, Broker& broker, const Registry& registry, double z_threshold);

  void start();
  RuleEngine& rules() noexcept { return rules_; }
  const RuleEngine& rules() const noexcept { return rules_; }
  KnowledgeBase& kb() noexcept { return kb_; }
  const CloudStore& store() const noexcept { return store_; }
  const std::map<std::string, std::uint64_t>& counters() const noexcept { return counters_; }

  /// Merges the pending escalations and publishes one report per group.
  void analyse_step();
  /// One plan per region touched by the report's actions.
  void plan_step(const AnalysisReport& report, const std::vector<Action>& candidates);

 private:
  void intake(const Envelope& env);
  void persist(const std::string& type, Json body);
  void mape_record(const std::string& phase, Json body);

  Kernel& kernel_;
  Broker& broker_;
  const Registry& registry_;
  double z_threshold_;
  RuleEngine rules_;
  KnowledgeBase kb_{"global"};
  CloudStore store_;
  struct Inboxes {
    std::vector<Envelope> escalations, notified, reports, summaries;
  };

  Inboxes inbox_;
  std::vector<Json> pending_;  // escalation bodies not yet analysed
  std::map<std::string, std::uint64_t> counters_;
  std::uint64_t next_report_ = 1;
  std::uint64_t next_plan_ = 1;
};

}  // namespace iotarch
