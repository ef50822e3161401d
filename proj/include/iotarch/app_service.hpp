#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "iotarch/broker.hpp"
#include "iotarch/device.hpp"
#include "iotarch/rule.hpp"

namespace iotarch {

struct User {
  std::uint64_t id = 0;
  std::string name;
  std::string email;
  Tick created_at = 0;
  Json preferences = Json::object();  // "channel", "units" (metric | imperial)

  Json to_json() const;
};

struct UserSubscription {
  std::uint64_t id = 0;
  std::uint64_t user = 0;
  std::string pattern;
  Tick created_at = 0;
  SubscriptionId broker_subscription = 0;

  Json to_json() const;
};

struct Notification {
  std::uint64_t id = 0;
  std::uint64_t user = 0;
  std::uint64_t envelope = 0;
  std::string topic;
  std::string message;
  Tick tick = 0;
  bool read = false;

  Json to_json() const;
};

enum class CommandOutcome { Pending, Acked, Failed };
std::string to_string(CommandOutcome outcome);

struct CommandRequest {
  std::string id;
  std::uint64_t user = 0;
  std::uint32_t device = 0;
  std::uint16_t resource = 0;
  Json value;
  Tick issued_at = 0;
  CommandOutcome outcome = CommandOutcome::Pending;
  std::string reason;
  std::uint64_t ack_envelope = 0;
  Tick resolved_at = 0;

  Json to_json() const;
};

/// Value as shown to a user: Celsius readings become Fahrenheit for users
/// who prefer imperial units.
std::pair<Json, std::string> display_value(const Json& value, const std::string& unit, const Json& preferences);

/// Structured diagnostics for a rejected rule (the HTTP error body).
Json rule_diagnostics(const Error& e);

/// Application layer: user manager, notification manager, device controller
/// and the rule-submission half of the application enabler.
class AppService {
 public:
  /// Installs a linked rule at the engine its scope calls for.
  using RuleInstaller = std::function<void(const Rule&)>;

  AppService(Kernel& kernel, Broker& broker, const Registry& registry);

  /// Subscribes the device controller to acks and command failures.
  void start();
  void set_rule_installer(RuleInstaller installer) { install_ = std::move(installer); }

  /// Throws InvalidEmail or DuplicateEmail.
  User create_user(const std::string& name, const std::string& email, Json preferences = Json::object());
  /// Throws UnknownUser.
  const User& user(std::uint64_t id) const;
  const std::map<std::uint64_t, User>& users() const noexcept { return users_; }

  /// Pattern must be well-formed and rooted at notify/ or telemetry/.
  /// Throws UnknownUser or MalformedPattern.
  UserSubscription subscribe_user(std::uint64_t user, const std::string& pattern);
  /// Throws NotFound.
  void unsubscribe_user(std::uint64_t subscription);
  const std::map<std::uint64_t, UserSubscription>& subscriptions() const noexcept { return subscriptions_; }

  /// Throws UnknownUser.
  std::vector<Notification> notifications(std::uint64_t user) const;
  /// Throws UnknownNotification.
  Notification mark_read(std::uint64_t notification);

  /// Built-in account for commands issued without a user (the dashboard).
  static constexpr std::uint64_t kOperator = 0;

  /// Publishes command/1 on commands/<device>. Throws UnknownUser,
  /// UnknownDevice, UnknownResource or ValueKindMismatch; nothing is
  /// published on error.
  CommandRequest issue_command(std::uint64_t user, const std::string& device, const std::string& resource,
                               const Json& value);
  const CommandRequest* command(const std::string& id) const;
  const std::map<std::string, CommandRequest>& commands() const noexcept { return commands_; }

  /// Parses, links and installs a rule; returns its id. Throws
  /// RuleSyntaxError or Error (UnresolvedReference, ValueKindMismatch).
  std::string submit_rule(const std::string& text);

 private:
  void on_envelope(std::uint64_t user, const Envelope& env);
  void resolve(const std::string& command, CommandOutcome outcome, const std::string& reason,
               std::uint64_t envelope);

  Kernel& kernel_;
  Broker& broker_;
  const Registry& registry_;
  RuleInstaller install_;
  std::map<std::uint64_t, User> users_;
  std::map<std::uint64_t, UserSubscription> subscriptions_;
  std::map<std::uint64_t, Notification> notifications_;
  std::set<std::pair<std::uint64_t, std::uint64_t>> delivered_;  // (user, envelope)
  std::map<std::string, CommandRequest> commands_;
  std::uint64_t next_user_ = 1;
  std::uint64_t next_subscription_ = 1;
  std::uint64_t next_notification_ = 1;
  std::uint64_t next_command_ = 1;
  std::uint64_t next_rule_ = 1;
};

}  // namespace iotarch
