#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "iotarch/kernel.hpp"

namespace iotarch {

/// Validated topic path: 1..8 segments of [a-z0-9_-]+.
class Topic {
 public:
  explicit Topic(std::string path);
  static bool valid(std::string_view path) noexcept;

  const std::string& str() const noexcept { return path_; }
  const std::vector<std::string>& segments() const noexcept { return segments_; }

  bool operator==(const Topic& other) const noexcept { return path_ == other.path_; }

 private:
  std::string path_;
  std::vector<std::string> segments_;
};

/// Topic filter: a segment may be `*` (exactly one segment); a final `#`
/// matches the remaining segments (zero or more).
class TopicPattern {
 public:
  explicit TopicPattern(std::string path);
  static bool valid(std::string_view path) noexcept;

  bool matches(const Topic& topic) const noexcept;
  const std::string& str() const noexcept { return path_; }

 private:
  std::string path_;
  std::vector<std::string> segments_;
};

struct Envelope {
  std::uint64_t id = 0;  // assigned by the broker, unique per run
  std::string schema;
  std::string topic;
  std::string publisher;
  Tick tick_published = 0;
  Json body;

  Json to_json() const;
  static Envelope from_json(const Json& j);
};

/// Schemas the broker accepts. Each maps to a list of required body fields.
const std::map<std::string, std::vector<std::string>>& known_schemas();

using SubscriptionId = std::uint64_t;

struct Subscription {
  SubscriptionId id = 0;
  std::string subscriber;
  TopicPattern pattern;
  Tick created_at = 0;
  bool active = true;
};

class Broker {
 public:
  using Handler = std::function<void(const Envelope&)>;
  using Tap = std::function<void(const Envelope&)>;

  explicit Broker(Kernel& kernel) : kernel_(kernel) {}

  Subscription subscribe(const std::string& subscriber, const std::string& pattern,
                         Handler handler);
  void unsubscribe(SubscriptionId id);

  /// Delivery to each matching live subscription happens at now() + 1.
  /// Returns the number of matching subscriptions at publish time.
  std::size_t publish(const std::string& topic, Envelope envelope);
  /// Convenience form used by components.
  std::size_t publish(const std::string& topic, const std::string& schema,
                      const std::string& publisher, Json body);

  /// Observers of every accepted publish (the live event stream uses this).
  void add_tap(Tap tap) { taps_.push_back(std::move(tap)); }

  const std::map<SubscriptionId, Subscription>& subscriptions() const noexcept {
    return subscriptions_;
  }
  std::uint64_t published_count() const noexcept { return next_message_id_ - 1; }
  Kernel& kernel() noexcept { return kernel_; }

 private:
  Kernel& kernel_;
  std::map<SubscriptionId, Subscription> subscriptions_;
  std::map<SubscriptionId, Handler> handlers_;
  std::vector<Tap> taps_;
  SubscriptionId next_subscription_id_ = 1;
  std::uint64_t next_message_id_ = 1;
};

}  // namespace iotarch
