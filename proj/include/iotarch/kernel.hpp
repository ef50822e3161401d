#pragma once

// Deterministic discrete-event kernel: logical ticks, (tick, seq) ordered
// dispatch, named RNG streams, and the JSONL event log every run produces.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace iotarch {

using Json = nlohmann::json;
using Tick = std::uint64_t;

/// One line of the event log. Serialized with keys in the fixed order
/// tick, seq, target, kind, body.
struct LogRecord {
  Tick tick = 0;
  std::uint64_t seq = 0;  // position of the line within its tick
  std::string target;
  std::string kind;
  Json body;

  bool operator==(const LogRecord&) const = default;
};

std::string serialize(const LogRecord& record);
LogRecord parse_log_line(std::string_view line);

class EventLog {
 public:
  void append(LogRecord record);
  const std::vector<LogRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  std::string to_jsonl() const;
  void write_jsonl(const std::string& path) const;

 private:
  std::vector<LogRecord> records_;
};

struct ScheduledEvent {
  Tick at = 0;
  std::uint64_t seq = 0;  // insertion order within `at`, assigned by the kernel
  std::string target;
  std::string kind;
  Json body;
  std::function<void()> handler;
};

/// xoshiro256** seeded through splitmix64 from hash(seed, stream_id).
/// The stream-id hash is 64-bit FNV-1a, so every platform draws the same
/// sequence.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view stream_id);

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double next_unit();
  /// Uniform in [-amplitude, amplitude).
  double next_symmetric(double amplitude);

  const std::string& id() const noexcept { return id_; }
  std::uint64_t draws() const noexcept { return draws_; }

 private:
  std::string id_;
  std::array<std::uint64_t, 4> state_{};
  std::uint64_t draws_ = 0;
};

std::uint64_t fnv1a64(std::string_view text) noexcept;
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Closures posted from other threads; the kernel drains them at tick
/// boundaries on its own thread.
class CommandQueue {
 public:
  void post(std::function<void()> command);
  std::vector<std::function<void()>> take_all();
  bool empty() const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::function<void()>> pending_;
};

class Kernel {
 public:
  using TickHook = std::function<void(Tick)>;
  using LogObserver = std::function<void(const LogRecord&)>;

  explicit Kernel(std::uint64_t seed = 0);

  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  /// Queues an event; returns the seq assigned within its tick.
  /// Throws Error{SchedulingInPast} if `at` is before now().
  std::uint64_t schedule(Tick at, std::string target, std::string kind, Json body,
                         std::function<void()> handler = {});
  std::uint64_t schedule(ScheduledEvent event);

  /// Processes every tick up to and including `until`. Within a tick: queued
  /// external commands, then events in (at, seq) order, then tick hooks in
  /// registration order. Returns the records appended by this call.
  std::vector<LogRecord> run(Tick until);

  /// Appends a non-dispatch record (publishes, KB writes, ...) at now().
  void record(std::string target, std::string kind, Json body);

  /// Runs once at the end of every processed tick.
  void add_tick_hook(std::string name, TickHook hook);
  void add_log_observer(LogObserver observer);

  RngStream& stream(const std::string& stream_id);
  std::uint64_t rng_next(const std::string& stream_id) { return stream(stream_id).next(); }

  Tick now() const noexcept { return now_; }
  bool started() const noexcept { return started_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t pending_events() const noexcept { return queue_.size(); }

  const EventLog& log() const noexcept { return log_; }
  /// (at, seq) of every dispatched event in dispatch order.
  const std::vector<std::pair<Tick, std::uint64_t>>& dispatched() const noexcept {
    return dispatched_;
  }

  CommandQueue& commands() noexcept { return commands_; }

 private:
  void dispatch_due(Tick tick);
  void append(LogRecord record);

  std::uint64_t seed_;
  Tick now_ = 0;
  Tick next_tick_ = 0;
  bool started_ = false;
  std::map<std::pair<Tick, std::uint64_t>, ScheduledEvent> queue_;
  std::map<Tick, std::uint64_t> next_seq_;
  std::map<Tick, std::uint64_t> next_log_seq_;
  std::vector<std::pair<std::string, TickHook>> hooks_;
  std::vector<LogObserver> observers_;
  std::map<std::string, RngStream> streams_;
  std::vector<std::pair<Tick, std::uint64_t>> dispatched_;
  EventLog log_;
  CommandQueue commands_;
};

}  // namespace iotarch
