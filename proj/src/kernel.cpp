#include "iotarch/kernel.hpp"

#include <fstream>

#include "iotarch/error.hpp"

namespace iotarch {

std::string serialize(const LogRecord& record) {
  std::string line;
  line.reserve(96);
  line += "{\"tick\":";
  line += std::to_string(record.tick);
  line += ",\"seq\":";
  line += std::to_string(record.seq);
  line += ",\"target\":";
  line += Json(record.target).dump();
  line += ",\"kind\":";
  line += Json(record.kind).dump();
  line += ",\"body\":";
  line += record.body.dump();
  line += '}';
  return line;
}

LogRecord parse_log_line(std::string_view line) {
  Json j = Json::parse(line);  // throws on malformed input
  if (!j.is_object() || !j.contains("tick") || !j.contains("seq") || !j.contains("target") ||
      !j.contains("kind") || !j.contains("body")) {
    throw Error(Errc::CorruptLog, "log record is missing required fields");
  }
  LogRecord r;
  r.tick = j.at("tick").get<Tick>();
  r.seq = j.at("seq").get<std::uint64_t>();
  r.target = j.at("target").get<std::string>();
  r.kind = j.at("kind").get<std::string>();
  r.body = j.at("body");
  return r;
}

void EventLog::append(LogRecord record) { records_.push_back(std::move(record)); }

std::string EventLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records_) {
    out += serialize(r);
    out += '\n';
  }
  return out;
}

void EventLog::write_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot open " + path + " for writing");
  for (const auto& r : records_) out << serialize(r) << '\n';
  if (!out) throw Error(Errc::IoError, "write failed for " + path);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {
constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
}  // namespace

RngStream::RngStream(std::uint64_t seed, std::string_view stream_id) : id_(stream_id) {
  std::uint64_t sm = seed ^ fnv1a64(stream_id);
  for (auto& word : state_) word = splitmix64(sm);
}

std::uint64_t RngStream::next() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  ++draws_;
  return result;
}

double RngStream::next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double RngStream::next_symmetric(double amplitude) {
  return amplitude * (2.0 * next_unit() - 1.0);
}

void CommandQueue::post(std::function<void()> command) {
  std::lock_guard lock(mutex_);
  pending_.push_back(std::move(command));
}

std::vector<std::function<void()>> CommandQueue::take_all() {
  std::lock_guard lock(mutex_);
  std::vector<std::function<void()>> out;
  out.swap(pending_);
  return out;
}

bool CommandQueue::empty() const {
  std::lock_guard lock(mutex_);
  return pending_.empty();
}

Kernel::Kernel(std::uint64_t seed) : seed_(seed) {}

std::uint64_t Kernel::schedule(Tick at, std::string target, std::string kind, Json body,
                               std::function<void()> handler) {
  ScheduledEvent ev;
  ev.at = at;
  ev.target = std::move(target);
  ev.kind = std::move(kind);
  ev.body = std::move(body);
  ev.handler = std::move(handler);
  return schedule(std::move(ev));
}

std::uint64_t Kernel::schedule(ScheduledEvent event) {
  if (event.at < now_) {
    throw Error(Errc::SchedulingInPast, "event at tick " + std::to_string(event.at) +
                                            " scheduled when now is " + std::to_string(now_));
  }
  event.seq = next_seq_[event.at]++;
  auto key = std::make_pair(event.at, event.seq);
  queue_.emplace(key, std::move(event));
  return key.second;
}

void Kernel::dispatch_due(Tick tick) {
  while (!queue_.empty() && queue_.begin()->first.first == tick) {
    auto node = queue_.extract(queue_.begin());
    ScheduledEvent& ev = node.mapped();
    dispatched_.emplace_back(ev.at, ev.seq);
    append(LogRecord{tick, 0, ev.target, ev.kind, ev.body});
    if (ev.handler) ev.handler();
  }
  next_seq_.erase(next_seq_.begin(), next_seq_.lower_bound(tick));
}

std::vector<LogRecord> Kernel::run(Tick until) {
  const std::size_t first = log_.size();
  // Events scheduled for the current tick after it finished processing.
  if (started_) dispatch_due(now_);
  started_ = true;
  for (Tick t = next_tick_; t <= until; ++t) {
    now_ = t;
    for (auto& command : commands_.take_all()) command();
    dispatch_due(t);
    for (auto& [name, hook] : hooks_) hook(t);
    dispatch_due(t);
    next_tick_ = t + 1;
  }
  if (until > now_) now_ = until;
  return {log_.records().begin() + static_cast<std::ptrdiff_t>(first), log_.records().end()};
}

void Kernel::record(std::string target, std::string kind, Json body) {
  append(LogRecord{now_, 0, std::move(target), std::move(kind), std::move(body)});
}

void Kernel::append(LogRecord record) {
  record.seq = next_log_seq_[record.tick]++;
  if (next_log_seq_.size() > 2) next_log_seq_.erase(next_log_seq_.begin());
  log_.append(std::move(record));
  for (auto& observer : observers_) observer(log_.records().back());
}

void Kernel::add_tick_hook(std::string name, TickHook hook) {
  hooks_.emplace_back(std::move(name), std::move(hook));
}

void Kernel::add_log_observer(LogObserver observer) { observers_.push_back(std::move(observer)); }

RngStream& Kernel::stream(const std::string& stream_id) {
  auto it = streams_.find(stream_id);
  if (it == streams_.end()) it = streams_.emplace(stream_id, RngStream(seed_, stream_id)).first;
  return it->second;
}

}  // namespace iotarch
