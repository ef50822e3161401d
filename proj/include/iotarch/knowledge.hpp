#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iotarch/kernel.hpp"

namespace iotarch {

struct KBEntry {
  std::string key;
  Json value;
  std::uint64_t version = 0;
  Tick written_at = 0;
  std::string source;
};

/// Versioned, append-only store shared by the phases of one loop (or the
/// global controller). Every write adds a new version; nothing is mutated.
class KnowledgeBase {
 public:
  using WriteObserver = std::function<void(const std::string& ns, const KBEntry&)>;

  explicit KnowledgeBase(std::string ns) : ns_(std::move(ns)) {}

  const KBEntry& write(const std::string& key, Json value, Tick tick, const std::string& source);

  /// Latest version written at or before `at`.
  std::optional<KBEntry> read(const std::string& key, Tick at) const;
  std::optional<KBEntry> latest(const std::string& key) const;
  const std::vector<KBEntry>& history(const std::string& key) const;
  std::vector<std::string> keys(const std::string& prefix = {}) const;

  const std::string& ns() const noexcept { return ns_; }
  std::size_t write_count() const noexcept { return writes_; }
  void on_write(WriteObserver observer) { observer_ = std::move(observer); }

 private:
  std::string ns_;
  std::map<std::string, std::vector<KBEntry>> entries_;
  std::size_t writes_ = 0;
  WriteObserver observer_;
};

}  // namespace iotarch
