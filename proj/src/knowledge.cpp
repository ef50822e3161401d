#include "iotarch/knowledge.hpp"

namespace iotarch {

const KBEntry& KnowledgeBase::write(const std::string& key, Json value, Tick tick,
                                    const std::string& source) {
  auto& versions = entries_[key];
  KBEntry entry{key, std::move(value), versions.empty() ? 1 : versions.back().version + 1, tick, source};
  versions.push_back(std::move(entry));
  ++writes_;
  if (observer_) observer_(ns_, versions.back());
  return versions.back();
}

std::optional<KBEntry> KnowledgeBase::read(const std::string& key, Tick at) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  for (auto v = it->second.rbegin(); v != it->second.rend(); ++v) {
    if (v->written_at <= at) return *v;
  }
  return std::nullopt;
}

std::optional<KBEntry> KnowledgeBase::latest(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end() || it->second.empty()) return std::nullopt;
  return it->second.back();
}

const std::vector<KBEntry>& KnowledgeBase::history(const std::string& key) const {
  static const std::vector<KBEntry> none;
  auto it = entries_.find(key);
  return it == entries_.end() ? none : it->second;
}

std::vector<std::string> KnowledgeBase::keys(const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = entries_.lower_bound(prefix); it != entries_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first);
  }
  return out;
}

}  // namespace iotarch
