#include "iotarch/analytics.hpp"

#include <algorithm>
#include <cmath>

#include "iotarch/error.hpp"

namespace iotarch {

SeriesWindow::SeriesWindow(SeriesKey key, std::size_t capacity)
    : key_(std::move(key)), capacity_(std::max<std::size_t>(capacity, 1)) {}

void SeriesWindow::push(Tick tick, double value) {
  auto pos = entries_.end();
  while (pos != entries_.begin() && std::prev(pos)->first > tick) --pos;
  entries_.insert(pos, {tick, value});
  while (entries_.size() > capacity_) entries_.pop_front();
}

WindowStats window_stats(const SeriesWindow& window, std::size_t n) {
  if (window.empty()) throw Error(Errc::EmptyWindow, "window has no samples");
  const auto& e = window.entries();
  const std::size_t k = std::min(std::max<std::size_t>(n, 1), e.size());
  const auto first = e.end() - static_cast<std::ptrdiff_t>(k);

  WindowStats s;
  s.count = k;
  s.min = first->second;
  s.max = first->second;
  double sum = 0.0;
  for (auto it = first; it != e.end(); ++it) {
    sum += it->second;
    s.min = std::min(s.min, it->second);
    s.max = std::max(s.max, it->second);
  }
  s.mean = sum / static_cast<double>(k);
  double sq = 0.0;
  for (auto it = first; it != e.end(); ++it) {
    const double d = it->second - s.mean;
    sq += d * d;
  }
  s.stddev = std::sqrt(sq / static_cast<double>(k));
  return s;
}

double ewma(const SeriesWindow& window, double alpha) { return ewma(window, alpha, window.size()); }

double ewma(const SeriesWindow& window, double alpha, std::size_t n) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::BadAlpha, "alpha must be in (0, 1]");
  if (window.empty()) throw Error(Errc::EmptyWindow, "window has no samples");
  const auto& e = window.entries();
  const std::size_t k = std::min(std::max<std::size_t>(n, 1), e.size());
  auto it = e.end() - static_cast<std::ptrdiff_t>(k);
  double s = it->second;
  for (++it; it != e.end(); ++it) s = alpha * it->second + (1.0 - alpha) * s;
  return s;
}

std::optional<AnomalyScore> detect_anomaly(const SeriesWindow& window, double z_threshold,
                                           double new_value) {
  if (window.size() < kMinAnomalySamples) return std::nullopt;
  const WindowStats s = window_stats(window, window.size());
  if (!(s.stddev > 0.0)) return std::nullopt;
  const double z = std::fabs(new_value - s.mean) / s.stddev;
  if (!(z > z_threshold)) return std::nullopt;
  return AnomalyScore{z, s.mean, s.stddev};
}

}  // namespace iotarch
