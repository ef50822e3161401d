#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <utility>

#include "iotarch/kernel.hpp"

namespace iotarch {

struct SeriesKey {
  std::uint32_t device = 0;
  std::string property;

  auto operator<=>(const SeriesKey&) const = default;
};

/// Bounded recency window of (tick, value) samples, oldest first.
class SeriesWindow {
 public:
  SeriesWindow(SeriesKey key, std::size_t capacity);

  void push(Tick tick, double value);

  const SeriesKey& key() const noexcept { return key_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::deque<std::pair<Tick, double>>& entries() const noexcept { return entries_; }
  const std::pair<Tick, double>& latest() const { return entries_.back(); }

 private:
  SeriesKey key_;
  std::size_t capacity_;
  std::deque<std::pair<Tick, double>> entries_;
};

struct WindowStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double stddev = 0.0;  // population: divides by k
  std::size_t count = 0;
};

/// Statistics over the most recent min(n, size) samples. The mean is the
/// left-to-right sum (oldest first) divided by k; the variance is the
/// two-pass mean of squared deviations. Throws EmptyWindow.
WindowStats window_stats(const SeriesWindow& window, std::size_t n);

/// s0 = x0, s_i = alpha * x_i + (1 - alpha) * s_{i-1} over the whole window.
/// Throws BadAlpha unless 0 < alpha <= 1, EmptyWindow when empty.
double ewma(const SeriesWindow& window, double alpha);
/// Same recurrence restricted to the most recent min(n, size) samples.
double ewma(const SeriesWindow& window, double alpha, std::size_t n);

struct AnomalyScore {
  double z = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
};

/// z-score of `new_value` against the window (which must not yet contain it).
/// Returns nothing when the window has fewer than 5 samples or zero spread,
/// or when the score does not exceed the threshold.
std::optional<AnomalyScore> detect_anomaly(const SeriesWindow& window, double z_threshold,
                                           double new_value);

inline constexpr std::size_t kMinAnomalySamples = 5;

}  // namespace iotarch
