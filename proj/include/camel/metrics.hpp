#pragma once

// Evaluation metrics over a simulation run, plus the CSV/JSON exporters
// used by the command-line tool.

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "camel/core.hpp"
#include "camel/netsim.hpp"

namespace camel {

inline constexpr Micros kStallThreshold = 200'000;
inline constexpr Micros kWarmup = 5'000'000;

struct StallResult {
  double ratio = 0.0;
  bool insufficient = false;  // fewer than two deliveries
};

// Each gap g between consecutive deliveries adds max(0, g - threshold) of
// stall time. The denominator is `playback_span` when given, otherwise the
// span from the first to the last delivery. Deliveries must be sorted.
StallResult stalling_ratio(std::span<const Micros> deliveries, std::optional<Micros> playback_span = std::nullopt,
                           Micros threshold = kStallThreshold);

struct RateSample {
  Micros time = 0;
  std::optional<BitsPerSecond> estimate;  // absent counts as a miss
  BitsPerSecond truth = 0;
};

// Mean of max(0, 1 - |estimate - truth| / truth); samples with a
// non-positive truth are skipped. Returns 0 when nothing is scored.
double bw_estimation_accuracy(std::span<const RateSample> samples);

// Jain's index. Throws on fewer than two flows or an all-zero vector.
double fairness_index(std::span<const double> throughputs);

// Fraction of matching positions. Throws on empty or unequal input.
double signal_accuracy(const std::vector<bool>& predicted, const std::vector<bool>& truth);

// Received media bytes of `flow` within [start, end), as bits per second.
BitsPerSecond media_bitrate(const RunLog& log, FlowId flow, Micros start, Micros end);

// Nearest-rank percentile; throws on empty input.
double percentile(std::vector<double> values, double p);

struct FlowMetrics {
  FlowId flow = 0;
  BitsPerSecond media_bitrate = 0;
  std::optional<double> frame_delay_p50;  // microseconds
  std::optional<double> frame_delay_p95;
  StallResult stalling;
  double bw_estimation_accuracy = 0;
  double mean_gamma = 1.0;
  double steady_state_m = 0;  // median max-burst over the window
  bool fallback_seen = false;
  std::int64_t frames_encoded = 0;
  std::int64_t frames_delivered = 0;
};

struct MetricsReport {
  std::string scenario;
  Micros window_start = 0;
  Micros window_end = 0;
  std::vector<FlowMetrics> flows;
  std::optional<double> fairness_index;
  std::int64_t invariant_checks = 0;
  std::int64_t invariant_violations = 0;

  // Flat key/value view; top-level values are the mean over flows.
  std::map<std::string, double> flatten() const;
  std::string to_json() const;
  std::string summary() const;
};

// Metric window: [metrics_start or 5 s, metrics_end or duration].
std::pair<Micros, Micros> metrics_window(const ScenarioConfig& scenario);

// Estimated-vs-true bandwidth samples for one flow inside the window.
std::vector<RateSample> rate_samples(const RunLog& log, FlowId flow, Micros start, Micros end);

MetricsReport compute_metrics(const RunLog& log, const ScenarioConfig& scenario);

// Snapshot time series, one row per (time, flow), headed by `# schema=1`.
void write_runlog_csv(const RunLog& log, std::ostream& out);

}  // namespace camel
