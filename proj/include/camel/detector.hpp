#pragma once

// Congestion detection from the slope of frame delay against bytes in
// flight. Under a drop-tail bottleneck of rate BW the delay is flat while
// inflight fits in the pipe and rises with slope 8/BW seconds per byte once
// it does not, so the slope itself separates the two regimes independently
// of how long the queue has existed.
//
// The MinRTT (D - Dmin) and time-gradient (dD/dt) signals are kept here as
// comparison baselines.

#include <deque>
#include <span>

#include "camel/core.hpp"

namespace camel {

struct SignalSample {
  Bytes inflight = 0;
  Micros delay = 0;
  Micros time = 0;
};

// Time-bounded sample window; samples older than `span` relative to the
// newest one are evicted on insert.
class SignalWindow {
 public:
  explicit SignalWindow(Micros span = 5 * kMicrosPerSecond) : span_(span) {}

  void add(const SignalSample& s);
  void clear() { samples_.clear(); }

  const std::deque<SignalSample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  Micros span() const { return span_; }

 private:
  Micros span_;
  std::deque<SignalSample> samples_;
};

struct Slope {
  double value = 0.0;
  bool degenerate = false;  // fewer than two points or a constant regressor
};

// Ordinary least-squares slope of y on x.
Slope ols_slope(std::span<const double> x, std::span<const double> y);

// d(delay)/d(inflight) in microseconds per byte.
Slope inflight_gradient(const SignalWindow& window);
// Newest delay minus the window minimum, in microseconds.
Micros minrtt_signal(const SignalWindow& window);
// d(delay)/dt in microseconds per second.
Slope time_gradient(const SignalWindow& window);

struct DetectorConfig {
  double k_thresh = 0.5;  // fraction of the fully congested slope 8/BW
  double gamma_floor = 0.25;
  double gamma_decay = 0.95;
  Micros window = 5 * kMicrosPerSecond;
};

struct CongestionVerdict {
  bool congested = false;
  double gradient = 0.0;        // us per byte
  double threshold_used = 0.0;  // us per byte
  bool cold = false;            // window too small or regressor degenerate
};

// Congested iff the inflight gradient strictly exceeds
// k_thresh * 8 / avg_bandwidth (converted to microseconds per byte).
CongestionVerdict detect(const SignalWindow& window, BitsPerSecond avg_bandwidth, double k_thresh = 0.5);

// Threshold in microseconds per byte for a given bandwidth.
double congestion_threshold(BitsPerSecond avg_bandwidth, double k_thresh);

struct GammaState {
  double gamma = 1.0;
  Micros last_update_time = 0;
};

// Multiplicative decay on congestion (never below the floor), reset to 1
// otherwise.
GammaState update_gamma(GammaState state, const CongestionVerdict& verdict, Micros now,
                        const DetectorConfig& config = {});

BitsPerSecond target_bitrate(double gamma, BitsPerSecond avg_bandwidth);

}  // namespace camel
