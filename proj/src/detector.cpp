#include "camel/detector.hpp"

#include <algorithm>
#include <vector>

namespace camel {

void SignalWindow::add(const SignalSample& s) {
  if (!samples_.empty() && s.time < samples_.back().time) throw Error("signal samples out of time order");
  samples_.push_back(s);
  while (samples_.front().time < s.time - span_) samples_.pop_front();
}

Slope ols_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("regression inputs misaligned");
  const std::size_t n = x.size();
  if (n < 2) return {.value = 0.0, .degenerate = true};
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    sxx += dx * dx;
    sxy += dx * (y[i] - my);
  }
  if (sxx <= 0.0) return {.value = 0.0, .degenerate = true};
  return {.value = sxy / sxx, .degenerate = false};
}

namespace {

template <typename Proj>
Slope delay_slope(const SignalWindow& window, Proj regressor) {
  const auto& s = window.samples();
  std::vector<double> x;
  std::vector<double> y;
  x.reserve(s.size());
  y.reserve(s.size());
  for (const auto& sample : s) {
    x.push_back(regressor(sample));
    y.push_back(static_cast<double>(sample.delay));
  }
  return ols_slope(x, y);
}

}  // namespace

Slope inflight_gradient(const SignalWindow& window) {
  return delay_slope(window, [](const SignalSample& s) { return static_cast<double>(s.inflight); });
}

Slope time_gradient(const SignalWindow& window) {
  if (window.empty()) return {.value = 0.0, .degenerate = true};
  const Micros t0 = window.samples().front().time;
  return delay_slope(window, [t0](const SignalSample& s) { return to_seconds(s.time - t0); });
}

Micros minrtt_signal(const SignalWindow& window) {
  if (window.empty()) return 0;
  const auto& s = window.samples();
  const auto min_it = std::min_element(s.begin(), s.end(),
                                       [](const SignalSample& a, const SignalSample& b) { return a.delay < b.delay; });
  return s.back().delay - min_it->delay;
}

double congestion_threshold(BitsPerSecond avg_bandwidth, double k_thresh) {
  if (avg_bandwidth <= 0) throw Error("non-positive bandwidth");
  return k_thresh * 8.0 * 1e6 / avg_bandwidth;
}

CongestionVerdict detect(const SignalWindow& window, BitsPerSecond avg_bandwidth, double k_thresh) {
  const double threshold = congestion_threshold(avg_bandwidth, k_thresh);
  const Slope g = inflight_gradient(window);
  if (g.degenerate) return {.congested = false, .gradient = 0.0, .threshold_used = threshold, .cold = true};
  return {.congested = g.value > threshold, .gradient = g.value, .threshold_used = threshold, .cold = false};
}

GammaState update_gamma(GammaState state, const CongestionVerdict& verdict, Micros now, const DetectorConfig& config) {
  if (verdict.congested) {
    state.gamma = std::max(config.gamma_floor, state.gamma * config.gamma_decay);
  } else {
    state.gamma = 1.0;
  }
  state.last_update_time = now;
  return state;
}

BitsPerSecond target_bitrate(double gamma, BitsPerSecond avg_bandwidth) { return gamma * avg_bandwidth; }

}  // namespace camel
