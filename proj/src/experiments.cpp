#include "camel/experiments.hpp"

#include <algorithm>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "camel/metrics.hpp"

namespace camel {
namespace {

struct Best {
  double accuracy = 0;
  double threshold = 0;
};

Best best_threshold(const std::vector<double>& signal, const std::vector<bool>& truth, int grid_points) {
  std::vector<double> sorted = signal;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> grid{-std::numeric_limits<double>::infinity()};
  const auto n = sorted.size();
  for (int g = 0; g < grid_points; ++g) {
    // Linear-interpolated quantile at g / (grid_points - 1).
    const double pos = grid_points > 1 ? static_cast<double>(g) / (grid_points - 1) * static_cast<double>(n - 1) : 0.0;
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, n - 1);
    grid.push_back(sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]));
  }
  Best best{-1.0, 0.0};
  std::vector<bool> predicted(signal.size());
  for (double th : grid) {
    for (std::size_t i = 0; i < signal.size(); ++i) predicted[i] = signal[i] > th;
    const double acc = signal_accuracy(predicted, truth);
    if (acc > best.accuracy) best = Best{acc, th};
  }
  return best;
}

double mean_of(const std::vector<SignalScores>& v, double SignalScores::*field) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (const auto& x : v) s += x.*field;
  return s / static_cast<double>(v.size());
}

}  // namespace

SignalScores evaluate_signals(const std::vector<Bytes>& inflight, const SynthParams& params,
                              const DetectorConfig& detector, int grid_points) {
  const auto trace = synth_trace(inflight, params);
  SignalWindow window(detector.window);
  std::vector<bool> truth;
  std::vector<bool> gradient_flags;
  std::vector<double> minrtt;
  std::vector<double> tgrad;
  SignalScores out;
  for (const auto& p : trace) {
    window.add(SignalSample{p.inflight, p.rtt, p.time});
    truth.push_back(p.congested);
    const CongestionVerdict v = detect(window, params.bandwidth, detector.k_thresh);
    if (inflight_gradient(window).degenerate) ++out.degenerate_windows;
    gradient_flags.push_back(v.congested);
    minrtt.push_back(static_cast<double>(minrtt_signal(window)));
    const Slope tg = time_gradient(window);
    tgrad.push_back(tg.degenerate ? 0.0 : tg.value);
  }
  out.gradient = signal_accuracy(gradient_flags, truth);
  const Best m = best_threshold(minrtt, truth, grid_points);
  const Best t = best_threshold(tgrad, truth, grid_points);
  out.minrtt = m.accuracy;
  out.minrtt_threshold = m.threshold;
  out.time_gradient = t.accuracy;
  out.time_gradient_threshold = t.threshold;
  out.congested_fraction =
      static_cast<double>(std::count(truth.begin(), truth.end(), true)) / static_cast<double>(truth.size());
  return out;
}

double SignalExperimentResult::mean_gradient() const { return mean_of(traces, &SignalScores::gradient); }
double SignalExperimentResult::mean_minrtt() const { return mean_of(traces, &SignalScores::minrtt); }
double SignalExperimentResult::mean_time_gradient() const { return mean_of(traces, &SignalScores::time_gradient); }

void SignalExperimentResult::write_csv(std::ostream& out) const {
  out << "# schema=1\n";
  out << "signal,accuracy_mean,accuracy_min,accuracy_max,threshold_mean,degenerate_windows,traces\n";
  auto row = [&](const char* name, double SignalScores::*acc, double SignalScores::*thr) {
    double lo = 1.0, hi = 0.0, th = 0.0;
    std::size_t degenerate = 0;
    for (const auto& s : traces) {
      lo = std::min(lo, s.*acc);
      hi = std::max(hi, s.*acc);
      if (thr) th += s.*thr;
      degenerate += s.degenerate_windows;
    }
    if (!traces.empty()) th /= static_cast<double>(traces.size());
    const std::string th_text = thr ? fmt::format("{:.6g}", th) : std::string("detector");
    out << fmt::format("{},{:.6f},{:.6f},{:.6f},{},{},{}\n", name, mean_of(traces, acc), traces.empty() ? 0.0 : lo,
                       hi, th_text, thr ? 0 : degenerate, traces.size());
  };
  row("inflight_gradient", &SignalScores::gradient, nullptr);
  row("minrtt", &SignalScores::minrtt, &SignalScores::minrtt_threshold);
  row("time_gradient", &SignalScores::time_gradient, &SignalScores::time_gradient_threshold);
}

SignalExperimentResult run_signal_experiment(const SignalExperimentConfig& config) {
  if (config.traces < 1) throw Error("signal experiment needs at least one trace");
  if (!(config.params.bandwidth > 0) || config.params.rtprop <= 0 || config.params.bdp <= 0) {
    throw Error("signal experiment: bandwidth, rtprop and bdp must be positive");
  }
  SignalExperimentResult result;
  for (int i = 0; i < config.traces; ++i) {
    const auto series = generate_inflight_walk(config.walk, config.params.bdp, config.seed + static_cast<std::uint64_t>(i));
    result.traces.push_back(evaluate_signals(series, config.params, config.detector, config.grid_points));
  }
  return result;
}

}  // namespace camel
