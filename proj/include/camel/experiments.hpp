#pragma once

// Offline comparison of congestion signals on synthetic traces generated
// by the analytic queuing-delay model.

#include <iosfwd>
#include <string>
#include <vector>

#include "camel/detector.hpp"
#include "camel/netsim.hpp"

namespace camel {

struct SignalScores {
  double gradient = 0;       // inflight gradient at the detector's own threshold
  double minrtt = 0;         // D - Dmin at its best grid threshold
  double time_gradient = 0;  // dD/dt at its best grid threshold
  double minrtt_threshold = 0;
  double time_gradient_threshold = 0;
  std::size_t degenerate_windows = 0;  // constant inflight; scored as not congested
  double congested_fraction = 0;       // share of ground-truth positives
};

// Scores the three signals on one inflight series. Baselines get their best
// threshold over a quantile grid (plus "always congested").
SignalScores evaluate_signals(const std::vector<Bytes>& inflight, const SynthParams& params,
                              const DetectorConfig& detector = {}, int grid_points = 201);

struct SignalExperimentConfig {
  SynthParams params;
  InflightWalkConfig walk;
  DetectorConfig detector;
  int traces = 20;
  std::uint64_t seed = 1;
  int grid_points = 201;
};

struct SignalExperimentResult {
  std::vector<SignalScores> traces;

  double mean_gradient() const;
  double mean_minrtt() const;
  double mean_time_gradient() const;
  void write_csv(std::ostream& out) const;
};

SignalExperimentResult run_signal_experiment(const SignalExperimentConfig& config);

}  // namespace camel
