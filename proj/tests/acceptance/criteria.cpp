#include "criteria.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "camel/detector.hpp"
#include "camel/experiments.hpp"
#include "camel/metrics.hpp"
#include "camel/scenario.hpp"

#ifndef CAMEL_SCENARIO_DIR
#define CAMEL_SCENARIO_DIR "scenarios"
#endif

namespace camel::acceptance {

namespace fs = std::filesystem;

std::string scenario_dir() { return CAMEL_SCENARIO_DIR; }

namespace {

struct ScenarioRun {
  ScenarioConfig config;
  RunLog log;
  MetricsReport report;
};

ScenarioRun run_scenario(const std::string& file, const std::vector<Override>& overrides = {}) {
  ScenarioRun r;
  r.config = load_scenario((fs::path(scenario_dir()) / file).string(), overrides);
  r.log = run(r.config);
  r.report = compute_metrics(r.log, r.config);
  return r;
}

std::vector<std::string> bundled_scenarios() {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(scenario_dir())) {
    if (entry.is_regular_file() && entry.path().extension() == ".ini") out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

const std::vector<int> kBufferSweepKb{2, 4, 6, 8, 10};

std::vector<Override> buffer_override(int kb) { return {{"link.buffer_kb", std::to_string(kb)}}; }

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome signal_ordering() {
  Outcome o{.id = 1, .name = "signal-accuracy ordering"};
  const auto t0 = std::chrono::steady_clock::now();
  SignalExperimentConfig cfg;  // 2 Mbps, 25 ms, 20 traces
  const auto result = run_signal_experiment(cfg);
  o.seconds = elapsed_since(t0);
  const double g = result.mean_gradient(), m = result.mean_minrtt(), t = result.mean_time_gradient();
  o.pass = result.traces.size() >= 20 && g >= m + 0.05 && g >= t + 0.05 && o.seconds < 10.0;
  o.detail = fmt::format("gradient={:.4f} minrtt={:.4f} time_gradient={:.4f} traces={} (need +0.05, <10 s)", g, m, t,
                         result.traces.size());
  return o;
}

Outcome undershoot_accuracy() {
  Outcome o{.id = 2, .name = "undershoot estimation accuracy"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_scenario("undershoot.ini");
  o.seconds = elapsed_since(t0);
  const auto samples = rate_samples(r.log, 0, from_seconds(30), from_seconds(60));
  const double acc = bw_estimation_accuracy(samples);
  o.pass = acc >= 0.95 && o.seconds < 5.0 && !samples.empty();
  o.detail = fmt::format("accuracy[30,60)={:.4f} samples={} (need >=0.95, <5 s)", acc, samples.size());
  return o;
}

Outcome step_responsiveness() {
  Outcome o{.id = 3, .name = "step responsiveness"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_scenario("step.ini");
  o.seconds = elapsed_since(t0);
  const auto& steps = r.config.link.rate.steps();
  o.pass = steps.size() >= 2;
  std::vector<std::string> parts;
  for (std::size_t k = 1; k < steps.size(); ++k) {
    const Micros begin = steps[k].start;
    const Micros end = k + 1 < steps.size() ? steps[k + 1].start : r.config.duration;
    const double rate = steps[k].rate;
    std::optional<Micros> reached;
    bool stays = true;
    for (const auto& s : r.log.snapshots) {
      if (s.flow != 0 || s.ctl.time < begin || s.ctl.time >= end) continue;
      const bool within = s.ctl.avg_bandwidth && std::abs(*s.ctl.avg_bandwidth - rate) <= 0.1 * rate;
      if (!reached) {
        if (within) reached = s.ctl.time;
      } else if (!within) {
        stays = false;
      }
    }
    const bool ok = reached && *reached - begin <= from_seconds(5) && stays;
    o.pass = o.pass && ok;
    parts.push_back(fmt::format("step@{:.0f}s->{:.0f}kbps reach={} stays={}", to_seconds(begin), rate / 1000,
                                reached ? fmt::format("{:.1f}s", to_seconds(*reached - begin)) : "never",
                                stays ? "yes" : "no"));
  }
  o.detail = fmt::format("{} (need reach<=5 s, then within 10%)", fmt::join(parts, "; "));
  return o;
}

Outcome idle_gap_immunity() {
  Outcome o{.id = 4, .name = "idle-gap immunity"};
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kTrials = 200;
  double worst = 0;
  for (int i = 0; i < kTrials; ++i) worst = std::max(worst, idle_gap_max_deviation(make_idle_gap_trial(1000 + i)));
  o.seconds = elapsed_since(t0);
  o.pass = worst <= 0.001;
  o.detail = fmt::format("trials={} max_relative_change={:.3g} (need <=0.001)", kTrials, worst);
  return o;
}

Outcome burst_adaptation() {
  Outcome o{.id = 5, .name = "burst-length adaptation"};
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> m;
  std::vector<bool> fallback;
  for (const int kb : kBufferSweepKb) {
    const auto r = run_scenario("burst_buffer.ini", buffer_override(kb));
    m.push_back(r.report.flows.at(0).steady_state_m);
    fallback.push_back(std::any_of(r.log.snapshots.begin(), r.log.snapshots.end(),
                                   [](const SnapshotRecord& s) { return s.ctl.mode == Mode::kFallback; }));
  }
  o.seconds = elapsed_since(t0);
  const bool monotone = std::is_sorted(m.begin(), m.end());
  o.pass = monotone && fallback.front() && m.back() >= 8192;
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < m.size(); ++i) {
    parts.push_back(fmt::format("{}KB:M={:.0f}{}", kBufferSweepKb[i], m[i], fallback[i] ? "(fallback)" : ""));
  }
  o.detail = fmt::format("{} (need non-decreasing, fallback at 2 KB, M>=8192 at 10 KB)", fmt::join(parts, " "));
  return o;
}

Outcome physical_loss() {
  Outcome o{.id = 6, .name = "physical-loss discrimination"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_scenario("random_loss.ini");
  o.seconds = elapsed_since(t0);
  const Bytes m_max = r.config.flows.at(0).controller.burst.m_max;
  Bytes peak = 0;
  std::optional<Micros> reached;
  bool fallback = false;
  for (const auto& s : r.log.snapshots) {
    peak = std::max(peak, s.ctl.max_burst);
    if (!reached && s.ctl.max_burst >= m_max) reached = s.ctl.time;
    fallback = fallback || s.ctl.mode == Mode::kFallback;
  }
  o.pass = reached.has_value() && !fallback && r.config.link.random_loss_p == 0.05 &&
           r.config.link.buffer_capacity == 64 * 1024;
  o.detail = fmt::format("loss={} buffer={}B peak_M={} reached_M_max_at={} fallback={} (need M_max, no fallback)",
                         r.config.link.random_loss_p, r.config.link.buffer_capacity, peak,
                         reached ? fmt::format("{:.1f}s", to_seconds(*reached)) : "never", fallback ? "yes" : "no");
  return o;
}

Outcome gamma_dynamics() {
  Outcome o{.id = 7, .name = "gamma dynamics"};
  const CongestionVerdict congested{.congested = true, .gradient = 4.0, .threshold_used = 2.0};
  const CongestionVerdict clean{.congested = false, .gradient = 0.0, .threshold_used = 2.0};
  GammaState g;
  for (int i = 0; i < 3; ++i) g = update_gamma(g, congested, i);
  const double after_three = g.gamma;
  g = update_gamma(g, clean, 3);
  o.pass = after_three == 0.95 * 0.95 * 0.95 && std::abs(after_three - 0.857375) < 1e-12 && g.gamma == 1.0;
  o.detail = fmt::format("after 3 congested={:.9f} after clean={:.1f} (need 0.857375, 1)", after_three, g.gamma);
  return o;
}

Outcome fairness() {
  Outcome o{.id = 8, .name = "inter-flow fairness"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto multi = run_scenario("fairness.ini");
  const auto single = run_scenario("fairness_single.ini");
  o.seconds = elapsed_since(t0);
  const Micros end = multi.config.duration;
  const Micros start = end - from_seconds(20);
  std::vector<double> rates;
  for (std::size_t f = 0; f < multi.config.flows.size(); ++f) {
    rates.push_back(media_bitrate(multi.log, static_cast<FlowId>(f), start, end));
  }
  const double jain = fairness_index(rates);
  const double baseline = single.report.flows.at(0).frame_delay_p95.value_or(0);
  bool delay_ok = baseline > 0;
  std::vector<std::string> parts;
  for (const auto& f : multi.report.flows) {
    const double p95 = f.frame_delay_p95.value_or(INFINITY);
    delay_ok = delay_ok && p95 <= 2 * baseline;
    parts.push_back(fmt::format("{:.0f}", p95 / 1000));
  }
  o.pass = multi.config.flows.size() == 3 && jain >= 0.9 && delay_ok;
  o.detail = fmt::format("jain={:.4f} p95_ms=[{}] single_p95_ms={:.0f} (need jain>=0.9, p95<={:.0f} ms)", jain,
                         fmt::join(parts, ","), baseline / 1000, 2 * baseline / 1000);
  return o;
}

std::pair<std::string, std::string> outputs(const ScenarioRun& r) {
  std::ostringstream csv;
  write_runlog_csv(r.log, csv);
  return {csv.str(), r.report.to_json()};
}

Outcome determinism() {
  Outcome o{.id = 9, .name = "determinism"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto names = bundled_scenarios();
  std::vector<std::string> differing;
  for (const auto& name : names) {
    if (outputs(run_scenario(name)) != outputs(run_scenario(name))) differing.push_back(name);
  }
  o.seconds = elapsed_since(t0);
  o.pass = !names.empty() && differing.empty();
  o.detail = fmt::format("scenarios={} differing=[{}] (need byte-identical runlog.csv and metrics.json)", names.size(),
                         fmt::join(differing, ","));
  return o;
}

Outcome invariants() {
  Outcome o{.id = 10, .name = "invariant suite"};
  const auto t0 = std::chrono::steady_clock::now();
  std::int64_t checks = 0;
  std::int64_t violations = 0;
  std::string first;
  int runs = 0;
  auto account = [&](const ScenarioRun& r) {
    ++runs;
    checks += r.log.invariant_checks;
    violations += static_cast<std::int64_t>(r.log.invariant_violations.size());
    if (first.empty() && !r.log.invariant_violations.empty()) first = r.log.invariant_violations.front();
  };
  for (const auto& name : bundled_scenarios()) account(run_scenario(name));
  for (const int kb : kBufferSweepKb) account(run_scenario("burst_buffer.ini", buffer_override(kb)));
  o.seconds = elapsed_since(t0);
  o.pass = checks > 0 && violations == 0;
  o.detail = fmt::format("runs={} checks={} violations={}{}", runs, checks, violations,
                         first.empty() ? "" : " first: " + first);
  return o;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<FrameSample> idle_link_samples(const std::vector<Bytes>& frame_sizes,
                                           const std::vector<Micros>& send_times, const LinkConfig& link_config) {
  if (frame_sizes.size() != send_times.size()) throw Error("sizes and send times differ in length");
  Link link(link_config);
  std::map<std::pair<FrameId, int>, Micros> arrivals;
  auto drain_until = [&](Micros t) {
    while (const auto dep = link.next_departure()) {
      if (*dep > t) break;
      const Departure d = link.complete_service(*dep);
      arrivals[{d.packet.frame_id, d.packet.seq_in_frame}] = d.arrival_time;
    }
  };
  std::vector<Frame> frames;
  for (std::size_t k = 0; k < frame_sizes.size(); ++k) {
    drain_until(send_times[k]);
    Frame f = make_frame(0, static_cast<FrameId>(k), FrameKind::P, frame_sizes[k], send_times[k], link_config.mtu);
    for (auto& p : f.packets) {
      p.send_time = send_times[k];
      link.enqueue(p, send_times[k]);
    }
    frames.push_back(std::move(f));
  }
  drain_until(std::numeric_limits<Micros>::max());

  std::vector<FrameSample> out;
  for (const auto& f : frames) {
    FeedbackReport report{.flow_id = 0, .frame_id = f.frame_id};
    std::vector<Bytes> sizes;
    std::vector<Micros> sends;
    Micros last = 0;
    for (const auto& p : f.packets) {
      const auto it = arrivals.find({f.frame_id, p.seq_in_frame});
      std::optional<Micros> recv;
      if (it != arrivals.end()) {
        recv = it->second;
        last = std::max(last, it->second);
      }
      report.entries.push_back(PacketFeedback{.seq_in_frame = p.seq_in_frame, .recv_time = recv});
      sizes.push_back(p.size);
      sends.push_back(p.send_time);
    }
    report.report_send_time = last;
    report.report_arrival_time = last + link.one_way_delay();
    out.push_back(FrameSample{.frame_id = f.frame_id,
                              .bandwidth = frame_bandwidth(report, sizes),
                              .delay = frame_delay(report, sends).value_or(0),
                              .inflight_at_send = 0,
                              .sample_time = report.report_arrival_time});
  }
  return out;
}

IdleGapTrial make_idle_gap_trial(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform_int = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  IdleGapTrial t;
  const std::int64_t kbps = uniform_int(300, 20000);
  t.link.rate = RateSchedule(static_cast<double>(kbps) * 1000.0);
  t.link.rtprop = from_millis(static_cast<double>(uniform_int(5, 200)));
  t.link.mtu = kDefaultMtu;
  t.link.seed = seed;
  const int frames = static_cast<int>(uniform_int(2, 40));
  Bytes largest = 0;
  for (int k = 0; k < frames; ++k) {
    t.sizes.push_back(uniform_int(200, 60000));
    largest = std::max(largest, t.sizes.back());
  }
  t.link.buffer_capacity = largest + t.link.mtu;
  // Base spacing lets every frame drain before the next one starts.
  Micros now = uniform_int(0, 100000);
  Micros stretched = now;
  for (int k = 0; k < frames; ++k) {
    t.base_times.push_back(now);
    t.stretched_times.push_back(stretched);
    const Micros gap = serialization_time(t.sizes[k], t.link.rate.rate_at(0)) + uniform_int(1, 50000);
    now += gap;
    const int kind = static_cast<int>(uniform_int(0, 3));
    const Micros silence = kind == 0 ? 0 : kind == 1 ? uniform_int(1, 1000) : kind == 2 ? uniform_int(1000, 2000000)
                                                                                        : uniform_int(0, 30000000);
    stretched += gap + silence;
  }
  return t;
}

double idle_gap_max_deviation(const IdleGapTrial& trial) {
  const auto a = idle_link_samples(trial.sizes, trial.base_times, trial.link);
  const auto b = idle_link_samples(trial.sizes, trial.stretched_times, trial.link);
  auto rel = [](double x, double y) { return x == y ? 0.0 : std::abs(x - y) / std::max(std::abs(x), 1e-12); };
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].bandwidth.has_value() != b[i].bandwidth.has_value()) return INFINITY;
    if (a[i].bandwidth) worst = std::max(worst, rel(*a[i].bandwidth, *b[i].bandwidth));
    worst = std::max(worst, rel(static_cast<double>(a[i].delay), static_cast<double>(b[i].delay)));
  }
  return worst;
}

std::vector<int> all_ids() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}; }

Outcome run_criterion(int id) {
  switch (id) {
    case 1:
      return signal_ordering();
    case 2:
      return undershoot_accuracy();
    case 3:
      return step_responsiveness();
    case 4:
      return idle_gap_immunity();
    case 5:
      return burst_adaptation();
    case 6:
      return physical_loss();
    case 7:
      return gamma_dynamics();
    case 8:
      return fairness();
    case 9:
      return determinism();
    case 10:
      return invariants();
    default:
      throw Error(fmt::format("unknown criterion {}", id));
  }
}

}  // namespace camel::acceptance
