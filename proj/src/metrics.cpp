#include "camel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace camel {

StallResult stalling_ratio(std::span<const Micros> deliveries, std::optional<Micros> playback_span, Micros threshold) {
  if (deliveries.size() < 2) return StallResult{0.0, true};
  Micros stalled = 0;
  for (std::size_t i = 1; i < deliveries.size(); ++i) {
    stalled += std::max<Micros>(0, deliveries[i] - deliveries[i - 1] - threshold);
  }
  const Micros span = playback_span.value_or(deliveries.back() - deliveries.front());
  if (span <= 0) return StallResult{0.0, true};
  return StallResult{std::clamp(static_cast<double>(stalled) / static_cast<double>(span), 0.0, 1.0), false};
}

double bw_estimation_accuracy(std::span<const RateSample> samples) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    if (!(s.truth > 0)) continue;
    ++n;
    if (s.estimate) sum += std::max(0.0, 1.0 - std::abs(*s.estimate - s.truth) / s.truth);
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double fairness_index(std::span<const double> throughputs) {
  if (throughputs.size() < 2) throw Error("fairness index needs at least two flows");
  double sum = 0.0;
  double sq = 0.0;
  for (double x : throughputs) {
    if (x < 0) throw Error("negative throughput");
    sum += x;
    sq += x * x;
  }
  if (sq == 0.0) throw Error("all throughputs are zero");
  return sum * sum / (static_cast<double>(throughputs.size()) * sq);
}

double signal_accuracy(const std::vector<bool>& predicted, const std::vector<bool>& truth) {
  if (predicted.empty()) throw Error("empty signal series");
  if (predicted.size() != truth.size()) throw Error("signal series differ in length");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

BitsPerSecond media_bitrate(const RunLog& log, FlowId flow, Micros start, Micros end) {
  if (end <= start) return 0.0;
  Bytes bytes = 0;
  for (const auto& p : log.packets) {
    if (p.flow == flow && p.recv_time && *p.recv_time >= start && *p.recv_time < end) bytes += p.size;
  }
  return static_cast<double>(bytes) * 8.0 * 1e6 / static_cast<double>(end - start);
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error("percentile of empty set");
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(p / 100.0 * static_cast<double>(values.size()));
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
  return values[idx];
}

std::pair<Micros, Micros> metrics_window(const ScenarioConfig& scenario) {
  const Micros end = std::min(scenario.duration, scenario.metrics_end.value_or(scenario.duration));
  const Micros start = std::min(end, scenario.metrics_start.value_or(kWarmup));
  return {start, end};
}

std::vector<RateSample> rate_samples(const RunLog& log, FlowId flow, Micros start, Micros end) {
  std::vector<RateSample> out;
  for (const auto& s : log.snapshots) {
    if (s.flow != flow || s.ctl.time < start || s.ctl.time >= end) continue;
    out.push_back(RateSample{s.ctl.time, s.ctl.avg_bandwidth, s.fair_share});
  }
  return out;
}

MetricsReport compute_metrics(const RunLog& log, const ScenarioConfig& scenario) {
  MetricsReport r;
  r.scenario = log.scenario;
  std::tie(r.window_start, r.window_end) = metrics_window(scenario);
  r.invariant_checks = log.invariant_checks;
  r.invariant_violations = static_cast<std::int64_t>(log.invariant_violations.size());

  std::vector<double> throughputs;
  for (const auto& fs : log.flows) {
    FlowMetrics m;
    m.flow = fs.flow;
    m.fallback_seen = fs.fallback_seen;
    const Micros start = std::max(r.window_start, fs.start);
    const Micros end = std::min(r.window_end, fs.stop);
    m.media_bitrate = media_bitrate(log, fs.flow, start, end);
    throughputs.push_back(m.media_bitrate);

    std::vector<double> delays;
    std::vector<Micros> deliveries;
    for (const auto& f : log.frames) {
      if (f.flow != fs.flow) continue;
      ++m.frames_encoded;
      if (!f.delivered_time) continue;
      ++m.frames_delivered;
      deliveries.push_back(*f.delivered_time);
      if (f.encode_time >= start && f.encode_time < end) {
        delays.push_back(static_cast<double>(*f.delivered_time - f.encode_time));
      }
    }
    if (!delays.empty()) {
      m.frame_delay_p50 = percentile(delays, 50);
      m.frame_delay_p95 = percentile(delays, 95);
    }
    std::sort(deliveries.begin(), deliveries.end());
    m.stalling = stalling_ratio(deliveries, fs.stop - fs.start);

    const auto samples = rate_samples(log, fs.flow, start, end);
    m.bw_estimation_accuracy = bw_estimation_accuracy(samples);

    std::vector<double> ms;
    double gamma_sum = 0.0;
    for (const auto& s : log.snapshots) {
      if (s.flow != fs.flow || s.ctl.time < start || s.ctl.time >= end) continue;
      ms.push_back(static_cast<double>(s.ctl.max_burst));
      gamma_sum += s.ctl.gamma;
    }
    if (!ms.empty()) {
      m.mean_gamma = gamma_sum / static_cast<double>(ms.size());
      m.steady_state_m = percentile(ms, 50);
    }
    r.flows.push_back(m);
  }
  if (throughputs.size() >= 2 && std::any_of(throughputs.begin(), throughputs.end(), [](double x) { return x > 0; })) {
    r.fairness_index = fairness_index(throughputs);
  }
  return r;
}

std::map<std::string, double> MetricsReport::flatten() const {
  std::map<std::string, double> kv;
  const auto n = static_cast<double>(std::max<std::size_t>(1, flows.size()));
  auto add_mean = [&](const std::string& key, double v) { kv[key] += v / n; };
  for (const auto& f : flows) {
    const std::string p = "flow" + std::to_string(f.flow) + ".";
    kv[p + "media_bitrate"] = f.media_bitrate;
    kv[p + "stalling_ratio"] = f.stalling.ratio;
    kv[p + "bw_estimation_accuracy"] = f.bw_estimation_accuracy;
    kv[p + "mean_gamma"] = f.mean_gamma;
    kv[p + "steady_state_m"] = f.steady_state_m;
    kv[p + "fallback_seen"] = f.fallback_seen ? 1.0 : 0.0;
    kv[p + "frames_encoded"] = static_cast<double>(f.frames_encoded);
    kv[p + "frames_delivered"] = static_cast<double>(f.frames_delivered);
    if (f.frame_delay_p50) kv[p + "frame_delay_p50"] = *f.frame_delay_p50;
    if (f.frame_delay_p95) kv[p + "frame_delay_p95"] = *f.frame_delay_p95;
    add_mean("media_bitrate", f.media_bitrate);
    add_mean("stalling_ratio", f.stalling.ratio);
    add_mean("bw_estimation_accuracy", f.bw_estimation_accuracy);
    add_mean("steady_state_m", f.steady_state_m);
    kv["fallback_seen"] = std::max(kv["fallback_seen"], f.fallback_seen ? 1.0 : 0.0);
    if (f.frame_delay_p50) kv["frame_delay_p50"] = std::max(kv["frame_delay_p50"], *f.frame_delay_p50);
    if (f.frame_delay_p95) kv["frame_delay_p95"] = std::max(kv["frame_delay_p95"], *f.frame_delay_p95);
  }
  if (fairness_index) kv["fairness_index"] = *fairness_index;
  kv["invariant_checks"] = static_cast<double>(invariant_checks);
  kv["invariant_violations"] = static_cast<double>(invariant_violations);
  kv["window_start_s"] = to_seconds(window_start);
  kv["window_end_s"] = to_seconds(window_end);
  kv["flows"] = static_cast<double>(flows.size());
  return kv;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["scenario"] = scenario;
  for (const auto& [k, v] : flatten()) j[k] = v;
  if (!fairness_index) j["fairness_index"] = nullptr;
  return j.dump(2) + "\n";
}

std::string MetricsReport::summary() const {
  const auto kv = flatten();
  auto get = [&](const char* k) {
    const auto it = kv.find(k);
    return it == kv.end() ? 0.0 : it->second;
  };
  std::string s = fmt::format("{}: flows={} bitrate={:.0f}kbps accuracy={:.3f} p95_delay={:.1f}ms stall={:.4f} M={:.0f}",
                              scenario, flows.size(), get("media_bitrate") / 1000.0, get("bw_estimation_accuracy"),
                              get("frame_delay_p95") / 1000.0, get("stalling_ratio"), get("steady_state_m"));
  if (fairness_index) s += fmt::format(" jain={:.3f}", *fairness_index);
  if (get("fallback_seen") > 0) s += " fallback=yes";
  s += fmt::format(" violations={}", invariant_violations);
  return s;
}

void write_runlog_csv(const RunLog& log, std::ostream& out) {
  out << "# schema=1\n";
  out << "time_s,flow,cwnd,inflight,gamma,max_burst,mode,avg_bw_bps,target_bps,app_bps,min_delay_us,fallback_bps,"
         "pending_bytes,link_bps,fair_share_bps,link_queue_bytes\n";
  for (const auto& s : log.snapshots) {
    const auto& c = s.ctl;
    out << fmt::format("{:.3f},{},{},{},{:.6f},{},{},{},{:.0f},{:.0f},{},{:.0f},{},{:.0f},{:.0f},{}\n", to_seconds(c.time),
                       s.flow, c.cwnd, c.inflight, c.gamma, c.max_burst, to_string(c.mode),
                       c.avg_bandwidth ? fmt::format("{:.0f}", *c.avg_bandwidth) : std::string(), c.target_bitrate, c.app_bitrate,
                       c.min_delay ? std::to_string(*c.min_delay) : std::string(), c.fallback_rate, c.pending_bytes,
                       s.link_rate, s.fair_share, s.link_queue);
  }
}

}  // namespace camel
