#include "camel/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace camel {

// ---------------------------------------------------------------------------
// RateSchedule

RateSchedule::RateSchedule(std::vector<Step> steps) : steps_(std::move(steps)) {
  if (steps_.empty()) throw Error("rate schedule is empty");
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    if (!(steps_[i].rate > 0)) throw Error("rate schedule: rate must be positive");
    if (i > 0 && steps_[i].start < steps_[i - 1].start) throw Error("rate schedule: times must be non-decreasing");
  }
  if (steps_.front().start > 0) steps_.insert(steps_.begin(), Step{0, steps_.front().rate});
}

RateSchedule RateSchedule::parse_trace(const std::string& text) {
  std::vector<Step> steps;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    double seconds = 0;
    double kbps = 0;
    if (!(fields >> seconds)) continue;  // blank line
    if (!(fields >> kbps)) throw Error("trace line " + std::to_string(lineno) + ": expected `time_seconds rate_kbps`");
    if (seconds < 0) throw Error("trace line " + std::to_string(lineno) + ": negative time");
    if (!(kbps > 0)) throw Error("trace line " + std::to_string(lineno) + ": rate must be positive");
    steps.push_back(Step{from_seconds(seconds), kbps * 1000.0});
  }
  if (steps.empty()) throw Error("trace has no samples");
  return RateSchedule(std::move(steps));
}

RateSchedule RateSchedule::from_trace_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open trace file: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_trace(buf.str());
}

BitsPerSecond RateSchedule::rate_at(Micros t) const {
  if (steps_.empty()) throw Error("rate schedule is empty");
  auto it = std::upper_bound(steps_.begin(), steps_.end(), t, [](Micros v, const Step& s) { return v < s.start; });
  if (it == steps_.begin()) return steps_.front().rate;
  return std::prev(it)->rate;
}

BitsPerSecond RateSchedule::min_rate() const {
  if (steps_.empty()) throw Error("rate schedule is empty");
  return std::min_element(steps_.begin(), steps_.end(), [](const Step& a, const Step& b) { return a.rate < b.rate; })
      ->rate;
}

// ---------------------------------------------------------------------------
// Link

void LinkConfig::validate() const {
  if (rate.empty()) throw Error("link.rate: schedule is empty");
  if (rtprop <= 0) throw Error("link.rtprop_ms must be positive");
  if (mtu < 1) throw Error("link.mtu must be >= 1");
  if (buffer_capacity < mtu) throw Error("link.buffer_bytes must be at least one MTU");
  if (!(random_loss_p >= 0.0 && random_loss_p <= 1.0)) throw Error("link.loss must be in [0, 1]");
  if (jitter.sigma < 0 || jitter.cap < 0) throw Error("link.jitter must be non-negative");
}

const char* to_string(EnqueueResult r) {
  switch (r) {
    case EnqueueResult::kAccepted:
      return "accepted";
    case EnqueueResult::kDroppedOverflow:
      return "overflow";
    case EnqueueResult::kDroppedRandom:
      return "random";
  }
  return "?";
}

Link::Link(LinkConfig config)
    : config_(std::move(config)), loss_rng_(config_.seed * 0x9E3779B97F4A7C15ull + 1), jitter_rng_(config_.seed + 7) {
  config_.validate();
}

EnqueueResult Link::enqueue(const Packet& packet, Micros now) {
  if (config_.random_loss_p > 0 && uniform_(loss_rng_) < config_.random_loss_p) return EnqueueResult::kDroppedRandom;
  if (!in_service_) {
    in_service_ = Queued{packet, now};
    start_service(now);
    return EnqueueResult::kAccepted;
  }
  if (queued_bytes_ + in_service_->packet.size + packet.size > config_.buffer_capacity) {
    return EnqueueResult::kDroppedOverflow;
  }
  queue_.push_back(Queued{packet, now});
  queued_bytes_ += packet.size;
  return EnqueueResult::kAccepted;
}

void Link::start_service(Micros now) {
  service_start_ = now;
  service_end_ = now + serialization_time(in_service_->packet.size, config_.rate.rate_at(now));
}

std::optional<Micros> Link::next_departure() const {
  if (!in_service_) return std::nullopt;
  return service_end_;
}

Micros Link::sample_jitter() {
  if (config_.jitter.sigma <= 0 || config_.jitter.cap <= 0) return 0;
  const double sigma = static_cast<double>(config_.jitter.sigma);
  const double cap = static_cast<double>(config_.jitter.cap);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double v = normal_(jitter_rng_) * sigma;
    if (v >= 0.0 && v <= cap) return static_cast<Micros>(std::llround(v));
  }
  return 0;
}

Departure Link::complete_service(Micros now) {
  if (!in_service_ || now != service_end_) throw Error("link service completion out of schedule");
  Departure d;
  d.packet = in_service_->packet;
  d.enqueue_time = in_service_->enqueue_time;
  d.service_start = service_start_;
  d.departure_time = now;
  const Micros arrival = now + one_way_delay() + sample_jitter();
  d.arrival_time = std::max(arrival, last_arrival_);
  last_arrival_ = d.arrival_time;
  in_service_.reset();
  if (!queue_.empty()) {
    in_service_ = queue_.front();
    queued_bytes_ -= queue_.front().packet.size;
    queue_.pop_front();
    start_service(now);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Analytic model

Micros analytic_rtt(Bytes inflight, BitsPerSecond bandwidth, Micros rtprop, Bytes bdp) {
  if (!(bandwidth > 0)) throw Error("non-positive bandwidth");
  if (inflight <= bdp) return rtprop;
  const double excess_us = static_cast<double>(inflight - bdp) * 8.0 * 1e6 / bandwidth;
  return rtprop + static_cast<Micros>(std::llround(excess_us));
}

std::vector<SynthPoint> synth_trace(const std::vector<Bytes>& inflight_series, const SynthParams& params) {
  if (inflight_series.empty()) throw Error("empty inflight series");
  std::vector<SynthPoint> out;
  out.reserve(inflight_series.size());
  for (std::size_t i = 0; i < inflight_series.size(); ++i) {
    const Bytes x = inflight_series[i];
    const Micros rtt = analytic_rtt(x, params.bandwidth, params.rtprop, params.bdp);
    out.push_back(SynthPoint{.time = static_cast<Micros>(i) * params.sample_interval,
                             .inflight = x,
                             .rtt = rtt,
                             .congested = rtt > params.rtprop});
  }
  return out;
}

std::vector<Bytes> generate_inflight_walk(const InflightWalkConfig& config, Bytes bdp, std::uint64_t seed) {
  if (config.samples == 0) throw Error("inflight walk needs at least one sample");
  if (!(config.lower_bdp > 0 && config.upper_bdp > config.lower_bdp)) throw Error("inflight walk bounds out of order");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double lo = config.lower_bdp * static_cast<double>(bdp);
  const double hi = config.upper_bdp * static_cast<double>(bdp);
  const double sigma = config.velocity_sigma_bdp * static_cast<double>(bdp);
  double x = lo + (hi - lo) * uniform(rng);
  double v = 0.0;
  std::vector<Bytes> out;
  out.reserve(config.samples);
  out.push_back(static_cast<Bytes>(std::llround(x)));
  for (std::size_t i = 1; i < config.samples; ++i) {
    v = config.velocity_rho * v + sigma * normal(rng);
    double y = x + v;
    if (y < lo) {
      y = 2 * lo - y;
      v = -v;
    }
    if (y > hi) {
      y = 2 * hi - y;
      v = -v;
    }
    x = std::clamp(y, lo, hi);
    out.push_back(static_cast<Bytes>(std::llround(x)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenario validation

void ScenarioConfig::validate() const {
  if (duration < 0) throw Error("run.duration_s must not be negative");
  if (snapshot_interval <= 0) throw Error("run.snapshot_interval_ms must be positive");
  if (receiver_timeout <= 0) throw Error("run.receiver_timeout_ms must be positive");
  link.validate();
  if (flows.empty()) throw Error("flows: at least one flow is required");
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const std::string where = "flow" + std::to_string(i);
    try {
      flows[i].encoder.validate();
      flows[i].controller.validate();
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
    if (flows[i].start < 0) throw Error(where + ".start_s must be >= 0");
    if (flows[i].stop && *flows[i].stop < flows[i].start) throw Error(where + ".stop_s must be >= start_s");
    for (const auto& c : flows[i].etr_schedule) {
      if (!(c.etr > 0 && c.etr <= 1)) throw Error(where + ".etr_schedule: etr must be in (0, 1]");
    }
  }
  if (cross.rate < 0) throw Error("cross.rate_kbps must be >= 0");
  if (cross.rate > 0 && cross.packet_size < 1) throw Error("cross.packet_bytes must be >= 1");
  if (metrics_start && metrics_end && *metrics_end < *metrics_start) throw Error("metrics window out of order");
}

// ---------------------------------------------------------------------------
// Event loop

namespace {

class EventQueue {
 public:
  void schedule(Micros t, std::function<void()> fn) { heap_.push(Event{t, next_seq_++, std::move(fn)}); }
  bool empty() const { return heap_.empty(); }
  Micros next_time() const { return heap_.top().time; }
  std::function<void()> pop() {
    auto fn = std::move(const_cast<Event&>(heap_.top()).fn);
    heap_.pop();
    return fn;
  }

 private:
  struct Event {
    Micros time;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
  };
  std::priority_queue<Event, std::vector<Event>, std::greater<>> heap_;
  std::uint64_t next_seq_ = 0;
};

struct RxFrame {
  int n = 0;
  std::vector<std::optional<Micros>> recv;
  int received = 0;
  Micros last_activity = 0;
  std::uint64_t stamp = 0;
};

struct FlowRuntime {
  FlowId id = 0;
  FlowConfig config;
  Encoder encoder;
  CamelController controller;
  Micros stop = 0;
  std::int64_t next_frame = 0;
  std::optional<Micros> wakeup;
  // Receiver.
  std::map<FrameId, RxFrame> rx;
  std::uint64_t rx_stamp = 0;
  // Independent inflight bookkeeping: (frame, seq) -> bytes.
  std::map<std::pair<FrameId, int>, Bytes> outstanding;
  Bytes outstanding_bytes = 0;
  // Bookkeeping.
  std::map<FrameId, std::size_t> frame_index;  // into RunLog::frames
  Micros last_burst_update = 0;
  Bytes last_m = 0;
  bool fallback_seen = false;
  Bytes frame_bytes = 0;

  FlowRuntime(FlowId flow, const FlowConfig& cfg, Micros end)
      : id(flow),
        config(cfg),
        encoder(cfg.encoder, flow),
        controller(cfg.controller, flow, cfg.start),
        stop(std::min(end, cfg.stop.value_or(end))) {}
};

class Simulation {
 public:
  explicit Simulation(const ScenarioConfig& sc) : sc_(sc), link_(sc.link) {
    log_.scenario = sc.name;
    log_.duration = sc.duration;
    for (std::size_t i = 0; i < sc.flows.size(); ++i) {
      FlowConfig cfg = sc.flows[i];
      if (cfg.kind == ControllerKind::kFallbackOnly) cfg.controller.burst.recover_epochs = std::numeric_limits<int>::max();
      flows_.push_back(std::make_unique<FlowRuntime>(static_cast<FlowId>(i), cfg, sc.duration));
      auto& f = *flows_.back();
      if (cfg.kind == ControllerKind::kFallbackOnly) f.controller.force_fallback(cfg.controller.initial_bitrate);
      f.last_m = f.controller.burst_state().m;
      f.last_burst_update = f.controller.burst_state().last_update;
      per_flow_link_.emplace_back();
    }
  }

  RunLog execute() {
    if (sc_.duration <= 0) return std::move(log_);
    for (auto& fp : flows_) {
      FlowRuntime& f = *fp;
      if (f.config.start < f.stop) schedule(f.config.start, [this, &f] { on_frame_tick(f); });
      for (const auto& change : f.config.etr_schedule) {
        const double etr = change.etr;
        schedule(change.at, [&f, etr] { f.encoder.set_etr(etr); });
      }
    }
    if (sc_.cross.rate > 0) {
      const Micros stop = std::min(sc_.duration, sc_.cross.stop.value_or(sc_.duration));
      if (sc_.cross.start < stop) schedule(sc_.cross.start, [this, stop] { on_cross_tick(stop); });
    }
    schedule(0, [this] { on_snapshot(); });

    while (!events_.empty() && events_.next_time() < sc_.duration) {
      clock_.advance_to(events_.next_time());
      events_.pop()();
    }
    finish();
    return std::move(log_);
  }

 private:
  Micros now() const { return clock_.now(); }
  void schedule(Micros t, std::function<void()> fn) { events_.schedule(t, std::move(fn)); }

  void violation(const std::string& what) {
    if (log_.invariant_violations.size() < 1000) {
      log_.invariant_violations.push_back("t=" + std::to_string(now()) + "us " + what);
    }
  }
  void check(bool ok, const std::string& what) {
    ++log_.invariant_checks;
    if (!ok) violation(what);
  }

  // -- sender ---------------------------------------------------------------

  void on_frame_tick(FlowRuntime& f) {
    if (now() >= f.stop) return;
    Frame frame = f.encoder.next_frame(f.controller.app_target_bitrate(), now());
    f.frame_bytes += frame.size;
    f.frame_index[frame.frame_id] = log_.frames.size();
    log_.frames.push_back(FrameLogRecord{.flow = f.id,
                                         .frame = frame.frame_id,
                                         .kind = frame.kind,
                                         .size = frame.size,
                                         .encode_time = now(),
                                         .delivered_time = std::nullopt});
    handle(f, f.controller.on_frame(std::move(frame), now()));
    ++f.next_frame;
    const Micros next = f.encoder.frame_time(f.next_frame, f.config.start);
    if (next < f.stop) schedule(next, [this, &f] { on_frame_tick(f); });
  }

  void on_wakeup(FlowRuntime& f, Micros t) {
    if (f.wakeup != t) return;  // superseded
    f.wakeup.reset();
    handle(f, f.controller.on_timer(now()));
  }

  void handle(FlowRuntime& f, SendDecision decision) {
    const Bytes cap = max_burst(f.controller.burst_state());
    for (const auto& burst : decision.bursts) {
      Bytes burst_bytes = 0;
      for (const auto& p : burst) burst_bytes += p.size;
      // Every packet must start inside the first `cap` bytes of its burst.
      const Bytes last_offset = burst_bytes - (burst.empty() ? 0 : burst.back().size);
      check(burst.size() == 1 || last_offset < cap,
            "burst cap: flow " + std::to_string(f.id) + " started a packet at offset " +
                std::to_string(last_offset) + " >= " + std::to_string(cap));
      for (const auto& p : burst) send_packet(f, p, burst_bytes);
    }
    check_window(f);
    if (decision.next_wakeup) {
      const Micros t = std::max(*decision.next_wakeup, now());
      if (!f.wakeup || t < *f.wakeup) {
        f.wakeup = t;
        schedule(t, [this, &f, t] { on_wakeup(f, t); });
      }
    }
  }

  void send_packet(FlowRuntime& f, const Packet& p, Bytes burst_bytes) {
    f.outstanding[{p.frame_id, p.seq_in_frame}] = p.size;
    f.outstanding_bytes += p.size;
    const EnqueueResult r = enqueue(p);
    log_.packets.push_back(PacketRecord{.flow = f.id,
                                        .frame = p.frame_id,
                                        .seq = p.seq_in_frame,
                                        .size = p.size,
                                        .send_time = now(),
                                        .burst_bytes = burst_bytes,
                                        .enqueue = r,
                                        .recv_time = std::nullopt});
    packet_log_index_[{f.id, p.frame_id, p.seq_in_frame}] = log_.packets.size() - 1;
  }

  EnqueueResult enqueue(const Packet& p) {
    const bool was_busy = link_.busy();
    const EnqueueResult r = link_.enqueue(p, now());
    LinkTotals& totals = totals_for(p.flow_id);
    totals.enqueued += p.size;
    log_.link_total.enqueued += p.size;
    if (r == EnqueueResult::kAccepted) {
      if (!was_busy) schedule_departure();
    } else {
      totals.dropped += p.size;
      log_.link_total.dropped += p.size;
      if (p.flow_id != kCrossTrafficFlow) {
        log_.drops.push_back(DropRecord{
            .flow = p.flow_id, .frame = p.frame_id, .seq = p.seq_in_frame, .time = now(), .reason = r});
      }
    }
    return r;
  }

  LinkTotals& totals_for(FlowId flow) {
    return flow == kCrossTrafficFlow ? log_.cross : per_flow_link_.at(flow);
  }

  void schedule_departure() {
    if (const auto t = link_.next_departure()) schedule(*t, [this] { on_departure(); });
  }

  void on_departure() {
    const Departure d = link_.complete_service(now());
    const Micros queue_delay = d.service_start - d.enqueue_time;
    const double bound = static_cast<double>(sc_.link.buffer_capacity) * 8.0 * 1e6 / sc_.link.rate.min_rate();
    check(queue_delay >= 0 && static_cast<double>(queue_delay) <= bound + 1.0,
          "queue delay " + std::to_string(queue_delay) + "us outside [0, buffer/min_rate]");
    schedule_departure();
    schedule(d.arrival_time, [this, p = d.packet] { on_arrival(p); });
  }

  // -- receiver -------------------------------------------------------------

  void on_arrival(const Packet& p) {
    LinkTotals& totals = totals_for(p.flow_id);
    totals.delivered += p.size;
    log_.link_total.delivered += p.size;
    if (p.flow_id == kCrossTrafficFlow) return;
    FlowRuntime& f = *flows_.at(p.flow_id);
    if (const auto it = packet_log_index_.find({f.id, p.frame_id, p.seq_in_frame}); it != packet_log_index_.end()) {
      log_.packets[it->second].recv_time = now();
    }
    // In-order delivery: anything still open from earlier frames is done.
    while (!f.rx.empty() && f.rx.begin()->first < p.frame_id) flush(f, f.rx.begin()->first);
    auto& fr = f.rx[p.frame_id];
    if (fr.n == 0) {
      fr.n = p.packets_in_frame;
      fr.recv.assign(static_cast<std::size_t>(fr.n), std::nullopt);
    }
    fr.recv[static_cast<std::size_t>(p.seq_in_frame - 1)] = now();
    ++fr.received;
    fr.last_activity = now();
    fr.stamp = ++f.rx_stamp;
    if (p.seq_in_frame == fr.n) {
      flush(f, p.frame_id);
    } else {
      const std::uint64_t stamp = fr.stamp;
      const FrameId id = p.frame_id;
      schedule(now() + sc_.receiver_timeout, [this, &f, id, stamp] {
        const auto it = f.rx.find(id);
        if (it != f.rx.end() && it->second.stamp == stamp) flush(f, id);
      });
    }
  }

  void flush(FlowRuntime& f, FrameId id) {
    const auto it = f.rx.find(id);
    if (it == f.rx.end()) return;
    const RxFrame fr = std::move(it->second);
    f.rx.erase(it);
    FeedbackReport report;
    report.flow_id = f.id;
    report.frame_id = id;
    report.report_send_time = now();
    int lost = 0;
    for (int s = 1; s <= fr.n; ++s) {
      const auto& t = fr.recv[static_cast<std::size_t>(s - 1)];
      report.entries.push_back(PacketFeedback{.seq_in_frame = s, .recv_time = t});
      if (!t) ++lost;
    }
    if (lost == 0) {
      if (const auto idx = f.frame_index.find(id); idx != f.frame_index.end()) {
        log_.frames[idx->second].delivered_time = *fr.recv.back();
      }
    }
    const Micros arrival = now() + link_.one_way_delay();
    schedule(arrival, [this, &f, report, lost]() mutable { on_feedback(f, std::move(report), lost); });
  }

  // -- feedback -------------------------------------------------------------

  void on_feedback(FlowRuntime& f, FeedbackReport report, int lost) {
    report.report_arrival_time = now();
    log_.feedback.push_back(FeedbackRecord{.flow = f.id,
                                           .frame = report.frame_id,
                                           .send_time = report.report_send_time,
                                           .arrival_time = now(),
                                           .received = static_cast<int>(report.entries.size()) - lost,
                                           .lost = lost});
    // Mirror of the acknowledgement and reorder-guard rules.
    for (const auto& e : report.entries) {
      if (const auto it = f.outstanding.find({report.frame_id, e.seq_in_frame}); it != f.outstanding.end()) {
        f.outstanding_bytes -= it->second;
        f.outstanding.erase(it);
      }
    }
    const FrameId horizon = report.frame_id - f.controller.config().loss_reorder_frames;
    while (!f.outstanding.empty() && f.outstanding.begin()->first.first <= horizon) {
      f.outstanding_bytes -= f.outstanding.begin()->second;
      f.outstanding.erase(f.outstanding.begin());
    }

    SendDecision decision = f.controller.on_feedback(report, now());
    check_state(f);
    handle(f, std::move(decision));
  }

  void check_window(FlowRuntime& f) {
    check(f.controller.inflight() == f.outstanding_bytes,
          "window conservation: flow " + std::to_string(f.id) + " inflight " +
              std::to_string(f.controller.inflight()) + " != outstanding " + std::to_string(f.outstanding_bytes));
  }

  void check_state(FlowRuntime& f) {
    const auto& ctl = f.controller;
    const auto& dc = ctl.config().detector;
    check(ctl.gamma() >= dc.gamma_floor - 1e-12 && ctl.gamma() <= 1.0, "gamma out of [floor, 1]");
    const auto& bs = ctl.burst_state();
    check(bs.m >= bs.m_min && bs.m <= bs.m_max, "M outside [M_min, M_max]");
    check(!bs.fallback_active || bs.m == bs.m_min, "fallback without M = M_min");
    check((ctl.mode() == Mode::kFallback) == bs.fallback_active, "mode disagrees with fallback flag");
    if (bs.fallback_active) f.fallback_seen = true;
    if (bs.last_update != f.last_burst_update) {
      const Bytes step = ctl.config().burst.step;
      const Bytes delta = bs.m - f.last_m;
      check(delta == 0 || delta == step || delta == -step, "M step discipline: delta " + std::to_string(delta));
      check(bs.last_update - f.last_burst_update >= ctl.config().burst.update_period,
            "M updated before its epoch elapsed");
      log_.burst_updates.push_back(BurstUpdateRecord{.flow = f.id,
                                                     .time = now(),
                                                     .m_before = f.last_m,
                                                     .m_after = bs.m,
                                                     .fallback = bs.fallback_active,
                                                     .l0 = bs.last_l0,
                                                     .lcur = bs.last_lcur});
      f.last_burst_update = bs.last_update;
      f.last_m = bs.m;
    } else {
      check(bs.m == f.last_m, "M changed outside an epoch update");
    }
    if (ctl.estimator().warm()) {
      const auto bdp = ctl.estimator().bdp();
      const auto expect = std::clamp(static_cast<Bytes>(std::floor(ctl.gamma() * static_cast<double>(bdp.bytes))),
                                     ctl.config().cwnd_min, ctl.config().cwnd_max);
      check(ctl.cwnd() == expect, "cwnd != clamp(gamma * BDP)");
    }
  }

  // -- cross traffic and sampling -------------------------------------------

  void on_cross_tick(Micros stop) {
    if (now() >= stop) return;
    Packet p{.flow_id = kCrossTrafficFlow,
             .frame_id = cross_seq_++,
             .seq_in_frame = 1,
             .packets_in_frame = 1,
             .size = sc_.cross.packet_size,
             .send_time = now(),
             .recv_time = std::nullopt,
             .lost = false};
    enqueue(p);
    const Micros next = sc_.cross.start + static_cast<Micros>(std::llround(
                                              static_cast<double>(cross_seq_) * static_cast<double>(p.size) * 8.0 *
                                              1e6 / sc_.cross.rate));
    if (next < stop) schedule(next, [this, stop] { on_cross_tick(stop); });
  }

  BitsPerSecond fair_share(Micros t) const {
    BitsPerSecond capacity = sc_.link.rate.rate_at(t);
    if (sc_.cross.rate > 0 && t >= sc_.cross.start && t < sc_.cross.stop.value_or(sc_.duration)) {
      capacity -= sc_.cross.rate;
    }
    int active = 0;
    for (const auto& f : flows_) active += (t >= f->config.start && t < f->stop) ? 1 : 0;
    return active > 0 ? std::max(0.0, capacity) / active : 0.0;
  }

  void on_snapshot() {
    const BitsPerSecond rate = sc_.link.rate.rate_at(now());
    const BitsPerSecond share = fair_share(now());
    for (const auto& fp : flows_) {
      const FlowRuntime& f = *fp;
      if (now() < f.config.start || now() >= f.stop) continue;
      log_.snapshots.push_back(SnapshotRecord{.flow = f.id,
                                              .ctl = f.controller.snapshot(now()),
                                              .link_rate = rate,
                                              .fair_share = share,
                                              .link_queue = link_.queued_bytes()});
    }
    const Micros next = now() + sc_.snapshot_interval;
    if (next < sc_.duration) schedule(next, [this] { on_snapshot(); });
  }

  void finish() {
    for (std::size_t i = 0; i < flows_.size(); ++i) {
      auto& f = *flows_[i];
      LinkTotals t = per_flow_link_[i];
      t.in_transit = t.enqueued - t.delivered - t.dropped;
      log_.flows.push_back(FlowSummary{.flow = f.id,
                                       .start = f.config.start,
                                       .stop = f.stop,
                                       .counters = f.controller.counters(),
                                       .link = t,
                                       .frame_bytes = f.frame_bytes,
                                       .fallback_seen = f.fallback_seen});
    }
    log_.cross.in_transit = log_.cross.enqueued - log_.cross.delivered - log_.cross.dropped;
    auto& total = log_.link_total;
    total.in_transit = total.enqueued - total.delivered - total.dropped;

    // Bytes still inside the link must match what the link itself holds or
    // is propagating; nothing may be created or lost silently.
    Bytes sum_enqueued = log_.cross.enqueued;
    Bytes sum_delivered = log_.cross.delivered;
    Bytes sum_dropped = log_.cross.dropped;
    for (const auto& fs : log_.flows) {
      sum_enqueued += fs.link.enqueued;
      sum_delivered += fs.link.delivered;
      sum_dropped += fs.link.dropped;
      check(fs.link.in_transit >= 0, "link conservation: negative in-transit bytes");
    }
    check(sum_enqueued == total.enqueued && sum_delivered == total.delivered && sum_dropped == total.dropped,
          "link conservation: per-flow totals disagree with the link");
    check(total.in_transit >= link_.queued_bytes(), "link conservation: queue holds unaccounted bytes");
  }

  const ScenarioConfig& sc_;
  SimClock clock_;
  EventQueue events_;
  Link link_;
  std::vector<std::unique_ptr<FlowRuntime>> flows_;
  std::vector<LinkTotals> per_flow_link_;
  std::map<std::tuple<FlowId, FrameId, int>, std::size_t> packet_log_index_;
  FrameId cross_seq_ = 0;
  RunLog log_;
};

}  // namespace

RunLog run(const ScenarioConfig& scenario) {
  scenario.validate();
  Simulation sim(scenario);
  return sim.execute();
}

}  // namespace camel
