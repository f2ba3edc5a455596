#pragma once

// Deterministic discrete-event simulation of one drop-tail bottleneck shared
// by frame-level senders (and optional constant-rate cross traffic), plus
// the analytic queuing-delay model used by the congestion-signal study.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "camel/controller.hpp"
#include "camel/core.hpp"
#include "camel/encoder.hpp"

namespace camel {

// Piecewise-constant link rate.
class RateSchedule {
 public:
  struct Step {
    Micros start = 0;
    BitsPerSecond rate = 0;
  };

  RateSchedule() = default;
  explicit RateSchedule(BitsPerSecond constant) : steps_{{0, constant}} {}
  explicit RateSchedule(std::vector<Step> steps);

  // Two-column text: `time_seconds rate_kbps` per line, '#' comments.
  static RateSchedule from_trace_file(const std::string& path);
  static RateSchedule parse_trace(const std::string& text);

  BitsPerSecond rate_at(Micros t) const;
  BitsPerSecond min_rate() const;
  const std::vector<Step>& steps() const { return steps_; }
  bool empty() const { return steps_.empty(); }

 private:
  std::vector<Step> steps_;
};

struct JitterConfig {
  Micros sigma = 0;  // 0 disables jitter
  Micros cap = 0;
};

struct LinkConfig {
  RateSchedule rate{1'000'000.0};
  Micros rtprop = 50'000;  // one-way delay is rtprop / 2 in each direction
  Bytes buffer_capacity = 100'000;
  double random_loss_p = 0.0;
  JitterConfig jitter;
  std::uint64_t seed = 1;
  Bytes mtu = kDefaultMtu;

  void validate() const;
};

enum class EnqueueResult { kAccepted, kDroppedOverflow, kDroppedRandom };

const char* to_string(EnqueueResult r);

struct Departure {
  Packet packet;
  Micros enqueue_time = 0;
  Micros service_start = 0;
  Micros departure_time = 0;
  Micros arrival_time = 0;  // at the receiver
};

// Single FIFO bottleneck. `buffer_capacity` bounds every byte held by the
// link, the packet in service included. Random loss is applied before the buffer check.
// One-way jitter is added after the queue; arrivals are kept in FIFO order.
class Link {
 public:
  explicit Link(LinkConfig config);

  EnqueueResult enqueue(const Packet& packet, Micros now);
  std::optional<Micros> next_departure() const;
  // Finishes the packet in service at `now` (== next_departure()) and
  // starts the next one.
  Departure complete_service(Micros now);

  Bytes queued_bytes() const { return queued_bytes_; }
  std::size_t queued_packets() const { return queue_.size(); }
  bool busy() const { return in_service_.has_value(); }
  const LinkConfig& config() const { return config_; }
  Micros one_way_delay() const { return config_.rtprop / 2; }

 private:
  struct Queued {
    Packet packet;
    Micros enqueue_time;
  };
  void start_service(Micros now);
  Micros sample_jitter();

  LinkConfig config_;
  std::deque<Queued> queue_;
  Bytes queued_bytes_ = 0;
  std::optional<Queued> in_service_;
  Micros service_start_ = 0;
  Micros service_end_ = 0;
  Micros last_arrival_ = 0;
  std::mt19937_64 loss_rng_;
  std::mt19937_64 jitter_rng_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Queuing-delay model: rtprop while inflight fits in the BDP, growing by
// the excess bytes' serialization time beyond it.
Micros analytic_rtt(Bytes inflight, BitsPerSecond bandwidth, Micros rtprop, Bytes bdp);

struct SynthParams {
  BitsPerSecond bandwidth = 2'000'000;
  Micros rtprop = 25'000;
  Bytes bdp = 6'250;
  Micros sample_interval = 40'000;
};

struct SynthPoint {
  Micros time = 0;
  Bytes inflight = 0;
  Micros rtt = 0;
  bool congested = false;  // rtt > rtprop
};

std::vector<SynthPoint> synth_trace(const std::vector<Bytes>& inflight_series, const SynthParams& params);

// Smoothly drifting inflight: a reflecting random walk whose velocity is an
// AR(1) process, so excursions above and below the BDP last several seconds.
struct InflightWalkConfig {
  std::size_t samples = 6000;
  double lower_bdp = 0.25;  // bounds as multiples of the BDP
  double upper_bdp = 2.5;
  double velocity_sigma_bdp = 0.0003;  // per-sample velocity noise, in BDPs
  double velocity_rho = 0.99;
};

std::vector<Bytes> generate_inflight_walk(const InflightWalkConfig& config, Bytes bdp, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Scenario description and run log.

enum class ControllerKind { kCamel, kFallbackOnly };

struct EtrChange {
  Micros at = 0;
  double etr = 1.0;
};

struct FlowConfig {
  ControllerKind kind = ControllerKind::kCamel;
  EncoderConfig encoder;
  ControllerConfig controller;
  Micros start = 0;
  std::optional<Micros> stop;
  std::vector<EtrChange> etr_schedule;
};

struct CrossTrafficConfig {
  BitsPerSecond rate = 0;  // 0 disables
  Micros start = 0;
  std::optional<Micros> stop;
  Bytes packet_size = kDefaultMtu;
};

struct ScenarioConfig {
  std::string name = "scenario";
  Micros duration = 0;
  std::uint64_t seed = 1;
  Micros snapshot_interval = 100'000;
  Micros receiver_timeout = 1'000'000;
  LinkConfig link;
  std::vector<FlowConfig> flows;
  CrossTrafficConfig cross;
  // Metric window for accuracy-style metrics; defaults to [5 s, duration].
  std::optional<Micros> metrics_start;
  std::optional<Micros> metrics_end;

  void validate() const;
};

inline constexpr FlowId kCrossTrafficFlow = 0xFFFFFFFFu;

struct PacketRecord {
  FlowId flow = 0;
  FrameId frame = 0;
  int seq = 0;
  Bytes size = 0;
  Micros send_time = 0;
  Bytes burst_bytes = 0;
  EnqueueResult enqueue = EnqueueResult::kAccepted;
  std::optional<Micros> recv_time;
};

struct FeedbackRecord {
  FlowId flow = 0;
  FrameId frame = 0;
  Micros send_time = 0;
  Micros arrival_time = 0;
  int received = 0;
  int lost = 0;
};

struct FrameLogRecord {
  FlowId flow = 0;
  FrameId frame = 0;
  FrameKind kind = FrameKind::P;
  Bytes size = 0;
  Micros encode_time = 0;
  std::optional<Micros> delivered_time;  // last packet, when every packet arrived
};

struct SnapshotRecord {
  FlowId flow = 0;
  ControllerSnapshot ctl;
  BitsPerSecond link_rate = 0;
  BitsPerSecond fair_share = 0;  // (link rate - cross traffic) / active flows
  Bytes link_queue = 0;
};

struct BurstUpdateRecord {
  FlowId flow = 0;
  Micros time = 0;
  Bytes m_before = 0;
  Bytes m_after = 0;
  bool fallback = false;
  double l0 = 0;
  double lcur = 0;
};

struct DropRecord {
  FlowId flow = 0;
  FrameId frame = 0;
  int seq = 0;
  Micros time = 0;
  EnqueueResult reason = EnqueueResult::kDroppedOverflow;
};

struct LinkTotals {
  Bytes enqueued = 0;  // offered to the link
  Bytes delivered = 0;
  Bytes dropped = 0;
  Bytes in_transit = 0;  // still queued or propagating at the end of the run
};

struct FlowSummary {
  FlowId flow = 0;
  Micros start = 0;
  Micros stop = 0;
  ControllerCounters counters;
  LinkTotals link;
  Bytes frame_bytes = 0;  // produced by the encoder
  bool fallback_seen = false;
};

struct RunLog {
  std::string scenario;
  Micros duration = 0;
  std::vector<PacketRecord> packets;
  std::vector<FeedbackRecord> feedback;
  std::vector<FrameLogRecord> frames;
  std::vector<SnapshotRecord> snapshots;
  std::vector<BurstUpdateRecord> burst_updates;
  std::vector<DropRecord> drops;
  std::vector<FlowSummary> flows;
  LinkTotals link_total;
  LinkTotals cross;
  std::vector<std::string> invariant_violations;
  std::int64_t invariant_checks = 0;
};

// Executes the scenario to its duration. Throws Error on an invalid scenario.
RunLog run(const ScenarioConfig& scenario);

}  // namespace camel
