#pragma once

// The frame-level sender: estimator + detector set the window
// (cwnd = gamma * BDP), burst control caps how many bytes leave back to
// back, and a paced delay-gradient AIMD takes over when the bottleneck
// buffer cannot absorb even the smallest burst.

#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "camel/burst_control.hpp"
#include "camel/core.hpp"
#include "camel/detector.hpp"
#include "camel/estimator.hpp"

namespace camel {

enum class Mode { kBurst, kFallback };

const char* to_string(Mode mode);

struct ControllerConfig {
  Bytes mtu = kDefaultMtu;
  Bytes cwnd_min = 4 * kDefaultMtu;
  Bytes cwnd_max = 10'000'000;
  Bytes initial_cwnd = 10 * kDefaultMtu;
  BitsPerSecond initial_bitrate = 300'000;
  Bytes queue_capacity = 256 * 1024;  // sender-side pending bytes
  int loss_reorder_frames = 3;
  Micros backlog_drain_period = 1'000'000;

  // Fallback (paced delay-gradient AIMD).
  double fallback_overuse_us_per_s = 2000.0;
  double fallback_decrease = 0.85;
  BitsPerSecond fallback_additive_bps_per_s = 50'000;
  BitsPerSecond fallback_rate_min = 100'000;
  Micros fallback_decrease_holdoff = 500'000;
  // Loss-driven branch: decrease above `high`, no increase between the two.
  double fallback_loss_high = 0.10;
  double fallback_loss_low = 0.02;
  Micros fallback_loss_window = 1'000'000;

  EstimatorConfig estimator;
  DetectorConfig detector;
  BurstConfig burst;

  void validate() const;
};

// One AIMD step. Loss above fallback_loss_high scales the rate by
// (1 - loss / 2); otherwise delay-gradient overuse scales it by
// fallback_decrease (both only when `may_decrease`). Without overuse and
// with loss below fallback_loss_low the rate grows additively, prorated by
// `elapsed`. The result is clamped to [rate_min, ceiling].
BitsPerSecond fallback_step(BitsPerSecond rate, double time_gradient_us_per_s, double loss_fraction, Micros elapsed,
                            std::optional<BitsPerSecond> ceiling, const ControllerConfig& config,
                            bool may_decrease = true);

struct SendDecision {
  // Each inner vector leaves back to back at the current instant.
  std::vector<std::vector<Packet>> bursts;
  std::optional<Micros> next_wakeup;

  std::vector<Packet> packets() const;
  bool empty() const { return bursts.empty(); }
  void merge(SendDecision other);
};

struct ControllerSnapshot {
  Micros time = 0;
  Bytes cwnd = 0;
  Bytes inflight = 0;
  double gamma = 1.0;
  Bytes max_burst = 0;
  Mode mode = Mode::kBurst;
  std::optional<BitsPerSecond> avg_bandwidth;
  BitsPerSecond target_bitrate = 0;  // network target
  BitsPerSecond app_bitrate = 0;     // what the encoder is asked for
  std::optional<Micros> min_delay;
  BitsPerSecond fallback_rate = 0;
  Bytes pending_bytes = 0;
};

struct ControllerCounters {
  std::int64_t unknown_feedback = 0;
  std::int64_t app_dropped_frames = 0;
  Bytes app_dropped_bytes = 0;
  std::int64_t guard_declared_lost = 0;
  std::int64_t congested_verdicts = 0;
  std::int64_t feedback_reports = 0;
};

class CamelController {
 public:
  explicit CamelController(ControllerConfig config = {}, FlowId flow = 0, Micros now = 0);

  SendDecision on_frame(Frame frame, Micros now);
  SendDecision on_feedback(const FeedbackReport& report, Micros now);
  SendDecision on_timer(Micros now);

  // gamma * avg(B), the initial bitrate while cold, or the fallback rate.
  BitsPerSecond network_target_bitrate() const;
  // cwnd / srtt once warm; the network target otherwise.
  BitsPerSecond window_rate() const;
  // Encoder target: min(network target, window rate) less what drains the
  // sender queue within backlog_drain_period.
  BitsPerSecond app_target_bitrate() const;

  // One AIMD step of the fallback rate; a no-op outside fallback mode.
  BitsPerSecond fallback_update(Micros now);

  ControllerSnapshot snapshot(Micros now) const;

  Bytes cwnd() const { return cwnd_; }
  Bytes inflight() const { return inflight_; }
  Mode mode() const { return mode_; }
  double gamma() const { return gamma_.gamma; }
  BitsPerSecond fallback_rate() const { return fallback_rate_; }
  const EstimatorWindows& estimator() const { return estimator_; }
  const SignalWindow& signal_window() const { return signal_; }
  const BurstLengthState& burst_state() const { return burst_; }
  const IntervalLossStats& loss_stats() const { return loss_stats_; }
  const ControllerCounters& counters() const { return counters_; }
  const ControllerConfig& config() const { return config_; }
  std::optional<CongestionVerdict> last_verdict() const { return last_verdict_; }
  Bytes pending_bytes() const;
  // Inflight as charged against cwnd when admitting the next chunk.
  Bytes window_charge() const;
  std::size_t outstanding_frames() const { return frames_.size(); }

  // Test hooks.
  void force_fallback(BitsPerSecond rate);
  void set_fallback_rate(BitsPerSecond rate) { fallback_rate_ = rate; }

 private:
  struct SentPacket {
    Bytes size = 0;
    Micros send_time = 0;
    Bytes offset_in_burst = 0;
    int burst_index = -1;  // -1: not yet sent
    bool resolved = false;
  };
  struct FrameRecord {
    Frame frame;
    std::vector<SentPacket> packets;
    Bytes inflight_at_send = 0;
    bool started = false;
    int bursts_sent = 0;
    int unresolved_sent = 0;
    int unsent = 0;
  };
  struct Chunk {
    FrameId frame_id = 0;
    std::size_t begin = 0;  // packet index range [begin, end)
    std::size_t end = 0;
    Bytes bytes = 0;
  };

  SendDecision try_send(Micros now);
  void emit_chunk(const Chunk& chunk, Micros now, SendDecision& out);
  void rechunk_pending();
  std::vector<Chunk> make_chunks(FrameId id, std::size_t begin, std::size_t end) const;
  void enforce_queue_capacity();
  void resolve_packet(FrameRecord& rec, std::size_t idx, bool lost);
  void apply_loss_guard(FrameId reported);
  void recompute_cwnd();
  void erase_if_done(FrameId id);
  Micros pacing_span() const;
  BitsPerSecond pacing_rate() const;
  double recent_loss_fraction(Micros now);
  std::optional<BitsPerSecond> bandwidth_ceiling() const;
  Bytes current_max_burst() const { return max_burst(burst_); }

  ControllerConfig config_;
  FlowId flow_;
  Mode mode_ = Mode::kBurst;
  Bytes cwnd_;
  Bytes inflight_ = 0;

  EstimatorWindows estimator_;
  SignalWindow signal_;
  GammaState gamma_;
  std::optional<CongestionVerdict> last_verdict_;
  BurstLengthState burst_;
  IntervalLossStats loss_stats_;
  Bytes chunked_at_burst_;

  std::map<FrameId, FrameRecord> frames_;
  std::deque<Chunk> pending_;
  Micros next_release_ = 0;
  // Release plan of the frame currently being spread out.
  FrameId plan_frame_ = -1;
  Micros plan_start_ = 0;
  Micros plan_span_ = 0;
  int plan_chunks_ = 1;
  int plan_emitted_ = 0;

  std::optional<Micros> last_frame_time_;
  double frame_interval_us_ = 40'000.0;
  std::optional<double> srtt_us_;

  BitsPerSecond fallback_rate_;
  std::deque<std::pair<Micros, bool>> recent_losses_;  // (resolved at, lost)
  std::optional<BitsPerSecond> last_bandwidth_;        // survives an empty window
  Micros now_ = 0;
  Micros last_fallback_update_ = 0;
  Micros last_fallback_decrease_ = -1;

  ControllerCounters counters_;
};

}  // namespace camel
