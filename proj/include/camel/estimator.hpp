#pragma once

// Frame-level bandwidth and delay estimation.
//
// A frame (or a burst of one) leaves the sender as a back-to-back packet
// train, so the bottleneck spaces its arrivals at the bottleneck rate. The
// receive-rate of the train after its first packet is the bandwidth sample;
// the RTT of the first packet, which never waits behind its own train, is
// the delay sample. Their windowed mean and minimum give the BDP estimate.

#include <deque>
#include <optional>
#include <span>

#include "camel/core.hpp"

namespace camel {

enum class ReorderPolicy {
  kLenient,  // use earliest/latest arrival when receive times go backwards
  kStrict,   // throw "reordered feedback"
};

// Receive-side view of one packet train: bytes that arrived after the
// earliest received packet, and the arrival span they occupied.
struct TrainMeasurement {
  Bytes bytes_after_first = 0;
  Micros span = 0;
  int received = 0;
};

// Returns nullopt when fewer than two packets of the train were received.
std::optional<TrainMeasurement> measure_train(std::span<const PacketFeedback> entries,
                                              std::span<const Bytes> packet_sizes,
                                              ReorderPolicy policy = ReorderPolicy::kLenient);

// Arrival rate of the train in bits/s; absent below two received packets or
// on a zero arrival span.
std::optional<BitsPerSecond> frame_bandwidth(std::span<const PacketFeedback> entries,
                                             std::span<const Bytes> packet_sizes,
                                             ReorderPolicy policy = ReorderPolicy::kLenient);
std::optional<BitsPerSecond> frame_bandwidth(const FeedbackReport& report,
                                             std::span<const Bytes> packet_sizes,
                                             ReorderPolicy policy = ReorderPolicy::kLenient);

// RTT of the lowest-seq received packet. `send_times` is aligned with the
// report entries. The receiver hold time (report_send_time - recv_time) is
// subtracted, so the result is forward delay plus return delay.
std::optional<Micros> frame_delay(const FeedbackReport& report, std::span<const Micros> send_times);

struct BdpEstimate {
  Bytes bytes = 0;
  bool degenerate = false;  // min delay or bandwidth was zero
};

BdpEstimate bdp_estimate(BitsPerSecond avg_bandwidth, Micros min_delay);

struct FrameSample {
  FrameId frame_id = 0;
  std::optional<BitsPerSecond> bandwidth;
  Micros delay = 0;
  Bytes inflight_at_send = 0;
  Micros sample_time = 0;
};

struct EstimatorConfig {
  Micros bandwidth_window = 5 * kMicrosPerSecond;
  Micros delay_window = 10 * kMicrosPerSecond;
  ReorderPolicy reorder = ReorderPolicy::kLenient;
};

// Sliding windows behind avg(B) and min(D). The bandwidth mean is
// frame-weighted: each frame with a bandwidth sample counts once,
// regardless of its size or how long it took to arrive.
class EstimatorWindows {
 public:
  explicit EstimatorWindows(EstimatorConfig config = {}) : config_(config) {}

  void add(const FrameSample& sample);

  std::optional<BitsPerSecond> avg_bandwidth() const;
  std::optional<Micros> min_delay() const;
  // Throws Error("cold start") while either window is empty.
  BdpEstimate bdp() const;
  bool warm() const { return !bandwidth_.empty() && !delay_.empty(); }

  std::size_t bandwidth_samples() const { return bandwidth_.size(); }
  std::size_t delay_samples() const { return delay_.size(); }
  const EstimatorConfig& config() const { return config_; }

 private:
  struct Timed {
    Micros time;
    double value;
  };
  void expire(Micros newest);

  EstimatorConfig config_;
  std::deque<Timed> bandwidth_;
  double bandwidth_sum_ = 0.0;
  std::deque<Timed> delay_;      // all delay samples in the window
  std::deque<Timed> delay_min_;  // monotone increasing values, front is min
};

}  // namespace camel
