#include "camel/estimator.hpp"

#include <cmath>

namespace camel {

std::optional<TrainMeasurement> measure_train(std::span<const PacketFeedback> entries,
                                              std::span<const Bytes> packet_sizes,
                                              ReorderPolicy policy) {
  if (entries.size() != packet_sizes.size()) throw Error("feedback entries and packet sizes misaligned");

  std::optional<std::size_t> earliest;
  std::optional<Micros> previous;
  Micros first_arrival = 0;
  Micros last_arrival = 0;
  Bytes received_bytes = 0;
  int received = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!e.recv_time) continue;
    const Micros t = *e.recv_time;
    if (previous && t < *previous && policy == ReorderPolicy::kStrict) throw Error("reordered feedback");
    previous = t;
    if (!earliest || t < first_arrival) {
      earliest = i;
      first_arrival = t;
    }
    if (received == 0 || t > last_arrival) last_arrival = t;
    received_bytes += packet_sizes[i];
    ++received;
  }
  if (received < 2) return std::nullopt;
  return TrainMeasurement{.bytes_after_first = received_bytes - packet_sizes[*earliest],
                          .span = last_arrival - first_arrival,
                          .received = received};
}

std::optional<BitsPerSecond> frame_bandwidth(std::span<const PacketFeedback> entries,
                                             std::span<const Bytes> packet_sizes, ReorderPolicy policy) {
  const auto train = measure_train(entries, packet_sizes, policy);
  if (!train || train->span <= 0) return std::nullopt;
  return static_cast<double>(train->bytes_after_first) * 8.0 * 1e6 / static_cast<double>(train->span);
}

std::optional<BitsPerSecond> frame_bandwidth(const FeedbackReport& report, std::span<const Bytes> packet_sizes,
                                             ReorderPolicy policy) {
  return frame_bandwidth(std::span<const PacketFeedback>(report.entries), packet_sizes, policy);
}

std::optional<Micros> frame_delay(const FeedbackReport& report, std::span<const Micros> send_times) {
  if (send_times.size() != report.entries.size()) throw Error("feedback entries and send times misaligned");
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    const auto& e = report.entries[i];
    if (!e.recv_time) continue;
    const Micros hold = report.report_send_time - *e.recv_time;
    return (report.report_arrival_time - send_times[i]) - hold;
  }
  return std::nullopt;
}

BdpEstimate bdp_estimate(BitsPerSecond avg_bandwidth, Micros min_delay) {
  if (avg_bandwidth <= 0 || min_delay <= 0) return {.bytes = 0, .degenerate = true};
  const double bits = avg_bandwidth * static_cast<double>(min_delay) / 1e6;
  return {.bytes = static_cast<Bytes>(std::floor(bits / 8.0 + 1e-9)), .degenerate = false};
}

void EstimatorWindows::add(const FrameSample& sample) {
  if (sample.delay <= 0) throw Error("non-positive frame delay");
  const Micros t = sample.sample_time;
  if (sample.bandwidth) {
    bandwidth_.push_back({t, *sample.bandwidth});
    bandwidth_sum_ += *sample.bandwidth;
  }
  const double d = static_cast<double>(sample.delay);
  delay_.push_back({t, d});
  while (!delay_min_.empty() && delay_min_.back().value >= d) delay_min_.pop_back();
  delay_min_.push_back({t, d});
  expire(t);
}

void EstimatorWindows::expire(Micros newest) {
  while (!bandwidth_.empty() && bandwidth_.front().time < newest - config_.bandwidth_window) {
    bandwidth_sum_ -= bandwidth_.front().value;
    bandwidth_.pop_front();
  }
  if (bandwidth_.empty()) bandwidth_sum_ = 0.0;
  const Micros horizon = newest - config_.delay_window;
  while (!delay_.empty() && delay_.front().time < horizon) delay_.pop_front();
  while (!delay_min_.empty() && delay_min_.front().time < horizon) delay_min_.pop_front();
}

std::optional<BitsPerSecond> EstimatorWindows::avg_bandwidth() const {
  if (bandwidth_.empty()) return std::nullopt;
  return bandwidth_sum_ / static_cast<double>(bandwidth_.size());
}

std::optional<Micros> EstimatorWindows::min_delay() const {
  if (delay_min_.empty()) return std::nullopt;
  return static_cast<Micros>(delay_min_.front().value);
}

BdpEstimate EstimatorWindows::bdp() const {
  const auto bw = avg_bandwidth();
  const auto d = min_delay();
  if (!bw || !d) throw Error("cold start");
  return bdp_estimate(*bw, *d);
}

}  // namespace camel
