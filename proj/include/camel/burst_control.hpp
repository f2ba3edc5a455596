#pragma once

// Burst-length control from interval-wise loss rates.
//
// Each burst is cut into fixed 2 KB intervals by byte offset and loss is
// counted per interval. Physical (random) loss hits every interval alike,
// while buffer overflow concentrates in the deep intervals of a burst. The
// burst cap M moves one interval per epoch: down when the deepest interval
// bursts reached loses noticeably more than interval 0, up otherwise. A
// buffer too shallow even for M_min switches the sender to paced fallback.

#include <deque>
#include <optional>
#include <vector>

#include "camel/core.hpp"

namespace camel {

struct BurstConfig {
  Bytes interval_width = 2048;
  Bytes m_init = 8192;
  Bytes m_min = 2048;
  Bytes m_max = 65536;
  Bytes step = 2048;
  Micros update_period = 5 * kMicrosPerSecond;
  double loss_margin = 0.1;
  int recover_epochs = 6;
  // An interval needs this many packets in an epoch to count as reached.
  int min_interval_samples = 8;
};

class IntervalLossStats {
 public:
  explicit IntervalLossStats(Bytes interval_width = 2048, Micros epoch_start = 0)
      : width_(interval_width), epoch_start_(epoch_start) {}

  void record(Bytes byte_offset_in_burst, bool lost);
  void reset(Micros epoch_start);

  std::size_t interval_index(Bytes byte_offset) const { return static_cast<std::size_t>(byte_offset / width_); }
  std::size_t interval_count() const { return sent_.size(); }
  std::int64_t sent(std::size_t i) const { return i < sent_.size() ? sent_[i] : 0; }
  std::int64_t lost(std::size_t i) const { return i < lost_.size() ? lost_[i] : 0; }
  // Defined only when the interval has samples.
  std::optional<double> loss_rate(std::size_t i) const;
  // Packets at offset 0, i.e. the first packet of each burst.
  std::int64_t leading_sent() const { return lead_sent_; }
  std::int64_t leading_lost() const { return lead_lost_; }
  std::optional<double> leading_loss_rate() const;

  Bytes interval_width() const { return width_; }
  Micros epoch_start() const { return epoch_start_; }

 private:
  Bytes width_;
  Micros epoch_start_;
  std::vector<std::int64_t> sent_;
  std::vector<std::int64_t> lost_;
  std::int64_t lead_sent_ = 0;
  std::int64_t lead_lost_ = 0;
};

// Counts one packet against interval floor(offset / width).
IntervalLossStats& record_packet(IntervalLossStats& stats, Bytes byte_offset_in_burst, bool lost);

// Loss rate of interval 0 in the current epoch; throws Error("cold epoch")
// without samples.
double physical_loss_rate(const IntervalLossStats& stats);

struct BurstLengthState {
  Bytes m = 8192;
  Bytes m_min = 2048;
  Bytes m_max = 65536;
  Micros last_update = 0;
  bool fallback_active = false;
  int clean_epochs = 0;                // consecutive clean epochs while in fallback
  // Diagnostics from the last epoch evaluation.
  double last_l0 = 0.0;
  double last_lcur = 0.0;
  std::size_t last_interval = 0;

  static BurstLengthState initial(const BurstConfig& config, Micros now = 0);
};

// Runs one epoch evaluation when `now - last_update >= update_period`
// (otherwise returns the state unchanged) and resets `stats`.
//
// The physical loss estimate L_0 is the loss rate of the leading packet of
// each burst, which meets an empty queue and so sees only physical loss. It
// sits inside interval 0, which keeps the comparison meaningful at M_min
// where interval 0 is also the current interval. The current interval is the deepest one bursts
// reached, bounded by the interval holding byte M-1. With L_cur above
// L_0 + margin M steps down, otherwise up; the same verdict at M_min
// activates fallback, and a run of clean epochs in fallback ends it.
BurstLengthState update_M(BurstLengthState state, IntervalLossStats& stats, Micros now,
                          const BurstConfig& config = {});

Bytes max_burst(const BurstLengthState& state);

}  // namespace camel
