#include "camel/burst_control.hpp"

#include <algorithm>

namespace camel {

void IntervalLossStats::record(Bytes byte_offset_in_burst, bool lost) {
  if (byte_offset_in_burst < 0) throw Error("negative burst offset");
  const std::size_t i = interval_index(byte_offset_in_burst);
  if (i >= sent_.size()) {
    sent_.resize(i + 1, 0);
    lost_.resize(i + 1, 0);
  }
  ++sent_[i];
  if (lost) ++lost_[i];
  if (byte_offset_in_burst == 0) {
    ++lead_sent_;
    if (lost) ++lead_lost_;
  }
}

void IntervalLossStats::reset(Micros epoch_start) {
  sent_.clear();
  lost_.clear();
  lead_sent_ = 0;
  lead_lost_ = 0;
  epoch_start_ = epoch_start;
}

std::optional<double> IntervalLossStats::loss_rate(std::size_t i) const {
  if (sent(i) == 0) return std::nullopt;
  return static_cast<double>(lost(i)) / static_cast<double>(sent(i));
}

std::optional<double> IntervalLossStats::leading_loss_rate() const {
  if (lead_sent_ == 0) return std::nullopt;
  return static_cast<double>(lead_lost_) / static_cast<double>(lead_sent_);
}

IntervalLossStats& record_packet(IntervalLossStats& stats, Bytes byte_offset_in_burst, bool lost) {
  stats.record(byte_offset_in_burst, lost);
  return stats;
}

double physical_loss_rate(const IntervalLossStats& stats) {
  const auto rate = stats.loss_rate(0);
  if (!rate) throw Error("cold epoch");
  return *rate;
}

BurstLengthState BurstLengthState::initial(const BurstConfig& config, Micros now) {
  BurstLengthState s;
  s.m = std::clamp(config.m_init, config.m_min, config.m_max);
  s.m_min = config.m_min;
  s.m_max = config.m_max;
  s.last_update = now;
  return s;
}

BurstLengthState update_M(BurstLengthState state, IntervalLossStats& stats, Micros now, const BurstConfig& config) {
  if (now - state.last_update < config.update_period) return state;

  const auto enough = [&](std::size_t i) { return stats.sent(i) >= config.min_interval_samples; };

  const double l0 = stats.leading_loss_rate().value_or(0.0);

  // Deepest interval reached this epoch, no deeper than the one holding M-1.
  const std::size_t cap = stats.interval_index(std::max<Bytes>(state.m - 1, 0));
  std::optional<std::size_t> current;
  for (std::size_t i = std::min(cap + 1, stats.interval_count()); i-- > 0;) {
    if (enough(i)) {
      current = i;
      break;
    }
  }
  const double lcur = current ? *stats.loss_rate(*current) : 0.0;
  const bool lossy = current.has_value() && lcur > l0 + config.loss_margin;

  state.last_l0 = l0;
  state.last_lcur = lcur;
  state.last_interval = current.value_or(0);

  if (state.fallback_active) {
    state.clean_epochs = lossy ? 0 : state.clean_epochs + 1;
    if (state.clean_epochs >= config.recover_epochs) {
      state.fallback_active = false;
      state.clean_epochs = 0;
    }
    state.m = state.m_min;
  } else if (lossy) {
    if (state.m <= state.m_min) {
      state.fallback_active = true;
      state.clean_epochs = 0;
    }
    state.m = std::max(state.m_min, state.m - config.step);
  } else {
    state.m = std::min(state.m_max, state.m + config.step);
  }

  state.last_update = now;
  stats.reset(now);
  return state;
}

Bytes max_burst(const BurstLengthState& state) { return state.fallback_active ? state.m_min : state.m; }

}  // namespace camel
