#include "camel/controller.hpp"

#include <algorithm>
#include <cmath>

namespace camel {

const char* to_string(Mode mode) { return mode == Mode::kBurst ? "burst" : "fallback"; }

void ControllerConfig::validate() const {
  if (mtu < 1) throw Error("controller.mtu must be >= 1");
  if (cwnd_min < 1 || cwnd_max < cwnd_min) throw Error("controller.cwnd_min/cwnd_max out of order");
  if (initial_cwnd < 1) throw Error("controller.initial_cwnd must be >= 1");
  if (!(initial_bitrate > 0)) throw Error("controller.initial_bitrate must be positive");
  if (queue_capacity < 1) throw Error("controller.queue_capacity must be >= 1");
  if (backlog_drain_period <= 0) throw Error("controller.backlog_drain_period must be positive");
  if (!(fallback_loss_low >= 0 && fallback_loss_low <= fallback_loss_high && fallback_loss_high <= 1)) {
    throw Error("controller.fallback_loss_low/high out of order");
  }
  if (fallback_loss_window <= 0) throw Error("controller.fallback_loss_window must be positive");
  if (!(fallback_rate_min > 0)) throw Error("controller.fallback_rate_min must be positive");
  if (!(fallback_decrease > 0 && fallback_decrease < 1)) throw Error("controller.fallback_decrease must be in (0, 1)");
  if (!(detector.gamma_floor > 0 && detector.gamma_floor <= 1)) throw Error("detector.gamma_floor must be in (0, 1]");
  if (!(detector.gamma_decay > 0 && detector.gamma_decay < 1)) throw Error("detector.gamma_decay must be in (0, 1)");
  if (!(detector.k_thresh > 0)) throw Error("detector.k_thresh must be positive");
  if (detector.window <= 0) throw Error("detector.window must be positive");
  if (estimator.bandwidth_window <= 0 || estimator.delay_window <= 0) throw Error("estimator windows must be positive");
  if (burst.m_min < 1 || burst.m_min > burst.m_max) throw Error("burst.m_min/m_max out of order");
  if (burst.interval_width < 1 || burst.step < 1) throw Error("burst.interval_width and burst.step must be >= 1");
  if (burst.update_period <= 0) throw Error("burst.update_period must be positive");
}

BitsPerSecond fallback_step(BitsPerSecond rate, double time_gradient_us_per_s, double loss_fraction, Micros elapsed,
                            std::optional<BitsPerSecond> ceiling, const ControllerConfig& config, bool may_decrease) {
  if (loss_fraction > config.fallback_loss_high) {
    if (may_decrease) rate *= 1.0 - 0.5 * loss_fraction;
  } else if (time_gradient_us_per_s > config.fallback_overuse_us_per_s) {
    if (may_decrease) rate *= config.fallback_decrease;
  } else if (loss_fraction < config.fallback_loss_low) {
    rate += config.fallback_additive_bps_per_s * to_seconds(std::max<Micros>(elapsed, 0));
  }
  if (ceiling) rate = std::min(rate, *ceiling);
  return std::max(rate, config.fallback_rate_min);
}

std::vector<Packet> SendDecision::packets() const {
  std::vector<Packet> out;
  for (const auto& b : bursts) out.insert(out.end(), b.begin(), b.end());
  return out;
}

void SendDecision::merge(SendDecision other) {
  for (auto& b : other.bursts) bursts.push_back(std::move(b));
  if (other.next_wakeup && (!next_wakeup || *other.next_wakeup < *next_wakeup)) next_wakeup = other.next_wakeup;
}

CamelController::CamelController(ControllerConfig config, FlowId flow, Micros now)
    : config_(config),
      flow_(flow),
      cwnd_(config.initial_cwnd),
      estimator_(config.estimator),
      signal_(config.detector.window),
      gamma_{.gamma = 1.0, .last_update_time = now},
      burst_(BurstLengthState::initial(config.burst, now)),
      loss_stats_(config.burst.interval_width, now),
      chunked_at_burst_(0),
      fallback_rate_(config.initial_bitrate),
      last_fallback_update_(now) {
  config_.validate();
  chunked_at_burst_ = current_max_burst();
}

Bytes CamelController::pending_bytes() const {
  Bytes total = 0;
  for (const auto& c : pending_) total += c.bytes;
  return total;
}

std::vector<CamelController::Chunk> CamelController::make_chunks(FrameId id, std::size_t begin,
                                                                 std::size_t end) const {
  const auto& rec = frames_.at(id);
  const Bytes cap = mode_ == Mode::kFallback ? 0 : current_max_burst();
  std::vector<Chunk> chunks;
  Chunk cur{.frame_id = id, .begin = begin, .end = begin, .bytes = 0};
  for (std::size_t i = begin; i < end; ++i) {
    const Bytes size = rec.packets[i].size;
    // A burst of length M carries every packet that starts within its
    // first M bytes, so it reaches the interval holding byte M-1.
    if (cur.end > cur.begin && cur.bytes >= cap) {
      chunks.push_back(cur);
      cur = Chunk{.frame_id = id, .begin = i, .end = i, .bytes = 0};
    }
    cur.end = i + 1;
    cur.bytes += size;
  }
  if (cur.end > cur.begin) chunks.push_back(cur);
  return chunks;
}

void CamelController::rechunk_pending() {
  std::deque<Chunk> rebuilt;
  std::size_t i = 0;
  while (i < pending_.size()) {
    const FrameId id = pending_[i].frame_id;
    const std::size_t begin = pending_[i].begin;
    std::size_t end = pending_[i].end;
    while (i + 1 < pending_.size() && pending_[i + 1].frame_id == id) end = pending_[++i].end;
    ++i;
    for (const auto& c : make_chunks(id, begin, end)) rebuilt.push_back(c);
  }
  pending_ = std::move(rebuilt);
  chunked_at_burst_ = current_max_burst();
  plan_frame_ = -1;
}

void CamelController::enforce_queue_capacity() {
  while (pending_bytes() > config_.queue_capacity) {
    std::optional<FrameId> victim;
    for (const auto& c : pending_) {
      if (!frames_.at(c.frame_id).started) {
        victim = c.frame_id;
        break;
      }
    }
    if (!victim) return;
    const auto& rec = frames_.at(*victim);
    ++counters_.app_dropped_frames;
    counters_.app_dropped_bytes += rec.frame.size;
    std::erase_if(pending_, [&](const Chunk& c) { return c.frame_id == *victim; });
    frames_.erase(*victim);
  }
}

SendDecision CamelController::on_frame(Frame frame, Micros now) {
  if (frames_.contains(frame.frame_id)) throw Error("duplicate frame id");
  if (frame.packets.empty()) throw Error("empty frame");
  if (last_frame_time_ && now > *last_frame_time_) {
    frame_interval_us_ = 0.875 * frame_interval_us_ + 0.125 * static_cast<double>(now - *last_frame_time_);
  }
  last_frame_time_ = now;

  const FrameId id = frame.frame_id;
  FrameRecord rec;
  rec.packets.reserve(frame.packets.size());
  for (const auto& p : frame.packets) rec.packets.push_back(SentPacket{.size = p.size});
  rec.unsent = static_cast<int>(frame.packets.size());
  const std::size_t n = frame.packets.size();
  rec.frame = std::move(frame);
  frames_.emplace(id, std::move(rec));
  for (const auto& c : make_chunks(id, 0, n)) pending_.push_back(c);
  enforce_queue_capacity();
  return try_send(now);
}

SendDecision CamelController::on_timer(Micros now) { return try_send(now); }

BitsPerSecond CamelController::pacing_rate() const {
  const auto avg = estimator_.avg_bandwidth();
  return avg && *avg > 0 ? *avg : config_.initial_bitrate;
}

Micros CamelController::pacing_span() const {
  double span = frame_interval_us_;
  if (srtt_us_) span = std::min(span, *srtt_us_);
  return std::max<Micros>(1, static_cast<Micros>(span));
}

void CamelController::emit_chunk(const Chunk& chunk, Micros now, SendDecision& out) {
  auto& rec = frames_.at(chunk.frame_id);
  std::vector<Packet> burst;
  burst.reserve(chunk.end - chunk.begin);
  if (!rec.started) {
    rec.started = true;
    rec.inflight_at_send = inflight_ + rec.packets[chunk.begin].size;
  }
  Bytes offset = 0;
  for (std::size_t i = chunk.begin; i < chunk.end; ++i) {
    auto& sp = rec.packets[i];
    sp.send_time = now;
    sp.offset_in_burst = offset;
    sp.burst_index = rec.bursts_sent;
    offset += sp.size;
    inflight_ += sp.size;
    ++rec.unresolved_sent;
    --rec.unsent;
    Packet p = rec.frame.packets[i];
    p.send_time = now;
    burst.push_back(p);
  }
  ++rec.bursts_sent;
  out.bursts.push_back(std::move(burst));
}

SendDecision CamelController::try_send(Micros now) {
  SendDecision out;
  while (!pending_.empty()) {
    if (now < next_release_) {
      out.next_wakeup = next_release_;
      break;
    }
    if (mode_ == Mode::kBurst && window_charge() >= cwnd_) break;  // wait for feedback

    const Chunk chunk = pending_.front();
    pending_.pop_front();
    emit_chunk(chunk, now, out);

    if (mode_ == Mode::kFallback) {
      next_release_ = now + std::max<Micros>(1, serialization_time(chunk.bytes, fallback_rate_));
      continue;
    }

    // Spread the residual chunks of a frame evenly over min(frame interval,
    // srtt) starting at its first chunk.
    if (plan_frame_ != chunk.frame_id) {
      int total = 1;
      for (const auto& c : pending_) total += c.frame_id == chunk.frame_id ? 1 : 0;
      plan_frame_ = chunk.frame_id;
      plan_start_ = now;
      plan_span_ = pacing_span();
      plan_chunks_ = total;
      plan_emitted_ = 0;
    }
    ++plan_emitted_;
    // Never release the next burst before this one can have drained at the
    // estimated rate, otherwise the two merge in the bottleneck queue.
    const Micros drain = std::max<Micros>(1, serialization_time(chunk.bytes, pacing_rate()));
    if (!pending_.empty() && pending_.front().frame_id == chunk.frame_id) {
      next_release_ = std::max(now + drain, plan_start_ + plan_emitted_ * plan_span_ / plan_chunks_);
    } else {
      next_release_ = now + drain;
    }
  }
  if (!pending_.empty() && !out.next_wakeup && now < next_release_) out.next_wakeup = next_release_;
  return out;
}

Bytes CamelController::window_charge() const {
  // Reports arrive once per frame, so the oldest fully sent frame stays
  // unacknowledged until its last packet lands even though its bytes have
  // left the pipe. Not charging it keeps a full window from idling the link
  // for one frame time per round trip.
  for (const auto& [id, rec] : frames_) {
    if (rec.unsent > 0) break;
    if (rec.unresolved_sent == 0) continue;
    Bytes bytes = 0;
    for (const auto& sp : rec.packets) bytes += (sp.burst_index >= 0 && !sp.resolved) ? sp.size : 0;
    return inflight_ - bytes;
  }
  return inflight_;
}

void CamelController::resolve_packet(FrameRecord& rec, std::size_t idx, bool lost) {
  auto& sp = rec.packets[idx];
  if (sp.burst_index < 0 || sp.resolved) return;
  sp.resolved = true;
  recent_losses_.push_back({now_, lost});
  inflight_ -= sp.size;
  --rec.unresolved_sent;
  record_packet(loss_stats_, sp.offset_in_burst, lost);
}

void CamelController::erase_if_done(FrameId id) {
  const auto it = frames_.find(id);
  if (it != frames_.end() && it->second.unsent == 0 && it->second.unresolved_sent == 0) frames_.erase(it);
}

void CamelController::apply_loss_guard(FrameId reported) {
  std::vector<FrameId> done;
  for (auto& [id, rec] : frames_) {
    if (id > reported - config_.loss_reorder_frames) break;
    if (rec.unresolved_sent == 0) continue;
    for (std::size_t i = 0; i < rec.packets.size(); ++i) {
      if (rec.packets[i].burst_index >= 0 && !rec.packets[i].resolved) {
        resolve_packet(rec, i, true);
        ++counters_.guard_declared_lost;
      }
    }
    done.push_back(id);
  }
  for (const FrameId id : done) erase_if_done(id);
}

void CamelController::recompute_cwnd() {
  if (!estimator_.warm()) {
    cwnd_ = config_.initial_cwnd;
    return;
  }
  const BdpEstimate bdp = estimator_.bdp();
  const auto scaled = static_cast<Bytes>(std::floor(gamma_.gamma * static_cast<double>(bdp.bytes)));
  cwnd_ = std::clamp(scaled, config_.cwnd_min, config_.cwnd_max);
}

SendDecision CamelController::on_feedback(const FeedbackReport& report, Micros now) {
  ++counters_.feedback_reports;
  now_ = now;
  const auto it = frames_.find(report.frame_id);
  if (it == frames_.end()) {
    ++counters_.unknown_feedback;
    return try_send(now);
  }
  auto& rec = it->second;

  // Entries for packets that actually left, grouped by burst.
  FeedbackReport sent_only = report;
  sent_only.entries.clear();
  std::vector<Micros> send_times;
  std::map<int, std::pair<std::vector<PacketFeedback>, std::vector<Bytes>>> trains;
  for (const auto& e : report.entries) {
    if (e.seq_in_frame < 1 || static_cast<std::size_t>(e.seq_in_frame) > rec.packets.size()) continue;
    const std::size_t idx = static_cast<std::size_t>(e.seq_in_frame - 1);
    const auto& sp = rec.packets[idx];
    if (sp.burst_index < 0) continue;
    sent_only.entries.push_back(e);
    send_times.push_back(sp.send_time);
    auto& train = trains[sp.burst_index];
    train.first.push_back(e);
    train.second.push_back(sp.size);
    resolve_packet(rec, idx, e.lost());
  }

  // Bandwidth per back-to-back train, pooled over the frame's bursts.
  Bytes train_bytes = 0;
  Micros train_span = 0;
  for (const auto& [burst, train] : trains) {
    if (const auto m = measure_train(train.first, train.second, config_.estimator.reorder)) {
      train_bytes += m->bytes_after_first;
      train_span += m->span;
    }
  }
  std::optional<BitsPerSecond> bandwidth;
  if (train_span > 0) bandwidth = static_cast<double>(train_bytes) * 8.0 * 1e6 / static_cast<double>(train_span);

  const auto delay = frame_delay(sent_only, send_times);
  if (delay && *delay > 0) {
    const double d = static_cast<double>(*delay);
    srtt_us_ = srtt_us_ ? 0.875 * *srtt_us_ + 0.125 * d : d;
    estimator_.add(FrameSample{.frame_id = report.frame_id,
                               .bandwidth = bandwidth,
                               .delay = *delay,
                               .inflight_at_send = rec.inflight_at_send,
                               .sample_time = now});
    signal_.add(SignalSample{.inflight = rec.inflight_at_send, .delay = *delay, .time = now});
    if (const auto avg = estimator_.avg_bandwidth()) {
      last_bandwidth_ = avg;
      const auto verdict = detect(signal_, *avg, config_.detector.k_thresh);
      if (verdict.congested) ++counters_.congested_verdicts;
      gamma_ = update_gamma(gamma_, verdict, now, config_.detector);
      last_verdict_ = verdict;
    }
  }

  const FrameId reported = report.frame_id;
  erase_if_done(reported);
  apply_loss_guard(reported);

  const BitsPerSecond target_before = network_target_bitrate();
  const bool was_fallback = burst_.fallback_active;
  burst_ = update_M(burst_, loss_stats_, now, config_.burst);
  const Mode previous_mode = mode_;
  if (burst_.fallback_active && !was_fallback) {
    mode_ = Mode::kFallback;
    fallback_rate_ = fallback_step(target_before, 0.0, 0.0, 0, bandwidth_ceiling(), config_, false);
    last_fallback_update_ = now;
    last_fallback_decrease_ = now;
  } else if (!burst_.fallback_active && was_fallback) {
    mode_ = Mode::kBurst;
  }
  if (mode_ != previous_mode || current_max_burst() != chunked_at_burst_) rechunk_pending();

  if (mode_ == Mode::kFallback) fallback_update(now);
  recompute_cwnd();
  return try_send(now);
}

BitsPerSecond CamelController::fallback_update(Micros now) {
  if (mode_ != Mode::kFallback) return fallback_rate_;
  const Slope g = time_gradient(signal_);
  const bool may_decrease =
      last_fallback_decrease_ < 0 || now - last_fallback_decrease_ >= config_.fallback_decrease_holdoff;
  const double loss = recent_loss_fraction(now);
  const bool overuse =
      loss > config_.fallback_loss_high || (!g.degenerate && g.value > config_.fallback_overuse_us_per_s);
  fallback_rate_ = fallback_step(fallback_rate_, g.degenerate ? 0.0 : g.value, loss, now - last_fallback_update_,
                                 bandwidth_ceiling(), config_, may_decrease);
  if (overuse && may_decrease) last_fallback_decrease_ = now;
  last_fallback_update_ = now;
  return fallback_rate_;
}

double CamelController::recent_loss_fraction(Micros now) {
  while (!recent_losses_.empty() && recent_losses_.front().first < now - config_.fallback_loss_window) {
    recent_losses_.pop_front();
  }
  if (recent_losses_.empty()) return 0.0;
  const auto lost = std::count_if(recent_losses_.begin(), recent_losses_.end(), [](const auto& e) { return e.second; });
  return static_cast<double>(lost) / static_cast<double>(recent_losses_.size());
}

std::optional<BitsPerSecond> CamelController::bandwidth_ceiling() const {
  if (const auto avg = estimator_.avg_bandwidth()) return avg;
  return last_bandwidth_;
}

void CamelController::force_fallback(BitsPerSecond rate) {
  burst_.fallback_active = true;
  burst_.m = burst_.m_min;
  mode_ = Mode::kFallback;
  fallback_rate_ = rate;
  rechunk_pending();
}

BitsPerSecond CamelController::network_target_bitrate() const {
  if (mode_ == Mode::kFallback) return fallback_rate_;
  const auto avg = estimator_.avg_bandwidth();
  if (!avg || !estimator_.warm()) return config_.initial_bitrate;
  return target_bitrate(gamma_.gamma, *avg);
}

BitsPerSecond CamelController::window_rate() const {
  if (mode_ == Mode::kFallback || !estimator_.warm() || !srtt_us_ || *srtt_us_ <= 0) return network_target_bitrate();
  return static_cast<double>(cwnd_) * 8.0 * 1e6 / *srtt_us_;
}

BitsPerSecond CamelController::app_target_bitrate() const {
  // The window caps delivery at about cwnd per round trip; asking the
  // encoder for more only fills the sender queue. Leave room to drain
  // whatever is already queued.
  const double drain = static_cast<double>(pending_bytes()) * 8.0 * 1e6 / static_cast<double>(config_.backlog_drain_period);
  const BitsPerSecond base = std::min(network_target_bitrate(), window_rate());
  return std::max(config_.fallback_rate_min, base - drain);
}

ControllerSnapshot CamelController::snapshot(Micros now) const {
  return ControllerSnapshot{.time = now,
                            .cwnd = cwnd_,
                            .inflight = inflight_,
                            .gamma = gamma_.gamma,
                            .max_burst = current_max_burst(),
                            .mode = mode_,
                            .avg_bandwidth = estimator_.avg_bandwidth(),
                            .target_bitrate = network_target_bitrate(),
                            .app_bitrate = app_target_bitrate(),
                            .min_delay = estimator_.min_delay(),
                            .fallback_rate = fallback_rate_,
                            .pending_bytes = pending_bytes()};
}

}  // namespace camel
