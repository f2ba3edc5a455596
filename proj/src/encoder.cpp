#include "camel/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace camel {

void EncoderConfig::validate() const {
  if (!(fps > 0)) throw Error("encoder.fps must be positive");
  if (gop_length < 1) throw Error("encoder.gop_length must be >= 1");
  if (!(i_to_p_ratio >= 1.0)) throw Error("encoder.i_to_p_ratio must be >= 1");
  if (!(etr > 0.0 && etr <= 1.0)) throw Error("encoder.etr must be in (0, 1]");
  if (!(size_jitter_cv >= 0.0)) throw Error("encoder.size_jitter_cv must be >= 0");
  if (mtu < 1) throw Error("encoder.mtu must be >= 1");
}

Encoder::Encoder(EncoderConfig config, FlowId flow) : config_(config), flow_(flow), rng_(config.seed) {
  config_.validate();
}

void Encoder::set_etr(double etr) {
  if (!(etr > 0.0 && etr <= 1.0)) throw Error("encoder.etr must be in (0, 1]");
  config_.etr = etr;
}

std::pair<double, double> Encoder::gop_sizes(double mean_size, int gop_length, double i_to_p_ratio) {
  if (gop_length <= 1) return {mean_size, mean_size};
  const double p = static_cast<double>(gop_length) * mean_size / (i_to_p_ratio + gop_length - 1);
  return {i_to_p_ratio * p, p};
}

Micros Encoder::frame_time(std::int64_t k, Micros start) const {
  return start + static_cast<Micros>(std::llround(static_cast<double>(k) * 1e6 / config_.fps));
}

Frame Encoder::next_frame(BitsPerSecond target_bitrate, Micros now) {
  if (!(target_bitrate > 0)) throw Error("target bitrate must be positive");
  const double mean = config_.etr * target_bitrate / (8.0 * config_.fps);
  const auto [i_size, p_size] = gop_sizes(mean, config_.gop_length, config_.i_to_p_ratio);
  const bool key = config_.gop_length > 1 && counter_ % config_.gop_length == 0;
  double size = key ? i_size : p_size;
  if (config_.size_jitter_cv > 0) {
    const double sigma2 = std::log1p(config_.size_jitter_cv * config_.size_jitter_cv);
    size *= std::exp(std::sqrt(sigma2) * normal_(rng_) - sigma2 / 2.0);
  }
  const Bytes bytes = std::max<Bytes>(config_.min_frame_size, std::llround(size));
  const FrameId id = counter_++;
  return make_frame(flow_, id, key ? FrameKind::I : FrameKind::P, bytes, now, config_.mtu);
}

BitsPerSecond long_run_bitrate(std::span<const Frame> frames, Micros window) {
  if (window <= 0) return 0.0;
  Bytes total = 0;
  for (const auto& f : frames) total += f.size;
  return static_cast<double>(total) * 8.0 * 1e6 / static_cast<double>(window);
}

}  // namespace camel
