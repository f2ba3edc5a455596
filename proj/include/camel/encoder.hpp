#pragma once

// Synthetic real-time encoder: frame sizes follow the target bitrate scaled
// by the encoded-to-target ratio (ETR), with a GOP structure and
// multiplicative lognormal size noise.

#include <cstdint>
#include <random>
#include <span>

#include "camel/core.hpp"

namespace camel {

struct EncoderConfig {
  double fps = 25.0;
  int gop_length = 1;
  double i_to_p_ratio = 1.0;
  double etr = 1.0;
  double size_jitter_cv = 0.0;
  std::uint64_t seed = 1;
  Bytes mtu = kDefaultMtu;
  Bytes min_frame_size = 100;

  void validate() const;
};

class Encoder {
 public:
  Encoder(EncoderConfig config, FlowId flow);

  // Target changes apply from the next frame on.
  Frame next_frame(BitsPerSecond target_bitrate, Micros now);

  void set_etr(double etr);
  double etr() const { return config_.etr; }
  const EncoderConfig& config() const { return config_; }
  std::int64_t frames_emitted() const { return counter_; }

  // Emission time of frame k for a flow starting at `start`.
  Micros frame_time(std::int64_t k, Micros start = 0) const;

  // Nominal (noise-free) I and P frame sizes for a given mean size.
  static std::pair<double, double> gop_sizes(double mean_size, int gop_length, double i_to_p_ratio);

 private:
  EncoderConfig config_;
  FlowId flow_;
  std::int64_t counter_ = 0;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Total frame bytes * 8 / window; zero for an empty or non-positive window.
BitsPerSecond long_run_bitrate(std::span<const Frame> frames, Micros window);

}  // namespace camel
