#pragma once

// Shared value types for the frame-level congestion controller and the
// discrete-event simulator. Times are integer microseconds and sizes are
// integer bytes; rates cross API boundaries in bits per second.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace camel {

using Micros = std::int64_t;
using Bytes = std::int64_t;
using BitsPerSecond = double;
using FlowId = std::uint32_t;
using FrameId = std::int64_t;

inline constexpr Bytes kDefaultMtu = 1200;
inline constexpr Micros kMicrosPerSecond = 1'000'000;

constexpr Micros from_millis(double ms) { return static_cast<Micros>(ms * 1000.0 + (ms >= 0 ? 0.5 : -0.5)); }
constexpr Micros from_seconds(double s) { return static_cast<Micros>(s * 1e6 + (s >= 0 ? 0.5 : -0.5)); }
constexpr double to_seconds(Micros t) { return static_cast<double>(t) / 1e6; }

// Time to serialize `size` bytes at `rate`, rounded to the nearest microsecond.
Micros serialization_time(Bytes size, BitsPerSecond rate);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FrameKind { I, P };

struct Packet {
  FlowId flow_id = 0;
  FrameId frame_id = 0;
  int seq_in_frame = 1;  // 1-based, contiguous within a frame
  int packets_in_frame = 1;
  Bytes size = 0;
  Micros send_time = 0;
  std::optional<Micros> recv_time;
  bool lost = false;
};

struct Frame {
  FrameId frame_id = 0;
  FrameKind kind = FrameKind::P;
  Bytes size = 0;
  std::vector<Packet> packets;
  Micros encode_time = 0;
};

struct PacketFeedback {
  int seq_in_frame = 1;
  std::optional<Micros> recv_time;  // absent => lost

  bool lost() const { return !recv_time.has_value(); }
};

// Receiver-side per-frame report. `report_send_time` lets the sender
// remove the receiver's hold time when it derives a per-packet RTT.
struct FeedbackReport {
  FlowId flow_id = 0;
  FrameId frame_id = 0;
  std::vector<PacketFeedback> entries;
  Micros report_send_time = 0;
  Micros report_arrival_time = 0;
};

class SimClock {
 public:
  Micros now() const { return now_; }
  void advance_to(Micros t);

 private:
  Micros now_ = 0;
};

// Splits a frame into MTU-sized packet payloads; only the last may be short.
std::vector<Bytes> packetize(Bytes frame_size, Bytes mtu = kDefaultMtu);

// Builds a Frame with packet records for `flow` (send/recv times unset).
Frame make_frame(FlowId flow, FrameId id, FrameKind kind, Bytes size, Micros encode_time,
                 Bytes mtu = kDefaultMtu);

}  // namespace camel
