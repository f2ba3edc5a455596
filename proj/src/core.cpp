#include "camel/core.hpp"

#include <cmath>

namespace camel {

Micros serialization_time(Bytes size, BitsPerSecond rate) {
  if (rate <= 0) throw Error("non-positive rate");
  return static_cast<Micros>(std::llround(static_cast<double>(size) * 8.0 * 1e6 / rate));
}

void SimClock::advance_to(Micros t) {
  if (t < now_) throw Error("clock moved backwards");
  now_ = t;
}

std::vector<Bytes> packetize(Bytes frame_size, Bytes mtu) {
  if (frame_size <= 0) throw Error("empty frame");
  if (mtu <= 0) throw Error("non-positive mtu");
  std::vector<Bytes> sizes;
  sizes.reserve(static_cast<std::size_t>((frame_size + mtu - 1) / mtu));
  Bytes remaining = frame_size;
  while (remaining > mtu) {
    sizes.push_back(mtu);
    remaining -= mtu;
  }
  sizes.push_back(remaining);
  return sizes;
}

Frame make_frame(FlowId flow, FrameId id, FrameKind kind, Bytes size, Micros encode_time, Bytes mtu) {
  Frame frame{.frame_id = id, .kind = kind, .size = size, .packets = {}, .encode_time = encode_time};
  const auto sizes = packetize(size, mtu);
  const int n = static_cast<int>(sizes.size());
  frame.packets.reserve(sizes.size());
  for (int i = 0; i < n; ++i) {
    frame.packets.push_back(Packet{.flow_id = flow,
                                   .frame_id = id,
                                   .seq_in_frame = i + 1,
                                   .packets_in_frame = n,
                                   .size = sizes[static_cast<std::size_t>(i)],
                                   .send_time = 0,
                                   .recv_time = std::nullopt,
                                   .lost = false});
  }
  return frame;
}

}  // namespace camel
