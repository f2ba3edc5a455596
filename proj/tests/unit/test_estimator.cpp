#include <doctest.h>

#include "camel/estimator.hpp"
#include "camel/netsim.hpp"
#include "criteria.hpp"
#include "generators.hpp"

using namespace camel;

namespace {

PacketFeedback got(int seq, Micros t) { return PacketFeedback{.seq_in_frame = seq, .recv_time = t}; }
PacketFeedback lost(int seq) { return PacketFeedback{.seq_in_frame = seq, .recv_time = std::nullopt}; }

}  // namespace

TEST_SUITE("estimator") {
  TEST_CASE("frame bandwidth from receive spacing") {
    const std::vector<Bytes> sizes3{1200, 1200, 1200};
    const std::vector<PacketFeedback> three{got(1, 0), got(2, 10000), got(3, 20000)};
    CHECK(*frame_bandwidth(three, sizes3) == doctest::Approx(960000.0));

    const std::vector<Bytes> sizes1{1200};
    const std::vector<PacketFeedback> one{got(1, 5)};
    CHECK_FALSE(frame_bandwidth(one, sizes1).has_value());

    const std::vector<Bytes> sizes2{1200, 1200};
    const std::vector<PacketFeedback> two{got(1, 0), got(2, 4800)};
    CHECK(*frame_bandwidth(two, sizes2) == doctest::Approx(2000000.0));
  }

  TEST_CASE("frame bandwidth counts only received bytes after the first") {
    const std::vector<Bytes> sizes{1200, 1200, 600};
    const std::vector<PacketFeedback> middle_lost{got(1, 0), lost(2), got(3, 4800)};
    CHECK(*frame_bandwidth(middle_lost, sizes) == doctest::Approx(600 * 8 / 0.0048));
    const std::vector<PacketFeedback> first_lost{lost(1), got(2, 1000), got(3, 5800)};
    CHECK(*frame_bandwidth(first_lost, sizes) == doctest::Approx(600 * 8 / 0.0048));
    const std::vector<PacketFeedback> only_one{lost(1), lost(2), got(3, 5800)};
    CHECK_FALSE(frame_bandwidth(only_one, sizes).has_value());
  }

  TEST_CASE("zero arrival span yields no bandwidth") {
    const std::vector<Bytes> sizes{1200, 1200};
    const std::vector<PacketFeedback> same{got(1, 100), got(2, 100)};
    CHECK_FALSE(frame_bandwidth(same, sizes).has_value());
  }

  TEST_CASE("reordered arrivals: strict throws, lenient clamps to min and max") {
    const std::vector<Bytes> sizes{1200, 1200, 1200};
    const std::vector<PacketFeedback> reordered{got(1, 0), got(2, 20000), got(3, 10000)};
    CHECK_THROWS_WITH_AS(frame_bandwidth(reordered, sizes, ReorderPolicy::kStrict), "reordered feedback", Error);
    CHECK(*frame_bandwidth(reordered, sizes, ReorderPolicy::kLenient) == doctest::Approx(960000.0));
  }

  TEST_CASE("misaligned sizes are rejected") {
    const std::vector<Bytes> sizes{1200};
    const std::vector<PacketFeedback> two{got(1, 0), got(2, 1)};
    CHECK_THROWS_AS(frame_bandwidth(two, sizes), Error);
  }

  TEST_CASE("frame delay is the RTT of the lowest received packet") {
    FeedbackReport r{.flow_id = 0, .frame_id = 0, .entries = {got(1, 25000)}, .report_send_time = 25000,
                     .report_arrival_time = 50000};
    const std::vector<Micros> sends{0};
    CHECK(frame_delay(r, sends) == 50000);

    FeedbackReport r2{.flow_id = 0, .frame_id = 0, .entries = {lost(1), got(2, 30000)}, .report_send_time = 30000,
                      .report_arrival_time = 60000};
    const std::vector<Micros> sends2{0, 0};
    CHECK(frame_delay(r2, sends2) == 60000);

    FeedbackReport r3{.flow_id = 0, .frame_id = 0, .entries = {lost(1), lost(2)}, .report_send_time = 0,
                      .report_arrival_time = 10};
    CHECK_FALSE(frame_delay(r3, sends2).has_value());
  }

  TEST_CASE("frame delay excludes the receiver hold time") {
    // First packet lands at 25 ms; the report leaves at 40 ms and arrives at 65 ms.
    FeedbackReport r{.flow_id = 0, .frame_id = 0, .entries = {got(1, 25000), got(2, 40000)}, .report_send_time = 40000,
                     .report_arrival_time = 65000};
    const std::vector<Micros> sends{0, 0};
    CHECK(frame_delay(r, sends) == 50000);
  }

  TEST_CASE("bdp estimate") {
    CHECK(bdp_estimate(2e6, 25000).bytes == 6250);
    CHECK(bdp_estimate(1e6, 40000).bytes == 5000);
    const auto d = bdp_estimate(1e6, 0);
    CHECK(d.bytes == 0);
    CHECK(d.degenerate);
  }

  TEST_CASE("bdp estimate is monotone in bandwidth and delay") {
    testing::for_all(500, 23, [](testing::Gen& g, int) {
      const double bw = g.real(1e4, 1e9);
      const Micros d = g.integer(1, 2'000'000);
      const double bw2 = bw * g.real(1.0, 3.0);
      const Micros d2 = d + g.integer(0, 100000);
      CHECK(bdp_estimate(bw2, d).bytes >= bdp_estimate(bw, d).bytes);
      CHECK(bdp_estimate(bw, d2).bytes >= bdp_estimate(bw, d).bytes);
    });
  }

  TEST_CASE("windows: cold start, mean, minimum and expiry") {
    EstimatorWindows w;
    CHECK_THROWS_WITH_AS(w.bdp(), "cold start", Error);
    w.add(FrameSample{.frame_id = 0, .bandwidth = 1e6, .delay = 40000, .inflight_at_send = 0, .sample_time = 0});
    w.add(FrameSample{.frame_id = 1, .bandwidth = 3e6, .delay = 30000, .inflight_at_send = 0, .sample_time = 1'000'000});
    w.add(FrameSample{.frame_id = 2, .bandwidth = std::nullopt, .delay = 50000, .inflight_at_send = 0,
                      .sample_time = 2'000'000});
    CHECK(*w.avg_bandwidth() == doctest::Approx(2e6));
    CHECK(*w.min_delay() == 30000);
    CHECK(w.bdp().bytes == 7500);
    // Bandwidth window is 5 s, delay window 10 s.
    w.add(FrameSample{.frame_id = 3, .bandwidth = 2e6, .delay = 60000, .inflight_at_send = 0,
                      .sample_time = 6'500'000});
    CHECK(*w.avg_bandwidth() == doctest::Approx(2e6));
    CHECK(w.bandwidth_samples() == 1);
    CHECK(*w.min_delay() == 30000);
    w.add(FrameSample{.frame_id = 4, .bandwidth = 2e6, .delay = 70000, .inflight_at_send = 0,
                      .sample_time = 11'500'000});
    CHECK(*w.min_delay() == 50000);
  }

  TEST_CASE("windows never hold samples older than their horizon") {
    testing::for_all(50, 31, [](testing::Gen& g, int) {
      EstimatorWindows w;
      Micros t = 0;
      std::vector<std::pair<Micros, Micros>> delays;
      for (int i = 0; i < 300; ++i) {
        t += g.integer(0, 200000);
        const Micros d = g.integer(1000, 500000);
        w.add(FrameSample{.frame_id = i, .bandwidth = g.real(1e5, 1e7), .delay = d, .inflight_at_send = 0,
                          .sample_time = t});
        delays.push_back({t, d});
        Micros expect = std::numeric_limits<Micros>::max();
        for (const auto& [ts, dv] : delays) {
          if (ts >= t - w.config().delay_window) expect = std::min(expect, dv);
        }
        CHECK(*w.min_delay() == expect);
      }
    });
  }

  TEST_CASE("non-positive delay samples are rejected") {
    EstimatorWindows w;
    CHECK_THROWS_AS(w.add(FrameSample{.frame_id = 0, .bandwidth = 1e6, .delay = 0, .inflight_at_send = 0,
                                      .sample_time = 0}),
                    Error);
  }

  TEST_CASE("packet train on an idle link measures the link rate") {
    testing::for_all(100, 41, [](testing::Gen& g, int) {
      LinkConfig link;
      const double rate = g.real(2e5, 5e7);
      link.rate = RateSchedule(rate);
      link.rtprop = g.integer(2000, 300000);
      const Bytes size = g.integer(4 * kDefaultMtu, 40 * kDefaultMtu);
      link.buffer_capacity = size + kDefaultMtu;
      const auto s = acceptance::idle_link_samples({size}, {0}, link);
      REQUIRE(s.size() == 1);
      REQUIRE(s[0].bandwidth.has_value());
      CHECK(std::abs(*s[0].bandwidth - rate) <= 0.02 * rate);
    });
  }

  TEST_CASE("first frame on an idle link sees rtprop plus one packet serialization") {
    LinkConfig link;
    link.rate = RateSchedule(2e6);
    link.rtprop = 25000;
    const auto s = acceptance::idle_link_samples({6000}, {0}, link);
    CHECK(s[0].delay == 25000 + 4800);
  }

  TEST_CASE("samples do not depend on idle gaps between frames") {
    testing::for_all(100, 53, [](testing::Gen&, int i) {
      const auto trial = acceptance::make_idle_gap_trial(static_cast<std::uint64_t>(i) + 7);
      CHECK(acceptance::idle_gap_max_deviation(trial) <= 0.001);
    });
  }
}
