#include <doctest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "camel/encoder.hpp"
#include "camel/metrics.hpp"
#include "generators.hpp"

using namespace camel;

namespace {

std::vector<Micros> evenly(Micros gap, int n, Micros start = 0) {
  std::vector<Micros> out;
  for (int i = 0; i < n; ++i) out.push_back(start + i * gap);
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("stalling ratio counts excess over 200 ms") {
    CHECK(stalling_ratio(evenly(33000, 300)).ratio == 0.0);

    std::vector<Micros> one_gap = evenly(40000, 10);
    one_gap.push_back(one_gap.back() + 700000);
    const auto r = stalling_ratio(one_gap, 10'000'000);
    CHECK(r.ratio == doctest::Approx(0.05));
    CHECK_FALSE(r.insufficient);

    CHECK(stalling_ratio(evenly(250000, 41), 10'000'000).ratio == doctest::Approx(0.2));
    CHECK(stalling_ratio(evenly(250000, 41)).ratio == doctest::Approx(0.2));

    const std::vector<Micros> single{5};
    CHECK(stalling_ratio(single).insufficient);
    CHECK(stalling_ratio(single).ratio == 0.0);
  }

  TEST_CASE("stalling ratio stays within [0, 1]") {
    testing::for_all(300, 113, [](testing::Gen& g, int) {
      std::vector<Micros> d{0};
      const int n = static_cast<int>(g.integer(1, 100));
      for (int i = 0; i < n; ++i) d.push_back(d.back() + g.integer(0, 3'000'000));
      const auto r = stalling_ratio(d);
      CHECK(r.ratio >= 0.0);
      CHECK(r.ratio <= 1.0);
    });
  }

  TEST_CASE("estimation accuracy") {
    const std::vector<RateSample> exact{{0, 1e6, 1e6}, {1, 2e6, 2e6}};
    CHECK(bw_estimation_accuracy(exact) == 1.0);
    const std::vector<RateSample> half{{0, 5e5, 1e6}, {1, 1e6, 2e6}};
    CHECK(bw_estimation_accuracy(half) == doctest::Approx(0.5));
    const std::vector<RateSample> close{{0, 989e3, 1e6}};
    CHECK(bw_estimation_accuracy(close) == doctest::Approx(0.989));
    const std::vector<RateSample> far{{0, 3e6, 1e6}, {1, std::nullopt, 1e6}};
    CHECK(bw_estimation_accuracy(far) == 0.0);
    const std::vector<RateSample> skipped{{0, 1e6, 0}, {1, 1e6, 1e6}};
    CHECK(bw_estimation_accuracy(skipped) == 1.0);
    CHECK(bw_estimation_accuracy(std::vector<RateSample>{}) == 0.0);
  }

  TEST_CASE("Jain's fairness index") {
    const std::vector<double> equal{5, 5, 5};
    CHECK(fairness_index(equal) == doctest::Approx(1.0));
    const std::vector<double> skewed{2, 0};
    CHECK(fairness_index(skewed) == doctest::Approx(0.5));
    const std::vector<double> split{600, 400};
    CHECK(fairness_index(split) == doctest::Approx(0.9615).epsilon(1e-4));
    const std::vector<double> zeros{0, 0};
    CHECK_THROWS_AS(fairness_index(zeros), Error);
    const std::vector<double> one{1};
    CHECK_THROWS_AS(fairness_index(one), Error);
    const std::vector<double> negative{1, -1};
    CHECK_THROWS_AS(fairness_index(negative), Error);
  }

  TEST_CASE("fairness index is scale invariant and within (0, 1]") {
    testing::for_all(300, 127, [](testing::Gen& g, int) {
      std::vector<double> x;
      const int n = static_cast<int>(g.integer(2, 10));
      for (int i = 0; i < n; ++i) x.push_back(g.real(0, 1e7));
      const double c = g.real(1e-3, 1e3);
      std::vector<double> y;
      for (double v : x) y.push_back(v * c);
      const double j = fairness_index(x);
      CHECK(j > 0.0);
      CHECK(j <= 1.0 + 1e-12);
      CHECK(fairness_index(y) == doctest::Approx(j).epsilon(1e-9));
    });
  }

  TEST_CASE("signal accuracy") {
    const std::vector<bool> a{true, false, true};
    CHECK(signal_accuracy(a, a) == 1.0);
    const std::vector<bool> b{false, true, false};
    CHECK(signal_accuracy(a, b) == 0.0);
    std::vector<bool> c(10, true);
    std::vector<bool> d(10, true);
    d[3] = false;
    CHECK(signal_accuracy(c, d) == doctest::Approx(0.9));
    CHECK_THROWS_AS(signal_accuracy({}, {}), Error);
    CHECK_THROWS_AS(signal_accuracy(a, c), Error);
  }

  TEST_CASE("media bitrate counts received bytes in the window") {
    RunLog log;
    for (int i = 0; i < 6250; ++i) {
      log.packets.push_back(PacketRecord{.flow = 0, .frame = i, .seq = 1, .size = 1200, .send_time = i * 9600,
                                         .recv_time = i * 9600 + 5000});
    }
    log.packets.push_back(PacketRecord{.flow = 0, .frame = 9999, .seq = 1, .size = 1200});  // lost
    log.packets.push_back(PacketRecord{.flow = 1, .frame = 0, .seq = 1, .size = 1200, .recv_time = 10});
    CHECK(media_bitrate(log, 0, 0, 60'000'000) == doctest::Approx(1e6));
    CHECK(media_bitrate(log, 0, 70'000'000, 80'000'000) == 0.0);
    CHECK(media_bitrate(log, 0, 10, 10) == 0.0);
  }

  TEST_CASE("nearest-rank percentile") {
    CHECK(percentile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 95) == 10);
    CHECK(percentile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 50) == 5);
    CHECK(percentile({3}, 95) == 3);
    CHECK_THROWS_AS(percentile({}, 50), Error);
  }

  TEST_CASE("reports from a run") {
    ScenarioConfig sc;
    sc.name = "unit";
    sc.duration = from_seconds(20);
    sc.link.rate = RateSchedule(1e6);
    sc.flows.resize(2);
    sc.flows[1].start = from_seconds(2);
    const RunLog log = run(sc);
    const MetricsReport rep = compute_metrics(log, sc);
    REQUIRE(rep.flows.size() == 2);
    CHECK(rep.window_start == kWarmup);
    CHECK(rep.window_end == sc.duration);
    REQUIRE(rep.fairness_index.has_value());

    const auto kv = rep.flatten();
    for (const char* key : {"flow0.media_bitrate", "flow1.frame_delay_p95", "media_bitrate", "fairness_index",
                            "stalling_ratio", "bw_estimation_accuracy", "invariant_violations"}) {
      CHECK_MESSAGE(kv.contains(key), key);
    }
    const auto j = nlohmann::json::parse(rep.to_json());
    CHECK(j["scenario"] == "unit");
    for (const auto& [k, v] : j.items()) CHECK_FALSE(v.is_structured());
    CHECK(rep.summary().find("unit: flows=2") == 0);
    CHECK(rep.summary().find('\n') == std::string::npos);

    std::ostringstream csv;
    write_runlog_csv(log, csv);
    std::istringstream lines(csv.str());
    std::string first;
    std::string header;
    std::getline(lines, first);
    std::getline(lines, header);
    CHECK(first == "# schema=1");
    CHECK(header.rfind("time_s,flow,cwnd,inflight,gamma,max_burst,mode", 0) == 0);

    // Delivered bytes never exceed what the encoder produced.
    for (const auto& fs : log.flows) {
      const double produced = static_cast<double>(fs.frame_bytes) * 8e6 / static_cast<double>(sc.duration);
      CHECK(media_bitrate(log, fs.flow, 0, sc.duration) <= produced + 1e-6);
    }
  }

  TEST_CASE("single-flow reports have no fairness index") {
    ScenarioConfig sc;
    sc.duration = from_seconds(8);
    sc.link.rate = RateSchedule(1e6);
    sc.flows.resize(1);
    const auto rep = compute_metrics(run(sc), sc);
    CHECK_FALSE(rep.fairness_index.has_value());
    CHECK(nlohmann::json::parse(rep.to_json())["fairness_index"].is_null());
  }

  TEST_CASE("metrics window defaults and overrides") {
    ScenarioConfig sc;
    sc.duration = from_seconds(60);
    CHECK(metrics_window(sc) == std::pair<Micros, Micros>{kWarmup, sc.duration});
    sc.metrics_start = from_seconds(30);
    sc.metrics_end = from_seconds(40);
    CHECK(metrics_window(sc) == std::pair<Micros, Micros>{from_seconds(30), from_seconds(40)});
    sc.duration = from_seconds(2);
    CHECK(metrics_window(sc).second == from_seconds(2));
  }
}
