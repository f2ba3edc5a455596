#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <limits>
#include <map>
#include <sstream>

#include "camel/burst_control.hpp"
#include "camel/detector.hpp"
#include "camel/estimator.hpp"
#include "camel/experiments.hpp"
#include "camel/metrics.hpp"
#include "camel/netsim.hpp"
#include "camel/scenario.hpp"

namespace py = pybind11;
using namespace camel;

namespace {

std::vector<Override> to_overrides(const std::map<std::string, std::string>& m) {
  return {m.begin(), m.end()};
}

py::dict run_to_dict(const ScenarioConfig& sc) {
  RunLog log;
  {
    py::gil_scoped_release release;
    log = run(sc);
  }
  const auto report = compute_metrics(log, sc);
  std::ostringstream csv;
  write_runlog_csv(log, csv);
  py::dict out;
  out["metrics"] = report.flatten();
  out["summary"] = report.summary();
  out["metrics_json"] = report.to_json();
  out["runlog_csv"] = csv.str();
  out["invariant_violations"] = report.invariant_violations;
  return out;
}

std::vector<Override> with_seed(std::map<std::string, std::string> overrides, std::optional<std::uint64_t> seed) {
  if (seed) overrides["run.seed"] = std::to_string(*seed);
  return to_overrides(overrides);
}

}  // namespace

PYBIND11_MODULE(_camel, m) {
  m.doc() = "Frame-level congestion control: estimators, detector, burst control and simulator";
  py::register_exception<Error>(m, "CamelError", PyExc_ValueError);

  m.def(
      "frame_bandwidth",
      [](const std::vector<Bytes>& sizes, const std::vector<std::optional<Micros>>& recv_times) {
        if (sizes.size() != recv_times.size()) throw Error("sizes and recv_times differ in length");
        std::vector<PacketFeedback> entries;
        for (std::size_t i = 0; i < sizes.size(); ++i)
          entries.push_back(PacketFeedback{static_cast<int>(i + 1), recv_times[i]});
        return frame_bandwidth(entries, sizes);
      },
      py::arg("sizes"), py::arg("recv_times"),
      "Train arrival rate in bit/s; recv_times entries of None mark lost packets.");

  m.def(
      "frame_delay",
      [](const std::vector<Micros>& send_times, const std::vector<std::optional<Micros>>& recv_times,
         Micros report_send_time, Micros report_arrival_time) {
        if (send_times.size() != recv_times.size()) throw Error("send_times and recv_times differ in length");
        FeedbackReport r;
        for (std::size_t i = 0; i < recv_times.size(); ++i)
          r.entries.push_back(PacketFeedback{static_cast<int>(i + 1), recv_times[i]});
        r.report_send_time = report_send_time;
        r.report_arrival_time = report_arrival_time;
        return frame_delay(r, send_times);
      },
      py::arg("send_times"), py::arg("recv_times"), py::arg("report_send_time"), py::arg("report_arrival_time"),
      "Round trip of the first received packet less the receiver hold time, in microseconds.");

  m.def(
      "bdp",
      [](BitsPerSecond avg_bandwidth, Micros min_delay) { return bdp_estimate(avg_bandwidth, min_delay).bytes; },
      py::arg("avg_bandwidth"), py::arg("min_delay"));

  m.def(
      "ols_slope",
      [](const std::vector<double>& x, const std::vector<double>& y) -> std::optional<double> {
        const auto s = ols_slope(x, y);
        if (s.degenerate) return std::nullopt;
        return s.value;
      },
      py::arg("x"), py::arg("y"));

  m.def("congestion_threshold", &congestion_threshold, py::arg("avg_bandwidth"), py::arg("k_thresh") = 0.5,
        "Gradient threshold in microseconds per byte.");

  m.def(
      "detect",
      [](const std::vector<std::tuple<Bytes, Micros, Micros>>& samples, BitsPerSecond avg_bandwidth,
         double k_thresh) {
        SignalWindow w(std::numeric_limits<Micros>::max() / 4);
        for (const auto& [inflight, delay, time] : samples) w.add({inflight, delay, time});
        const auto v = detect(w, avg_bandwidth, k_thresh);
        py::dict out;
        out["congested"] = v.congested;
        out["gradient"] = v.gradient;
        out["threshold"] = v.threshold_used;
        out["cold"] = v.cold;
        return out;
      },
      py::arg("samples"), py::arg("avg_bandwidth"), py::arg("k_thresh") = 0.5,
      "samples: (inflight_bytes, delay_us, time_us) tuples.");

  m.def(
      "update_gamma",
      [](double gamma, bool congested, double decay, double floor) {
        DetectorConfig cfg;
        cfg.gamma_decay = decay;
        cfg.gamma_floor = floor;
        CongestionVerdict v;
        v.congested = congested;
        return update_gamma(GammaState{gamma, 0}, v, 0, cfg).gamma;
      },
      py::arg("gamma"), py::arg("congested"), py::arg("decay") = 0.95, py::arg("floor") = 0.25);

  py::class_<BurstConfig>(m, "BurstConfig")
      .def(py::init<>())
      .def_readwrite("interval_width", &BurstConfig::interval_width)
      .def_readwrite("m_init", &BurstConfig::m_init)
      .def_readwrite("m_min", &BurstConfig::m_min)
      .def_readwrite("m_max", &BurstConfig::m_max)
      .def_readwrite("step", &BurstConfig::step)
      .def_readwrite("update_period", &BurstConfig::update_period)
      .def_readwrite("loss_margin", &BurstConfig::loss_margin)
      .def_readwrite("recover_epochs", &BurstConfig::recover_epochs)
      .def_readwrite("min_interval_samples", &BurstConfig::min_interval_samples);

  py::class_<IntervalLossStats>(m, "IntervalLossStats")
      .def(py::init<Bytes, Micros>(), py::arg("interval_width") = 2048, py::arg("epoch_start") = 0)
      .def("record", &IntervalLossStats::record, py::arg("byte_offset"), py::arg("lost"))
      .def("loss_rate", &IntervalLossStats::loss_rate, py::arg("interval"))
      .def("leading_loss_rate", &IntervalLossStats::leading_loss_rate)
      .def("physical_loss_rate", [](const IntervalLossStats& s) { return physical_loss_rate(s); })
      .def("sent", &IntervalLossStats::sent)
      .def("lost", &IntervalLossStats::lost);

  py::class_<BurstLengthState>(m, "BurstLengthState")
      .def(py::init([](const BurstConfig& c, Micros now) { return BurstLengthState::initial(c, now); }),
           py::arg("config") = BurstConfig{}, py::arg("now") = 0)
      .def_readonly("m", &BurstLengthState::m)
      .def_readonly("fallback_active", &BurstLengthState::fallback_active)
      .def_readonly("clean_epochs", &BurstLengthState::clean_epochs)
      .def_readonly("last_update", &BurstLengthState::last_update)
      .def_property_readonly("max_burst", [](const BurstLengthState& s) { return max_burst(s); });

  m.def("update_m", &update_M, py::arg("state"), py::arg("stats"), py::arg("now"),
        py::arg("config") = BurstConfig{}, "One epoch evaluation; resets stats when the epoch ends.");

  m.def("analytic_rtt", &analytic_rtt, py::arg("inflight"), py::arg("bandwidth"), py::arg("rtprop"),
        py::arg("bdp"));

  m.def(
      "parse_trace",
      [](const std::string& text) {
        std::vector<std::pair<Micros, BitsPerSecond>> out;
        const auto schedule = RateSchedule::parse_trace(text);
        for (const auto& s : schedule.steps()) out.emplace_back(s.start, s.rate);
        return out;
      },
      py::arg("text"), "Parses `time_seconds rate_kbps` lines into (start_us, bit/s) steps.");

  m.def(
      "run_scenario",
      [](const std::string& path, std::map<std::string, std::string> overrides, std::optional<std::uint64_t> seed) {
        return run_to_dict(load_scenario(path, with_seed(std::move(overrides), seed)));
      },
      py::arg("path"), py::arg("overrides") = std::map<std::string, std::string>{}, py::arg("seed") = py::none());

  m.def(
      "run_scenario_text",
      [](const std::string& text, std::map<std::string, std::string> overrides, std::optional<std::uint64_t> seed,
         const std::string& base_dir) {
        return run_to_dict(parse_scenario(text, base_dir, with_seed(std::move(overrides), seed)));
      },
      py::arg("text"), py::arg("overrides") = std::map<std::string, std::string>{}, py::arg("seed") = py::none(),
      py::arg("base_dir") = ".");

  m.def(
      "signal_experiment",
      [](int traces, std::uint64_t seed) {
        SignalExperimentConfig cfg;
        cfg.traces = traces;
        cfg.seed = seed;
        SignalExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_signal_experiment(cfg);
        }
        py::dict out;
        out["gradient"] = r.mean_gradient();
        out["minrtt"] = r.mean_minrtt();
        out["time_gradient"] = r.mean_time_gradient();
        out["traces"] = r.traces.size();
        return out;
      },
      py::arg("traces") = 20, py::arg("seed") = 1, "Mean accuracy of each congestion signal.");

  m.def("fairness_index", [](const std::vector<double>& x) { return fairness_index(x); }, py::arg("throughputs"));
  m.def("percentile", &percentile, py::arg("values"), py::arg("p"));
}
