#include "camel/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace camel {
namespace {

namespace pt = boost::property_tree;
using Setter = std::function<void(const std::string&)>;
using Table = std::map<std::string, Setter>;

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  const auto e = s.find_last_not_of(" \t\r\"");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  const std::string t = trim(v);
  double out = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) throw Error("expected a number, got '" + v + "'");
  return out;
}

std::int64_t to_int(const std::string& v) {
  const std::string t = trim(v);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) throw Error("expected an integer, got '" + v + "'");
  return out;
}

// "t:value, t:value" pairs.
std::vector<std::pair<double, double>> to_pairs(const std::string& v) {
  std::vector<std::pair<double, double>> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw Error("expected 'time:value' pairs, got '" + item + "'");
    out.emplace_back(to_double(item.substr(0, colon)), to_double(item.substr(colon + 1)));
  }
  if (out.empty()) throw Error("empty schedule");
  return out;
}

Micros secs(const std::string& v) { return from_seconds(to_double(v)); }
Micros millis(const std::string& v) { return from_millis(to_double(v)); }

// Flow keys live in [flow] (defaults) and [flowN] (per flow).
Table flow_table(FlowConfig& f, bool& has_seed) {
  return {
      {"controller",
       [&](const std::string& v) {
         const std::string t = trim(v);
         if (t == "camel") f.kind = ControllerKind::kCamel;
         else if (t == "fallback") f.kind = ControllerKind::kFallbackOnly;
         else throw Error("expected camel or fallback, got '" + v + "'");
       }},
      {"start_s", [&](const std::string& v) { f.start = secs(v); }},
      {"stop_s", [&](const std::string& v) { f.stop = secs(v); }},
      {"fps", [&](const std::string& v) { f.encoder.fps = to_double(v); }},
      {"gop_length", [&](const std::string& v) { f.encoder.gop_length = static_cast<int>(to_int(v)); }},
      {"i_to_p_ratio", [&](const std::string& v) { f.encoder.i_to_p_ratio = to_double(v); }},
      {"etr", [&](const std::string& v) { f.encoder.etr = to_double(v); }},
      {"etr_schedule",
       [&](const std::string& v) {
         f.etr_schedule.clear();
         for (const auto& [t, e] : to_pairs(v)) f.etr_schedule.push_back(EtrChange{from_seconds(t), e});
       }},
      {"size_jitter_cv", [&](const std::string& v) { f.encoder.size_jitter_cv = to_double(v); }},
      {"min_frame_bytes", [&](const std::string& v) { f.encoder.min_frame_size = to_int(v); }},
      {"seed",
       [&](const std::string& v) {
         f.encoder.seed = static_cast<std::uint64_t>(to_int(v));
         has_seed = true;
       }},
  };
}

Table controller_table(ControllerConfig& c) {
  return {
      {"cwnd_min", [&](const std::string& v) { c.cwnd_min = to_int(v); }},
      {"cwnd_max", [&](const std::string& v) { c.cwnd_max = to_int(v); }},
      {"initial_cwnd", [&](const std::string& v) { c.initial_cwnd = to_int(v); }},
      {"initial_bitrate_kbps", [&](const std::string& v) { c.initial_bitrate = to_double(v) * 1000.0; }},
      {"queue_capacity", [&](const std::string& v) { c.queue_capacity = to_int(v); }},
      {"backlog_drain_ms", [&](const std::string& v) { c.backlog_drain_period = millis(v); }},
      {"loss_reorder_frames", [&](const std::string& v) { c.loss_reorder_frames = static_cast<int>(to_int(v)); }},
      {"fallback_overuse_us_per_s", [&](const std::string& v) { c.fallback_overuse_us_per_s = to_double(v); }},
      {"fallback_decrease", [&](const std::string& v) { c.fallback_decrease = to_double(v); }},
      {"fallback_additive_kbps_per_s",
       [&](const std::string& v) { c.fallback_additive_bps_per_s = to_double(v) * 1000.0; }},
      {"fallback_rate_min_kbps", [&](const std::string& v) { c.fallback_rate_min = to_double(v) * 1000.0; }},
      {"fallback_loss_high", [&](const std::string& v) { c.fallback_loss_high = to_double(v); }},
      {"fallback_loss_low", [&](const std::string& v) { c.fallback_loss_low = to_double(v); }},
      {"fallback_loss_window_ms", [&](const std::string& v) { c.fallback_loss_window = millis(v); }},
      {"fallback_decrease_holdoff_ms", [&](const std::string& v) { c.fallback_decrease_holdoff = millis(v); }},
  };
}

Table estimator_table(EstimatorConfig& e) {
  return {
      {"bandwidth_window_s", [&](const std::string& v) { e.bandwidth_window = secs(v); }},
      {"delay_window_s", [&](const std::string& v) { e.delay_window = secs(v); }},
      {"reorder",
       [&](const std::string& v) {
         const std::string t = trim(v);
         if (t == "lenient") e.reorder = ReorderPolicy::kLenient;
         else if (t == "strict") e.reorder = ReorderPolicy::kStrict;
         else throw Error("expected lenient or strict, got '" + v + "'");
       }},
  };
}

Table detector_table(DetectorConfig& d) {
  return {
      {"k_thresh", [&](const std::string& v) { d.k_thresh = to_double(v); }},
      {"gamma_floor", [&](const std::string& v) { d.gamma_floor = to_double(v); }},
      {"gamma_decay", [&](const std::string& v) { d.gamma_decay = to_double(v); }},
      {"window_s", [&](const std::string& v) { d.window = secs(v); }},
  };
}

Table burst_table(BurstConfig& b) {
  return {
      {"interval_width", [&](const std::string& v) { b.interval_width = to_int(v); }},
      {"m_init", [&](const std::string& v) { b.m_init = to_int(v); }},
      {"m_min", [&](const std::string& v) { b.m_min = to_int(v); }},
      {"m_max", [&](const std::string& v) { b.m_max = to_int(v); }},
      {"step", [&](const std::string& v) { b.step = to_int(v); }},
      {"update_period_s", [&](const std::string& v) { b.update_period = secs(v); }},
      {"loss_margin", [&](const std::string& v) { b.loss_margin = to_double(v); }},
      {"recover_epochs", [&](const std::string& v) { b.recover_epochs = static_cast<int>(to_int(v)); }},
      {"min_interval_samples", [&](const std::string& v) { b.min_interval_samples = static_cast<int>(to_int(v)); }},
  };
}

void apply(const Table& table, const pt::ptree& section, const std::string& name) {
  for (const auto& [key, node] : section) {
    const auto it = table.find(key);
    if (it == table.end()) throw Error(name + "." + key + ": unknown key");
    try {
      it->second(node.data());
    } catch (const Error& e) {
      throw Error(name + "." + key + ": " + e.what());
    }
  }
}

bool is_flow_section(const std::string& name, std::size_t& index) {
  if (name.rfind("flow", 0) != 0 || name.size() == 4) return false;
  const std::string digits = name.substr(4);
  if (!std::all_of(digits.begin(), digits.end(), [](unsigned char c) { return std::isdigit(c); })) return false;
  index = static_cast<std::size_t>(std::stoul(digits));
  return true;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::string& base_dir,
                              const std::vector<Override>& overrides) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error("scenario: line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [path, value] : overrides) {
    const auto dot = path.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == path.size()) {
      throw Error(path + ": override path must look like section.key");
    }
    tree.put(pt::ptree::path_type(path, '.'), value);
  }

  static const std::set<std::string> known = {"run",        "link",     "cross", "flow",      "estimator",
                                              "detector",   "burst",    "controller"};
  std::size_t flow_count = 1;
  for (const auto& [name, section] : tree) {
    std::size_t idx = 0;
    if (is_flow_section(name, idx)) {
      flow_count = std::max(flow_count, idx + 1);
    } else if (!known.contains(name)) {
      throw Error(name + ": unknown section");
    } else if (!section.data().empty() && section.empty()) {
      throw Error(name + ": key outside of a section");
    }
  }

  ScenarioConfig sc;
  sc.duration = -1;
  bool duration_set = false;

  Table run = {
      {"name", [&](const std::string& v) { sc.name = trim(v); }},
      {"duration_s",
       [&](const std::string& v) {
         sc.duration = secs(v);
         duration_set = true;
       }},
      {"seed", [&](const std::string& v) { sc.seed = static_cast<std::uint64_t>(to_int(v)); }},
      {"flows",
       [&](const std::string& v) {
         const auto n = to_int(v);
         if (n < 1) throw Error("must be >= 1");
         flow_count = std::max(flow_count, static_cast<std::size_t>(n));
       }},
      {"snapshot_interval_ms", [&](const std::string& v) { sc.snapshot_interval = millis(v); }},
      {"receiver_timeout_ms", [&](const std::string& v) { sc.receiver_timeout = millis(v); }},
      {"metrics_start_s", [&](const std::string& v) { sc.metrics_start = secs(v); }},
      {"metrics_end_s", [&](const std::string& v) { sc.metrics_end = secs(v); }},
  };
  if (const auto s = tree.get_child_optional("run")) apply(run, *s, "run");
  if (!duration_set) throw Error("run.duration_s: required");
  if (sc.duration <= 0) throw Error("run.duration_s: must be positive");

  bool rate_set = false;
  Table link = {
      {"rate_kbps",
       [&](const std::string& v) {
         sc.link.rate = RateSchedule(to_double(v) * 1000.0);
         rate_set = true;
       }},
      {"rate_schedule",
       [&](const std::string& v) {
         std::vector<RateSchedule::Step> steps;
         for (const auto& [t, kbps] : to_pairs(v)) steps.push_back({from_seconds(t), kbps * 1000.0});
         sc.link.rate = RateSchedule(std::move(steps));
         rate_set = true;
       }},
      {"trace",
       [&](const std::string& v) {
         std::filesystem::path p = trim(v);
         if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
         sc.link.rate = RateSchedule::from_trace_file(p.string());
         rate_set = true;
       }},
      {"rtprop_ms", [&](const std::string& v) { sc.link.rtprop = millis(v); }},
      {"buffer_bytes", [&](const std::string& v) { sc.link.buffer_capacity = to_int(v); }},
      {"buffer_kb", [&](const std::string& v) { sc.link.buffer_capacity = std::llround(to_double(v) * 1024.0); }},
      {"loss", [&](const std::string& v) { sc.link.random_loss_p = to_double(v); }},
      {"jitter_sigma_ms", [&](const std::string& v) { sc.link.jitter.sigma = millis(v); }},
      {"jitter_cap_ms", [&](const std::string& v) { sc.link.jitter.cap = millis(v); }},
      {"mtu", [&](const std::string& v) { sc.link.mtu = to_int(v); }},
  };
  if (const auto s = tree.get_child_optional("link")) apply(link, *s, "link");
  if (!rate_set) throw Error("link.rate_kbps: one of rate_kbps, rate_schedule or trace is required");
  sc.link.seed = sc.seed;

  Table cross = {
      {"rate_kbps", [&](const std::string& v) { sc.cross.rate = to_double(v) * 1000.0; }},
      {"start_s", [&](const std::string& v) { sc.cross.start = secs(v); }},
      {"stop_s", [&](const std::string& v) { sc.cross.stop = secs(v); }},
      {"packet_bytes", [&](const std::string& v) { sc.cross.packet_size = to_int(v); }},
  };
  if (const auto s = tree.get_child_optional("cross")) apply(cross, *s, "cross");

  // Shared controller parameters, then per-flow overrides on top.
  ControllerConfig ctl;
  ctl.mtu = sc.link.mtu;
  if (const auto s = tree.get_child_optional("controller")) apply(controller_table(ctl), *s, "controller");
  if (const auto s = tree.get_child_optional("estimator")) apply(estimator_table(ctl.estimator), *s, "estimator");
  if (const auto s = tree.get_child_optional("detector")) apply(detector_table(ctl.detector), *s, "detector");
  if (const auto s = tree.get_child_optional("burst")) apply(burst_table(ctl.burst), *s, "burst");

  FlowConfig base;
  base.controller = ctl;
  base.encoder.mtu = sc.link.mtu;
  bool base_seed = false;
  if (const auto s = tree.get_child_optional("flow")) apply(flow_table(base, base_seed), *s, "flow");

  for (std::size_t i = 0; i < flow_count; ++i) {
    FlowConfig f = base;
    bool own_seed = false;
    const std::string name = "flow" + std::to_string(i);
    if (const auto s = tree.get_child_optional(name)) apply(flow_table(f, own_seed), *s, name);
    if (!own_seed) f.encoder.seed = base_seed ? base.encoder.seed + i : sc.seed * 1000 + i + 1;
    sc.flows.push_back(std::move(f));
  }
  sc.validate();
  return sc;
}

ScenarioConfig load_scenario(const std::string& path, const std::vector<Override>& overrides) {
  std::ifstream f(path);
  if (!f) throw Error(path + ": cannot open scenario file");
  std::stringstream buf;
  buf << f.rdbuf();
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_scenario(buf.str(), dir.empty() ? "." : dir.string(), overrides);
}

}  // namespace camel
