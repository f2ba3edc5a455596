// camel: run scenarios, the signal-accuracy study and parameter sweeps.
//
// Exit codes: 0 success, 2 usage/parse/validation error, 3 invariant breach.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "camel/experiments.hpp"
#include "camel/metrics.hpp"
#include "camel/scenario.hpp"

namespace fs = std::filesystem;
using namespace camel;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kInvariant = 3;

struct UsageError : Error {
  using Error::Error;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("camel");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("CAMEL_LOG");
  const auto level = spdlog::level::from_str(env ? env : "warn");
  // from_str maps unknown names to "off"; keep warnings visible instead.
  spdlog::set_level(env && level == spdlog::level::off && std::string(env) != "off" ? spdlog::level::warn : level);
}

// Writes next to the destination and renames, so readers never see a
// partially written file.
void write_atomic(const fs::path& dest, const std::string& content) {
  const fs::path tmp = dest.parent_path() / ("." + dest.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, dest);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
}

std::vector<Override> seed_override(const std::optional<std::uint64_t>& seed) {
  if (!seed) return {};
  return {{"run.seed", std::to_string(*seed)}};
}

ScenarioConfig load_or_usage(const std::string& path, const std::vector<Override>& overrides) {
  try {
    return load_scenario(path, overrides);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

constexpr std::size_t kMaxReported = 10;

void report_violations(const std::vector<std::string>& violations, const std::string& context = "") {
  for (std::size_t i = 0; i < std::min(kMaxReported, violations.size()); ++i) {
    std::cerr << "invariant" << context << ": " << violations[i] << "\n";
  }
  if (violations.size() > kMaxReported) std::cerr << "... " << violations.size() - kMaxReported << " more\n";
}

int cmd_run(const std::string& scenario_path, const std::string& out_dir, std::optional<std::uint64_t> seed) {
  const ScenarioConfig sc = load_or_usage(scenario_path, seed_override(seed));
  spdlog::info("running {} for {:.1f} s with {} flow(s)", sc.name, to_seconds(sc.duration), sc.flows.size());
  const RunLog log = run(sc);
  const MetricsReport report = compute_metrics(log, sc);
  if (!log.invariant_violations.empty()) {
    report_violations(log.invariant_violations);
    std::cerr << "invariant breach: " << log.invariant_violations.size() << " violation(s)\n";
    return kInvariant;
  }
  ensure_dir(out_dir);
  std::ostringstream csv;
  write_runlog_csv(log, csv);
  write_atomic(fs::path(out_dir) / "runlog.csv", csv.str());
  write_atomic(fs::path(out_dir) / "metrics.json", report.to_json());
  std::cout << report.summary() << "\n";
  return kOk;
}

int cmd_signal(const std::string& out_dir, SignalExperimentConfig config) {
  const auto result = run_signal_experiment(config);
  ensure_dir(out_dir);
  std::ostringstream csv;
  result.write_csv(csv);
  write_atomic(fs::path(out_dir) / "signal_accuracy.csv", csv.str());
  std::cout << fmt::format("signal accuracy over {} traces: inflight_gradient={:.4f} minrtt={:.4f} time_gradient={:.4f}\n",
                           result.traces.size(), result.mean_gradient(), result.mean_minrtt(),
                           result.mean_time_gradient());
  if (result.mean_gradient() < result.mean_minrtt() || result.mean_gradient() < result.mean_time_gradient()) {
    std::cerr << "inflight gradient is not the most accurate signal\n";
    return kInvariant;
  }
  return kOk;
}

std::vector<std::string> split_values(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

int cmd_sweep(const std::string& param, const std::string& values_text, const std::string& scenario_path,
              const std::string& out_dir, std::optional<std::uint64_t> seed, unsigned jobs) {
  const auto values = split_values(values_text);
  if (values.empty()) throw UsageError("--values: empty value list");
  std::vector<ScenarioConfig> configs;
  for (const auto& v : values) {
    auto overrides = seed_override(seed);
    overrides.emplace_back(param, v);
    configs.push_back(load_or_usage(scenario_path, overrides));
  }

  struct Row {
    MetricsReport report;
    std::vector<std::string> violations;
  };
  std::vector<Row> rows(configs.size());
  const unsigned workers = std::max(1u, jobs);
  for (std::size_t begin = 0; begin < configs.size(); begin += workers) {
    std::vector<std::future<Row>> batch;
    for (std::size_t i = begin; i < std::min(configs.size(), begin + workers); ++i) {
      batch.push_back(std::async(std::launch::async, [&sc = configs[i]] {
        const RunLog log = run(sc);
        return Row{compute_metrics(log, sc), log.invariant_violations};
      }));
    }
    for (std::size_t k = 0; k < batch.size(); ++k) rows[begin + k] = batch[k].get();
  }

  std::size_t breaches = 0;
  std::ostringstream csv;
  csv << "# schema=1\n";
  csv << "param,value,media_bitrate,frame_delay_p50,frame_delay_p95,stalling_ratio,bw_estimation_accuracy,"
         "steady_state_m,fallback_seen,fairness_index,invariant_violations\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    report_violations(rows[i].violations, fmt::format(" ({}={})", param, values[i]));
    breaches += rows[i].violations.size();
    const auto kv = rows[i].report.flatten();
    auto get = [&](const char* key) -> std::string {
      const auto it = kv.find(key);
      return it == kv.end() ? std::string() : fmt::format("{:.6g}", it->second);
    };
    csv << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", param, values[i], get("media_bitrate"),
                       get("frame_delay_p50"), get("frame_delay_p95"), get("stalling_ratio"),
                       get("bw_estimation_accuracy"), get("steady_state_m"), get("fallback_seen"),
                       get("fairness_index"), get("invariant_violations"));
  }
  if (breaches > 0) {
    std::cerr << "invariant breach: " << breaches << " violation(s)\n";
    return kInvariant;
  }
  if (out_dir.empty()) {
    std::cout << csv.str();
  } else {
    ensure_dir(out_dir);
    write_atomic(fs::path(out_dir) / "sweep.csv", csv.str());
    std::cout << fmt::format("sweep of {} over {} value(s) written to {}\n", param, values.size(),
                             (fs::path(out_dir) / "sweep.csv").string());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"camel: frame-level congestion control simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  auto* run_cmd = app.add_subcommand("run", "Simulate a scenario and write runlog.csv and metrics.json");
  run_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
  run_cmd->add_option("--out", out_dir, "Output directory")->required();
  run_cmd->add_option("--seed", seed, "Override run.seed");

  SignalExperimentConfig sig;
  double bw_kbps = 2000.0;
  double rtprop_ms = 25.0;
  std::optional<Bytes> bdp;
  std::string sig_out;
  auto* sig_cmd = app.add_subcommand("signal-exp", "Compare congestion signals on synthetic traces");
  sig_cmd->add_option("--out", sig_out, "Output directory")->required();
  sig_cmd->add_option("--traces", sig.traces, "Number of seeded traces")->capture_default_str()->check(CLI::PositiveNumber);
  sig_cmd->add_option("--seed", sig.seed, "First trace seed")->capture_default_str();
  sig_cmd->add_option("--bandwidth-kbps", bw_kbps, "Bottleneck rate")->capture_default_str()->check(CLI::PositiveNumber);
  sig_cmd->add_option("--rtprop-ms", rtprop_ms, "Propagation round trip")->capture_default_str()->check(CLI::PositiveNumber);
  sig_cmd->add_option("--bdp-bytes", bdp, "Pipe size (default bandwidth x rtprop)")->check(CLI::PositiveNumber);
  sig_cmd->add_option("--samples", sig.walk.samples, "Samples per trace")->capture_default_str()->check(CLI::PositiveNumber);
  sig_cmd->add_option("--lower-bdp", sig.walk.lower_bdp, "Walk lower bound in BDPs")->capture_default_str();
  sig_cmd->add_option("--upper-bdp", sig.walk.upper_bdp, "Walk upper bound in BDPs")->capture_default_str();

  std::string param;
  std::string values;
  std::string sweep_scenario;
  std::string sweep_out;
  std::optional<std::uint64_t> sweep_seed;
  unsigned jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a scenario once per parameter value");
  sweep_cmd->add_option("--param", param, "Parameter path, section.key")->required();
  sweep_cmd->add_option("--values", values, "Comma-separated values")->required();
  sweep_cmd->add_option("scenario", sweep_scenario, "Scenario file")->required();
  sweep_cmd->add_option("--out", sweep_out, "Output directory (default: CSV on stdout)");
  sweep_cmd->add_option("--seed", sweep_seed, "Override run.seed");
  sweep_cmd->add_option("--jobs", jobs, "Parallel scenarios")->capture_default_str()->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(scenario_path, out_dir, seed);
    if (*sig_cmd) {
      sig.params.bandwidth = bw_kbps * 1000.0;
      sig.params.rtprop = from_millis(rtprop_ms);
      sig.params.bdp = bdp.value_or(static_cast<Bytes>(sig.params.bandwidth * to_seconds(sig.params.rtprop) / 8.0));
      return cmd_signal(sig_out, sig);
    }
    if (*sweep_cmd) return cmd_sweep(param, values, sweep_scenario, sweep_out, sweep_seed, jobs);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}
