// Command-line front end.
//
//   run       execute an experiment from a config file (flags override file)
//   validate  check a config and print the effective settings
//   sweep     run several strategies under one shared environment
//   selftest  run the built-in property checks
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eafo/config.hpp"
#include "eafo/metrics_io.hpp"
#include "eafo/selftest.hpp"
#include "eafo/simulator.hpp"

namespace eafo {

namespace cli_detail {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<int> rounds;
  std::optional<double> time_budget;
  std::optional<double> uplink_bps;
  std::optional<double> downlink_bps;
  std::optional<std::string> out;
  std::optional<std::string> format;
};

inline void add_common_flags(CLI::App* cmd, Overrides& ov, bool config_required) {
  auto* cfg = cmd->add_option("--config", ov.config_path, "experiment config file");
  if (config_required) cfg->required();
  cmd->add_option("--seed", ov.seed, "override experiment seed");
  cmd->add_option("--strategy", ov.strategy,
                  "override strategy kind (eafo|fixed_both|adaptive_i|fixed_eps|fedavg)");
  cmd->add_option("--rounds", ov.rounds, "override round cap");
  cmd->add_option("--time-budget", ov.time_budget, "override simulated time budget [s]");
  cmd->add_option("--uplink-bps", ov.uplink_bps, "override uplink rate [bit/s]");
  cmd->add_option("--downlink-bps", ov.downlink_bps, "override downlink rate [bit/s]");
  cmd->add_option("--out", ov.out, "override output path");
  cmd->add_option("--format", ov.format, "override output format (csv|jsonl)");
}

inline ExperimentConfig effective_config(const Overrides& ov) {
  ExperimentConfig c = load_config_file(ov.config_path);
  if (ov.seed) c.seed = *ov.seed;
  if (ov.strategy) c.strategy_kind = *ov.strategy;
  if (ov.rounds) c.rounds = *ov.rounds;
  if (ov.time_budget) c.time_budget_s = *ov.time_budget;
  if (ov.uplink_bps) c.uplink_bps = *ov.uplink_bps;
  if (ov.downlink_bps) c.downlink_bps = *ov.downlink_bps;
  if (ov.out) c.output_path = *ov.out;
  if (ov.format) c.output_format = *ov.format;
  return c;
}

inline int run_one(const ExperimentConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  auto data = load_datasets(cfg);
  MetricsWriter writer(cfg.output_path, cfg.output_format, serialize_config(cfg),
                       cfg.strategy_kind, config_hash(cfg));
  const auto rounds =
      run_experiment(to_sim_settings(cfg), std::move(data.train), std::move(data.eval), &writer);
  if (rounds.empty()) {
    log << cfg.strategy_kind << ": 0 rounds run\n";
  } else {
    const auto& last = rounds.back();
    log << cfg.strategy_kind << ": " << rounds.size() << " rounds, "
        << "sim time " << last.cumulative_time_s << " s, "
        << "final accuracy " << last.eval_accuracy << ", "
        << "final loss " << last.global_loss << " -> " << cfg.output_path << "\n";
  }
  return 0;
}

}  // namespace cli_detail

inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"communication-constrained federated learning simulator"};
  app.require_subcommand(1);

  cli_detail::Overrides run_ov, val_ov, sweep_ov;
  std::string sweep_strategies = "eafo,fixed_both,fixed_eps";
  std::uint64_t selftest_seed = 20240817;

  auto* run_cmd = app.add_subcommand("run", "execute an experiment");
  cli_detail::add_common_flags(run_cmd, run_ov, true);

  auto* val_cmd = app.add_subcommand("validate", "validate a config and print it");
  cli_detail::add_common_flags(val_cmd, val_ov, true);

  auto* sweep_cmd =
      app.add_subcommand("sweep", "run a strategy list under one shared environment");
  cli_detail::add_common_flags(sweep_cmd, sweep_ov, true);
  sweep_cmd->add_option("--strategies", sweep_strategies, "comma-separated strategy kinds");

  auto* self_cmd = app.add_subcommand("selftest", "run built-in property checks");
  self_cmd->add_option("--seed", selftest_seed, "seed for randomized checks");

  std::string export_in, export_out;
  auto* export_cmd =
      app.add_subcommand("export", "reshape a metrics file to plot-ready long format");
  export_cmd->add_option("--in", export_in, "metrics file (csv or jsonl)")->required();
  export_cmd->add_option("--out", export_out, "long-format csv destination")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) {
      return cli_detail::run_one(cli_detail::effective_config(run_ov), std::cout);
    }
    if (val_cmd->parsed()) {
      const auto cfg = cli_detail::effective_config(val_ov);
      validate_config(cfg);
      std::cout << "# effective configuration (config_hash = " << config_hash(cfg)
                << ")\n"
                << serialize_config(cfg);
      return 0;
    }
    if (sweep_cmd->parsed()) {
      auto base = cli_detail::effective_config(sweep_ov);
      const std::string out_dir = base.output_path;
      std::filesystem::create_directories(out_dir);
      const auto kinds = detail::parse_list<std::string>(
          sweep_strategies, [](const std::string& s) { return s; });
      if (kinds.empty()) throw config_error("sweep: empty strategy list");
      for (const auto& kind : kinds) {
        ExperimentConfig cfg = base;
        cfg.strategy_kind = kind;
        const std::string ext = (cfg.output_format == "csv") ? "csv" : "jsonl";
        cfg.output_path =
            (std::filesystem::path(out_dir) / (config_hash(cfg) + "_" + kind + "." + ext))
                .string();
        cli_detail::run_one(cfg, std::cout);
      }
      return 0;
    }
    if (export_cmd->parsed()) {
      const auto records = read_metrics_file(export_in);
      std::ofstream out(export_out, std::ios::trunc);
      if (!out) throw std::runtime_error("export: cannot open output file: " + export_out);
      write_long_format(records, out);
      if (!out.flush()) throw std::runtime_error("export: write failure");
      std::cout << records.size() << " rounds -> " << export_out << "\n";
      return 0;
    }
    if (self_cmd->parsed()) {
      const auto results = selftest::run_all(selftest_seed);
      bool all = true;
      for (const auto& r : results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.detail
                  << ")\n";
        all = all && r.pass;
      }
      return all ? 0 : 2;
    }
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const parse_error& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace eafo
