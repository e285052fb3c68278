#include "latentguard/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

namespace latentguard {

namespace fs = std::filesystem;

void cmd_simulate(const ExperimentConfig& cfg, std::size_t n_events,
                  const fs::path& out) {
  std::ofstream file(out, std::ios::binary);
  if (!file) throw IoError("cannot open " + out.string() + " for writing");
  Market market(cfg.market);
  std::size_t written = 0;
  while (written < n_events) {
    const std::size_t n = std::min(cfg.chunk_size, n_events - written);
    for (const auto& e : market.chunk(n)) write_event_line(file, e);
    written += n;
  }
  if (!file) throw IoError("write failed: " + out.string());
}

ExperimentResult cmd_experiment(const ExperimentConfig& cfg,
                                const fs::path& out_dir,
                                const std::optional<fs::path>& baseline_series,
                                std::ostream* log) {
  std::vector<double> baseline_ll;
  if (baseline_series) {
    for (const auto& row : series_from_csv(read_text_file(*baseline_series))) {
      baseline_ll.push_back(row.best_logloss);
    }
  }
  std::error_code ec;
  fs::create_directories(out_dir / "snapshots", ec);
  if (ec) {
    throw IoError("cannot create " + (out_dir / "snapshots").string() + ": " +
                  ec.message());
  }

  Market market(cfg.market);
  const std::vector<InstanceSpec> specs = cfg.initial_specs();
  Json reports = Json::array();
  auto on_cycle = [&](const CycleReport& report, const InstanceState& best) {
    reports.push_back(cycle_report_to_json(report));
    char name[32];
    std::snprintf(name, sizeof(name), "cycle_%04d.json", report.cycle_index);
    save_snapshot(out_dir / "snapshots" / name, best);
    if (log != nullptr) {
      *log << "cycle " << report.cycle_index << ": retained "
           << report.retained_fraction;
      if (!report.best_instance_id) *log << " (all diverged, warm model kept)";
      *log << "\n";
    }
  };
  ExperimentResult result =
      run_experiment(market, cfg.settings(), specs, on_cycle);

  write_text_file(out_dir / "cycle_reports.json", reports.dump(1) + "\n");
  write_text_file(out_dir / "series.csv",
                  series_to_csv(result.series, baseline_ll));
  write_text_file(out_dir / "scatter.csv",
                  scatter_to_csv(norm_vs_updates_scatter(result.final_state.model)));
  if (result.first_diverged) {
    write_text_file(
        out_dir / "diverged_scatter.csv",
        scatter_to_csv(norm_vs_updates_scatter(result.first_diverged->model)));
  }
  return result;
}

RhoSearchResult cmd_rho_search(const ExperimentConfig& cfg, int k_max) {
  Market market(cfg.market);
  const std::vector<TrainingEvent> chunk = market.chunk(cfg.chunk_size);
  TrainingSettings training = cfg.settings().training;
  training.init_seed = mix_seed(cfg.seed, 0);
  const TrainingMode mode =
      dual_mode_of(cfg.mode) ? cfg.mode : TrainingMode::kEntropic;
  return rho_search(InstanceState(cfg.feature_config()), chunk,
                    cfg.hyperparams, training, k_max, mode);
}

LiftReport cmd_abtest(const fs::path& log_new, const fs::path& log_base,
                      LiftMetric metric, std::size_t n_samples,
                      std::uint64_t seed) {
  const ExperimentLog a = experiment_log_from_events(read_event_log(log_new));
  const ExperimentLog b = experiment_log_from_events(read_event_log(log_base));
  std::mt19937_64 rng(seed);
  return mc_lift(a, b, metric, n_samples, rng);
}

Json cmd_snapshot_inspect(const fs::path& snapshot) {
  const InstanceState state = load_snapshot(snapshot);
  const FeatureConfig& cfg = state.model.config;
  std::size_t user = 0;
  for (const auto& [id, lv] : state.model.vectors) user += id.is_user() ? 1 : 0;
  Json j = {{"format_version", kSnapshotFormatVersion},
            {"N", cfg.full_length()},
            {"d", cfg.user_length()},
            {"bias", state.model.bias},
            {"vectors", state.model.vectors.size()},
            {"user_vectors", user},
            {"ad_vectors", state.model.vectors.size() - user},
            {"norms", norm_stats_to_json(norm_stats(state.model))},
            {"rho0", rho_heuristic(cfg.full_length())}};
  j["dual"] = state.dual ? Json{{"mode", to_string(state.dual->mode)},
                                {"rho", state.dual->rho}}
                         : Json(nullptr);
  return j;
}

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"latentguard: online factorization training with norm control"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::size_t n_events = 0;
  auto* simulate = app.add_subcommand("simulate", "write a synthetic event log");
  simulate->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  simulate->add_option("--events", n_events, "number of events")->required();
  simulate->add_option("--out", out_path, "output file (JSON lines)")
      ->required();

  std::string exp_out;
  std::string baseline;
  auto* experiment =
      app.add_subcommand("experiment", "run the incremental training loop");
  experiment->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  experiment->add_option("--out", exp_out,
                         "output directory (default: config output_dir)");
  experiment->add_option("--baseline-series", baseline,
                         "series.csv of a baseline run, adds a LogLoss lift column");

  int k_max = 10;
  auto* rho = app.add_subcommand("rho-search", "search rho = k * rho0");
  rho->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  rho->add_option("--kmax", k_max, "largest multiplier")->check(CLI::Range(1, 1000));
  rho->add_option("--out", out_path, "also write the result to this file");

  std::string log_a;
  std::string log_b;
  std::string metric = "ctr";
  std::size_t samples = kDefaultMcSamples;
  std::uint64_t seed = 1;
  auto* abtest = app.add_subcommand("abtest", "Bayesian A/B lift of two event logs");
  abtest->add_option("log_new", log_a, "event log of the new model")->required();
  abtest->add_option("log_base", log_b, "event log of the baseline")->required();
  abtest->add_option("--metric", metric, "ctr or cpm")
      ->check(CLI::IsMember({"ctr", "cpm"}));
  abtest->add_option("--samples", samples, "Monte Carlo samples");
  abtest->add_option("--seed", seed, "random seed");
  abtest->add_option("--out", out_path, "also write the report to this file");

  std::string snapshot_path;
  auto* inspect =
      app.add_subcommand("snapshot-inspect", "summarize a model snapshot");
  inspect->add_option("snapshot", snapshot_path, "snapshot file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  auto emit = [&](const Json& j) {
    const std::string text = j.dump(1) + "\n";
    out << text;
    if (!out_path.empty()) write_text_file(out_path, text);
  };

  try {
    if (simulate->parsed()) {
      cmd_simulate(load_config(config_path), n_events, out_path);
    } else if (experiment->parsed()) {
      const ExperimentConfig cfg = load_config(config_path);
      const fs::path dir = exp_out.empty() ? fs::path(cfg.output_dir) : fs::path(exp_out);
      std::optional<fs::path> base;
      if (!baseline.empty()) base = baseline;
      const ExperimentResult r = cmd_experiment(cfg, dir, base, &err);
      out << "wrote " << r.series.size() << " cycles to " << dir.string()
          << "\n";
    } else if (rho->parsed()) {
      emit(rho_search_to_json(cmd_rho_search(load_config(config_path), k_max)));
    } else if (abtest->parsed()) {
      emit(lift_report_to_json(cmd_abtest(
          log_a, log_b, lift_metric_from_string(metric), samples, seed)));
    } else if (inspect->parsed()) {
      emit(cmd_snapshot_inspect(snapshot_path));
    }
  } catch (const SearchFailedError& e) {
    err << "error: search failed: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    err << "error: invalid config: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace latentguard
