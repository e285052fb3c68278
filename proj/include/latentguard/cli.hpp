#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "latentguard/serialization.hpp"

namespace latentguard {

// Writes `n_events` simulated events as line-delimited JSON, one market cycle
// per `cfg.chunk_size` events.
void cmd_simulate(const ExperimentConfig& cfg, std::size_t n_events,
                  const std::filesystem::path& out);

// Runs the configured experiment and writes cycle_reports.json, series.csv,
// scatter.csv, diverged_scatter.csv (when any instance diverged) and one
// snapshot per cycle under snapshots/.
ExperimentResult cmd_experiment(
    const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
    const std::optional<std::filesystem::path>& baseline_series = {},
    std::ostream* log = nullptr);

RhoSearchResult cmd_rho_search(const ExperimentConfig& cfg, int k_max = 10);

LiftReport cmd_abtest(const std::filesystem::path& log_new,
                      const std::filesystem::path& log_base, LiftMetric metric,
                      std::size_t n_samples, std::uint64_t seed);

Json cmd_snapshot_inspect(const std::filesystem::path& snapshot);

// Entry point of the command-line tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace latentguard
