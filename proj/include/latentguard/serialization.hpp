#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentguard/eval_abtest.hpp"
#include "latentguard/orchestrator.hpp"
#include "latentguard/rho_search.hpp"
#include "latentguard/stream_sim.hpp"

namespace latentguard {

using Json = nlohmann::json;

inline constexpr const char* kEventSchemaVersion = "v1";
inline constexpr const char* kSnapshotFormatVersion = "1";

// ---- event logs: one JSON object per line -------------------------------

Json event_to_json(const TrainingEvent& event);
TrainingEvent event_from_json(const Json& j);

void write_event_line(std::ostream& out, const TrainingEvent& event);
void write_event_log(const std::filesystem::path& path,
                     std::span<const TrainingEvent> events);
std::vector<TrainingEvent> read_event_log(const std::filesystem::path& path);

// ---- model snapshots ----------------------------------------------------

Json snapshot_to_json(const InstanceState& state);
InstanceState snapshot_from_json(const Json& j);
std::string snapshot_to_string(const InstanceState& state);
void save_snapshot(const std::filesystem::path& path, const InstanceState& state);
InstanceState load_snapshot(const std::filesystem::path& path);

// ---- experiment configuration -------------------------------------------

struct TuningConfig {
  TuningStrategy strategy = TuningStrategy::kGrid;
  double eta0_min = 0.01;
  double eta0_max = 10.0;
  std::vector<double> factors = {0.5, 1.0, 2.0};
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  MarketConfig market;
  LifecycleConfig lifecycle;
  int instances = 16;
  HyperParams hyperparams;
  TrainingMode mode = TrainingMode::kBaseline;
  double tau = kDefaultTau;
  int n_cycles = 50;
  std::size_t chunk_size = 10000;
  TuningConfig tuning;
  std::string output_dir = "out";

  // Throws ConfigError naming the offending field.
  void validate() const;
  FeatureConfig feature_config() const { return market.feature_config(); }
  ExperimentSettings settings() const;
  std::vector<InstanceSpec> initial_specs() const;
};

// Strict: unknown keys and ill-typed values raise ConfigError with the field
// path. Missing keys keep their defaults.
ExperimentConfig config_from_json(const Json& j);
Json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

// ---- reports ------------------------------------------------------------

Json hyperparams_to_json(const HyperParams& hp);
Json norm_stats_to_json(const NormStats& stats);
Json cycle_report_to_json(const CycleReport& report);
Json rho_search_to_json(const RhoSearchResult& result);
Json lift_report_to_json(const LiftReport& report);

// Locale-independent shortest round-trip formatting; "nan" for NaN.
std::string format_double(double v);

// Columns: cycle, retained_fraction, max_inf_norm, max_msqr,
// top10_avg_inf_norm, best_logloss and, when `baseline_logloss` is nonempty,
// logloss_lift_vs_baseline.
std::string series_to_csv(std::span<const SeriesRow> series,
                          std::span<const double> baseline_logloss = {});
std::vector<SeriesRow> series_from_csv(const std::string& text);

std::string scatter_to_csv(std::span<const ScatterPoint> points);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& text);

}  // namespace latentguard
