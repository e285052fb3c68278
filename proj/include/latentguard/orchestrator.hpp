#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "latentguard/divergence_monitor.hpp"
#include "latentguard/dual_controller.hpp"
#include "latentguard/errors.hpp"
#include "latentguard/stream_sim.hpp"
#include "latentguard/trainer.hpp"

namespace latentguard {

// SplitMix64 finalizer; derives independent seeds from (seed, stream).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct InstanceSpec {
  int instance_id = 0;
  HyperParams hp;
  TrainingMode mode = TrainingMode::kBaseline;

  friend bool operator==(const InstanceSpec&, const InstanceSpec&) = default;
};

// Everything one training instance owns.
struct InstanceState {
  explicit InstanceState(FeatureConfig cfg) : model(std::move(cfg)) {}
  explicit InstanceState(ModelParams m) : model(std::move(m)) {}

  ModelParams model;
  AdaGradState adagrad;
  std::optional<DualState> dual;
};

struct TrainingSettings {
  LifecycleConfig lifecycle;
  double tau = kDefaultTau;
  // Seeds the initialization of vectors created during the pass. Shared by
  // all instances of a cycle so identical specs give identical models.
  std::uint64_t init_seed = 0;
  // Keep every pre-update pCTR in InstanceResult::trace.
  bool record_trace = false;
};

struct InstanceResult {
  InstanceState state;
  // Mean progressive-validation log loss over the events trained.
  double logloss = 0.0;
  std::size_t events_trained = 0;
  bool diverged = false;
  std::optional<std::size_t> abort_position;
  NormStats norms;
  std::vector<double> trace;
};

// Deep-copies `warm`, sets up the spec's regularization regime and trains one
// pass over `chunk`, stopping at the first event after which some touched
// vector reaches ‖v‖∞ >= tau.
InstanceResult run_instance(const InstanceState& warm,
                            std::span<const TrainingEvent> chunk,
                            const InstanceSpec& spec,
                            const TrainingSettings& settings);

struct InstanceReport {
  int instance_id = 0;
  HyperParams hp;
  TrainingMode mode = TrainingMode::kBaseline;
  double logloss = 0.0;
  std::size_t events_trained = 0;
  bool diverged = false;
  std::optional<std::size_t> abort_position;
  NormStats norms;
};

struct CycleReport {
  int cycle_index = 0;
  std::vector<InstanceReport> instances;
  double retained_fraction = 0.0;
  std::optional<int> best_instance_id;
};

// Index of the non-diverged instance with the lowest log loss (ties go to the
// earlier entry), or nullopt when every instance diverged.
std::optional<std::size_t> select_best_instance(
    std::span<const InstanceReport> reports);

class AllDivergedError : public Error {
 public:
  explicit AllDivergedError(CycleReport report)
      : Error("all instances diverged in cycle " +
              std::to_string(report.cycle_index)),
        report_(std::move(report)) {}
  const CycleReport& report() const { return report_; }

 private:
  CycleReport report_;
};

struct CycleOutcome {
  CycleReport report;
  InstanceState best;
  InstanceSpec best_spec;
  // First diverged instance's state at abort time, for norm diagnostics.
  std::optional<InstanceState> first_diverged;
};

// Number of worker threads: LATENTGUARD_THREADS if set, else the hardware
// concurrency.
unsigned default_thread_count();

// Trains every spec on `chunk` from `warm` in parallel and keeps the best
// survivor. Throws AllDivergedError when no instance survives.
CycleOutcome run_cycle(int cycle_index, std::span<const TrainingEvent> chunk,
                       const InstanceState& warm,
                       std::span<const InstanceSpec> specs,
                       const TrainingSettings& settings, unsigned threads = 0);

struct PerturbationConfig {
  // Total number of specs produced, incumbent included.
  int count = 16;
  std::vector<double> factors = {0.5, 1.0, 2.0};
};

// The incumbent unchanged followed by copies whose η0, α, β_ada and β_dual are
// each multiplied by a factor drawn uniformly from `cfg.factors`.
std::vector<InstanceSpec> perturb_hyperparams(const InstanceSpec& best,
                                              Rng& rng,
                                              const PerturbationConfig& cfg);

enum class TuningStrategy {
  // Every cycle reruns the initial specs.
  kGrid,
  // Every cycle after the first perturbs the previous cycle's winner.
  kPerturb,
};

struct ExperimentSettings {
  int n_cycles = 1;
  std::size_t chunk_size = 10000;
  TrainingSettings training;
  TuningStrategy tuning = TuningStrategy::kGrid;
  PerturbationConfig perturbation;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct SeriesRow {
  int cycle = 0;
  double retained_fraction = 0.0;
  double max_inf_norm = 0.0;
  double max_msqr = 0.0;
  double top10_avg_inf_norm = 0.0;
  // NaN when every instance diverged.
  double best_logloss = 0.0;
};

struct ExperimentResult {
  std::vector<CycleReport> reports;
  std::vector<SeriesRow> series;
  InstanceState final_state;
  InstanceSpec final_spec;
  std::optional<InstanceState> first_diverged;
};

using CycleCallback =
    std::function<void(const CycleReport&, const InstanceState& best)>;

// Chains run_cycle over consecutive chunks of `market`, warm-starting each
// cycle from the previous winner. A cycle in which every instance diverges
// carries the warm state forward unchanged.
ExperimentResult run_experiment(Market& market,
                                const ExperimentSettings& settings,
                                std::span<const InstanceSpec> initial_specs,
                                const CycleCallback& on_cycle = {});

// Log-spaced η0 grid over [eta0_min, eta0_max], other parameters from `base`.
std::vector<InstanceSpec> eta0_grid(const HyperParams& base, TrainingMode mode,
                                    int count, double eta0_min,
                                    double eta0_max);

}  // namespace latentguard
