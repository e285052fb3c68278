#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "latentguard/core_model.hpp"

namespace latentguard {

inline constexpr double kDefaultTau = 15.0;

struct VectorNorms {
  FeatureValueId id;
  double inf_norm = 0.0;
  double msqr = 0.0;
  std::uint64_t update_count = 0;
};

struct NormStats {
  double max_inf_norm = 0.0;
  double max_msqr = 0.0;
  // Mean of the 10 largest infinity norms (of all, when fewer than 10).
  double top10_avg_inf_norm = 0.0;
  // Sorted by descending infinity norm; filled only on request.
  std::vector<VectorNorms> per_vector;
};

struct DivergenceCheck {
  bool diverged = false;
  std::vector<FeatureValueId> offenders;
};

// Diverged iff some vector has ‖v‖∞ >= tau.
DivergenceCheck check_divergence(const ModelParams& model, double tau);

// Same rule restricted to `ids`; the per-step check after a training event.
DivergenceCheck check_divergence(const ModelParams& model,
                                 std::span<const FeatureValueId> ids,
                                 double tau);

NormStats norm_stats(const ModelParams& model, bool with_per_vector = false);

struct ScatterPoint {
  FeatureValueId id;
  double inf_norm = 0.0;
  std::uint64_t update_count = 0;
};

// One point per live vector: infinity norm against number of updates.
std::vector<ScatterPoint> norm_vs_updates_scatter(const ModelParams& model);

}  // namespace latentguard
