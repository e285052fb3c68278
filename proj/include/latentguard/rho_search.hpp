#pragma once

#include <map>
#include <span>
#include <vector>

#include "latentguard/orchestrator.hpp"

namespace latentguard {

// Relative log-loss gain below which a larger bound counts as no improvement.
inline constexpr double kLogLossEpsilon = 5e-4;

struct RhoSearchResult {
  double rho0 = 0.0;
  int k_star = 1;
  std::map<int, double> per_k_logloss;
  std::vector<int> diverged_k;
};

// Smallest k such that no larger k improves the log loss by at least
// eps·LogLoss(k). Throws SearchFailedError on an empty table.
int select_k(const std::map<int, double>& per_k_logloss,
             double eps = kLogLossEpsilon);

// Trains one dual-mode instance per ρ = k·ρ0, k = 1..k_max, on `chunk` from
// `base` and picks k with select_k. Diverged multipliers are excluded.
RhoSearchResult rho_search(const InstanceState& base,
                           std::span<const TrainingEvent> chunk,
                           const HyperParams& hp,
                           const TrainingSettings& settings, int k_max = 10,
                           TrainingMode mode = TrainingMode::kEntropic,
                           unsigned threads = 0);

}  // namespace latentguard
