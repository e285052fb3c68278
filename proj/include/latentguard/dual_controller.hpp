#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "latentguard/core_model.hpp"

namespace latentguard {

enum class DualMode { kEntropic, kEuclidean, kNaive };

std::string to_string(DualMode mode);

inline constexpr double kMuInit = 0.01;
inline constexpr double kMuMax = 1e6;
// Entropic updates can underflow after long stretches of slack; μ is kept at
// or above this floor so it stays strictly positive.
inline constexpr double kMuMin = 1e-12;

// Per-vector dual variables of the mean-squared-element constraints
// msqr(θ_v) <= ρ.
struct DualState {
  FeatureMap<double> mu;
  double rho = 1.0;
  double beta_dual = 0.1;
  DualMode mode = DualMode::kEntropic;
  double naive_factor = 2.0;
  // Number of updates that hit the μ_max clamp.
  std::uint64_t clamp_count = 0;

  double mu_for(const FeatureValueId& id) const {
    auto it = mu.find(id);
    return it == mu.end() ? kMuInit : it->second;
  }
};

// Mirror ascent step under the relative-entropy proximity term:
// μ·exp(β(msqr - ρ)), clamped to [kMuMin, kMuMax].
double dual_ascent_entropic(double mu, double msqr_value, double rho,
                            double beta_dual);

// Projected gradient ascent: max(0, μ + β(msqr - ρ)).
double dual_ascent_euclidean(double mu, double msqr_value, double rho,
                             double beta_dual);

// Bang-bang controller: multiply by β when violating, divide otherwise.
double naive_control(double mu, double msqr_value, double rho,
                     double beta_naive);

// Applies the state's rule to each touched vector using its current msqr.
// Runs after the primal step of the same event.
void update_after_event(DualState& state, const ModelParams& model,
                        std::span<const FeatureValueId> touched);

// Heuristic bound on the mean squared element for vector length N, obtained by
// keeping |logit - b| <= 12 under a user/ad split of the Cauchy-Schwarz bound.
double rho_heuristic(std::size_t full_length);

}  // namespace latentguard
