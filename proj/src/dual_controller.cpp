#include "latentguard/dual_controller.hpp"

#include <algorithm>
#include <cmath>

#include "latentguard/errors.hpp"

namespace latentguard {

std::string to_string(DualMode mode) {
  switch (mode) {
    case DualMode::kEntropic:
      return "entropic";
    case DualMode::kEuclidean:
      return "euclidean";
    case DualMode::kNaive:
      return "naive";
  }
  return "unknown";
}

double dual_ascent_entropic(double mu, double msqr_value, double rho,
                            double beta_dual) {
  if (!(mu > 0.0)) {
    throw InvalidInputError("dual_ascent_entropic: mu must be positive");
  }
  const double next = mu * std::exp(beta_dual * (msqr_value - rho));
  if (!(next <= kMuMax)) return kMuMax;  // also catches NaN from inf*0
  return std::max(next, kMuMin);
}

double dual_ascent_euclidean(double mu, double msqr_value, double rho,
                             double beta_dual) {
  return std::min(kMuMax, std::max(0.0, mu + beta_dual * (msqr_value - rho)));
}

double naive_control(double mu, double msqr_value, double rho,
                     double beta_naive) {
  if (!(beta_naive > 1.0)) {
    throw InvalidInputError("naive_control: factor must exceed 1");
  }
  const double next = msqr_value > rho ? mu * beta_naive : mu / beta_naive;
  return std::clamp(next, kMuMin, kMuMax);
}

void update_after_event(DualState& state, const ModelParams& model,
                        std::span<const FeatureValueId> touched) {
  for (const auto& id : touched) {
    const double m = msqr(model.at(id).values);
    auto [it, inserted] = state.mu.try_emplace(id, kMuInit);
    double next = 0.0;
    switch (state.mode) {
      case DualMode::kEntropic:
        next = dual_ascent_entropic(it->second, m, state.rho, state.beta_dual);
        break;
      case DualMode::kEuclidean:
        next = dual_ascent_euclidean(it->second, m, state.rho, state.beta_dual);
        break;
      case DualMode::kNaive:
        next = naive_control(it->second, m, state.rho, state.naive_factor);
        break;
    }
    if (next == kMuMax) ++state.clamp_count;
    it->second = next;
  }
}

double rho_heuristic(std::size_t full_length) {
  if (full_length < 1) {
    throw InvalidInputError("rho_heuristic: N must be >= 1");
  }
  const double n = static_cast<double>(full_length);
  const double sqrt_n = std::sqrt(n);
  return 288.0 /
         (24.0 * sqrt_n + sqrt_n * std::sqrt(sqrt_n) * std::sqrt(48.0 + sqrt_n) + n);
}

}  // namespace latentguard
