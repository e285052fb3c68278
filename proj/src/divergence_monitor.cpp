#include "latentguard/divergence_monitor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "latentguard/errors.hpp"

namespace latentguard {

DivergenceCheck check_divergence(const ModelParams& model, double tau) {
  if (!(tau > 0.0)) throw InvalidInputError("tau must be > 0");
  DivergenceCheck out;
  for (const auto& [id, lv] : model.vectors) {
    if (inf_norm(lv.values) >= tau) out.offenders.push_back(id);
  }
  std::sort(out.offenders.begin(), out.offenders.end());
  out.diverged = !out.offenders.empty();
  return out;
}

DivergenceCheck check_divergence(const ModelParams& model,
                                 std::span<const FeatureValueId> ids,
                                 double tau) {
  if (!(tau > 0.0)) throw InvalidInputError("tau must be > 0");
  DivergenceCheck out;
  for (const auto& id : ids) {
    if (inf_norm(model.at(id).values) >= tau) out.offenders.push_back(id);
  }
  out.diverged = !out.offenders.empty();
  return out;
}

NormStats norm_stats(const ModelParams& model, bool with_per_vector) {
  NormStats stats;
  if (model.vectors.empty()) return stats;
  std::vector<double> inf_norms;
  inf_norms.reserve(model.vectors.size());
  for (const auto& [id, lv] : model.vectors) {
    const double inf = inf_norm(lv.values);
    const double m = msqr(lv.values);
    inf_norms.push_back(inf);
    stats.max_inf_norm = std::max(stats.max_inf_norm, inf);
    stats.max_msqr = std::max(stats.max_msqr, m);
    if (with_per_vector) {
      stats.per_vector.push_back({id, inf, m, lv.update_count});
    }
  }
  const std::size_t top = std::min<std::size_t>(10, inf_norms.size());
  std::partial_sort(inf_norms.begin(), inf_norms.begin() + top, inf_norms.end(),
                    std::greater<>());
  stats.top10_avg_inf_norm =
      std::accumulate(inf_norms.begin(), inf_norms.begin() + top, 0.0) /
      static_cast<double>(top);
  std::stable_sort(stats.per_vector.begin(), stats.per_vector.end(),
                   [](const VectorNorms& a, const VectorNorms& b) {
                     if (a.inf_norm != b.inf_norm) return a.inf_norm > b.inf_norm;
                     return a.id < b.id;
                   });
  return stats;
}

std::vector<ScatterPoint> norm_vs_updates_scatter(const ModelParams& model) {
  std::vector<ScatterPoint> out;
  out.reserve(model.vectors.size());
  for (const auto& [id, lv] : model.vectors) {
    out.push_back({id, inf_norm(lv.values), lv.update_count});
  }
  std::sort(out.begin(), out.end(),
            [](const ScatterPoint& a, const ScatterPoint& b) { return a.id < b.id; });
  return out;
}

}  // namespace latentguard
