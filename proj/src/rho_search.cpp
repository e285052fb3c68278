#include "latentguard/rho_search.hpp"

namespace latentguard {

int select_k(const std::map<int, double>& per_k_logloss, double eps) {
  if (per_k_logloss.empty()) {
    throw SearchFailedError("rho search: no surviving multiplier");
  }
  for (auto it = per_k_logloss.begin(); it != per_k_logloss.end(); ++it) {
    const double base = it->second;
    bool improved_later = false;
    for (auto jt = std::next(it); jt != per_k_logloss.end(); ++jt) {
      if (base - jt->second >= eps * base) {
        improved_later = true;
        break;
      }
    }
    if (!improved_later) return it->first;
  }
  return per_k_logloss.rbegin()->first;
}

RhoSearchResult rho_search(const InstanceState& base,
                           std::span<const TrainingEvent> chunk,
                           const HyperParams& hp,
                           const TrainingSettings& settings, int k_max,
                           TrainingMode mode, unsigned threads) {
  if (chunk.empty()) throw InvalidInputError("rho search: empty chunk");
  if (k_max < 1) throw InvalidInputError("rho search: k_max must be >= 1");
  if (!dual_mode_of(mode)) {
    throw InvalidInputError("rho search requires a dual training mode");
  }
  RhoSearchResult result;
  result.rho0 = rho_heuristic(base.model.config.full_length());

  std::vector<InstanceSpec> specs;
  for (int k = 1; k <= k_max; ++k) {
    InstanceSpec s;
    s.instance_id = k;
    s.mode = mode;
    s.hp = hp;
    s.hp.k_rho = static_cast<double>(k);
    specs.push_back(s);
  }
  CycleReport report;
  try {
    report = run_cycle(0, chunk, base, specs, settings, threads).report;
  } catch (const AllDivergedError&) {
    throw SearchFailedError("rho search: every instance diverged");
  }
  for (const auto& inst : report.instances) {
    if (inst.diverged) {
      result.diverged_k.push_back(inst.instance_id);
    } else {
      result.per_k_logloss[inst.instance_id] = inst.logloss;
    }
  }
  result.k_star = select_k(result.per_k_logloss);
  return result;
}

}  // namespace latentguard
