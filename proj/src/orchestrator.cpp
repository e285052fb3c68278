#include "latentguard/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <thread>

namespace latentguard {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

InstanceResult run_instance(const InstanceState& warm,
                            std::span<const TrainingEvent> chunk,
                            const InstanceSpec& spec,
                            const TrainingSettings& settings) {
  spec.hp.validate();
  InstanceResult result{warm, 0.0, 0, false, std::nullopt, {}, {}};
  InstanceState& st = result.state;

  if (auto dual_mode = dual_mode_of(spec.mode)) {
    if (!st.dual) st.dual.emplace();
    st.dual->mode = *dual_mode;
    st.dual->rho = spec.hp.k_rho * rho_heuristic(st.model.config.full_length());
    st.dual->beta_dual = spec.hp.beta_dual;
    st.dual->naive_factor = spec.hp.naive_factor;
    st.dual->clamp_count = 0;
  } else {
    st.dual.reset();
  }
  DualState* dual = st.dual ? &*st.dual : nullptr;

  Rng rng(settings.init_seed);
  double loss_sum = 0.0;
  if (settings.record_trace) result.trace.reserve(chunk.size());
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    const TrainingEvent& event = chunk[i];
    ensure_event_vectors(st.model, event, rng, settings.lifecycle, &st.adagrad,
                         dual);
    StepOutcome step;
    try {
      step = train_step(event, st.model, st.adagrad, dual, spec.hp);
    } catch (const NumericError&) {
      result.diverged = true;
      result.abort_position = i;
      break;
    }
    loss_sum += logistic_loss(step.logit_pre_update, event.label);
    ++result.events_trained;
    if (settings.record_trace) result.trace.push_back(step.pctr_pre_update);
    if (dual != nullptr) {
      update_after_event(*dual, st.model, step.touched_vector_ids);
    }
    if (check_divergence(st.model, step.touched_vector_ids, settings.tau)
            .diverged) {
      result.diverged = true;
      result.abort_position = i;
      break;
    }
  }
  if (!result.diverged && !chunk.empty()) {
    evict_stale(st.model, chunk.back().timestamp, settings.lifecycle,
                &st.adagrad, dual);
    if (check_divergence(st.model, settings.tau).diverged) {
      result.diverged = true;
      result.abort_position = chunk.size();
    }
  }
  result.logloss = result.events_trained > 0
                       ? loss_sum / static_cast<double>(result.events_trained)
                       : std::numeric_limits<double>::quiet_NaN();
  result.norms = norm_stats(st.model);
  return result;
}

std::optional<std::size_t> select_best_instance(
    std::span<const InstanceReport> reports) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (reports[i].diverged) continue;
    if (!best || reports[i].logloss < reports[*best].logloss) best = i;
  }
  return best;
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("LATENTGUARD_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

CycleOutcome run_cycle(int cycle_index, std::span<const TrainingEvent> chunk,
                       const InstanceState& warm,
                       std::span<const InstanceSpec> specs,
                       const TrainingSettings& settings, unsigned threads) {
  if (specs.empty()) throw InvalidInputError("run_cycle: no instance specs");
  if (chunk.empty()) throw InvalidInputError("run_cycle: empty chunk");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (specs[i].instance_id == specs[j].instance_id) {
        throw InvalidInputError("run_cycle: duplicate instance id");
      }
    }
  }

  std::vector<std::optional<InstanceResult>> results(specs.size());
  std::vector<std::exception_ptr> errors(specs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        results[i] = run_instance(warm, chunk, specs[i], settings);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n_threads = std::min<unsigned>(
      threads == 0 ? default_thread_count() : threads,
      static_cast<unsigned>(specs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  CycleReport report;
  report.cycle_index = cycle_index;
  std::size_t survivors = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const InstanceResult& r = *results[i];
    report.instances.push_back({specs[i].instance_id, specs[i].hp,
                                specs[i].mode, r.logloss, r.events_trained,
                                r.diverged, r.abort_position, r.norms});
    if (!r.diverged) ++survivors;
  }
  report.retained_fraction =
      static_cast<double>(survivors) / static_cast<double>(specs.size());

  std::optional<InstanceState> first_diverged;
  for (auto& r : results) {
    if (r->diverged) {
      first_diverged = std::move(r->state);
      break;
    }
  }

  const auto best = select_best_instance(report.instances);
  if (!best) throw AllDivergedError(std::move(report));
  report.best_instance_id = specs[*best].instance_id;
  return CycleOutcome{std::move(report), std::move(results[*best]->state),
                      specs[*best], std::move(first_diverged)};
}

std::vector<InstanceSpec> perturb_hyperparams(const InstanceSpec& best,
                                              Rng& rng,
                                              const PerturbationConfig& cfg) {
  if (cfg.count < 1) throw InvalidInputError("perturbation count must be >= 1");
  if (cfg.factors.empty()) {
    throw InvalidInputError("perturbation factors must be nonempty");
  }
  for (double f : cfg.factors) {
    if (!(f > 0.0)) throw InvalidInputError("perturbation factors must be > 0");
  }
  std::uniform_int_distribution<std::size_t> pick(0, cfg.factors.size() - 1);
  std::vector<InstanceSpec> out;
  out.reserve(static_cast<std::size_t>(cfg.count));
  out.push_back(best);
  out.back().instance_id = 0;
  for (int i = 1; i < cfg.count; ++i) {
    InstanceSpec s = best;
    s.instance_id = i;
    s.hp.eta0 *= cfg.factors[pick(rng)];
    s.hp.alpha *= cfg.factors[pick(rng)];
    s.hp.beta_ada *= cfg.factors[pick(rng)];
    s.hp.beta_dual *= cfg.factors[pick(rng)];
    out.push_back(s);
  }
  return out;
}

std::vector<InstanceSpec> eta0_grid(const HyperParams& base, TrainingMode mode,
                                    int count, double eta0_min,
                                    double eta0_max) {
  if (count < 1) throw InvalidInputError("grid count must be >= 1");
  if (!(eta0_min > 0.0) || !(eta0_max >= eta0_min)) {
    throw InvalidInputError("grid requires 0 < eta0_min <= eta0_max");
  }
  std::vector<InstanceSpec> out;
  const double lo = std::log(eta0_min);
  const double hi = std::log(eta0_max);
  for (int i = 0; i < count; ++i) {
    InstanceSpec s;
    s.instance_id = i;
    s.mode = mode;
    s.hp = base;
    s.hp.eta0 = count == 1 ? eta0_min
                           : std::exp(lo + (hi - lo) * i / (count - 1.0));
    out.push_back(s);
  }
  return out;
}

ExperimentResult run_experiment(Market& market,
                                const ExperimentSettings& settings,
                                std::span<const InstanceSpec> initial_specs,
                                const CycleCallback& on_cycle) {
  if (settings.n_cycles < 1) {
    throw InvalidInputError("run_experiment: n_cycles must be >= 1");
  }
  if (initial_specs.empty()) {
    throw InvalidInputError("run_experiment: no initial specs");
  }
  ExperimentResult out{{}, {}, InstanceState(market.feature_config()),
                       initial_specs.front(), std::nullopt};
  std::vector<InstanceSpec> specs(initial_specs.begin(), initial_specs.end());

  for (int c = 0; c < settings.n_cycles; ++c) {
    const std::vector<TrainingEvent> chunk = market.chunk(settings.chunk_size);
    TrainingSettings training = settings.training;
    training.init_seed = mix_seed(settings.seed, static_cast<std::uint64_t>(c));

    SeriesRow row;
    row.cycle = c;
    CycleReport report;
    try {
      CycleOutcome outcome =
          run_cycle(c, chunk, out.final_state, specs, training, settings.threads);
      report = std::move(outcome.report);
      out.final_state = std::move(outcome.best);
      out.final_spec = outcome.best_spec;
      if (!out.first_diverged && outcome.first_diverged) {
        out.first_diverged = std::move(outcome.first_diverged);
      }
      for (const auto& inst : report.instances) {
        if (report.best_instance_id && inst.instance_id == *report.best_instance_id) {
          row.best_logloss = inst.logloss;
        }
      }
    } catch (const AllDivergedError& e) {
      report = e.report();
      row.best_logloss = std::numeric_limits<double>::quiet_NaN();
    }
    const NormStats stats = norm_stats(out.final_state.model);
    row.retained_fraction = report.retained_fraction;
    row.max_inf_norm = stats.max_inf_norm;
    row.max_msqr = stats.max_msqr;
    row.top10_avg_inf_norm = stats.top10_avg_inf_norm;
    out.series.push_back(row);
    if (on_cycle) on_cycle(report, out.final_state);
    out.reports.push_back(std::move(report));

    if (settings.tuning == TuningStrategy::kPerturb) {
      Rng rng(mix_seed(settings.seed ^ 0x5bd1e995ULL,
                       static_cast<std::uint64_t>(c)));
      specs = perturb_hyperparams(out.final_spec, rng, settings.perturbation);
    }
  }
  return out;
}

}  // namespace latentguard
