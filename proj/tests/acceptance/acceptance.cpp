// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latentguard/cli.hpp"
#include "test_support.hpp"

namespace lg = latentguard;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---- 1: analytic gradients against central differences -------------------

Verdict gradient_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  std::size_t coords = 0;
  const int pairs = 150;
  for (int trial = 0; trial < pairs; ++trial) {
    const int k = 2 + trial % 3;
    lg::ModelParams model(lg::testing::make_config(k, 1 + trial % 4, trial % 3, 1 + trial % 3));
    const lg::TrainingEvent ev = lg::testing::random_event(model, rng, 0.3 + u(rng));
    model.bias = 2.0 * u(rng) - 1.0;
    lg::DualState dual;
    for (const auto& [id, lv] : model.vectors) dual.mu[id] = 2.0 * u(rng);
    const lg::Regularization regs[] = {lg::Regularization::none(),
                                       lg::Regularization::global(u(rng)),
                                       lg::Regularization::per_vector(dual)};
    const lg::Regularization& reg = regs[trial % 3];
    const lg::Gradients g = lg::compute_gradients(ev, model, reg);
    worst = std::max(worst, lg::testing::rel_error(g.bias, lg::testing::fd_bias(ev, model, reg)));
    ++coords;
    for (const auto& [id, grad] : g.vectors) {
      for (std::size_t i = 0; i < grad.size(); ++i) {
        const double fd = lg::testing::fd_partial(ev, model, reg, id, i);
        worst = std::max(worst, lg::testing::rel_error(grad[i], fd));
        ++coords;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 10.0,
          fmt("%d pairs, %zu coordinates, max rel err %.3g (< 1e-4), %.2f s (< 10 s)",
              pairs, coords, worst, secs)};
}

// ---- 2: closed-form rho0 ----------------------------------------------------

Verdict rho0_exactness() {
  const double r = lg::rho_heuristic(256);
  bool monotone = true;
  std::size_t first_bad = 0;
  double prev = lg::rho_heuristic(1);
  for (std::size_t n = 2; n <= 10000; ++n) {
    const double cur = lg::rho_heuristic(n);
    if (!(cur < prev) && monotone) {
      monotone = false;
      first_bad = n;
    }
    prev = cur;
  }
  return {r == 0.25 && monotone,
          fmt("rho0(256) = %.17g, strictly decreasing on 1..10000: %s%s", r,
              monotone ? "yes" : "no", monotone ? "" : fmt(" (first break at %zu)", first_bad).c_str())};
}

// ---- 3: multiplicative dual updates telescope -------------------------------

Verdict entropic_algebra() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  const int sequences = 50;
  bool clamped = false;
  for (int s = 0; s < sequences; ++s) {
    lg::ModelParams model(lg::testing::make_config(3, 2, 1));
    const auto id = lg::FeatureValueId::user(0, 1);
    model.vectors[id].values.assign(model.length_for(id), 0.0);
    lg::DualState dual;
    dual.mode = lg::DualMode::kEntropic;
    dual.rho = 0.2 + u(rng);
    dual.beta_dual = 0.001 + 0.02 * u(rng);
    const double mu_init = 0.01 + u(rng);
    dual.mu[id] = mu_init;
    const std::vector<lg::FeatureValueId> touched{id};
    double sum = 0.0;
    for (int i = 0; i < 1000; ++i) {
      // Slightly biased towards violation so the sum stays away from zero.
      for (double& x : model.vectors[id].values) x = (2.0 * u(rng) - 0.8) * 1.5;
      sum += lg::msqr(model.vectors[id].values) - dual.rho;
      lg::update_after_event(dual, model, touched);
    }
    clamped = clamped || dual.clamp_count > 0;
    const double lhs = std::log(dual.mu.at(id)) - std::log(mu_init);
    const double rhs = dual.beta_dual * sum;
    worst = std::max(worst, std::abs(lhs - rhs) / std::abs(rhs));
  }
  return {worst < 1e-10 && !clamped,
          fmt("%d sequences of 1000 updates, max rel err %.3g (< 1e-10), clamp hit: %s",
              sequences, worst, clamped ? "yes" : "no")};
}

// ---- 4: Cauchy-Schwarz guard ------------------------------------------------

Verdict cauchy_schwarz_guard() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const lg::FeatureConfig cfg = lg::testing::make_config(3, 4, 2, 3);
  double max_abs = 0.0;
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<lg::Vector> users(3, lg::Vector(cfg.user_length()));
    std::vector<lg::Vector> ads(3, lg::Vector(cfg.full_length()));
    const double scale = 0.1 + 3.0 * u(rng);
    for (auto& v : users) lg::testing::fill_normal(v, rng, scale);
    for (auto& v : ads) lg::testing::fill_normal(v, rng, scale);
    std::vector<lg::TypedVector> typed;
    for (int k = 0; k < 3; ++k) typed.push_back({k, users[static_cast<std::size_t>(k)]});
    lg::Vector nu = lg::build_user_vector(typed, cfg);
    lg::Vector na = lg::build_ad_vector(ads);
    // Every few pairs, make the two nearly parallel to probe the tight case.
    if (i % 5 == 0) {
      for (std::size_t j = 0; j < na.size(); ++j) na[j] = nu[j] + 1e-3 * na[j];
    }
    const double target = 12.0 * u(rng);
    const double f = std::sqrt(target / (lg::l2_norm(nu) * lg::l2_norm(na)));
    for (double& x : nu) x *= f;
    for (double& x : na) x *= f;
    if (!(lg::l2_norm(nu) * lg::l2_norm(na) <= 12.0)) continue;  // rounding past the bound
    const double ip = std::abs(lg::logit(nu, na, 0.0));
    max_abs = std::max(max_abs, ip);
    if (!(ip <= 12.0)) ++violations;
  }
  return {violations == 0,
          fmt("10000 pairs with |nu_u|*|nu_a| <= 12, max |<nu_u,nu_a>| = %.15g, violations %d",
              max_abs, violations)};
}

// ---- 5 to 8: desk-scale divergence experiment --------------------------------

struct RunSummary {
  int discarded = 0;
  int bad_cycles = 0;
  double tail_logloss = 0.0;
  double tail_top10 = 0.0;
  double max_inf_survivors = 0.0;
  double max_msqr_after_10 = 0.0;
  double rho = 0.0;
  double seconds = 0.0;
};

RunSummary run_mode(const lg::ExperimentConfig& base, std::uint64_t seed,
                    lg::TrainingMode mode) {
  lg::ExperimentConfig cfg = base;
  cfg.seed = seed;
  cfg.market.seed = seed;
  cfg.mode = mode;
  const auto t0 = Clock::now();
  lg::Market market(cfg.market);
  const auto specs = cfg.initial_specs();
  const lg::ExperimentResult r = lg::run_experiment(market, cfg.settings(), specs);
  RunSummary s;
  s.seconds = seconds_since(t0);
  s.rho = cfg.hyperparams.k_rho * lg::rho_heuristic(cfg.feature_config().full_length());
  const std::size_t n = r.reports.size();
  const std::size_t tail_start = n >= 25 ? n - 25 : 0;
  int ll_count = 0;
  for (std::size_t c = 0; c < n; ++c) {
    int d = 0;
    for (const auto& inst : r.reports[c].instances) {
      if (inst.diverged) {
        ++d;
      } else {
        s.max_inf_survivors = std::max(s.max_inf_survivors, inst.norms.max_inf_norm);
      }
    }
    s.discarded += d;
    if (10 * d >= static_cast<int>(specs.size())) ++s.bad_cycles;
    if (c >= 10) s.max_msqr_after_10 = std::max(s.max_msqr_after_10, r.series[c].max_msqr);
    if (c >= tail_start) {
      if (!std::isnan(r.series[c].best_logloss)) {
        s.tail_logloss += r.series[c].best_logloss;
        ++ll_count;
      }
      s.tail_top10 += r.series[c].top10_avg_inf_norm;
    }
  }
  s.tail_logloss = ll_count > 0 ? s.tail_logloss / ll_count : std::nan("");
  s.tail_top10 /= static_cast<double>(n - tail_start);
  return s;
}

struct DeskScaleRuns {
  std::vector<RunSummary> baseline, entropic, euclidean;
  int cycles = 0;
  int instances = 0;
};

DeskScaleRuns run_desk_scale(const lg::ExperimentConfig& cfg, int seeds) {
  DeskScaleRuns runs;
  runs.cycles = cfg.n_cycles;
  runs.instances = cfg.instances;
  for (int s = 1; s <= seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    runs.baseline.push_back(run_mode(cfg, seed, lg::TrainingMode::kBaseline));
    runs.entropic.push_back(run_mode(cfg, seed, lg::TrainingMode::kEntropic));
    runs.euclidean.push_back(run_mode(cfg, seed, lg::TrainingMode::kEuclidean));
    const auto& b = runs.baseline.back();
    const auto& e = runs.entropic.back();
    const auto& u = runs.euclidean.back();
    std::cout << fmt("   seed %d  discarded b/e/u %d/%d/%d  baseline bad cycles %d  "
                     "tail logloss b/e/u %.6f/%.6f/%.6f  tail top10 e/u %.4f/%.4f  "
                     "time b/e/u %.1f/%.1f/%.1f s",
                     s, b.discarded, e.discarded, u.discarded, b.bad_cycles,
                     b.tail_logloss, e.tail_logloss, u.tail_logloss, e.tail_top10,
                     u.tail_top10, b.seconds, e.seconds, u.seconds)
              << std::endl;
  }
  return runs;
}

Verdict divergence_reproduction(const DeskScaleRuns& r) {
  const int seeds = static_cast<int>(r.baseline.size());
  const int min_bad = (r.cycles + 4) / 5;  // 20% of cycles, rounded up
  int passing = 0;
  double slowest = 0.0;
  std::string per_seed;
  for (int i = 0; i < seeds; ++i) {
    const bool baseline_diverges = r.baseline[i].bad_cycles >= min_bad;
    const bool improved = r.entropic[i].discarded < r.baseline[i].discarded;
    passing += baseline_diverges && improved;
    slowest = std::max({slowest, r.baseline[i].seconds, r.entropic[i].seconds,
                        r.euclidean[i].seconds});
    per_seed += fmt(" %d/%d", r.baseline[i].discarded, r.entropic[i].discarded);
  }
  return {passing >= 4 && slowest < 300.0,
          fmt("%d/%d seeds with baseline discarding >=10%% in >=%d cycles and entropic "
              "discarding fewer (need 4); discarded baseline/entropic:%s; slowest run %.1f s (< 300 s)",
              passing, seeds, min_bad, per_seed.c_str(), slowest)};
}

Verdict norm_control(const DeskScaleRuns& r) {
  double worst_inf = 0.0;
  double worst_ratio = 0.0;
  for (const auto& e : r.entropic) {
    worst_inf = std::max(worst_inf, e.max_inf_survivors);
    worst_ratio = std::max(worst_ratio, e.max_msqr_after_10 / e.rho);
  }
  return {worst_inf < lg::kDefaultTau && worst_ratio <= 2.0,
          fmt("entropic survivors max inf norm %.3f (< 15), max msqr after cycle 10 = %.3f x rho (<= 2)",
              worst_inf, worst_ratio)};
}

Verdict non_inferiority(const DeskScaleRuns& r) {
  double worst = -1e300;
  int passing = 0;
  for (std::size_t i = 0; i < r.baseline.size(); ++i) {
    const double rel = r.entropic[i].tail_logloss / r.baseline[i].tail_logloss - 1.0;
    worst = std::max(worst, rel);
    passing += rel <= 0.01;
  }
  return {passing == static_cast<int>(r.baseline.size()),
          fmt("entropic tail logloss vs baseline: worst %+.3f%% (<= +1%%), %d/%zu seeds within",
              100.0 * worst, passing, r.baseline.size())};
}

Verdict entropic_vs_euclidean(const DeskScaleRuns& r) {
  int norms_lower = 0, loss_no_worse = 0, both = 0;
  for (std::size_t i = 0; i < r.entropic.size(); ++i) {
    const bool a = r.entropic[i].tail_top10 < r.euclidean[i].tail_top10;
    const bool b = r.entropic[i].tail_logloss <= r.euclidean[i].tail_logloss;
    norms_lower += a;
    loss_no_worse += b;
    both += a && b;
  }
  return {both >= 4,
          fmt("%d/%zu seeds with lower top10 inf norm and logloss no worse (need 4); "
              "lower norms in %d, logloss no worse in %d",
              both, r.entropic.size(), norms_lower, loss_no_worse)};
}

// ---- 9: A/A calibration -------------------------------------------------------

Verdict aa_calibration(const lg::ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  int ctr_covered = 0, cpm_covered = 0;
  const int pairs = 100;
  const std::size_t impressions = 100000;
  std::mt19937_64 mc(4242);
  for (int p = 0; p < pairs; ++p) {
    lg::MarketConfig mcfg = cfg.market;
    mcfg.seed = lg::mix_seed(777, static_cast<std::uint64_t>(p));
    lg::Market market(mcfg);
    // Both arms are served by the same process; impressions alternate.
    std::vector<lg::TrainingEvent> arm_a, arm_b;
    while (arm_b.size() < impressions) {
      for (auto& e : market.chunk(cfg.chunk_size)) {
        (arm_a.size() == arm_b.size() ? arm_a : arm_b).push_back(std::move(e));
        if (arm_b.size() == impressions) break;
      }
    }
    const lg::ExperimentLog a = lg::experiment_log_from_events(arm_a);
    const lg::ExperimentLog b = lg::experiment_log_from_events(arm_b);
    const lg::LiftReport ctr = lg::mc_lift(a, b, lg::LiftMetric::kCtr, lg::kDefaultMcSamples, mc);
    const lg::LiftReport cpm = lg::mc_lift(a, b, lg::LiftMetric::kCpm, lg::kDefaultMcSamples, mc);
    ctr_covered += ctr.ci_low <= 0.0 && 0.0 <= ctr.ci_high;
    cpm_covered += cpm.ci_low <= 0.0 && 0.0 <= cpm.ci_high;
  }
  const double secs = seconds_since(t0);
  const auto in_range = [](int c) { return c >= 90 && c <= 99; };
  return {in_range(ctr_covered) && in_range(cpm_covered) && secs < 120.0,
          fmt("95%% CI contains 0 in %d (CTR) and %d (CPM) of %d pairs (need 90-99), %.1f s (< 120 s)",
              ctr_covered, cpm_covered, pairs, secs)};
}

// ---- 10: byte-identical reruns ------------------------------------------------

int cli(const std::vector<std::string>& args, std::string& out) {
  std::vector<const char*> argv{"latentguard"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = lg::run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  out = o.str();
  return code;
}

std::vector<std::pair<std::string, std::string>> tree_contents(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    files.emplace_back(fs::relative(entry.path(), root).string(),
                       lg::read_text_file(entry.path()));
  }
  std::sort(files.begin(), files.end());
  return files;
}

Verdict determinism(const fs::path& work) {
  const fs::path cfg_path = work / "det_config.json";
  lg::write_text_file(cfg_path, R"({
    "seed": 5, "instances": 4, "n_cycles": 4, "chunk_size": 1000,
    "mode": "entropic", "market": {"initial_ads": 20},
    "tuning": {"eta0_min": 0.05, "eta0_max": 5}
  })");
  std::vector<std::string> stdout_runs[2];
  bool ok = true;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = work / ("det" + std::to_string(run));
    fs::create_directories(dir);
    const std::string d = dir.string();
    const std::vector<std::vector<std::string>> commands = {
        {"simulate", "--config", cfg_path.string(), "--events", "5000", "--out", d + "/a.jsonl"},
        {"simulate", "--config", cfg_path.string(), "--events", "5000", "--out", d + "/b.jsonl"},
        {"experiment", "--config", cfg_path.string(), "--out", d + "/exp"},
        {"rho-search", "--config", cfg_path.string(), "--kmax", "4", "--out", d + "/rho.json"},
        {"abtest", d + "/a.jsonl", d + "/a.jsonl", "--metric", "cpm", "--seed", "3",
         "--samples", "20000", "--out", d + "/lift.json"},
        {"snapshot-inspect", d + "/exp/snapshots/cycle_0003.json"},
    };
    for (const auto& c : commands) {
      std::string out;
      ok = ok && cli(c, out) == 0;
      // Paths differ between the two runs; the experiment line names its dir.
      if (c[0] != "experiment") stdout_runs[run].push_back(out);
    }
  }
  const auto t0 = tree_contents(work / "det0");
  const auto t1 = tree_contents(work / "det1");
  const bool same_files = t0 == t1;
  const bool same_stdout = stdout_runs[0] == stdout_runs[1];
  std::size_t bytes = 0;
  for (const auto& f : t0) bytes += f.second.size();
  return {ok && same_files && same_stdout && !t0.empty(),
          fmt("6 commands run twice: exit codes ok %s, %zu files (%zu bytes) identical %s, stdout identical %s",
              ok ? "yes" : "no", t0.size(), bytes, same_files ? "yes" : "no",
              same_stdout ? "yes" : "no")};
}

// ---- 11: progressive validation -----------------------------------------------

Verdict progressive_validation(const lg::ExperimentConfig& cfg) {
  lg::Market market(cfg.market);
  const std::vector<lg::TrainingEvent> all = market.chunk(100);
  lg::InstanceSpec spec;
  spec.mode = lg::TrainingMode::kEntropic;
  spec.hp = cfg.hyperparams;
  spec.hp.eta0 = 0.5;
  lg::TrainingSettings settings;
  settings.record_trace = true;

  // Create every vector up front so that the pre-update state of event i is
  // exactly the result of training on events 0..i-1.
  lg::InstanceState warm(cfg.feature_config());
  lg::Rng rng(1);
  for (const auto& e : all) {
    lg::ensure_event_vectors(warm.model, e, rng, settings.lifecycle, &warm.adagrad);
  }
  const lg::InstanceResult full = lg::run_instance(warm, all, spec, settings);
  int exact = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const std::span<const lg::TrainingEvent> prefix(all.data(), i);
    lg::InstanceState pre = warm;
    if (i > 0) pre = lg::run_instance(warm, prefix, spec, settings).state;
    // Recompute from the serialized snapshot, not the in-memory state.
    const lg::InstanceState snap = lg::snapshot_from_json(lg::Json::parse(lg::snapshot_to_string(pre)));
    const double recomputed = lg::pctr(lg::event_logit(all[i], snap.model));
    exact += full.trace.size() > i && full.trace[i] == recomputed;
  }
  return {exact == 100 && !full.diverged,
          fmt("%d/100 reported pCTRs equal recomputation from the pre-update snapshot",
              exact)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latentguard acceptance suite"};
  std::string config_path = LATENTGUARD_DESK_CONFIG;
  std::string work_dir = (fs::temp_directory_path() / "latentguard_acceptance").string();
  int seeds = 5;
  std::set<int> only;
  app.add_option("--config", config_path, "desk-scale experiment config");
  app.add_option("--work-dir", work_dir, "scratch directory");
  app.add_option("--seeds", seeds, "seeds for criteria 5-8")->check(CLI::Range(1, 100));
  app.add_option("--only", only, "run only these criteria")->delimiter(',')->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const lg::ExperimentConfig cfg = lg::load_config(config_path);
  fs::remove_all(work_dir);
  fs::create_directories(work_dir);

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& fn) {
    if (!only.empty() && !only.contains(id)) return;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << "C" << id << " " << (v.pass ? "PASS" : "FAIL") << " " << name
              << ": " << v.detail << std::endl;
  };

  report(1, "gradient oracle", gradient_oracle);
  report(2, "rho0 exactness", rho0_exactness);
  report(3, "entropic algebra", entropic_algebra);
  report(4, "Cauchy-Schwarz guard", cauchy_schwarz_guard);

  const bool need_desk = only.empty() || only.contains(5) || only.contains(6) ||
                         only.contains(7) || only.contains(8);
  DeskScaleRuns desk;
  std::string desk_error;
  if (need_desk) {
    std::cout << "   desk-scale runs: " << config_path << ", " << seeds << " seeds" << std::endl;
    try {
      desk = run_desk_scale(cfg, seeds);
    } catch (const std::exception& e) {
      desk_error = e.what();
    }
  }
  auto desk_check = [&](Verdict (*fn)(const DeskScaleRuns&)) {
    return [&, fn]() -> Verdict {
      if (!desk_error.empty()) return {false, "desk-scale runs failed: " + desk_error};
      return fn(desk);
    };
  };
  report(5, "divergence reproduction", desk_check(divergence_reproduction));
  report(6, "norm control", desk_check(norm_control));
  report(7, "non-inferiority", desk_check(non_inferiority));
  report(8, "entropic vs euclidean", desk_check(entropic_vs_euclidean));
  report(9, "A/A calibration", [&] { return aa_calibration(cfg); });
  report(10, "determinism", [&] { return determinism(work_dir); });
  report(11, "progressive validation", [&] { return progressive_validation(cfg); });

  fs::remove_all(work_dir);
  std::cout << (failures == 0 ? "all criteria passed" : fmt("%d criteria failed", failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
