#include "latentguard/eval_abtest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latentguard/errors.hpp"

namespace latentguard {

namespace {

constexpr double kPriorRate = 0.001;

double percentile(std::vector<double>& sorted, double q) {
  // Linear interpolation between closest ranks.
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

void ExperimentLog::validate() const {
  if (clicks > impressions) {
    throw InvalidInputError("experiment log: clicks exceed impressions");
  }
  if (costs.size() != clicks) {
    throw InvalidInputError("experiment log: one cost per click required");
  }
  for (double c : costs) {
    if (!(c >= 0.0)) throw InvalidInputError("experiment log: negative cost");
  }
}

double ExperimentLog::total_cost() const {
  return std::accumulate(costs.begin(), costs.end(), 0.0);
}

ExperimentLog experiment_log_from_events(
    std::span<const TrainingEvent> events) {
  ExperimentLog log;
  for (const auto& e : events) {
    ++log.impressions;
    if (e.label == 1) {
      ++log.clicks;
      log.costs.push_back(e.cost.value_or(0.0));
    }
  }
  return log;
}

std::string to_string(LiftMetric metric) {
  return metric == LiftMetric::kCtr ? "ctr" : "cpm";
}

LiftMetric lift_metric_from_string(const std::string& name) {
  if (name == "ctr") return LiftMetric::kCtr;
  if (name == "cpm") return LiftMetric::kCpm;
  throw InvalidInputError("unknown metric '" + name + "'");
}

double cpm_lift(double cpm_new, double cpm_base) {
  if (!(cpm_base > 0.0)) throw InvalidInputError("cpm_lift: base CPM must be > 0");
  return 100.0 * (cpm_new / cpm_base - 1.0);
}

double empirical_cpm(const ExperimentLog& log) {
  if (log.impressions == 0) {
    throw InvalidInputError("empirical_cpm: zero impressions");
  }
  return 1000.0 * log.total_cost() / static_cast<double>(log.impressions);
}

namespace {

// Conjugate posterior of one arm, built once so that sampling is O(1).
// Requires impressions > 0.
class Posterior {
 public:
  explicit Posterior(const ExperimentLog& log)
      : ga_(1.0 + static_cast<double>(log.clicks), 1.0),
        gb_(1.0 + static_cast<double>(log.impressions - log.clicks), 1.0),
        gl_(1.0 + static_cast<double>(log.clicks),
            1.0 / (kPriorRate + log.total_cost())) {}

  PosteriorSample operator()(std::mt19937_64& rng) {
    double x = 0.0;
    double y = 0.0;
    // Beta via two gammas; guard the measure-zero endpoints.
    do {
      x = ga_(rng);
      y = gb_(rng);
    } while (!(x > 0.0 && y > 0.0));
    return {x / (x + y), gl_(rng)};
  }

 private:
  std::gamma_distribution<double> ga_;
  std::gamma_distribution<double> gb_;
  std::gamma_distribution<double> gl_;
};

}  // namespace

PosteriorSample posterior_sample(const ExperimentLog& log,
                                 std::mt19937_64& rng) {
  if (log.impressions == 0) {
    throw InvalidInputError("posterior_sample: zero impressions");
  }
  return Posterior(log)(rng);
}

LiftReport mc_lift(const ExperimentLog& log_new, const ExperimentLog& log_base,
                   LiftMetric metric, std::size_t n_samples,
                   std::mt19937_64& rng) {
  if (n_samples < 1000) {
    throw InvalidInputError("mc_lift: at least 1000 samples required");
  }
  if (log_new.impressions == 0 || log_base.impressions == 0) {
    throw InvalidInputError("mc_lift: degenerate log with zero impressions");
  }
  log_new.validate();
  log_base.validate();
  std::vector<double> lifts;
  lifts.reserve(n_samples);
  Posterior post_new(log_new);
  Posterior post_base(log_base);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const PosteriorSample a = post_new(rng);
    const PosteriorSample b = post_base(rng);
    if (metric == LiftMetric::kCtr) {
      lifts.push_back(100.0 * (a.p / b.p - 1.0));
    } else {
      lifts.push_back(
          cpm_lift(1000.0 * a.p / a.lambda, 1000.0 * b.p / b.lambda));
    }
  }
  LiftReport report;
  report.metric = metric;
  report.n_mc_samples = n_samples;
  report.point_lift_pct =
      std::accumulate(lifts.begin(), lifts.end(), 0.0) /
      static_cast<double>(n_samples);
  std::sort(lifts.begin(), lifts.end());
  report.ci_low = percentile(lifts, 0.025);
  report.ci_high = percentile(lifts, 0.975);
  return report;
}

double logloss_lift(double ll_new, double ll_base) {
  if (!(ll_base > 0.0)) {
    throw InvalidInputError("logloss_lift: base log loss must be > 0");
  }
  return 100.0 * (ll_base - ll_new) / ll_base;
}

}  // namespace latentguard
