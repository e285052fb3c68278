#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "latentguard/trainer.hpp"

namespace latentguard {

struct ExperimentLog {
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
  // One entry per click.
  std::vector<double> costs;

  void validate() const;
  double total_cost() const;
};

// Aggregates impressions, clicks and click costs from an event log.
ExperimentLog experiment_log_from_events(std::span<const TrainingEvent> events);

enum class LiftMetric { kCtr, kCpm };

std::string to_string(LiftMetric metric);
LiftMetric lift_metric_from_string(const std::string& name);

struct LiftReport {
  LiftMetric metric = LiftMetric::kCtr;
  double point_lift_pct = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_mc_samples = 0;
};

inline constexpr std::size_t kDefaultMcSamples = 100000;

// 100·(CPM_new / CPM_base - 1).
double cpm_lift(double cpm_new, double cpm_base);

// 1000 · revenue / impressions.
double empirical_cpm(const ExperimentLog& log);

struct PosteriorSample {
  double p = 0.0;
  double lambda = 0.0;
};

// p ~ Beta(1 + clicks, 1 + impressions - clicks),
// λ ~ Gamma(shape 1 + clicks, rate 0.001 + Σ costs).
PosteriorSample posterior_sample(const ExperimentLog& log, std::mt19937_64& rng);

// Monte Carlo over paired posterior draws. CTR lift compares p, CPM lift
// compares 1000·p/λ. Reports the mean lift and the 2.5/97.5 percentiles.
LiftReport mc_lift(const ExperimentLog& log_new, const ExperimentLog& log_base,
                   LiftMetric metric, std::size_t n_samples,
                   std::mt19937_64& rng);

// 100·(ll_base - ll_new)/ll_base; positive means the new model is better.
double logloss_lift(double ll_new, double ll_base);

}  // namespace latentguard
