#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "latentguard/core_model.hpp"
#include "latentguard/trainer.hpp"

namespace latentguard {

// Parameters of the synthetic ad marketplace. Ads form a three-level
// hierarchy (creative, campaign, advertiser); campaigns and advertisers are
// long-lived while creatives arrive, pause, resume and die.
struct MarketConfig {
  std::uint64_t seed = 1;
  int num_user_features = 3;  // K
  int pair_entries = 4;       // o
  int single_entries = 2;     // s
  std::vector<int> user_cardinalities = {8, 3, 20};
  // Exponent of the Zipf-like weights over each user feature's values.
  double user_zipf = 1.0;
  int initial_ads = 50;
  // Mean of the Poisson number of new creatives per cycle.
  double ad_arrival_rate = 5.0;
  // Mean of the geometric creative lifetime, in cycles.
  double ad_mean_lifetime = 10.0;
  double pause_prob = 0.05;
  double resume_prob = 0.3;
  int advertisers = 10;
  int campaigns_per_advertiser = 3;
  // Std-dev of the planted vectors' entries at creation.
  double truth_scale = 0.5;
  // Per-cycle std-dev of the Gaussian drift of planted vectors.
  double truth_drift = 0.02;
  double truth_bias = -3.0;
  // Rate of the exponential cost-per-click distribution.
  double cost_rate = 2.0;
  double cycle_seconds = 900.0;

  void validate() const;
  FeatureConfig feature_config() const;
};

inline const std::vector<std::string>& ad_hierarchy_types() {
  static const std::vector<std::string> kTypes = {"creative", "campaign",
                                                  "advertiser"};
  return kTypes;
}

struct MarketDelta {
  std::vector<std::uint64_t> born_ads;
  std::vector<std::uint64_t> died_ads;
  std::vector<std::uint64_t> paused;
  std::vector<std::uint64_t> resumed;
};

class Market {
 public:
  explicit Market(MarketConfig cfg);

  const MarketConfig& config() const { return cfg_; }
  const FeatureConfig& feature_config() const { return truth_.config; }

  // Moves to the next cycle: deaths, pause/resume flips, arrivals, and drift of
  // the planted model.
  MarketDelta advance_market();

  // Samples one impression from the current cycle. Throws StreamStalledError
  // when no ad is active.
  TrainingEvent next_event();

  // One cycle worth of events: advances the market once, then samples
  // `n_events` impressions spread over the cycle.
  std::vector<TrainingEvent> chunk(std::size_t n_events);

  // Click probability of the planted model for `event`.
  double planted_pctr(const TrainingEvent& event) const;

  std::vector<std::uint64_t> active_ads() const;
  bool is_alive(std::uint64_t creative) const {
    return ads_.contains(creative);
  }
  bool is_paused(std::uint64_t creative) const;
  std::uint64_t cycle() const { return cycle_; }

 private:
  struct Ad {
    std::uint64_t campaign = 0;
    std::uint64_t advertiser = 0;
    bool paused = false;
  };

  std::uint64_t spawn_ad();
  void plant(const FeatureValueId& id);

  MarketConfig cfg_;
  std::mt19937_64 rng_;
  ModelParams truth_;
  std::map<std::uint64_t, Ad> ads_;
  std::vector<std::discrete_distribution<int>> user_dists_;
  std::vector<std::uint64_t> active_cache_;
  std::uint64_t next_creative_ = 1;
  std::uint64_t cycle_ = 0;
  Timestamp cycle_start_ = 0.0;
  Timestamp clock_ = 0.0;
};

}  // namespace latentguard
