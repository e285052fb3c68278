#include "latentguard/stream_sim.hpp"

#include <cmath>

#include "latentguard/errors.hpp"

namespace latentguard {

void MarketConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidInputError(std::string(name) + " must lie in [0, 1]");
    }
  };
  prob(pause_prob, "pause_prob");
  prob(resume_prob, "resume_prob");
  if (static_cast<int>(user_cardinalities.size()) != num_user_features) {
    throw InvalidInputError("user_cardinalities must have K entries");
  }
  for (int c : user_cardinalities) {
    if (c < 1) throw InvalidInputError("user cardinalities must be >= 1");
  }
  if (!(user_zipf >= 0.0)) throw InvalidInputError("user_zipf must be >= 0");
  if (initial_ads < 0) throw InvalidInputError("initial_ads must be >= 0");
  if (!(ad_arrival_rate >= 0.0)) {
    throw InvalidInputError("ad_arrival_rate must be >= 0");
  }
  if (!(ad_mean_lifetime >= 1.0)) {
    throw InvalidInputError("ad_mean_lifetime must be >= 1");
  }
  if (advertisers < 1 || campaigns_per_advertiser < 1) {
    throw InvalidInputError("ad hierarchy sizes must be >= 1");
  }
  if (!(truth_scale >= 0.0)) throw InvalidInputError("truth_scale must be >= 0");
  if (!(truth_drift >= 0.0)) throw InvalidInputError("truth_drift must be >= 0");
  if (!std::isfinite(truth_bias)) {
    throw InvalidInputError("truth_bias must be finite");
  }
  if (!(cost_rate > 0.0)) throw InvalidInputError("cost_rate must be > 0");
  if (!(cycle_seconds > 0.0)) {
    throw InvalidInputError("cycle_seconds must be > 0");
  }
}

FeatureConfig MarketConfig::feature_config() const {
  return FeatureConfig(num_user_features, pair_entries, single_entries,
                       ad_hierarchy_types());
}

Market::Market(MarketConfig cfg)
    : cfg_(std::move(cfg)), rng_(cfg_.seed), truth_(cfg_.feature_config()) {
  cfg_.validate();
  truth_.bias = cfg_.truth_bias;
  for (int k = 0; k < cfg_.num_user_features; ++k) {
    const int card = cfg_.user_cardinalities[static_cast<std::size_t>(k)];
    std::vector<double> weights;
    for (int v = 0; v < card; ++v) {
      weights.push_back(1.0 / std::pow(v + 1.0, cfg_.user_zipf));
      plant(FeatureValueId::user(k, static_cast<std::uint64_t>(v)));
    }
    user_dists_.emplace_back(weights.begin(), weights.end());
  }
  for (int a = 0; a < cfg_.advertisers; ++a) {
    plant(FeatureValueId::ad(2, static_cast<std::uint64_t>(a)));
    for (int c = 0; c < cfg_.campaigns_per_advertiser; ++c) {
      plant(FeatureValueId::ad(
          1, static_cast<std::uint64_t>(a * cfg_.campaigns_per_advertiser + c)));
    }
  }
  for (int i = 0; i < cfg_.initial_ads; ++i) spawn_ad();
  active_cache_ = active_ads();
}

void Market::plant(const FeatureValueId& id) {
  LatentVector lv;
  lv.values.resize(truth_.length_for(id));
  std::normal_distribution<double> normal(0.0, cfg_.truth_scale);
  for (double& x : lv.values) x = normal(rng_);
  truth_.vectors[id] = std::move(lv);
}

std::uint64_t Market::spawn_ad() {
  std::uniform_int_distribution<int> pick_adv(0, cfg_.advertisers - 1);
  std::uniform_int_distribution<int> pick_cmp(0,
                                              cfg_.campaigns_per_advertiser - 1);
  const int adv = pick_adv(rng_);
  const int cmp = pick_cmp(rng_);
  const std::uint64_t id = next_creative_++;
  Ad ad;
  ad.advertiser = static_cast<std::uint64_t>(adv);
  ad.campaign =
      static_cast<std::uint64_t>(adv * cfg_.campaigns_per_advertiser + cmp);
  ads_.emplace(id, ad);
  plant(FeatureValueId::ad(0, id));
  return id;
}

MarketDelta Market::advance_market() {
  MarketDelta delta;
  cycle_start_ = static_cast<double>(cycle_) * cfg_.cycle_seconds;
  ++cycle_;
  clock_ = cycle_start_;

  const double death_prob = 1.0 / cfg_.ad_mean_lifetime;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto it = ads_.begin(); it != ads_.end();) {
    if (unit(rng_) < death_prob) {
      delta.died_ads.push_back(it->first);
      truth_.vectors.erase(FeatureValueId::ad(0, it->first));
      it = ads_.erase(it);
    } else {
      ++it;
    }
  }
  for (auto& [id, ad] : ads_) {
    if (ad.paused) {
      if (unit(rng_) < cfg_.resume_prob) {
        ad.paused = false;
        delta.resumed.push_back(id);
      }
    } else if (unit(rng_) < cfg_.pause_prob) {
      ad.paused = true;
      delta.paused.push_back(id);
    }
  }
  if (cfg_.ad_arrival_rate > 0.0) {
    std::poisson_distribution<int> arrivals(cfg_.ad_arrival_rate);
    const int born = arrivals(rng_);
    for (int i = 0; i < born; ++i) delta.born_ads.push_back(spawn_ad());
  }
  if (cfg_.truth_drift > 0.0) {
    std::normal_distribution<double> drift(0.0, cfg_.truth_drift);
    for (const FeatureValueId& id : sorted_keys(truth_.vectors)) {
      for (double& x : truth_.vectors.at(id).values) x += drift(rng_);
    }
  }
  active_cache_ = active_ads();
  return delta;
}

std::vector<std::uint64_t> Market::active_ads() const {
  std::vector<std::uint64_t> out;
  for (const auto& [id, ad] : ads_) {
    if (!ad.paused) out.push_back(id);
  }
  return out;
}

bool Market::is_paused(std::uint64_t creative) const {
  auto it = ads_.find(creative);
  return it != ads_.end() && it->second.paused;
}

double Market::planted_pctr(const TrainingEvent& event) const {
  return pctr(event_logit(event, truth_));
}

TrainingEvent Market::next_event() {
  if (active_cache_.empty()) {
    throw StreamStalledError("no active ads in cycle " +
                             std::to_string(cycle_));
  }
  TrainingEvent ev;
  for (int k = 0; k < cfg_.num_user_features; ++k) {
    const int v = user_dists_[static_cast<std::size_t>(k)](rng_);
    ev.user_features.push_back(
        FeatureValueId::user(k, static_cast<std::uint64_t>(v)));
  }
  std::uniform_int_distribution<std::size_t> pick(0, active_cache_.size() - 1);
  const std::uint64_t creative = active_cache_[pick(rng_)];
  const Ad& ad = ads_.at(creative);
  ev.ad_features = {FeatureValueId::ad(0, creative),
                    FeatureValueId::ad(1, ad.campaign),
                    FeatureValueId::ad(2, ad.advertiser)};
  ev.timestamp = clock_;
  const double p = planted_pctr(ev);
  std::bernoulli_distribution click(p);
  ev.label = click(rng_) ? 1 : 0;
  if (ev.label == 1) {
    std::exponential_distribution<double> cost(cfg_.cost_rate);
    ev.cost = cost(rng_);
  }
  return ev;
}

std::vector<TrainingEvent> Market::chunk(std::size_t n_events) {
  if (n_events < 1) throw InvalidInputError("chunk: n_events must be >= 1");
  advance_market();
  std::vector<TrainingEvent> out;
  out.reserve(n_events);
  const double spacing = cfg_.cycle_seconds / static_cast<double>(n_events);
  for (std::size_t i = 0; i < n_events; ++i) {
    clock_ = cycle_start_ + spacing * static_cast<double>(i);
    out.push_back(next_event());
  }
  return out;
}

}  // namespace latentguard
