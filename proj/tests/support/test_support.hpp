#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "latentguard/core_model.hpp"
#include "latentguard/trainer.hpp"

namespace latentguard::testing {

inline FeatureConfig make_config(int k, int o, int s, int ad_types = 2) {
  std::vector<std::string> names;
  for (int i = 0; i < ad_types; ++i) names.push_back("ad" + std::to_string(i));
  return FeatureConfig(k, o, s, names);
}

inline void fill_normal(Vector& v, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  for (double& x : v) x = normal(rng);
}

// An event over user values (k, value_k) and one ad value per ad type, with
// every vector present in `model`.
inline TrainingEvent random_event(ModelParams& model, std::mt19937_64& rng,
                                  double scale, int values_per_type = 3) {
  std::uniform_int_distribution<int> pick(0, values_per_type - 1);
  std::bernoulli_distribution coin(0.5);
  TrainingEvent ev;
  for (int k = 0; k < model.config.num_user_features(); ++k) {
    ev.user_features.push_back(
        FeatureValueId::user(k, static_cast<std::uint64_t>(pick(rng))));
  }
  for (int a = 0; a < model.config.num_ad_features(); ++a) {
    ev.ad_features.push_back(
        FeatureValueId::ad(a, static_cast<std::uint64_t>(pick(rng))));
  }
  ev.label = coin(rng) ? 1 : 0;
  ev.timestamp = 1.0;
  auto add = [&](const FeatureValueId& id) {
    if (model.vectors.contains(id)) return;
    LatentVector lv;
    lv.values.resize(model.length_for(id));
    fill_normal(lv.values, rng, scale);
    model.vectors.emplace(id, std::move(lv));
  };
  for (const auto& id : ev.user_features) add(id);
  for (const auto& id : ev.ad_features) add(id);
  return ev;
}

// Central finite difference of `loss` with respect to one coordinate. The
// objective is a data term plus a sum of per-vector penalties; each is
// differenced on its own so that penalties on other vectors, which do not
// move, cannot swamp the difference with rounding error.
inline double data_term(const TrainingEvent& ev, const ModelParams& model) {
  return loss(ev, model, Regularization::none());
}

inline double penalty_term(const ModelParams& model, const Regularization& reg,
                           const FeatureValueId& id) {
  const Vector& v = model.vectors.at(id).values;
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return reg.coefficient(id, v.size()) * sq;
}

inline double fd_partial(const TrainingEvent& ev, ModelParams& model,
                         const Regularization& reg, const FeatureValueId& id,
                         std::size_t i, double h = 1e-6) {
  double& x = model.vectors.at(id).values[i];
  const double saved = x;
  x = saved + h;
  const double data_up = data_term(ev, model);
  const double pen_up = penalty_term(model, reg, id);
  x = saved - h;
  const double data_down = data_term(ev, model);
  const double pen_down = penalty_term(model, reg, id);
  x = saved;
  // A vector listed twice in the event carries its penalty twice.
  const auto count = std::count(ev.user_features.begin(), ev.user_features.end(), id) +
                     std::count(ev.ad_features.begin(), ev.ad_features.end(), id);
  return (data_up - data_down) / (2.0 * h) +
         static_cast<double>(count) * (pen_up - pen_down) / (2.0 * h);
}

// The bias carries no penalty.
inline double fd_bias(const TrainingEvent& ev, ModelParams& model,
                      const Regularization& reg, double h = 1e-6) {
  (void)reg;
  const double saved = model.bias;
  model.bias = saved + h;
  const double up = data_term(ev, model);
  model.bias = saved - h;
  const double down = data_term(ev, model);
  model.bias = saved;
  return (up - down) / (2.0 * h);
}

// Relative error with a floor on the denominator so that near-zero partials
// compare on an absolute scale.
inline double rel_error(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace latentguard::testing
