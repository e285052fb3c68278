#include "latentguard/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "latentguard/errors.hpp"

namespace latentguard {

std::string to_string(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::kBaseline:
      return "baseline";
    case TrainingMode::kEntropic:
      return "entropic";
    case TrainingMode::kEuclidean:
      return "euclidean";
    case TrainingMode::kNaive:
      return "naive";
  }
  return "unknown";
}

TrainingMode training_mode_from_string(const std::string& name) {
  if (name == "baseline") return TrainingMode::kBaseline;
  if (name == "entropic") return TrainingMode::kEntropic;
  if (name == "euclidean") return TrainingMode::kEuclidean;
  if (name == "naive") return TrainingMode::kNaive;
  throw InvalidInputError("unknown training mode '" + name + "'");
}

std::optional<DualMode> dual_mode_of(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::kBaseline:
      return std::nullopt;
    case TrainingMode::kEntropic:
      return DualMode::kEntropic;
    case TrainingMode::kEuclidean:
      return DualMode::kEuclidean;
    case TrainingMode::kNaive:
      return DualMode::kNaive;
  }
  return std::nullopt;
}

void HyperParams::validate() const {
  if (!(eta0 >= 0.0) || !std::isfinite(eta0)) {
    throw InvalidInputError("eta0 must be finite and nonnegative");
  }
  if (!(alpha > 0.0)) throw InvalidInputError("alpha must be > 0");
  if (!(beta_ada >= 0.0)) throw InvalidInputError("beta_ada must be >= 0");
  if (!(lambda >= 0.0)) throw InvalidInputError("lambda must be >= 0");
  if (!(beta_dual > 0.0)) throw InvalidInputError("beta_dual must be > 0");
  if (!(k_rho > 0.0)) throw InvalidInputError("k_rho must be > 0");
  if (!(naive_factor > 1.0)) {
    throw InvalidInputError("naive_factor must be > 1");
  }
}

void TrainingEvent::validate(const FeatureConfig& cfg) const {
  if (static_cast<int>(user_features.size()) != cfg.num_user_features()) {
    throw InvalidInputError("event must carry exactly K user feature values");
  }
  std::vector<bool> seen(user_features.size(), false);
  for (const auto& id : user_features) {
    if (!id.is_user() || id.type >= user_features.size()) {
      throw InvalidInputError("bad user feature " + to_string(id));
    }
    if (seen[id.type]) {
      throw InvalidInputError("duplicate user feature type in event");
    }
    seen[id.type] = true;
  }
  if (ad_features.empty()) {
    throw InvalidInputError("event must carry at least one ad feature");
  }
  for (std::size_t i = 0; i < ad_features.size(); ++i) {
    if (ad_features[i].is_user()) {
      throw InvalidInputError("bad ad feature " + to_string(ad_features[i]));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (ad_features[j] == ad_features[i]) {
        throw InvalidInputError("duplicate ad feature in event");
      }
    }
  }
  if (label != 0 && label != 1) throw InvalidInputError("label must be 0/1");
  if (cost.has_value()) {
    if (label != 1) throw InvalidInputError("cost present on a non-click");
    if (!(*cost >= 0.0)) throw InvalidInputError("cost must be >= 0");
  }
}

void LifecycleConfig::validate() const {
  if (!(sigma_init > 0.0)) throw InvalidInputError("sigma_init must be > 0");
  if (!(evict_after > 0.0)) throw InvalidInputError("evict_after must be > 0");
}

double logistic_loss(double logit_value, int label) {
  // softplus(x) = log(1 + e^x)
  const double x = label == 1 ? -logit_value : logit_value;
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

namespace {

// Vectors referenced by one event, resolved once. User vectors are indexed by
// feature type.
struct EventVectors {
  std::vector<const LatentVector*> user;
  std::vector<const LatentVector*> ad;
};

EventVectors resolve(const TrainingEvent& event, const ModelParams& model) {
  EventVectors ev;
  ev.user.assign(static_cast<std::size_t>(model.config.num_user_features()),
                 nullptr);
  for (const auto& id : event.user_features) {
    if (id.type >= ev.user.size()) {
      throw InvalidInputError("user feature type out of range");
    }
    const LatentVector& v = model.at(id);
    if (v.values.size() != model.config.user_length()) {
      throw InvalidInputError("user vector has wrong length");
    }
    ev.user[id.type] = &v;
  }
  for (const auto* p : ev.user) {
    if (p == nullptr) throw InvalidInputError("event misses a user feature");
  }
  if (event.ad_features.empty()) {
    throw InvalidInputError("event has no ad features");
  }
  ev.ad.reserve(event.ad_features.size());
  for (const auto& id : event.ad_features) {
    const LatentVector& v = model.at(id);
    if (v.values.size() != model.config.full_length()) {
      throw InvalidInputError("ad vector has wrong length");
    }
    ev.ad.push_back(&v);
  }
  return ev;
}

void combine(const EventVectors& ev, const FeatureConfig& cfg,
             std::span<double> user_vec, std::span<double> ad_vec) {
  std::fill(user_vec.begin(), user_vec.end(), 1.0);
  for (int f = 0; f < cfg.num_user_features(); ++f) {
    const auto& z = ev.user[static_cast<std::size_t>(f)]->values;
    for (std::size_t p = 0; p < z.size(); ++p) {
      user_vec[cfg.link(f, p).slot] *= z[p];
    }
  }
  std::fill(ad_vec.begin(), ad_vec.end(), 0.0);
  for (const auto* a : ev.ad) {
    for (std::size_t i = 0; i < ad_vec.size(); ++i) ad_vec[i] += a->values[i];
  }
}

const FeatureValueId& user_id_of_type(const TrainingEvent& event,
                                      std::size_t type) {
  for (const auto& id : event.user_features) {
    if (id.type == type) return id;
  }
  throw InvalidInputError("event misses a user feature");
}

struct Workspace {
  Vector user_vec;
  Vector ad_vec;
  // Gradients of user vectors (by feature type) then ad vectors (in event
  // order), concatenated.
  Vector grads;
  Vector updated;
};

// Fills ws.grads and returns {logit, bias gradient}.
std::pair<double, double> gradient_kernel(const TrainingEvent& event,
                                          const ModelParams& model,
                                          const EventVectors& ev,
                                          const Regularization& reg,
                                          Workspace& ws) {
  const FeatureConfig& cfg = model.config;
  const std::size_t n = cfg.full_length();
  const std::size_t d = cfg.user_length();
  const auto k = static_cast<std::size_t>(cfg.num_user_features());
  ws.user_vec.resize(n);
  ws.ad_vec.resize(n);
  combine(ev, cfg, ws.user_vec, ws.ad_vec);
  const double t = logit(ws.user_vec, ws.ad_vec, model.bias);
  if (!std::isfinite(t)) throw NumericError("non-finite logit");
  const double dphi = pctr(t) - static_cast<double>(event.label);

  ws.grads.resize(k * d + ev.ad.size() * n);
  for (std::size_t f = 0; f < k; ++f) {
    const auto& z = ev.user[f]->values;
    const double c2 = 2.0 * reg.coefficient(user_id_of_type(event, f), d);
    double* g = ws.grads.data() + f * d;
    for (std::size_t p = 0; p < d; ++p) {
      const auto& link = cfg.link(static_cast<int>(f), p);
      const double partner =
          link.partner < 0
              ? 1.0
              : ev.user[static_cast<std::size_t>(link.partner)]
                    ->values[link.partner_local];
      g[p] = dphi * ws.ad_vec[link.slot] * partner + c2 * z[p];
    }
  }
  for (std::size_t a = 0; a < ev.ad.size(); ++a) {
    const auto& z = ev.ad[a]->values;
    const double c2 = 2.0 * reg.coefficient(event.ad_features[a], n);
    double* g = ws.grads.data() + k * d + a * n;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = dphi * ws.user_vec[i] + c2 * z[i];
    }
  }
  return {t, dphi};
}

}  // namespace

double event_logit(const TrainingEvent& event, const ModelParams& model) {
  const EventVectors ev = resolve(event, model);
  Vector user_vec(model.config.full_length());
  Vector ad_vec(model.config.full_length());
  combine(ev, model.config, user_vec, ad_vec);
  return logit(user_vec, ad_vec, model.bias);
}

double loss(const TrainingEvent& event, const ModelParams& model,
            const Regularization& reg) {
  double value = logistic_loss(event_logit(event, model), event.label);
  auto add_reg = [&](const FeatureValueId& id) {
    const auto& v = model.at(id).values;
    double sq = 0.0;
    for (double x : v) sq += x * x;
    value += reg.coefficient(id, v.size()) * sq;
  };
  for (const auto& id : event.user_features) add_reg(id);
  for (const auto& id : event.ad_features) add_reg(id);
  return value;
}

Gradients compute_gradients(const TrainingEvent& event,
                            const ModelParams& model,
                            const Regularization& reg) {
  const EventVectors ev = resolve(event, model);
  Workspace ws;
  const auto [t, bias_grad] = gradient_kernel(event, model, ev, reg, ws);
  const std::size_t d = model.config.user_length();
  const std::size_t n = model.config.full_length();
  const auto k = static_cast<std::size_t>(model.config.num_user_features());
  Gradients out;
  out.bias = bias_grad;
  for (std::size_t f = 0; f < k; ++f) {
    const auto first = ws.grads.begin() + static_cast<std::ptrdiff_t>(f * d);
    out.vectors.emplace(user_id_of_type(event, f),
                        Vector(first, first + static_cast<std::ptrdiff_t>(d)));
  }
  for (std::size_t a = 0; a < ev.ad.size(); ++a) {
    const auto first =
        ws.grads.begin() + static_cast<std::ptrdiff_t>(k * d + a * n);
    out.vectors.emplace(event.ad_features[a],
                        Vector(first, first + static_cast<std::ptrdiff_t>(n)));
  }
  return out;
}

double step_size(double accumulator, const HyperParams& hp) {
  if (!(accumulator >= 0.0)) {
    throw InvalidInputError("step_size: accumulator must be >= 0");
  }
  double scaled;
  if (hp.beta_ada == 0.5) {
    scaled = std::sqrt(accumulator);
  } else if (hp.beta_ada == 1.0) {
    scaled = accumulator;
  } else {
    scaled = std::pow(accumulator, hp.beta_ada);
  }
  const double denom = hp.alpha + scaled;
  return hp.eta0 / std::max(denom, std::numeric_limits<double>::epsilon());
}

StepOutcome train_step(const TrainingEvent& event, ModelParams& model,
                       AdaGradState& adagrad, const DualState* dual,
                       const HyperParams& hp) {
  thread_local Workspace ws;
  const EventVectors ev = resolve(event, model);
  const Regularization reg = dual != nullptr ? Regularization::per_vector(*dual)
                                             : Regularization::global(hp.lambda);
  const auto [t, bias_grad] = gradient_kernel(event, model, ev, reg, ws);
  for (double g : ws.grads) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient");
  }

  StepOutcome outcome;
  outcome.logit_pre_update = t;
  outcome.pctr_pre_update = pctr(t);

  const std::size_t d = model.config.user_length();
  const std::size_t n = model.config.full_length();
  const auto k = static_cast<std::size_t>(model.config.num_user_features());

  // Stage every new value before committing so a numeric failure leaves the
  // model intact.
  ws.updated.resize(ws.grads.size());
  std::vector<Vector*> accs;
  accs.reserve(k + ev.ad.size());
  auto stage = [&](const FeatureValueId& id, const Vector& theta,
                   std::size_t offset) {
    auto [it, inserted] =
        adagrad.accumulators.try_emplace(id, Vector(theta.size(), 0.0));
    Vector& acc = it->second;
    if (acc.size() != theta.size()) acc.assign(theta.size(), 0.0);
    accs.push_back(&acc);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = ws.grads[offset + i];
      const double eta = step_size(acc[i] + std::abs(g), hp);
      ws.updated[offset + i] = theta[i] - eta * g;
    }
  };
  for (std::size_t f = 0; f < k; ++f) {
    stage(user_id_of_type(event, f), ev.user[f]->values, f * d);
  }
  for (std::size_t a = 0; a < ev.ad.size(); ++a) {
    stage(event.ad_features[a], ev.ad[a]->values, k * d + a * n);
  }
  const double bias_acc = adagrad.bias + std::abs(bias_grad);
  const double new_bias = model.bias - step_size(bias_acc, hp) * bias_grad;
  for (double v : ws.updated) {
    if (!std::isfinite(v)) throw NumericError("non-finite parameter update");
  }
  if (!std::isfinite(new_bias)) throw NumericError("non-finite bias update");

  // ev points into `model`, which is mutable here.
  auto commit = [&](const FeatureValueId& id, const LatentVector* target,
                    Vector& acc, std::size_t offset) {
    LatentVector& lv = *const_cast<LatentVector*>(target);
    for (std::size_t i = 0; i < lv.values.size(); ++i) {
      acc[i] += std::abs(ws.grads[offset + i]);
      lv.values[i] = ws.updated[offset + i];
    }
    ++lv.update_count;
    lv.last_seen = std::max(lv.last_seen, event.timestamp);
    outcome.touched_vector_ids.push_back(id);
  };
  for (std::size_t f = 0; f < k; ++f) {
    commit(user_id_of_type(event, f), ev.user[f], *accs[f], f * d);
  }
  for (std::size_t a = 0; a < ev.ad.size(); ++a) {
    commit(event.ad_features[a], ev.ad[a], *accs[k + a], k * d + a * n);
  }
  adagrad.bias = bias_acc;
  model.bias = new_bias;
  return outcome;
}

LatentVector& ensure_vector(ModelParams& model, const FeatureValueId& id,
                            Rng& rng, const LifecycleConfig& lifecycle,
                            AdaGradState* adagrad, DualState* dual) {
  auto it = model.vectors.find(id);
  if (it == model.vectors.end()) {
    LatentVector lv;
    lv.values.resize(model.length_for(id));
    std::normal_distribution<double> normal(0.0, lifecycle.sigma_init);
    for (double& x : lv.values) x = normal(rng);
    it = model.vectors.emplace(id, std::move(lv)).first;
  }
  if (adagrad != nullptr) {
    adagrad->accumulators.try_emplace(id, Vector(it->second.values.size(), 0.0));
  }
  if (dual != nullptr) dual->mu.try_emplace(id, kMuInit);
  return it->second;
}

void ensure_event_vectors(ModelParams& model, const TrainingEvent& event,
                          Rng& rng, const LifecycleConfig& lifecycle,
                          AdaGradState* adagrad, DualState* dual) {
  for (const auto& id : event.user_features) {
    ensure_vector(model, id, rng, lifecycle, adagrad, dual);
  }
  for (const auto& id : event.ad_features) {
    ensure_vector(model, id, rng, lifecycle, adagrad, dual);
  }
}

std::vector<FeatureValueId> evict_stale(ModelParams& model, Timestamp now,
                                        const LifecycleConfig& lifecycle,
                                        AdaGradState* adagrad,
                                        DualState* dual) {
  std::vector<FeatureValueId> removed;
  for (auto it = model.vectors.begin(); it != model.vectors.end();) {
    if (now - it->second.last_seen > lifecycle.evict_after) {
      removed.push_back(it->first);
      if (adagrad != nullptr) adagrad->accumulators.erase(it->first);
      if (dual != nullptr) dual->mu.erase(it->first);
      it = model.vectors.erase(it);
    } else {
      ++it;
    }
  }
  std::sort(removed.begin(), removed.end());
  return removed;
}

}  // namespace latentguard
