#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "latentguard/core_model.hpp"
#include "latentguard/dual_controller.hpp"

namespace latentguard {

using Rng = std::mt19937_64;

// Regularization regime of a training instance. kBaseline uses one global λ;
// the other modes keep a per-vector multiplier μ_v driven by the dual
// controller.
enum class TrainingMode { kBaseline, kEntropic, kEuclidean, kNaive };

std::string to_string(TrainingMode mode);
TrainingMode training_mode_from_string(const std::string& name);
std::optional<DualMode> dual_mode_of(TrainingMode mode);

struct HyperParams {
  double eta0 = 0.05;
  double alpha = 1.0;
  double beta_ada = 0.5;
  // Global ℓ2 coefficient, baseline mode only.
  double lambda = 0.0;
  // Dual step size and ρ multiplier, dual modes only.
  double beta_dual = 0.1;
  double k_rho = 1.0;
  // Multiplicative factor of the naive controller.
  double naive_factor = 1.1;

  void validate() const;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

// Σ|∇θ L| per coordinate of every latent vector, plus one for the bias.
struct AdaGradState {
  double bias = 0.0;
  FeatureMap<Vector> accumulators;
};

struct TrainingEvent {
  std::vector<FeatureValueId> user_features;
  std::vector<FeatureValueId> ad_features;
  int label = 0;
  Timestamp timestamp = 0.0;
  std::optional<double> cost;

  // Throws InvalidInputError when the event does not fit `cfg`.
  void validate(const FeatureConfig& cfg) const;
};

struct LifecycleConfig {
  double sigma_init = 0.01;
  // Five simulated days.
  double evict_after = 5.0 * 24.0 * 3600.0;

  void validate() const;
};

// Per-vector ℓ2 coefficient c_v such that the regularizer is c_v·‖θ_v‖².
// Baseline: c_v = λ/2. Dual: c_v = μ_v / d_v.
class Regularization {
 public:
  static Regularization none() { return Regularization(0.0, nullptr); }
  static Regularization global(double lambda) {
    return Regularization(lambda, nullptr);
  }
  static Regularization per_vector(const DualState& dual) {
    return Regularization(0.0, &dual);
  }

  double coefficient(const FeatureValueId& id, std::size_t dim) const {
    if (dual_ != nullptr) return dual_->mu_for(id) / static_cast<double>(dim);
    return 0.5 * lambda_;
  }

 private:
  Regularization(double lambda, const DualState* dual)
      : lambda_(lambda), dual_(dual) {}

  double lambda_;
  const DualState* dual_;
};

// Φ_y(t) = -(1-y)·log(1-σ(t)) - y·log σ(t), evaluated without cancellation.
double logistic_loss(double logit_value, int label);

double event_logit(const TrainingEvent& event, const ModelParams& model);

double loss(const TrainingEvent& event, const ModelParams& model,
            const Regularization& reg);

struct Gradients {
  double bias = 0.0;
  std::map<FeatureValueId, Vector> vectors;
};

Gradients compute_gradients(const TrainingEvent& event,
                            const ModelParams& model,
                            const Regularization& reg);

// η0 / (α + accumulator^β), with the denominator clamped at machine epsilon.
double step_size(double accumulator, const HyperParams& hp);

struct StepOutcome {
  // pCTR under the parameters as they were before the update.
  double pctr_pre_update = 0.0;
  double logit_pre_update = 0.0;
  std::vector<FeatureValueId> touched_vector_ids;
};

// One-pass AdaGrad-variant step on a single event. Regularization is global λ
// when `dual` is null and per-vector μ otherwise. The dual variables are not
// updated here; see update_after_event. Throws NumericError when a gradient
// is not finite; the model is left untouched in that case.
StepOutcome train_step(const TrainingEvent& event, ModelParams& model,
                       AdaGradState& adagrad, const DualState* dual,
                       const HyperParams& hp);

// Returns the existing vector, or creates one with i.i.d. N(0, σ²) entries
// (and its accumulator, and μ when `dual` is given).
LatentVector& ensure_vector(ModelParams& model, const FeatureValueId& id,
                            Rng& rng, const LifecycleConfig& lifecycle,
                            AdaGradState* adagrad = nullptr,
                            DualState* dual = nullptr);

// Creates every vector the event needs.
void ensure_event_vectors(ModelParams& model, const TrainingEvent& event,
                          Rng& rng, const LifecycleConfig& lifecycle,
                          AdaGradState* adagrad = nullptr,
                          DualState* dual = nullptr);

// Removes vectors not updated for longer than `evict_after`, together with
// their accumulators and dual variables.
std::vector<FeatureValueId> evict_stale(ModelParams& model, Timestamp now,
                                        const LifecycleConfig& lifecycle,
                                        AdaGradState* adagrad = nullptr,
                                        DualState* dual = nullptr);

}  // namespace latentguard
