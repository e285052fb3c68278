#include "latentguard/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latentguard/errors.hpp"

namespace latentguard {

FeatureConfig::FeatureConfig(int num_user_features, int pair_entries,
                             int single_entries,
                             std::vector<std::string> ad_feature_types)
    : num_user_features_(num_user_features),
      pair_entries_(pair_entries),
      single_entries_(single_entries),
      ad_feature_types_(std::move(ad_feature_types)) {
  if (num_user_features < 2) {
    throw InvalidInputError("FeatureConfig: K must be >= 2");
  }
  if (pair_entries < 0 || single_entries < 0) {
    throw InvalidInputError("FeatureConfig: o and s must be >= 0");
  }
  if (pair_entries + single_entries < 1) {
    throw InvalidInputError("FeatureConfig: o + s must be >= 1");
  }
  const auto k = static_cast<std::size_t>(num_user_features);
  const auto o = static_cast<std::size_t>(pair_entries);
  const auto s = static_cast<std::size_t>(single_entries);
  full_length_ = k * (k - 1) / 2 * o + k * s;
  user_length_ = (k - 1) * o + s;

  links_.resize(k * user_length_);
  for (int f = 0; f < num_user_features_; ++f) {
    std::size_t local = 0;
    for (int partner = 0; partner < num_user_features_; ++partner) {
      if (partner == f) continue;
      const std::size_t base = pair_block_offset(std::min(f, partner),
                                                 std::max(f, partner));
      // The partner's sub-block for this pair sits at the same rank among
      // its own partners.
      const int rank_in_partner = f < partner ? f : f - 1;
      for (std::size_t e = 0; e < o; ++e, ++local) {
        links_[static_cast<std::size_t>(f) * user_length_ + local] = {
            base + e, partner,
            static_cast<std::size_t>(rank_in_partner) * o + e};
      }
    }
    const std::size_t base = single_block_offset(f);
    for (std::size_t e = 0; e < s; ++e, ++local) {
      links_[static_cast<std::size_t>(f) * user_length_ + local] = {base + e,
                                                                    -1, 0};
    }
  }
}

std::size_t FeatureConfig::pair_block_offset(int i, int j) const {
  // Number of pairs preceding (i, j) in lexicographic order.
  const int k = num_user_features_;
  const int before = i * k - i * (i + 1) / 2 + (j - i - 1);
  return static_cast<std::size_t>(before) *
         static_cast<std::size_t>(pair_entries_);
}

std::size_t FeatureConfig::single_block_offset(int k) const {
  const auto kk = static_cast<std::size_t>(num_user_features_);
  return kk * (kk - 1) / 2 * static_cast<std::size_t>(pair_entries_) +
         static_cast<std::size_t>(k) * static_cast<std::size_t>(single_entries_);
}

std::string to_string(const FeatureValueId& id) {
  return std::string(id.is_user() ? "user:" : "ad:") +
         std::to_string(id.type) + ":" + std::to_string(id.value);
}

const LatentVector& ModelParams::at(const FeatureValueId& id) const {
  auto it = vectors.find(id);
  if (it == vectors.end()) {
    throw LifecycleError("no latent vector for " + to_string(id));
  }
  return it->second;
}

LatentVector& ModelParams::at(const FeatureValueId& id) {
  auto it = vectors.find(id);
  if (it == vectors.end()) {
    throw LifecycleError("no latent vector for " + to_string(id));
  }
  return it->second;
}

Vector expand_user_feature(std::span<const double> vec, int feature_type,
                           const FeatureConfig& cfg) {
  if (feature_type < 0 || feature_type >= cfg.num_user_features()) {
    throw InvalidInputError("expand_user_feature: feature type out of range");
  }
  if (vec.size() != cfg.user_length()) {
    throw InvalidInputError("expand_user_feature: expected length " +
                            std::to_string(cfg.user_length()) + ", got " +
                            std::to_string(vec.size()));
  }
  Vector out(cfg.full_length(), 1.0);
  for (std::size_t p = 0; p < vec.size(); ++p) {
    out[cfg.link(feature_type, p).slot] = vec[p];
  }
  return out;
}

Vector build_user_vector(std::span<const TypedVector> feature_vecs,
                         const FeatureConfig& cfg) {
  const int k = cfg.num_user_features();
  if (static_cast<int>(feature_vecs.size()) != k) {
    throw InvalidInputError("build_user_vector: expected " + std::to_string(k) +
                            " feature vectors");
  }
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  Vector out(cfg.full_length(), 1.0);
  for (const auto& fv : feature_vecs) {
    if (fv.feature_type < 0 || fv.feature_type >= k) {
      throw InvalidInputError("build_user_vector: feature type out of range");
    }
    if (seen[static_cast<std::size_t>(fv.feature_type)]) {
      throw InvalidInputError("build_user_vector: duplicate feature type " +
                              std::to_string(fv.feature_type));
    }
    seen[static_cast<std::size_t>(fv.feature_type)] = true;
    if (fv.values.size() != cfg.user_length()) {
      throw InvalidInputError("build_user_vector: dimension mismatch");
    }
    for (std::size_t p = 0; p < fv.values.size(); ++p) {
      out[cfg.link(fv.feature_type, p).slot] *= fv.values[p];
    }
  }
  return out;
}

Vector build_ad_vector(std::span<const Vector> ad_vecs) {
  if (ad_vecs.empty()) {
    throw InvalidInputError("build_ad_vector: empty list");
  }
  Vector out(ad_vecs.front().size(), 0.0);
  for (const auto& v : ad_vecs) {
    if (v.size() != out.size()) {
      throw InvalidInputError("build_ad_vector: length mismatch");
    }
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += v[i];
  }
  return out;
}

double logit(std::span<const double> user_vec, std::span<const double> ad_vec,
             double bias) {
  if (user_vec.size() != ad_vec.size()) {
    throw InvalidInputError("logit: length mismatch");
  }
  return bias + std::inner_product(user_vec.begin(), user_vec.end(),
                                   ad_vec.begin(), 0.0);
}

double pctr(double logit_value) {
  if (!std::isfinite(logit_value)) {
    throw NumericError("pctr: non-finite logit");
  }
  if (logit_value >= 0.0) {
    return 1.0 / (1.0 + std::exp(-logit_value));
  }
  const double e = std::exp(logit_value);
  return e / (1.0 + e);
}

double msqr(std::span<const double> x) {
  if (x.empty()) throw InvalidInputError("msqr: empty vector");
  double sum = 0.0;
  for (double v : x) sum += v * v;
  return sum / static_cast<double>(x.size());
}

double inf_norm(std::span<const double> x) {
  if (x.empty()) throw InvalidInputError("inf_norm: empty vector");
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

double l2_norm(std::span<const double> x) {
  double sum = 0.0;
  for (double v : x) sum += v * v;
  return std::sqrt(sum);
}

}  // namespace latentguard
