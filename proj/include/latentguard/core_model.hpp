#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <algorithm>
#include <unordered_map>
#include <span>
#include <string>
#include <vector>

namespace latentguard {

using Vector = std::vector<double>;

// Simulated wall-clock time in seconds.
using Timestamp = double;

// Shape of the factorization model.
//
// A user vector of length N is assembled from K per-feature vectors of length
// d. Every unordered pair of user feature types owns `o` slots of the full
// vector, every single feature type owns `s` slots. Layout of the N-vector:
// all pair blocks (i, j), i < j, in lexicographic order, followed by the
// single blocks 0..K-1. Layout of a feature's d-vector: its K-1 pair
// sub-blocks ordered by partner index, followed by its own single block.
class FeatureConfig {
 public:
  // Where a coordinate of a user feature vector lands in the full vector, and
  // which coordinate of which other feature it is multiplied with (if any).
  struct SlotLink {
    std::size_t slot = 0;
    int partner = -1;
    std::size_t partner_local = 0;
  };

  FeatureConfig(int num_user_features, int pair_entries, int single_entries,
                std::vector<std::string> ad_feature_types = {});

  int num_user_features() const { return num_user_features_; }
  int pair_entries() const { return pair_entries_; }
  int single_entries() const { return single_entries_; }
  const std::vector<std::string>& ad_feature_types() const {
    return ad_feature_types_;
  }
  int num_ad_features() const {
    return static_cast<int>(ad_feature_types_.size());
  }

  // N = C(K,2)·o + K·s
  std::size_t full_length() const { return full_length_; }
  // d = (K-1)·o + s
  std::size_t user_length() const { return user_length_; }

  const SlotLink& link(int feature, std::size_t local) const {
    return links_[static_cast<std::size_t>(feature) * user_length_ + local];
  }

  // Index of the first slot of the pair block (i, j), i < j.
  std::size_t pair_block_offset(int i, int j) const;
  std::size_t single_block_offset(int k) const;

  friend bool operator==(const FeatureConfig& a, const FeatureConfig& b) {
    return a.num_user_features_ == b.num_user_features_ &&
           a.pair_entries_ == b.pair_entries_ &&
           a.single_entries_ == b.single_entries_ &&
           a.ad_feature_types_ == b.ad_feature_types_;
  }

 private:
  int num_user_features_;
  int pair_entries_;
  int single_entries_;
  std::vector<std::string> ad_feature_types_;
  std::size_t full_length_;
  std::size_t user_length_;
  std::vector<SlotLink> links_;
};

enum class FeatureRole : std::uint8_t { kUser = 0, kAd = 1 };

// Identity of one feature value, e.g. (user, type 1, value 7) for "gender =
// female" or (ad, type 0, value 1234) for a creative id.
struct FeatureValueId {
  FeatureRole role = FeatureRole::kUser;
  std::uint16_t type = 0;
  std::uint64_t value = 0;

  static FeatureValueId user(int type, std::uint64_t value) {
    return {FeatureRole::kUser, static_cast<std::uint16_t>(type), value};
  }
  static FeatureValueId ad(int type, std::uint64_t value) {
    return {FeatureRole::kAd, static_cast<std::uint16_t>(type), value};
  }

  bool is_user() const { return role == FeatureRole::kUser; }

  auto operator<=>(const FeatureValueId&) const = default;
};

std::string to_string(const FeatureValueId& id);

struct FeatureValueIdHash {
  std::size_t operator()(const FeatureValueId& id) const noexcept {
    std::uint64_t z = id.value * 0x9e3779b97f4a7c15ULL ^
                      (static_cast<std::uint64_t>(id.type) << 8 |
                       static_cast<std::uint64_t>(id.role));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return static_cast<std::size_t>(z ^ (z >> 31));
  }
};

// Hash maps keyed by feature value. Iteration order is unspecified; anything
// order-sensitive goes through sorted_keys.
template <typename T>
using FeatureMap = std::unordered_map<FeatureValueId, T, FeatureValueIdHash>;

template <typename T>
std::vector<FeatureValueId> sorted_keys(const FeatureMap<T>& map) {
  std::vector<FeatureValueId> keys;
  keys.reserve(map.size());
  for (const auto& kv : map) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());
  return keys;
}

struct LatentVector {
  Vector values;
  std::uint64_t update_count = 0;
  Timestamp last_seen = 0.0;
};

struct ModelParams {
  explicit ModelParams(FeatureConfig cfg) : config(std::move(cfg)) {}

  double bias = 0.0;
  FeatureMap<LatentVector> vectors;
  FeatureConfig config;

  // Required length of the vector owned by `id`: d for user feature values,
  // N for ad feature values.
  std::size_t length_for(const FeatureValueId& id) const {
    return id.is_user() ? config.user_length() : config.full_length();
  }

  // Throws LifecycleError when absent.
  const LatentVector& at(const FeatureValueId& id) const;
  LatentVector& at(const FeatureValueId& id);
};

// Feature `feature_type`'s vector padded with 1s to the full layout.
Vector expand_user_feature(std::span<const double> vec, int feature_type,
                           const FeatureConfig& cfg);

struct TypedVector {
  int feature_type;
  std::span<const double> values;
};

// Entrywise product of the K expanded feature vectors. Requires exactly one
// vector per user feature type.
Vector build_user_vector(std::span<const TypedVector> feature_vecs,
                         const FeatureConfig& cfg);

// Componentwise sum.
Vector build_ad_vector(std::span<const Vector> ad_vecs);

double logit(std::span<const double> user_vec, std::span<const double> ad_vec,
             double bias);

// Sigmoid; throws NumericError on non-finite input.
double pctr(double logit_value);

double msqr(std::span<const double> x);
double inf_norm(std::span<const double> x);
double l2_norm(std::span<const double> x);

}  // namespace latentguard
