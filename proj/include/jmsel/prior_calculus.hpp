#pragma once

// Combinatorics of the Dirichlet-structured feature-selection prior:
// feature masks, Dirichlet concentration vectors, the mapping from
// combination probabilities q to marginal feature inclusion probabilities pi,
// and closed-form moments of pi.

#include "jmsel/numeric.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace jmsel::prior {

inline constexpr int kMaxFeatures = 16;

struct InvalidWeights : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Nonempty subset of {0..J-1}; bit j set <=> feature j selected.
class FeatureMask {
 public:
  FeatureMask(std::uint32_t bits, int num_features);

  std::uint32_t bits() const { return bits_; }
  int num_features() const { return num_features_; }
  int cardinality() const;
  bool contains(int j) const { return (bits_ >> j) & 1u; }
  // "100" = only the first feature selected.
  std::string to_string() const;

  friend bool operator==(const FeatureMask&, const FeatureMask&) = default;

 private:
  std::uint32_t bits_;
  int num_features_;
};

// All 2^J - 1 masks, ordered by ascending cardinality and, within a
// cardinality block, lexicographically by feature index.
class MaskCatalog {
 public:
  int num_features() const { return num_features_; }
  std::size_t size() const { return masks_.size(); }
  const FeatureMask& operator[](std::size_t c) const { return masks_[c]; }
  auto begin() const { return masks_.begin(); }
  auto end() const { return masks_.end(); }

  // Catalog position of a mask given by its bit pattern.
  std::size_t position(std::uint32_t bits) const;
  std::size_t block_begin(int cardinality) const { return block_begin_.at(cardinality); }
  std::size_t block_size(int cardinality) const;

  friend MaskCatalog enumerate_masks(int num_features);

 private:
  int num_features_ = 0;
  std::vector<FeatureMask> masks_;
  std::vector<std::size_t> block_begin_;  // indexed by cardinality, size J + 2
  std::vector<std::uint32_t> position_;   // indexed by bits
};

MaskCatalog enumerate_masks(int num_features);

enum class WeightVariant { Plain, BinomialScaled };

// Per-cardinality weights a_1..a_J (a[0] is the singleton weight).
struct DirichletWeights {
  Eigen::VectorXd a;
  WeightVariant variant = WeightVariant::Plain;

  int num_features() const { return static_cast<int>(a.size()); }
  // Plain: a strictly decreasing and positive. BinomialScaled: a_k / C(J,k)
  // strictly decreasing and positive.
  bool ordered() const;
  // Per-mask concentration for a mask of the given cardinality.
  double per_mask(int cardinality) const;
};

Eigen::VectorXd build_concentration(const DirichletWeights& w, const MaskCatalog& catalog);

// pi_j = sum of q_c over masks containing feature j.
Eigen::VectorXd q_to_pi(const Eigen::VectorXd& q, const MaskCatalog& catalog);
void validate_combination_probs(const Eigen::VectorXd& q, const MaskCatalog& catalog);

// Moments of pi under q ~ Dirichlet(build_concentration(w)), Plain weights.
double pi_mean(const DirichletWeights& w);
double pi_variance(const DirichletWeights& w, int j, int num_features);
double pi_covariance(const DirichletWeights& w, int j, int k, int num_features);
// Same covariance evaluated term-by-term from the expanded double-sum form.
double pi_covariance_expanded(const DirichletWeights& w, int num_features);

// Prior mass of each cardinality block, E[sum of q over block k], k = 1..J
// (element k-1).
Eigen::VectorXd cardinality_block_means(const DirichletWeights& w);

struct NegativityViolation {
  Eigen::VectorXd weights;
  int j = 0;
  int k = 0;
  double covariance = 0.0;
};

struct NegativityReport {
  int num_features = 0;
  int trials = 0;
  long pairs_checked = 0;
  long violations = 0;
  double max_covariance = 0.0;  // closest to (or above) zero
  std::vector<NegativityViolation> examples;  // first few violations
};

// Draw `trials` ordered weight vectors (sorted i.i.d. half-Cauchy) and check
// the sign of every pairwise covariance.
NegativityReport negativity_scan(int num_features, int trials, std::uint64_t seed);

// Ordered draw from prod C+(0,1) restricted to the variant's ordering.
DirichletWeights sample_ordered_weights(Rng& rng, int num_features, WeightVariant variant);

}  // namespace jmsel::prior
