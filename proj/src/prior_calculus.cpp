#include "jmsel/prior_calculus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numbers>

namespace jmsel::prior {

FeatureMask::FeatureMask(std::uint32_t bits, int num_features)
    : bits_(bits), num_features_(num_features) {
  if (num_features < 1 || num_features > kMaxFeatures)
    throw std::out_of_range("FeatureMask: feature count out of range");
  if (bits == 0) throw std::invalid_argument("FeatureMask: empty mask");
  if (bits >> num_features) throw std::invalid_argument("FeatureMask: bit beyond feature count");
}

int FeatureMask::cardinality() const { return std::popcount(bits_); }

std::string FeatureMask::to_string() const {
  std::string s(num_features_, '0');
  for (int j = 0; j < num_features_; ++j)
    if (contains(j)) s[j] = '1';
  return s;
}

std::size_t MaskCatalog::position(std::uint32_t bits) const {
  if (bits == 0 || bits >= position_.size())
    throw std::out_of_range("MaskCatalog::position: not a valid mask");
  return position_[bits];
}

std::size_t MaskCatalog::block_size(int cardinality) const {
  return block_begin_.at(cardinality + 1) - block_begin_.at(cardinality);
}

MaskCatalog enumerate_masks(int num_features) {
  if (num_features < 1 || num_features > kMaxFeatures)
    throw std::out_of_range("enumerate_masks: J must be in [1, 16]");
  MaskCatalog cat;
  cat.num_features_ = num_features;
  const std::uint32_t count = (1u << num_features) - 1u;
  cat.masks_.reserve(count);
  cat.position_.assign(count + 1, 0);
  cat.block_begin_.assign(num_features + 2, 0);

  // Lexicographic k-combinations of {0..J-1}.
  std::vector<int> idx;
  for (int k = 1; k <= num_features; ++k) {
    cat.block_begin_[k] = cat.masks_.size();
    idx.resize(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    while (true) {
      std::uint32_t bits = 0;
      for (int i : idx) bits |= 1u << i;
      cat.position_[bits] = cat.masks_.size();
      cat.masks_.emplace_back(bits, num_features);
      int i = k - 1;
      while (i >= 0 && idx[i] == num_features - k + i) --i;
      if (i < 0) break;
      ++idx[i];
      for (int r = i + 1; r < k; ++r) idx[r] = idx[r - 1] + 1;
    }
  }
  cat.block_begin_[num_features + 1] = cat.masks_.size();
  return cat;
}

bool DirichletWeights::ordered() const {
  const int J = num_features();
  if (J < 1) return false;
  for (int k = 0; k < J; ++k)
    if (!(a[k] > 0.0) || !std::isfinite(a[k])) return false;
  for (int k = 0; k + 1 < J; ++k) {
    if (!(per_mask(k + 1) > per_mask(k + 2))) return false;
  }
  return true;
}

double DirichletWeights::per_mask(int cardinality) const {
  const double w = a[cardinality - 1];
  if (variant == WeightVariant::Plain) return w;
  return w / binomial_coefficient(num_features(), cardinality);
}

Eigen::VectorXd build_concentration(const DirichletWeights& w, const MaskCatalog& catalog) {
  if (w.num_features() != catalog.num_features())
    throw InvalidWeights("build_concentration: weight length does not match J");
  // The scaled ordering of BSGS-D I is a prior support constraint, enforced
  // by the sampler; here the weights only need to be positive.
  if (w.variant == WeightVariant::Plain ? !w.ordered() : !(w.a.array() > 0.0).all())
    throw InvalidWeights("build_concentration: weights violate ordering");
  Eigen::VectorXd conc(catalog.size());
  for (std::size_t c = 0; c < catalog.size(); ++c)
    conc[c] = w.per_mask(catalog[c].cardinality());
  return conc;
}

void validate_combination_probs(const Eigen::VectorXd& q, const MaskCatalog& catalog) {
  if (static_cast<std::size_t>(q.size()) != catalog.size())
    throw std::invalid_argument("q has wrong length for catalog");
  for (Eigen::Index c = 0; c < q.size(); ++c)
    if (!(q[c] >= 0.0 && q[c] <= 1.0)) throw std::invalid_argument("q component outside [0,1]");
  if (std::abs(q.sum() - 1.0) > 1e-12) throw std::invalid_argument("q does not sum to 1");
}

Eigen::VectorXd q_to_pi(const Eigen::VectorXd& q, const MaskCatalog& catalog) {
  validate_combination_probs(q, catalog);
  const int J = catalog.num_features();
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(J);
  for (std::size_t c = 0; c < catalog.size(); ++c)
    for (int j = 0; j < J; ++j)
      if (catalog[c].contains(j)) pi[j] += q[c];
  return pi;
}

namespace {

struct Aggregates {
  double total;   // sum of all concentrations
  double single;  // masks containing a given feature
  double pair;    // masks containing two given features
};

Aggregates aggregates(const DirichletWeights& w, int J) {
  if (w.variant != WeightVariant::Plain)
    throw InvalidWeights("closed-form moments are defined for Plain weights");
  if (w.num_features() != J) throw InvalidWeights("weight length does not match J");
  if (!w.ordered()) throw InvalidWeights("weights violate ordering");
  Aggregates g{0.0, 0.0, 0.0};
  for (int k = 1; k <= J; ++k) {
    const double ak = w.a[k - 1];
    g.total += binomial_coefficient(J, k) * ak;
    g.single += binomial_coefficient(J - 1, k - 1) * ak;
    g.pair += binomial_coefficient(J - 2, k - 2) * ak;
  }
  return g;
}

}  // namespace

double pi_mean(const DirichletWeights& w) {
  const auto g = aggregates(w, w.num_features());
  return g.single / g.total;
}

double pi_variance(const DirichletWeights& w, int j, int num_features) {
  if (j < 0 || j >= num_features) throw std::out_of_range("pi_variance: index out of range");
  const auto g = aggregates(w, num_features);
  const double c = 1.0 / (g.total * g.total * (g.total + 1.0));
  return c * g.single * (g.total - g.single);
}

double pi_covariance(const DirichletWeights& w, int j, int k, int num_features) {
  if (num_features < 2) throw std::invalid_argument("pi_covariance: needs J >= 2");
  if (j < 0 || k < 0 || j >= num_features || k >= num_features)
    throw std::out_of_range("pi_covariance: index out of range");
  if (j == k) throw std::invalid_argument("pi_covariance: j == k, use pi_variance");
  const auto g = aggregates(w, num_features);
  const double c = 1.0 / (g.total * g.total * (g.total + 1.0));
  // Cov of two aggregated Dirichlet sums: (A * a(S_j & S_k) - a(S_j) a(S_k)) C
  return c * (g.total * g.pair - g.single * g.single);
}

double pi_covariance_expanded(const DirichletWeights& w, int J) {
  if (J < 2) throw std::invalid_argument("pi_covariance_expanded: needs J >= 2");
  const auto g = aggregates(w, J);
  const double c = 1.0 / (g.total * g.total * (g.total + 1.0));
  auto a = [&](int k) { return w.a[k - 1]; };  // 1-based
  auto bin = binomial_coefficient;
  double acc = -a(1) * a(1);
  double cross = 0.0;
  for (int i = 0; i <= J - 2; ++i)
    for (int j = i + 1; j <= J - 1; ++j) cross += bin(J - 1, i) * bin(J - 1, j) * a(i + 1) * a(j + 1);
  acc -= 2.0 * cross;
  for (int j = 0; j <= J - 3; ++j) {
    const double b = bin(J - 1, j + 1);
    acc -= (b * b - bin(J - 2, j)) * a(j + 2) * a(j + 2);
  }
  for (int j = 0; j <= J - 2; ++j) acc += bin(J - 2, j) * a(j + 2) * (g.total - a(j + 2));
  return c * acc;
}

Eigen::VectorXd cardinality_block_means(const DirichletWeights& w) {
  const int J = w.num_features();
  if (!w.ordered()) throw InvalidWeights("cardinality_block_means: weights violate ordering");
  Eigen::VectorXd block(J);
  for (int k = 1; k <= J; ++k) block[k - 1] = binomial_coefficient(J, k) * w.per_mask(k);
  return block / block.sum();
}

DirichletWeights sample_ordered_weights(Rng& rng, int num_features, WeightVariant variant) {
  DirichletWeights w;
  w.variant = variant;
  w.a.resize(num_features);
  auto half_cauchy = [&] { return std::abs(std::tan(std::numbers::pi * (rand::uniform_open(rng) - 0.5))); };
  if (variant == WeightVariant::Plain) {
    // Sorting i.i.d. draws gives the product density restricted to the
    // ordered cone (the density is exchangeable).
    do {
      for (int k = 0; k < num_features; ++k) w.a[k] = half_cauchy();
      std::sort(w.a.data(), w.a.data() + num_features, std::greater<>());
    } while (!w.ordered());
    return w;
  }
  for (long attempt = 0; attempt < 100000000L; ++attempt) {
    for (int k = 0; k < num_features; ++k) w.a[k] = half_cauchy();
    if (w.ordered()) return w;
  }
  throw NumericError("sample_ordered_weights: rejection sampler did not accept");
}

NegativityReport negativity_scan(int num_features, int trials, std::uint64_t seed) {
  if (num_features < 2) throw std::invalid_argument("negativity_scan: needs J >= 2");
  if (num_features > kMaxFeatures) throw std::out_of_range("negativity_scan: J too large");
  NegativityReport rep;
  rep.num_features = num_features;
  rep.trials = trials;
  rep.max_covariance = -std::numeric_limits<double>::infinity();
  Rng rng = make_stream(seed, 0x6e6567);
  for (int t = 0; t < trials; ++t) {
    const auto w = sample_ordered_weights(rng, num_features, WeightVariant::Plain);
    for (int j = 0; j < num_features; ++j)
      for (int k = j + 1; k < num_features; ++k) {
        const double cov = pi_covariance(w, j, k, num_features);
        ++rep.pairs_checked;
        rep.max_covariance = std::max(rep.max_covariance, cov);
        if (cov >= 0.0) {
          ++rep.violations;
          if (rep.examples.size() < 10) rep.examples.push_back({w.a, j, k, cov});
        }
      }
  }
  return rep;
}

}  // namespace jmsel::prior
