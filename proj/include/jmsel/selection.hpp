#pragma once

// Bi-level spike-and-slab selection layer: BSGS-D, BSGS-D I, original BSGS
// and a standard spike-and-slab prior, sampled Kuo-Mallick style (slab
// values are retained while excluded and refreshed from their priors).

#include "jmsel/model_spec.hpp"
#include "jmsel/numeric.hpp"
#include "jmsel/prior_calculus.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace jmsel::selection {

// The part of the model likelihood that depends on the association
// coefficients, seen one risk factor (row of alpha) at a time.
class LikelihoodContext {
 public:
  virtual ~LikelihoodContext() = default;
  // Log-likelihood change when row g of alpha moves from `from` to `to`.
  virtual double delta(int g, const Eigen::VectorXd& from, const Eigen::VectorXd& to) = 0;
  virtual void commit(int g, const Eigen::VectorXd& from, const Eigen::VectorXd& to) = 0;
};

// Flat likelihood; turns the sampler into a prior sampler.
class NullLikelihood final : public LikelihoodContext {
 public:
  double delta(int, const Eigen::VectorXd&, const Eigen::VectorXd&) override { return 0.0; }
  void commit(int, const Eigen::VectorXd&, const Eigen::VectorXd&) override {}
};

struct SelectionState {
  PriorKind prior = PriorKind::BsgsD;
  int num_groups = 0;
  int num_features = 0;

  std::vector<std::uint8_t> group;   // z_g (always 1 under SS)
  std::vector<std::uint32_t> bits;   // feature bits; the mask M_g under BSGS-D variants
  Eigen::MatrixXd tau;               // retained slab tau_gj (BSGS family)
  Eigen::MatrixXd d;                 // retained slab d_gj (BSGS family)
  Eigen::MatrixXd slab;              // retained slab alpha_gj (SS)
  Eigen::VectorXd group_prob;        // pi_g
  Eigen::MatrixXd feature_prob;      // pi_gj
  std::vector<Eigen::VectorXd> log_q;            // BSGS-D variants
  std::vector<prior::DirichletWeights> weights;  // BSGS-D variants
  double inv_s2 = 1.0;  // 1 / s^2
  double t_rate = 1.0;
  double ss_precision = 1.0;  // tau^2 of the SS slab

  bool included(int g, int j) const;
  bool group_included(int g) const;
  // Effective tau (0 unless included) and d (0 unless the group is active).
  double tau_effective(int g, int j) const;
  double d_effective(int g, int j) const;
  double alpha(int g, int j) const;
  Eigen::VectorXd alpha_row(int g) const;
  Eigen::MatrixXd alpha() const;
  int cardinality(int g) const;
  void validate() const;
};

SelectionState initial_state(PriorKind prior, int num_groups, int num_features, const Hyperparameters& h);

// Initial Dirichlet weights: a_k = J - k + 1, scaled by C(J,k)/J for BSGS-D I.
prior::DirichletWeights initial_weights(PriorKind prior, int num_features);

// Random-walk scale with Robbins-Monro adaptation toward a target
// acceptance rate.
struct AdaptiveStep {
  double log_scale = std::log(0.5);
  long proposed = 0;
  long accepted = 0;
  long adaptations = 0;

  double scale() const { return std::exp(log_scale); }
  void record(bool acc, bool adapt, double target = 0.44);
  double rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
};

struct SelectionOptions {
  bool fix_dirichlet_weights = false;
  bool fix_slab_variance = false;
};

class SelectionSampler {
 public:
  SelectionSampler(PriorKind prior, int num_groups, int num_features, const Hyperparameters& h,
                   SelectionOptions opts = {});

  void sweep(SelectionState& s, LikelihoodContext& lik, Rng& rng);
  void set_adapt(bool on) { adapt_ = on; }

  // Individual full-conditional updates, in sweep order.
  void update_group_indicator(SelectionState& s, int g, LikelihoodContext& lik, Rng& rng);
  void update_feature(SelectionState& s, int g, int j, LikelihoodContext& lik, Rng& rng);
  void update_q_and_weights(SelectionState& s, int g, Rng& rng);
  void update_inclusion_probs(SelectionState& s, Rng& rng);
  void update_slab_variance(SelectionState& s, Rng& rng);

  // Named acceptance rates of every Metropolis step.
  std::vector<std::pair<std::string, double>> acceptance_rates() const;

  const prior::MaskCatalog& catalog() const { return catalog_; }

 private:
  double prior_log_odds(double p) const;
  void update_tau(SelectionState& s, int g, int j, LikelihoodContext& lik, Rng& rng);
  void update_d(SelectionState& s, int g, int j, LikelihoodContext& lik, Rng& rng);
  void update_slab(SelectionState& s, int g, int j, LikelihoodContext& lik, Rng& rng);
  void update_weights(SelectionState& s, int g, Rng& rng);
  // Accept/reject a proposed alpha row; commits through `lik` on acceptance.
  bool metropolis(int g, const Eigen::VectorXd& from, const Eigen::VectorXd& to,
                  double log_prior_ratio, LikelihoodContext& lik, Rng& rng);

  PriorKind prior_;
  int G_, J_;
  Hyperparameters h_;
  SelectionOptions opts_;
  prior::MaskCatalog catalog_;
  bool adapt_ = false;
  // indexed g * J + j
  std::vector<AdaptiveStep> tau_step_, d_step_, slab_step_, weight_step_;
};

// t = 1 / mean(1/s^2) over stored pilot draws.
double empirical_t_update(std::span<const double> inv_s2_draws);

}  // namespace jmsel::selection
