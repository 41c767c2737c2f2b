#pragma once

// Metropolis-within-Gibbs sampler for the joint longitudinal-survival model.

#include "jmsel/data.hpp"
#include "jmsel/longitudinal.hpp"
#include "jmsel/model_spec.hpp"
#include "jmsel/numeric.hpp"
#include "jmsel/selection.hpp"
#include "jmsel/survival.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace jmsel::mcmc {

struct ChainState {
  longitudinal::FixedEffects fe;
  longitudinal::RandomEffects re;
  longitudinal::BlockCovariance cov;
  Eigen::VectorXd sigma2;    // per risk factor
  Eigen::VectorXd baseline;  // log baseline hazard coefficients
  Eigen::VectorXd gamma;     // baseline covariates
  selection::SelectionState sel;
  long iteration = 0;

  // (order + 1) x G trajectory coefficients beta_g + b_ig.
  Eigen::MatrixXd theta(std::size_t i) const;
  Eigen::MatrixXd beta_matrix() const;
  void validate() const;
};

// Sufficient statistics of one subject's observations of one risk factor.
struct LongitudinalDesign {
  Eigen::MatrixXd xtx;
  Eigen::VectorXd xty;
  double yty = 0.0;
  int n = 0;
};

// Data-dependent layout of a fit: Legendre domain, thresholds, baseline
// knots and feature standardization, plus cached longitudinal designs.
class JointModel {
 public:
  JointModel(ModelSpec spec, const Dataset& data);

  const ModelSpec& spec() const { return spec_; }
  const Dataset& data() const { return *data_; }
  const longitudinal::LegendreBasis& basis() const { return basis_; }
  const survival::HazardModel& hazard() const { return *hazard_; }
  const FeatureScaling& scaling() const { return scaling_; }
  int num_risk_factors() const { return spec_.num_risk_factors; }
  int num_features() const { return spec_.num_features(); }
  int basis_size() const { return basis_.size(); }
  int num_covariates() const { return static_cast<int>(data_->covariate_names.size()); }
  std::size_t num_subjects() const { return data_->subjects.size(); }
  const LongitudinalDesign& design(std::size_t i, int g) const { return designs_[i * num_risk_factors() + g]; }

  // Least-squares beta, b = 0, identity D, selection layer at its initial values.
  ChainState initial_state() const;

 private:
  ModelSpec spec_;
  const Dataset* data_;
  longitudinal::LegendreBasis basis_;
  std::unique_ptr<survival::HazardModel> hazard_;
  FeatureScaling scaling_;
  std::vector<LongitudinalDesign> designs_;
  std::vector<Eigen::VectorXd> ls_beta_;
};

struct SamplerOptions {
  bool longitudinal = true;  // include the longitudinal likelihood
  bool survival = true;      // include the survival likelihood
  selection::SelectionOptions selection;
};

class Sampler {
 public:
  Sampler(const JointModel& model, SamplerOptions opts = {});

  // Must be called before the first sweep and after any external state edit.
  void attach(ChainState& s);
  void sweep(ChainState& s, Rng& rng);
  void set_adapt(bool on);

  double survival_loglik() const;
  std::vector<std::pair<std::string, double>> acceptance_rates() const;

  // Individual blocks, in sweep order.
  void update_beta(ChainState& s, int g, Rng& rng);
  void update_random_effects(ChainState& s, std::size_t i, Rng& rng);
  void update_covariance(ChainState& s, Rng& rng);
  void update_sigma(ChainState& s, int g, Rng& rng);
  void update_baseline(ChainState& s, Rng& rng);
  void update_gamma(ChainState& s, Rng& rng);

 private:
  class AlphaContext;
  double covariate_offset(const ChainState& s, std::size_t i) const;
  void refresh_dinv(const ChainState& s);
  void refresh_caches(const ChainState& s);
  Eigen::VectorXd survival_coef(const ChainState& s) const;
  bool linked(int g) const;  // some alpha_gj nonzero

  const JointModel& m_;
  SamplerOptions opts_;
  selection::SelectionSampler sel_sampler_;
  std::vector<survival::SubjectCache> cache_;
  std::vector<double> trial_;
  std::vector<char> stale_;  // design out of date; loglik is current
  Eigen::VectorXd coef_;
  std::vector<Eigen::MatrixXd> dinv_;  // inverse covariance blocks
  bool adapt_ = false;
  std::vector<selection::AdaptiveStep> baseline_step_, gamma_step_;
  long beta_proposed_ = 0, beta_accepted_ = 0, b_proposed_ = 0, b_accepted_ = 0;
};

// Thinned draws plus run metadata.
struct ChainOutput {
  std::vector<std::string> columns;
  Eigen::MatrixXd draws;  // draws x columns
  std::vector<std::pair<std::string, double>> acceptance;
  double t_hat = 0.0;  // slab rate used by the final chain
  std::vector<double> pilot_inv_s2;  // post-burn-in pilot draws of 1/s^2 behind t_hat
  std::uint64_t seed = 0;
  std::string spec_hash;
  std::string build_id;
  FeatureScaling scaling;
  double wall_seconds = 0.0;

  int column(const std::string& name) const;  // throws std::out_of_range
  bool has_column(const std::string& name) const;
  Eigen::VectorXd col(const std::string& name) const { return draws.col(column(name)); }
  Eigen::Index num_draws() const { return draws.rows(); }
  // Content hash over draws and metadata, excluding wall-clock time.
  std::string hash() const;
};

// Column names recorded for a model, in order.
std::vector<std::string> output_columns(const JointModel& model);
void record_draw(const JointModel& model, const ChainState& s, double* row);

std::string build_id();

struct RunOptions {
  SamplerOptions sampler;
  // Called after every sweep of the final chain with the iteration index.
  std::function<void(long, const ChainState&)> on_sweep;
};

// Full run: optional pilot for the empirical slab rate (BSGS family), then
// the final chain warm-started from the pilot's last state.
ChainOutput run_chain(const ModelSpec& spec, const Dataset& data, const ChainSettings& settings,
                      std::uint64_t seed, const RunOptions& opts = {});

}  // namespace jmsel::mcmc
