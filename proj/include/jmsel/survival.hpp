#pragma once

// Proportional-hazards submodel linked to the longitudinal trajectories
// through value, slope, area and threshold features.

#include "jmsel/data.hpp"
#include "jmsel/longitudinal.hpp"
#include "jmsel/model_spec.hpp"
#include "jmsel/numeric.hpp"

#include <Eigen/Dense>

#include <array>
#include <span>
#include <vector>

namespace jmsel::survival {

// Clamped knot vector: degree + 1 copies of each boundary around the
// interior knots.
Eigen::VectorXd clamped_knots(std::span<const double> interior, double lo, double hi, int degree);

// Values of all knots.size() - degree - 1 B-spline basis functions at t
// (Cox-de Boor). Times outside the span are clamped with a warning.
Eigen::VectorXd bspline_basis(double t, const Eigen::VectorXd& knots, int degree);

// Log baseline hazard layout: log h0(t) = c_0 + sum_{q>=1} c_q B_{q+1}(t).
// The first spline function is dropped because the basis sums to one.
class BaselineLayout {
 public:
  BaselineLayout() = default;  // constant baseline
  BaselineLayout(Eigen::VectorXd knots, int degree);
  // Interior knots at quantiles of the event times, boundaries [lo, hi].
  static BaselineLayout from_event_times(std::vector<double> event_times, double lo, double hi,
                                         int num_coeffs, int degree);

  int num_coeffs() const { return 1 + num_spline_; }
  int degree() const { return degree_; }
  const Eigen::VectorXd& knots() const { return knots_; }
  bool constant() const { return num_spline_ == 0; }
  // Distinct interior knot values strictly inside (lo, hi).
  std::vector<double> breakpoints(double lo, double hi) const;

  // out[0..num_coeffs()) = (1, B_2(t), ..., B_{Q+1}(t)).
  void design_row(double t, double* out) const;
  Eigen::VectorXd design(double t) const;
  double log_value(double t, const Eigen::VectorXd& coeffs) const;
  double log_value(double t, const double* coeffs) const;

 private:
  Eigen::VectorXd knots_;
  int degree_ = 0;
  int num_spline_ = 0;
};

double feature_value(const longitudinal::LegendreBasis& basis, const Eigen::VectorXd& theta, double t);
double feature_slope(const longitudinal::LegendreBasis& basis, const Eigen::VectorXd& theta, double t);
double feature_area(const longitudinal::LegendreBasis& basis, const Eigen::VectorXd& theta, double t0,
                    double t, const QuadratureRule& rule);
// 1 if the trajectory is strictly above `level` at t.
double feature_threshold(const longitudinal::LegendreBasis& basis, const Eigen::VectorXd& theta,
                         double level, double t);

struct HazardParams {
  Eigen::VectorXd baseline;  // layout coefficients
  Eigen::VectorXd gamma;     // baseline covariate effects
  Eigen::MatrixXd alpha;     // G x J, on the standardized feature scale
};

// Everything needed to evaluate a subject's hazard given its trajectory
// coefficients theta ((order + 1) x G, beta_g + b_ig in column g).
class HazardModel {
 public:
  HazardModel(longitudinal::LegendreBasis basis, std::vector<FeatureKind> features,
              std::vector<double> thresholds, double area_origin, BaselineLayout baseline,
              int quad_nodes);

  int num_risk_factors() const { return static_cast<int>(thresholds_.size()); }
  int num_features() const { return static_cast<int>(features_.size()); }
  // Baseline coefficients followed by the G x J features (g-major).
  int num_columns() const { return baseline_.num_coeffs() + num_risk_factors() * num_features(); }
  int feature_column(int g, int j) const { return baseline_.num_coeffs() + g * num_features() + j; }

  const longitudinal::LegendreBasis& basis() const { return basis_; }
  const BaselineLayout& baseline() const { return baseline_; }
  const std::vector<FeatureKind>& features() const { return features_; }
  const std::vector<double>& thresholds() const { return thresholds_; }
  double area_origin() const { return area_origin_; }
  int quad_nodes() const { return quad_nodes_; }

  // Standardized feature = (raw - center) / scale; identity by default.
  void set_scaling(const Eigen::MatrixXd& center, const Eigen::MatrixXd& scale);
  const Eigen::MatrixXd& center() const { return center_; }
  const Eigen::MatrixXd& scale() const { return scale_; }

  // Raw (unstandardized) features, out[g * J + j].
  void raw_features(const Eigen::MatrixXd& theta, double t, double* out) const;
  // Full design row at t: baseline design then standardized features.
  void design_row(const Eigen::MatrixXd& theta, double t, double* out) const;

  // Quadrature nodes/weights on [lo, hi], split at interior spline knots and
  // at threshold crossings so every piece has a smooth integrand.
  void nodes(const Eigen::MatrixXd& theta, double lo, double hi, int per_segment,
             std::vector<double>& t, std::vector<double>& w) const;

  double log_hazard(const Eigen::MatrixXd& theta, const std::vector<double>& covariates,
                    const HazardParams& p, double t) const;
  // Integral of the hazard over [lo, hi]; per_segment = 0 uses quad_nodes().
  double cumulative_hazard(const Eigen::MatrixXd& theta, const std::vector<double>& covariates,
                           const HazardParams& p, double lo, double hi, int per_segment = 0) const;
  // event * log h(T) - (H(T) - H(entry)).
  double survival_loglik(const SurvivalOutcome& outcome, const Eigen::MatrixXd& theta,
                         const HazardParams& p) const;
  // Same from packed coefficients and covariate offset; only risk factors
  // with a nonzero coefficient are evaluated.
  double survival_loglik(const SurvivalOutcome& outcome, const Eigen::MatrixXd& theta,
                         const Eigen::VectorXd& coef, double offset) const;

 private:
  struct Moments {
    std::array<double, 3> x, dx, ax;  // basis, derivative, antiderivative
  };
  Moments moments(double t) const;
  void group_features(const Eigen::MatrixXd& theta, int g, const Moments& m, double* out) const;
  // Standardized association terms of one risk factor folded into weights
  // on its raw value, slope, area and threshold indicator.
  struct GroupWeights {
    const double* theta;
    double threshold;
    double value = 0.0, slope = 0.0, area = 0.0, step = 0.0;
  };
  // Fills `out` for risk factors with a nonzero coefficient; returns the
  // constant from centering.
  double fold(const Eigen::MatrixXd& theta, const Eigen::VectorXd& coef, std::vector<GroupWeights>& out) const;
  double linear_predictor(double t, const Eigen::VectorXd& coef, double c0,
                          std::span<const GroupWeights> groups) const;

  longitudinal::LegendreBasis basis_;
  std::vector<FeatureKind> features_;
  std::vector<double> thresholds_;
  double area_origin_;
  BaselineLayout baseline_;
  int quad_nodes_;
  bool has_threshold_ = false;
  Eigen::MatrixXd center_, scale_, inv_scale_;
};

// Per-subject design over the quadrature nodes plus one row at the observed
// time, with the current linear predictor. Supports cheap log-likelihood
// deltas for changes in single coefficients or the covariate offset.
struct SubjectCache {
  Eigen::MatrixXd design;  // rows: nodes, then the observed time
  Eigen::ArrayXd weight;   // per node
  Eigen::ArrayXd eta;      // design * coef, per row
  Eigen::ArrayXd hazard;   // weight * exp(eta + offset), per node
  double offset = 0.0;     // w_i' gamma
  double cumhaz = 0.0;
  double loglik = 0.0;
  bool event = false;

  Eigen::Index num_nodes() const { return weight.size(); }
  double eta_at_time() const { return eta[eta.size() - 1]; }

  void build(const HazardModel& model, const SurvivalOutcome& outcome, const Eigen::MatrixXd& theta,
             const Eigen::VectorXd& coef, double offset);
  void refresh();  // recompute hazard, cumhaz, loglik from eta and offset

  double delta(std::span<const int> cols, std::span<const double> deltas) const;
  void commit(std::span<const int> cols, std::span<const double> deltas);
  double delta_offset(double d) const;
  void commit_offset(double d);
};

// Pack baseline and alpha into the column order used by HazardModel.
Eigen::VectorXd pack_coefficients(const HazardModel& model, const HazardParams& p);

}  // namespace jmsel::survival
