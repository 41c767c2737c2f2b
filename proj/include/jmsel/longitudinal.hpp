#pragma once

// Mixed-effects longitudinal submodel with a shifted Legendre basis shared by
// the fixed and random effects.

#include "jmsel/data.hpp"
#include "jmsel/numeric.hpp"

#include <Eigen/Dense>

#include <vector>

namespace jmsel::longitudinal {

// (1, P_1(t), ..., P_order(t)) with P_k shifted to [0, a_max].
Eigen::VectorXd legendre_basis(double age, double a_max, int order);
Eigen::VectorXd legendre_basis_derivative(double age, double a_max, int order);

class LegendreBasis {
 public:
  LegendreBasis(double a_max, int order);

  double a_max() const { return a_max_; }
  int order() const { return order_; }
  int size() const { return order_ + 1; }

  Eigen::VectorXd value(double t) const { return legendre_basis(t, a_max_, order_); }
  Eigen::VectorXd derivative(double t) const { return legendre_basis_derivative(t, a_max_, order_); }
  // Componentwise integral of the basis over [t0, t] by Gauss-Legendre.
  Eigen::VectorXd integral(double t0, double t, const QuadratureRule& rule) const;
  // Closed-form antiderivative difference; used to cross-check `integral`.
  Eigen::VectorXd integral_exact(double t0, double t) const;

  // Ages t in (lo, hi) where theta . basis(t) == level, ascending.
  std::vector<double> crossings(const Eigen::VectorXd& theta, double level, double lo,
                                double hi) const;

 private:
  double a_max_;
  int order_;
};

struct FixedEffects {
  std::vector<Eigen::VectorXd> beta;  // [g], length order + 1
};

struct RandomEffects {
  // [i] is (order + 1) x G: row p holds the order-p effects of every risk factor
  std::vector<Eigen::MatrixXd> b;
};

// D = Diag(D_0, ..., D_P), each G x G, acting on the order-p rows of b_i.
struct BlockCovariance {
  std::vector<Eigen::MatrixXd> blocks;

  void validate() const;
  // Dense matrix in the (p-major, g-minor) ordering of vec(b_i^T).
  Eigen::MatrixXd dense() const;
};

struct ErrorScales {
  Eigen::VectorXd sigma;
};

double mu(const LegendreBasis& basis, const Eigen::VectorXd& beta_g, const Eigen::VectorXd& b_ig,
          double t);
double mu_derivative(const LegendreBasis& basis, const Eigen::VectorXd& beta_g,
                     const Eigen::VectorXd& b_ig, double t);

double longitudinal_loglik(const Dataset& data, const LegendreBasis& basis, const FixedEffects& fe,
                           const RandomEffects& re, const ErrorScales& scales);

// Sum over subjects of log N(b_i | 0, D), evaluated block by block.
double random_effects_loglik(const RandomEffects& re, const BlockCovariance& cov);

}  // namespace jmsel::longitudinal
