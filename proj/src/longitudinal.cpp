#include "jmsel/longitudinal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace jmsel::longitudinal {

namespace {

void check_domain(double age, double a_max, int order) {
  if (order != 1 && order != 2) throw DomainError("legendre basis: order must be 1 or 2");
  if (!(a_max > 0.0)) throw DomainError("legendre basis: a_max must be positive");
  // small slack for quadrature nodes computed at the boundary
  const double slack = 1e-9 * a_max;
  if (!(age >= -slack && age <= a_max + slack))
    throw DomainError("legendre basis: age outside [0, a_max]");
}

}  // namespace

Eigen::VectorXd legendre_basis(double age, double a_max, int order) {
  check_domain(age, a_max, order);
  const double u = 2.0 * age / a_max - 1.0;
  Eigen::VectorXd x(order + 1);
  x[0] = 1.0;
  x[1] = u;
  if (order == 2) x[2] = 0.5 * (3.0 * u * u - 1.0);
  return x;
}

Eigen::VectorXd legendre_basis_derivative(double age, double a_max, int order) {
  check_domain(age, a_max, order);
  const double u = 2.0 * age / a_max - 1.0;
  Eigen::VectorXd dx(order + 1);
  dx[0] = 0.0;
  dx[1] = 2.0 / a_max;
  if (order == 2) dx[2] = 6.0 * u / a_max;
  return dx;
}

LegendreBasis::LegendreBasis(double a_max, int order) : a_max_(a_max), order_(order) {
  check_domain(0.0, a_max, order);
}

Eigen::VectorXd LegendreBasis::integral(double t0, double t, const QuadratureRule& rule) const {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(size());
  if (t == t0) return acc;
  const double half = 0.5 * (t - t0), mid = 0.5 * (t + t0);
  for (std::size_t k = 0; k < rule.nodes.size(); ++k)
    acc += rule.weights[k] * value(mid + half * rule.nodes[k]);
  return half * acc;
}

Eigen::VectorXd LegendreBasis::integral_exact(double t0, double t) const {
  // With u = 2t/a - 1, dt = a/2 du.
  auto anti = [&](double s) {
    const double u = 2.0 * s / a_max_ - 1.0;
    Eigen::VectorXd v(size());
    v[0] = s;
    v[1] = 0.25 * a_max_ * u * u;
    if (order_ == 2) v[2] = 0.25 * a_max_ * (u * u * u - u);
    return v;
  };
  return anti(t) - anti(t0);
}

std::vector<double> LegendreBasis::crossings(const Eigen::VectorXd& theta, double level, double lo,
                                             double hi) const {
  // theta . x(u) - level as a polynomial c0 + c1 u + c2 u^2
  const double c2 = order_ == 2 ? 1.5 * theta[2] : 0.0;
  const double c1 = theta[1];
  const double c0 = theta[0] - (order_ == 2 ? 0.5 * theta[2] : 0.0) - level;
  std::vector<double> roots_u;
  const double scale = std::abs(c0) + std::abs(c1) + std::abs(c2);
  if (std::abs(c2) <= 1e-14 * scale) {
    if (c1 != 0.0) roots_u.push_back(-c0 / c1);
  } else {
    const double disc = c1 * c1 - 4.0 * c2 * c0;
    if (disc > 0.0) {
      const double sq = std::sqrt(disc);
      const double qv = -0.5 * (c1 + std::copysign(sq, c1));
      roots_u.push_back(qv / c2);
      if (qv != 0.0) roots_u.push_back(c0 / qv);
    }
  }
  std::vector<double> out;
  for (double u : roots_u) {
    const double t = 0.5 * (u + 1.0) * a_max_;
    if (t > lo && t < hi) out.push_back(t);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void BlockCovariance::validate() const {
  for (const auto& blk : blocks) {
    if (blk.rows() != blk.cols()) throw std::invalid_argument("BlockCovariance: non-square block");
    if ((blk - blk.transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw std::invalid_argument("BlockCovariance: block not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(blk, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0))
      throw NumericError("BlockCovariance: block not positive definite");
  }
}

Eigen::MatrixXd BlockCovariance::dense() const {
  Eigen::Index dim = 0;
  for (const auto& blk : blocks) dim += blk.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::Index off = 0;
  for (const auto& blk : blocks) {
    out.block(off, off, blk.rows(), blk.cols()) = blk;
    off += blk.rows();
  }
  return out;
}

double mu(const LegendreBasis& basis, const Eigen::VectorXd& beta_g, const Eigen::VectorXd& b_ig,
          double t) {
  return basis.value(t).dot(beta_g + b_ig);
}

double mu_derivative(const LegendreBasis& basis, const Eigen::VectorXd& beta_g,
                     const Eigen::VectorXd& b_ig, double t) {
  return basis.derivative(t).dot(beta_g + b_ig);
}

double longitudinal_loglik(const Dataset& data, const LegendreBasis& basis, const FixedEffects& fe,
                           const RandomEffects& re, const ErrorScales& scales) {
  std::vector<double> terms;
  terms.reserve(data.subjects.size());
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const auto& subj = data.subjects[i];
    double acc = 0.0;
    for (int g = 0; g < data.num_risk_factors; ++g) {
      const double sigma = scales.sigma[g];
      if (!(sigma > 0.0)) throw std::invalid_argument("longitudinal_loglik: sigma must be positive");
      const Eigen::VectorXd theta = fe.beta[g] + re.b[i].col(g);
      for (const auto& obs : subj.longitudinal[g]) {
        const double r = obs.value - basis.value(obs.age).dot(theta);
        acc += dens::log_normal(r, 0.0, sigma);
      }
    }
    terms.push_back(acc);
  }
  return pairwise_sum(terms);
}

double random_effects_loglik(const RandomEffects& re, const BlockCovariance& cov) {
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llts;
  std::vector<double> log_dets;
  for (const auto& blk : cov.blocks) {
    llts.emplace_back(blk);
    if (llts.back().info() != Eigen::Success)
      throw NumericError("random_effects_loglik: block not positive definite");
    log_dets.push_back(2.0 * Eigen::MatrixXd(llts.back().matrixL()).diagonal().array().log().sum());
  }
  const double log2pi = std::log(2.0 * std::numbers::pi);
  std::vector<double> terms;
  terms.reserve(re.b.size());
  for (const auto& bi : re.b) {
    double acc = 0.0;
    for (std::size_t p = 0; p < cov.blocks.size(); ++p) {
      const Eigen::VectorXd v = bi.row(static_cast<Eigen::Index>(p)).transpose();
      const Eigen::VectorXd z = llts[p].matrixL().solve(v);
      acc += -0.5 * (v.size() * log2pi + log_dets[p] + z.squaredNorm());
    }
    terms.push_back(acc);
  }
  return pairwise_sum(terms);
}

}  // namespace jmsel::longitudinal
