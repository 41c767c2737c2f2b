#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jmsel {

using Rng = std::mt19937_64;

// Independent stream for (seed, stream) pairs. Used for per-subject and
// per-replicate substreams so results do not depend on worker count.
Rng make_stream(std::uint64_t seed, std::uint64_t stream = 0);

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void log_warning(const std::string& msg);
void set_warnings_enabled(bool enabled);

// Gauss-Legendre rule on [-1, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Rules are computed once per node count and cached.
const QuadratureRule& gauss_legendre(int n);

template <class F>
double integrate(const QuadratureRule& rule, double lo, double hi, F&& f) {
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  double acc = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k)
    acc += rule.weights[k] * f(mid + half * rule.nodes[k]);
  return half * acc;
}

// Summation with a fixed binary-tree order; bit-stable for a given length.
double pairwise_sum(std::span<const double> values);

double log_sum_exp(std::span<const double> values);

namespace rand {

double uniform(Rng& rng);       // [0, 1)
double uniform_open(Rng& rng);  // (0, 1)
double normal(Rng& rng);
double normal(Rng& rng, double mean, double sd);
double half_normal(Rng& rng, double sd);
double exponential(Rng& rng, double rate);
// Gamma with shape and *rate*.
double gamma(Rng& rng, double shape, double rate);
// log of a Gamma(shape, 1) draw; stable for tiny shapes.
double log_gamma_variate(Rng& rng, double shape);
double beta(Rng& rng, double a, double b);
bool bernoulli(Rng& rng, double p);
// Bernoulli with success log-odds.
bool bernoulli_logit(Rng& rng, double log_odds);
// log of a Dirichlet draw (normalized so that logsumexp = 0).
Eigen::VectorXd log_dirichlet(Rng& rng, const Eigen::VectorXd& concentration);
std::size_t categorical_log(Rng& rng, std::span<const double> log_weights);
// Draw from N(precision^{-1} rhs, precision^{-1}).
Eigen::VectorXd mvn_canonical(Rng& rng, const Eigen::MatrixXd& precision,
                              const Eigen::VectorXd& rhs);
Eigen::VectorXd mvn(Rng& rng, const Eigen::MatrixXd& cov);
// Inverse-Wishart with df and scale matrix (mean scale / (df - p - 1)).
Eigen::MatrixXd inverse_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale);

}  // namespace rand

namespace dens {

double log_normal(double x, double mean, double sd);
double log_half_cauchy(double x, double scale = 1.0);
double log_dirichlet(const Eigen::VectorXd& log_q, const Eigen::VectorXd& concentration);
double log_mvn(const Eigen::VectorXd& x, const Eigen::MatrixXd& cov);

}  // namespace dens

double binomial_coefficient(int n, int k);

}  // namespace jmsel
