#include "jmsel/numeric.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

namespace jmsel {

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x6a6d73u};
  return Rng(seq);
}

namespace {
std::atomic<bool> g_warnings{true};
std::mutex g_warn_mutex;
}  // namespace

void set_warnings_enabled(bool enabled) { g_warnings = enabled; }

void log_warning(const std::string& msg) {
  if (!g_warnings) return;
  std::lock_guard lock(g_warn_mutex);
  std::cerr << "warning: " << msg << '\n';
}

namespace {

QuadratureRule compute_gauss_legendre(int n) {
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1);
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  return rule;
}

}  // namespace

const QuadratureRule& gauss_legendre(int n) {
  if (n < 1 || n > 512) throw DomainError("gauss_legendre: node count out of range");
  static std::mutex mutex;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_gauss_legendre(n)).first;
  return it->second;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double log_sum_exp(std::span<const double> values) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : values) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - mx);
  return mx + std::log(acc);
}

double binomial_coefficient(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

namespace rand {

double uniform(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double uniform_open(Rng& rng) {
  double u;
  do {
    u = uniform(rng);
  } while (u <= 0.0);
  return u;
}

double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double normal(Rng& rng, double mean, double sd) { return mean + sd * normal(rng); }

double half_normal(Rng& rng, double sd) { return std::abs(normal(rng)) * sd; }

double exponential(Rng& rng, double rate) { return -std::log(uniform_open(rng)) / rate; }

double gamma(Rng& rng, double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

double log_gamma_variate(Rng& rng, double shape) {
  if (shape >= 1.0) return std::log(std::gamma_distribution<double>(shape, 1.0)(rng));
  // Gamma(a) = Gamma(a + 1) * U^{1/a}
  const double g = std::gamma_distribution<double>(shape + 1.0, 1.0)(rng);
  return std::log(g) + std::log(uniform_open(rng)) / shape;
}

double beta(Rng& rng, double a, double b) {
  const double la = log_gamma_variate(rng, a);
  const double lb = log_gamma_variate(rng, b);
  const double mx = std::max(la, lb);
  return std::exp(la - mx) / (std::exp(la - mx) + std::exp(lb - mx));
}

bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return uniform(rng) < p;
}

bool bernoulli_logit(Rng& rng, double log_odds) {
  if (std::isnan(log_odds)) throw NumericError("bernoulli_logit: NaN log-odds");
  if (log_odds == std::numeric_limits<double>::infinity()) return true;
  if (log_odds == -std::numeric_limits<double>::infinity()) return false;
  const double p = log_odds >= 0 ? 1.0 / (1.0 + std::exp(-log_odds))
                                 : std::exp(log_odds) / (1.0 + std::exp(log_odds));
  return uniform(rng) < p;
}

Eigen::VectorXd log_dirichlet(Rng& rng, const Eigen::VectorXd& concentration) {
  Eigen::VectorXd lg(concentration.size());
  for (Eigen::Index c = 0; c < concentration.size(); ++c)
    lg[c] = log_gamma_variate(rng, concentration[c]);
  const double lse = log_sum_exp({lg.data(), static_cast<std::size_t>(lg.size())});
  return lg.array() - lse;
}

std::size_t categorical_log(Rng& rng, std::span<const double> log_weights) {
  const double lse = log_sum_exp(log_weights);
  double u = uniform(rng);
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    u -= std::exp(log_weights[k] - lse);
    if (u < 0.0) return k;
  }
  // rounding: return the last index with positive weight
  for (std::size_t k = log_weights.size(); k-- > 0;)
    if (std::isfinite(log_weights[k])) return k;
  throw NumericError("categorical_log: all weights are zero");
}

Eigen::VectorXd mvn_canonical(Rng& rng, const Eigen::MatrixXd& precision,
                              const Eigen::VectorXd& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericError("mvn_canonical: precision not PD");
  Eigen::VectorXd mean = llt.solve(rhs);
  Eigen::VectorXd z(rhs.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
  return mean + llt.matrixU().solve(z);
}

Eigen::VectorXd mvn(Rng& rng, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("mvn: covariance not PD");
  Eigen::VectorXd z(cov.rows());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
  return llt.matrixL() * z;
}

Eigen::MatrixXd inverse_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale) {
  const Eigen::Index p = scale.rows();
  if (df <= p - 1) throw DomainError("inverse_wishart: df must exceed dimension - 1");
  // W ~ Wishart(df, scale^{-1}) by Bartlett; return W^{-1}.
  Eigen::LLT<Eigen::MatrixXd> llt_scale(scale);
  if (llt_scale.info() != Eigen::Success) throw NumericError("inverse_wishart: scale not PD");
  const Eigen::MatrixXd scale_inv = llt_scale.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::LLT<Eigen::MatrixXd> llt(scale_inv);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(2.0 * gamma(rng, 0.5 * (df - static_cast<double>(i)), 1.0));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = normal(rng);
  }
  const Eigen::MatrixXd x = Eigen::MatrixXd(llt.matrixL()) * a;  // lower triangular
  const Eigen::MatrixXd x_inv =
      x.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd out = x_inv.transpose() * x_inv;
  return 0.5 * (out + out.transpose());
}

}  // namespace rand

namespace dens {

double log_normal(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double log_half_cauchy(double x, double scale) {
  if (x < 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(2.0 / (std::numbers::pi * scale)) - std::log1p((x / scale) * (x / scale));
}

double log_dirichlet(const Eigen::VectorXd& log_q, const Eigen::VectorXd& concentration) {
  double acc = std::lgamma(concentration.sum());
  for (Eigen::Index c = 0; c < concentration.size(); ++c)
    acc += -std::lgamma(concentration[c]) + (concentration[c] - 1.0) * log_q[c];
  return acc;
}

double log_mvn(const Eigen::VectorXd& x, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("log_mvn: covariance not PD");
  const Eigen::VectorXd z = llt.matrixL().solve(x);
  const double log_det = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  return -0.5 * (x.size() * std::log(2.0 * std::numbers::pi) + log_det + z.squaredNorm());
}

}  // namespace dens

}  // namespace jmsel
