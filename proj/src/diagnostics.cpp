#include "jmsel/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace jmsel::diag {

namespace {

void check(std::span<const Eigen::VectorXd> chains) {
  if (chains.size() < 2) throw std::invalid_argument("diagnostics: need at least two chains");
  for (const auto& c : chains)
    if (c.size() != chains[0].size() || c.size() < 2)
      throw std::invalid_argument("diagnostics: chains must have equal length >= 2");
}

double variance(const Eigen::VectorXd& x) {
  const double m = x.mean();
  return (x.array() - m).square().sum() / static_cast<double>(x.size() - 1);
}

// Autocovariance at lags 0..n-1 (biased, divided by n).
Eigen::VectorXd autocovariance(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  const Eigen::VectorXd c = x.array() - x.mean();
  Eigen::VectorXd out(n);
  for (Eigen::Index k = 0; k < n; ++k) out[k] = c.head(n - k).dot(c.tail(n - k)) / static_cast<double>(n);
  return out;
}

}  // namespace

double rhat(std::span<const Eigen::VectorXd> chains) {
  check(chains);
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains[0].size());
  Eigen::VectorXd means(chains.size());
  double w = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    means[c] = chains[c].mean();
    w += variance(chains[c]);
  }
  w /= m;
  const double b = n * variance(means);
  if (b == 0.0) return 1.0;
  if (w == 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(1.0 + b / (n * w));
}

double split_rhat(std::span<const Eigen::VectorXd> chains) {
  check(chains);
  const Eigen::Index half = chains[0].size() / 2;
  if (half < 2) throw std::invalid_argument("split_rhat: chains too short");
  std::vector<Eigen::VectorXd> parts;
  for (const auto& c : chains) {
    parts.push_back(c.head(half));
    parts.push_back(c.tail(half));
  }
  return rhat(parts);
}

double ess(std::span<const Eigen::VectorXd> chains) {
  check(chains);
  const double m = static_cast<double>(chains.size());
  const Eigen::Index n = chains[0].size();
  Eigen::VectorXd acov = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd means(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    acov += autocovariance(chains[c]);
    means[c] = chains[c].mean();
  }
  acov /= m;
  const double nn = static_cast<double>(n);
  const double w = acov[0] * nn / (nn - 1.0);
  const double var_plus = w * (nn - 1.0) / nn + variance(means);
  if (var_plus <= 0.0) return m * nn;
  auto rho = [&](Eigen::Index k) { return 1.0 - (w - acov[k]) / var_plus; };
  // Geyer: sum consecutive pairs while positive, enforcing monotone decrease
  double sum = 0.0, prev = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k + 1 < n; k += 2) {
    double pair = rho(k) + rho(k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    prev = pair;
    sum += pair;
  }
  const double tau = std::max(2.0 * sum - 1.0, 1.0 / std::log10(m * nn));
  return m * nn / tau;
}

double batch_means_se(const Eigen::VectorXd& x, int num_batches) {
  const Eigen::Index size = x.size() / num_batches;
  if (size < 1 || num_batches < 2) throw std::invalid_argument("batch_means_se: too few draws");
  Eigen::VectorXd means(num_batches);
  for (int b = 0; b < num_batches; ++b) means[b] = x.segment(b * size, size).mean();
  return std::sqrt(variance(means) / num_batches);
}

double Report::max_rhat() const {
  double m = 1.0;
  for (const auto& s : scalars) m = std::max(m, s.rhat);
  return m;
}

Report diagnostics(std::span<const mcmc::ChainOutput> outputs) {
  if (outputs.size() < 2) throw std::invalid_argument("diagnostics: need at least two chains");
  for (const auto& o : outputs)
    if (o.columns != outputs[0].columns || o.num_draws() != outputs[0].num_draws())
      throw std::invalid_argument("diagnostics: chains have different layouts");
  Report r;
  for (std::size_t c = 0; c < outputs[0].columns.size(); ++c) {
    const auto& name = outputs[0].columns[c];
    std::vector<Eigen::VectorXd> chains;
    for (const auto& o : outputs) chains.push_back(o.draws.col(static_cast<Eigen::Index>(c)));
    if (name.rfind("incl[", 0) == 0 || name.rfind("group[", 0) == 0) {
      IndicatorReport ir{name, {}, 0.0};
      for (const auto& ch : chains) ir.frequency.push_back(ch.mean());
      const auto [lo, hi] = std::minmax_element(ir.frequency.begin(), ir.frequency.end());
      ir.max_abs_diff = *hi - *lo;
      r.indicators.push_back(std::move(ir));
      continue;
    }
    bool constant = true;
    for (const auto& ch : chains) constant = constant && (ch.array() == chains[0][0]).all();
    if (constant) continue;
    ScalarReport sr{name, rhat(chains), 1.0, 0.0};
    sr.split_rhat = chains[0].size() >= 4 ? split_rhat(chains) : sr.rhat;
    sr.ess = ess(chains);
    r.scalars.push_back(std::move(sr));
  }
  return r;
}

}  // namespace jmsel::diag
