#pragma once

// Convergence diagnostics across chains.

#include "jmsel/mcmc.hpp"

#include <span>
#include <string>
#include <vector>

namespace jmsel::diag {

// Potential scale reduction sqrt(1 + B / (n W)); exactly 1 for identical chains.
double rhat(std::span<const Eigen::VectorXd> chains);
// Same statistic after splitting each chain in half.
double split_rhat(std::span<const Eigen::VectorXd> chains);
// Effective sample size with Geyer's initial positive sequence, pooled over chains.
double ess(std::span<const Eigen::VectorXd> chains);
// Monte Carlo standard error of a mean by non-overlapping batch means.
double batch_means_se(const Eigen::VectorXd& x, int num_batches = 50);

struct ScalarReport {
  std::string name;
  double rhat = 1.0;
  double split_rhat = 1.0;
  double ess = 0.0;
};

struct IndicatorReport {
  std::string name;
  std::vector<double> frequency;  // per chain
  double max_abs_diff = 0.0;
};

struct Report {
  std::vector<ScalarReport> scalars;
  std::vector<IndicatorReport> indicators;
  double max_rhat() const;
};

// Indicator columns (incl[...], group[...]) get agreement; everything else
// non-constant gets R-hat and ESS. Throws with fewer than two chains or
// mismatched columns.
Report diagnostics(std::span<const mcmc::ChainOutput> outputs);

}  // namespace jmsel::diag
