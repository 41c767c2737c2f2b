#include "jmsel/survival.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace jmsel::survival {

namespace {

constexpr int kMaxDegree = 7;
constexpr int kMaxBasis = 3;  // polynomial order <= 2

std::atomic<int> g_clamp_warnings{0};

void warn_clamp(double t, double lo, double hi) {
  const int n = g_clamp_warnings.fetch_add(1);
  if (n < 5)
    log_warning("bspline: t=" + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                std::to_string(hi) + "], clamped");
  else if (n == 5)
    log_warning("bspline: further clamping warnings suppressed");
}

// Nonzero basis values N[0..p] at t; returns the span index.
int bspline_nonzero(double t, const Eigen::VectorXd& knots, int p, double* N) {
  const int nb = static_cast<int>(knots.size()) - p - 1;
  const double lo = knots[p], hi = knots[nb];
  if (t < lo || t > hi) {
    warn_clamp(t, lo, hi);
    t = std::clamp(t, lo, hi);
  }
  const double* begin = knots.data();
  int i = static_cast<int>(std::upper_bound(begin, begin + nb, t) - begin) - 1;
  i = std::clamp(i, p, nb - 1);
  while (i > p && knots[i] == knots[i + 1]) --i;
  std::array<double, kMaxDegree + 1> left{}, right{};
  N[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - knots[i + 1 - j];
    right[j] = knots[i + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = N[r] / (right[r + 1] + left[j - r]);
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
  }
  return i;
}

double quantile(std::vector<double>& sorted, double prob) {
  const double pos = prob * (sorted.size() - 1);
  const auto k = static_cast<std::size_t>(std::floor(pos));
  if (k + 1 >= sorted.size()) return sorted.back();
  return sorted[k] + (pos - k) * (sorted[k + 1] - sorted[k]);
}

}  // namespace

Eigen::VectorXd clamped_knots(std::span<const double> interior, double lo, double hi, int degree) {
  if (!(lo < hi)) throw std::invalid_argument("clamped_knots: need lo < hi");
  Eigen::VectorXd k(interior.size() + 2 * (degree + 1));
  Eigen::Index pos = 0;
  for (int r = 0; r <= degree; ++r) k[pos++] = lo;
  for (double v : interior) {
    if (!(v > lo && v < hi)) throw std::invalid_argument("clamped_knots: interior knot outside span");
    k[pos++] = v;
  }
  for (int r = 0; r <= degree; ++r) k[pos++] = hi;
  if (!std::is_sorted(k.data(), k.data() + k.size()))
    throw std::invalid_argument("clamped_knots: interior knots not ascending");
  return k;
}

Eigen::VectorXd bspline_basis(double t, const Eigen::VectorXd& knots, int degree) {
  if (degree < 0 || degree > kMaxDegree) throw std::invalid_argument("bspline_basis: bad degree");
  const int nb = static_cast<int>(knots.size()) - degree - 1;
  if (nb < 1) throw std::invalid_argument("bspline_basis: too few knots");
  std::array<double, kMaxDegree + 1> N{};
  const int span = bspline_nonzero(t, knots, degree, N.data());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(nb);
  for (int r = 0; r <= degree; ++r) out[span - degree + r] = N[r];
  return out;
}

BaselineLayout::BaselineLayout(Eigen::VectorXd knots, int degree)
    : knots_(std::move(knots)), degree_(degree) {
  if (degree_ < 0 || degree_ > kMaxDegree) throw std::invalid_argument("BaselineLayout: bad degree");
  const int nb = static_cast<int>(knots_.size()) - degree_ - 1;
  if (nb < 2) throw std::invalid_argument("BaselineLayout: need at least two spline functions");
  num_spline_ = nb - 1;
}

BaselineLayout BaselineLayout::from_event_times(std::vector<double> event_times, double lo, double hi,
                                                int num_coeffs, int degree) {
  if (num_coeffs == 0) return BaselineLayout{};
  const int n_interior = num_coeffs - degree;
  if (n_interior < 0) throw std::invalid_argument("BaselineLayout: num_coeffs < degree");
  std::vector<double> interior;
  std::sort(event_times.begin(), event_times.end());
  if (event_times.size() >= 2) {
    for (int k = 1; k <= n_interior; ++k)
      interior.push_back(quantile(event_times, static_cast<double>(k) / (n_interior + 1)));
  }
  bool ok = static_cast<int>(interior.size()) == n_interior;
  for (std::size_t k = 0; ok && k < interior.size(); ++k) {
    if (!(interior[k] > lo && interior[k] < hi)) ok = false;
    if (k > 0 && !(interior[k] > interior[k - 1])) ok = false;
  }
  if (!ok) {
    interior.clear();
    for (int k = 1; k <= n_interior; ++k) interior.push_back(lo + (hi - lo) * k / (n_interior + 1));
  }
  return BaselineLayout(clamped_knots(interior, lo, hi, degree), degree);
}

std::vector<double> BaselineLayout::breakpoints(double lo, double hi) const {
  std::vector<double> out;
  for (Eigen::Index k = 0; k < knots_.size(); ++k) {
    const double v = knots_[k];
    if (v > lo && v < hi && (out.empty() || v != out.back())) out.push_back(v);
  }
  return out;
}

void BaselineLayout::design_row(double t, double* out) const {
  out[0] = 1.0;
  if (num_spline_ == 0) return;
  std::fill(out + 1, out + 1 + num_spline_, 0.0);
  std::array<double, kMaxDegree + 1> N{};
  const int span = bspline_nonzero(t, knots_, degree_, N.data());
  for (int r = 0; r <= degree_; ++r) {
    const int q = span - degree_ + r;  // basis index, 0 is dropped
    if (q >= 1) out[q] = N[r];
  }
}

Eigen::VectorXd BaselineLayout::design(double t) const {
  Eigen::VectorXd row(num_coeffs());
  design_row(t, row.data());
  return row;
}

double BaselineLayout::log_value(double t, const Eigen::VectorXd& coeffs) const {
  if (coeffs.size() != num_coeffs()) throw std::invalid_argument("BaselineLayout: coefficient size");
  return design(t).dot(coeffs);
}

double BaselineLayout::log_value(double t, const double* coeffs) const {
  double out = coeffs[0];
  if (num_spline_ == 0) return out;
  std::array<double, kMaxDegree + 1> N{};
  const int span = bspline_nonzero(t, knots_, degree_, N.data());
  for (int r = 0; r <= degree_; ++r) {
    const int q = span - degree_ + r;
    if (q >= 1) out += N[r] * coeffs[q];
  }
  return out;
}

double feature_value(const longitudinal::LegendreBasis& basis, const Eigen::VectorXd& theta, double t) {
  return basis.value(t).dot(theta);
}

double feature_slope(const longitudinal::LegendreBasis& basis, const Eigen::VectorXd& theta, double t) {
  return basis.derivative(t).dot(theta);
}

double feature_area(const longitudinal::LegendreBasis& basis, const Eigen::VectorXd& theta, double t0,
                    double t, const QuadratureRule& rule) {
  if (t < t0) throw DomainError("feature_area: t < t0");
  return basis.integral(t0, t, rule).dot(theta);
}

double feature_threshold(const longitudinal::LegendreBasis& basis, const Eigen::VectorXd& theta,
                         double level, double t) {
  return basis.value(t).dot(theta) > level ? 1.0 : 0.0;
}

HazardModel::HazardModel(longitudinal::LegendreBasis basis, std::vector<FeatureKind> features,
                         std::vector<double> thresholds, double area_origin, BaselineLayout baseline,
                         int quad_nodes)
    : basis_(basis),
      features_(std::move(features)),
      thresholds_(std::move(thresholds)),
      area_origin_(area_origin),
      baseline_(std::move(baseline)),
      quad_nodes_(quad_nodes) {
  if (thresholds_.empty()) throw std::invalid_argument("HazardModel: need at least one risk factor");
  if (features_.empty()) throw std::invalid_argument("HazardModel: need at least one feature");
  if (basis_.size() > kMaxBasis) throw std::invalid_argument("HazardModel: order > 2 unsupported");
  has_threshold_ = std::find(features_.begin(), features_.end(), FeatureKind::Threshold) != features_.end();
  center_ = Eigen::MatrixXd::Zero(num_risk_factors(), num_features());
  scale_ = Eigen::MatrixXd::Ones(num_risk_factors(), num_features());
  inv_scale_ = scale_;
}

void HazardModel::set_scaling(const Eigen::MatrixXd& center, const Eigen::MatrixXd& scale) {
  if (center.rows() != num_risk_factors() || center.cols() != num_features() ||
      scale.rows() != num_risk_factors() || scale.cols() != num_features())
    throw std::invalid_argument("HazardModel: scaling shape mismatch");
  if ((scale.array() <= 0.0).any()) throw std::invalid_argument("HazardModel: scale must be positive");
  center_ = center;
  scale_ = scale;
  inv_scale_ = scale.cwiseInverse();
}

void HazardModel::raw_features(const Eigen::MatrixXd& theta, double t, double* out) const {
  const int G = num_risk_factors(), J = num_features();
  const Moments m = moments(t);
  for (int g = 0; g < G; ++g) group_features(theta, g, m, out + g * J);
}

HazardModel::Moments HazardModel::moments(double t) const {
  const double a = basis_.a_max();
  const double u = 2.0 * t / a - 1.0;
  const double u0 = 2.0 * area_origin_ / a - 1.0;
  // closed-form antiderivative of the shifted Legendre basis from area_origin
  return {{1.0, u, 0.5 * (3.0 * u * u - 1.0)},
          {0.0, 2.0 / a, 6.0 * u / a},
          {t - area_origin_, 0.25 * a * (u * u - u0 * u0), 0.25 * a * ((u * u * u - u) - (u0 * u0 * u0 - u0))}};
}

void HazardModel::group_features(const Eigen::MatrixXd& theta, int g, const Moments& m, double* out) const {
  const double* th = theta.col(g).data();
  double val = 0.0, slope = 0.0, area = 0.0;
  for (int k = 0; k <= basis_.order(); ++k) {
    val += m.x[k] * th[k];
    slope += m.dx[k] * th[k];
    area += m.ax[k] * th[k];
  }
  for (int j = 0; j < num_features(); ++j) {
    double f = 0.0;
    switch (features_[j]) {
      case FeatureKind::Value: f = val; break;
      case FeatureKind::Slope: f = slope; break;
      case FeatureKind::Area: f = area; break;
      case FeatureKind::Threshold: f = val > thresholds_[g] ? 1.0 : 0.0; break;
    }
    out[j] = f;
  }
}

double HazardModel::fold(const Eigen::MatrixXd& theta, const Eigen::VectorXd& coef,
                         std::vector<GroupWeights>& out) const {
  out.clear();
  const int nb = baseline_.num_coeffs(), J = num_features();
  double c0 = 0.0;
  for (int g = 0; g < num_risk_factors(); ++g) {
    GroupWeights gw{theta.col(g).data(), thresholds_[g]};
    bool any = false;
    for (int j = 0; j < J; ++j) {
      const double a = coef[nb + g * J + j];
      if (a == 0.0) continue;
      any = true;
      const double k = a * inv_scale_(g, j);
      c0 -= k * center_(g, j);
      switch (features_[j]) {
        case FeatureKind::Value: gw.value += k; break;
        case FeatureKind::Slope: gw.slope += k; break;
        case FeatureKind::Area: gw.area += k; break;
        case FeatureKind::Threshold: gw.step += k; break;
      }
    }
    if (any) out.push_back(gw);
  }
  return c0;
}

double HazardModel::linear_predictor(double t, const Eigen::VectorXd& coef, double c0,
                                     std::span<const GroupWeights> groups) const {
  double eta = baseline_.log_value(t, coef.data()) + c0;
  if (groups.empty()) return eta;
  const Moments m = moments(t);
  const int K = basis_.order() + 1;
  for (const auto& gw : groups) {
    double val = 0.0, slope = 0.0, area = 0.0;
    for (int k = 0; k < K; ++k) {
      val += m.x[k] * gw.theta[k];
      slope += m.dx[k] * gw.theta[k];
      area += m.ax[k] * gw.theta[k];
    }
    eta += gw.value * val + gw.slope * slope + gw.area * area + (val > gw.threshold ? gw.step : 0.0);
  }
  return eta;
}

double HazardModel::survival_loglik(const SurvivalOutcome& outcome, const Eigen::MatrixXd& theta,
                                    const Eigen::VectorXd& coef, double offset) const {
  thread_local std::vector<double> t, w;
  thread_local std::vector<GroupWeights> groups;
  nodes(theta, outcome.entry, outcome.time, quad_nodes_, t, w);
  const double c0 = fold(theta, coef, groups) + offset;
  double cum = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) cum += w[k] * std::exp(linear_predictor(t[k], coef, c0, groups));
  double ll = -cum;
  if (outcome.event) ll += linear_predictor(outcome.time, coef, c0, groups);
  return ll;
}

void HazardModel::design_row(const Eigen::MatrixXd& theta, double t, double* out) const {
  baseline_.design_row(t, out);
  double* f = out + baseline_.num_coeffs();
  raw_features(theta, t, f);
  const int G = num_risk_factors(), J = num_features();
  for (int g = 0; g < G; ++g)
    for (int j = 0; j < J; ++j) f[g * J + j] = (f[g * J + j] - center_(g, j)) * inv_scale_(g, j);
}

void HazardModel::nodes(const Eigen::MatrixXd& theta, double lo, double hi, int per_segment,
                        std::vector<double>& t, std::vector<double>& w) const {
  t.clear();
  w.clear();
  if (!(hi > lo)) return;
  thread_local std::vector<double> cuts;
  cuts.clear();
  const Eigen::VectorXd& knots = baseline_.knots();
  for (Eigen::Index k = 0; k < knots.size(); ++k)
    if (knots[k] > lo && knots[k] < hi) cuts.push_back(knots[k]);
  if (has_threshold_) {
    for (int g = 0; g < num_risk_factors(); ++g) {
      const auto c = basis_.crossings(theta.col(g), thresholds_[g], lo, hi);
      cuts.insert(cuts.end(), c.begin(), c.end());
    }
  }
  cuts.push_back(lo);
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());
  const QuadratureRule& rule = gauss_legendre(per_segment);
  t.reserve(cuts.size() * rule.nodes.size());
  w.reserve(cuts.size() * rule.nodes.size());
  const double tiny = 1e-12 * (1.0 + std::abs(hi));
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double a = cuts[s], b = cuts[s + 1];
    if (b - a <= tiny) continue;
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      t.push_back(mid + half * rule.nodes[k]);
      w.push_back(half * rule.weights[k]);
    }
  }
}

double HazardModel::log_hazard(const Eigen::MatrixXd& theta, const std::vector<double>& covariates,
                               const HazardParams& p, double t) const {
  const Eigen::VectorXd coef = pack_coefficients(*this, p);
  Eigen::VectorXd row(num_columns());
  design_row(theta, t, row.data());
  double offset = 0.0;
  for (std::size_t m = 0; m < covariates.size(); ++m) offset += covariates[m] * p.gamma[m];
  return row.dot(coef) + offset;
}

double HazardModel::cumulative_hazard(const Eigen::MatrixXd& theta, const std::vector<double>& covariates,
                                      const HazardParams& p, double lo, double hi,
                                      int per_segment) const {
  if (hi < lo) throw DomainError("cumulative_hazard: upper limit below lower limit");
  const Eigen::VectorXd coef = pack_coefficients(*this, p);
  double offset = 0.0;
  for (std::size_t m = 0; m < covariates.size(); ++m) offset += covariates[m] * p.gamma[m];
  thread_local std::vector<double> t, w, terms;
  thread_local std::vector<GroupWeights> groups;
  nodes(theta, lo, hi, per_segment > 0 ? per_segment : quad_nodes_, t, w);
  const double c0 = fold(theta, coef, groups) + offset;
  terms.resize(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) terms[k] = w[k] * std::exp(linear_predictor(t[k], coef, c0, groups));
  return pairwise_sum(terms);
}

double HazardModel::survival_loglik(const SurvivalOutcome& outcome, const Eigen::MatrixXd& theta,
                                    const HazardParams& p) const {
  double ll = -cumulative_hazard(theta, outcome.covariates, p, outcome.entry, outcome.time);
  if (outcome.event) ll += log_hazard(theta, outcome.covariates, p, outcome.time);
  return ll;
}

Eigen::VectorXd pack_coefficients(const HazardModel& model, const HazardParams& p) {
  const int G = model.num_risk_factors(), J = model.num_features();
  if (p.baseline.size() != model.baseline().num_coeffs())
    throw std::invalid_argument("pack_coefficients: baseline size mismatch");
  if (p.alpha.rows() != G || p.alpha.cols() != J)
    throw std::invalid_argument("pack_coefficients: alpha shape mismatch");
  Eigen::VectorXd coef(model.num_columns());
  coef.head(p.baseline.size()) = p.baseline;
  for (int g = 0; g < G; ++g)
    for (int j = 0; j < J; ++j) coef[model.feature_column(g, j)] = p.alpha(g, j);
  return coef;
}

void SubjectCache::build(const HazardModel& model, const SurvivalOutcome& outcome,
                         const Eigen::MatrixXd& theta, const Eigen::VectorXd& coef, double off) {
  thread_local std::vector<double> t, w;
  model.nodes(theta, outcome.entry, outcome.time, model.quad_nodes(), t, w);
  const auto n = static_cast<Eigen::Index>(t.size());
  const int cols = model.num_columns();
  design.resize(n + 1, cols);
  weight.resize(n);
  thread_local std::vector<double> row;
  row.resize(cols);
  for (Eigen::Index k = 0; k <= n; ++k) {
    model.design_row(theta, k < n ? t[k] : outcome.time, row.data());
    for (int c = 0; c < cols; ++c) design(k, c) = row[c];
    if (k < n) weight[k] = w[k];
  }
  eta = (design * coef).array();
  offset = off;
  event = outcome.event;
  refresh();
}

void SubjectCache::refresh() {
  const Eigen::Index n = weight.size();
  hazard = weight * (eta.head(n) + offset).exp();
  cumhaz = hazard.sum();
  loglik = (event ? eta_at_time() + offset : 0.0) - cumhaz;
}

double SubjectCache::delta(std::span<const int> cols, std::span<const double> deltas) const {
  const Eigen::Index n = weight.size();
  if (cols.size() == 1) {
    const auto col = design.col(cols[0]).array();
    const double d = deltas[0];
    double out = event ? d * col[n] : 0.0;
    if (n > 0) out -= (hazard * ((d * col.head(n)).exp() - 1.0)).sum();
    return out;
  }
  Eigen::ArrayXd de = Eigen::ArrayXd::Zero(n + 1);
  for (std::size_t c = 0; c < cols.size(); ++c) de += deltas[c] * design.col(cols[c]).array();
  double out = event ? de[n] : 0.0;
  if (n > 0) out -= (hazard * (de.head(n).exp() - 1.0)).sum();
  return out;
}

void SubjectCache::commit(std::span<const int> cols, std::span<const double> deltas) {
  for (std::size_t c = 0; c < cols.size(); ++c) eta += deltas[c] * design.col(cols[c]).array();
  refresh();
}

double SubjectCache::delta_offset(double d) const {
  return (event ? d : 0.0) - cumhaz * std::expm1(d);
}

void SubjectCache::commit_offset(double d) {
  offset += d;
  refresh();
}

}  // namespace jmsel::survival
