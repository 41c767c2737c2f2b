#include "jmsel/mcmc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#ifndef JMSEL_BUILD_ID
#define JMSEL_BUILD_ID "unknown"
#endif

namespace jmsel::mcmc {

namespace {

constexpr double kRidge = 1.0;  // per-subject ridge for the preliminary trajectory fit

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

bool accept_log(Rng& rng, double log_r) {
  if (std::isnan(log_r)) throw NumericError("NaN acceptance ratio");
  return log_r >= 0.0 || std::log(rand::uniform_open(rng)) < log_r;
}

std::string index_name(const char* base, int a) { return std::string(base) + "[" + std::to_string(a) + "]"; }

std::string index_name(const char* base, int a, int b) {
  return std::string(base) + "[" + std::to_string(a) + "," + std::to_string(b) + "]";
}

}  // namespace

Eigen::MatrixXd ChainState::beta_matrix() const {
  const auto P1 = fe.beta.front().size();
  Eigen::MatrixXd m(P1, static_cast<Eigen::Index>(fe.beta.size()));
  for (std::size_t g = 0; g < fe.beta.size(); ++g) m.col(static_cast<Eigen::Index>(g)) = fe.beta[g];
  return m;
}

Eigen::MatrixXd ChainState::theta(std::size_t i) const { return beta_matrix() + re.b[i]; }

void ChainState::validate() const {
  cov.validate();
  if ((sigma2.array() <= 0.0).any()) throw std::logic_error("ChainState: sigma2 must be positive");
  if (!baseline.allFinite() || !gamma.allFinite()) throw std::logic_error("ChainState: non-finite survival coefficients");
  for (const auto& b : fe.beta)
    if (!b.allFinite()) throw std::logic_error("ChainState: non-finite beta");
  sel.validate();
}

JointModel::JointModel(ModelSpec spec, const Dataset& data)
    : spec_(std::move(spec)),
      data_(&data),
      basis_(spec_.a_max > 0.0 ? spec_.a_max : data.max_age(), spec_.poly_order) {
  spec_.validate();
  data.validate();
  const int G = spec_.num_risk_factors, J = spec_.num_features();
  if (data.num_risk_factors != G)
    throw std::invalid_argument("JointModel: data has " + std::to_string(data.num_risk_factors) +
                                " risk factors, spec expects " + std::to_string(G));
  spec_.a_max = basis_.a_max();
  if (data.max_age() > spec_.a_max * (1.0 + 1e-12))
    throw DomainError("JointModel: data ages exceed a_max");

  if (spec_.thresholds.empty()) {
    for (int g = 0; g < G; ++g) {
      std::vector<double> vals;
      for (const auto& s : data.subjects)
        for (const auto& o : s.longitudinal[g]) vals.push_back(o.value);
      spec_.thresholds.push_back(median(vals));
    }
  }

  const int P1 = basis_.size();
  const std::size_t n = data.subjects.size();
  designs_.resize(n * G);
  std::vector<Eigen::MatrixXd> pooled_xtx(G, Eigen::MatrixXd::Zero(P1, P1));
  std::vector<Eigen::VectorXd> pooled_xty(G, Eigen::VectorXd::Zero(P1));
  for (std::size_t i = 0; i < n; ++i) {
    for (int g = 0; g < G; ++g) {
      LongitudinalDesign& d = designs_[i * G + g];
      d.xtx = Eigen::MatrixXd::Zero(P1, P1);
      d.xty = Eigen::VectorXd::Zero(P1);
      for (const auto& o : data.subjects[i].longitudinal[g]) {
        const Eigen::VectorXd x = basis_.value(o.age);
        d.xtx.noalias() += x * x.transpose();
        d.xty += o.value * x;
        d.yty += o.value * o.value;
        ++d.n;
      }
      pooled_xtx[g] += d.xtx;
      pooled_xty[g] += d.xty;
    }
  }
  for (int g = 0; g < G; ++g) {
    const Eigen::MatrixXd a = pooled_xtx[g] + 1e-8 * Eigen::MatrixXd::Identity(P1, P1);
    ls_beta_.push_back(a.ldlt().solve(pooled_xty[g]));
  }

  survival::BaselineLayout layout;
  if (!spec_.knots.empty()) {
    layout = survival::BaselineLayout(Eigen::Map<const Eigen::VectorXd>(spec_.knots.data(),
                                                                        static_cast<Eigen::Index>(spec_.knots.size())),
                                      spec_.spline_degree);
  } else if (spec_.spline_coeffs > 0) {
    std::vector<double> events;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : data.subjects) {
      lo = std::min(lo, s.survival.entry);
      hi = std::max(hi, s.survival.time);
      if (s.survival.event) events.push_back(s.survival.time);
    }
    layout = survival::BaselineLayout::from_event_times(events, lo, hi, spec_.spline_coeffs, spec_.spline_degree);
  }
  hazard_ = std::make_unique<survival::HazardModel>(basis_, spec_.features, spec_.thresholds,
                                                    spec_.area_origin, layout, spec_.quad_nodes);

  if (spec_.scaling) {
    scaling_ = *spec_.scaling;
  } else {
    // one preliminary pass: ridge-shrunk subject trajectories evaluated at T_i
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(G, J), sumsq = Eigen::MatrixXd::Zero(G, J);
    std::vector<double> f(G * J);
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::MatrixXd theta(P1, G);
      for (int g = 0; g < G; ++g) {
        const LongitudinalDesign& d = designs_[i * G + g];
        const Eigen::MatrixXd a = d.xtx + kRidge * Eigen::MatrixXd::Identity(P1, P1);
        theta.col(g) = ls_beta_[g] + a.ldlt().solve(d.xty - d.xtx * ls_beta_[g]);
      }
      hazard_->raw_features(theta, data.subjects[i].survival.time, f.data());
      for (int g = 0; g < G; ++g)
        for (int j = 0; j < J; ++j) {
          sum(g, j) += f[g * J + j];
          sumsq(g, j) += f[g * J + j] * f[g * J + j];
        }
    }
    const double nn = static_cast<double>(n);
    scaling_.center = sum / nn;
    scaling_.scale.resize(G, J);
    for (int g = 0; g < G; ++g)
      for (int j = 0; j < J; ++j) {
        const double var = n > 1 ? (sumsq(g, j) - nn * scaling_.center(g, j) * scaling_.center(g, j)) / (nn - 1.0) : 0.0;
        const double sd = var > 0.0 ? std::sqrt(var) : 0.0;
        scaling_.scale(g, j) = sd > 1e-8 ? sd : 1.0;
      }
  }
  hazard_->set_scaling(scaling_.center, scaling_.scale);
}

ChainState JointModel::initial_state() const {
  const int G = num_risk_factors(), P1 = basis_size();
  ChainState s;
  s.fe.beta = ls_beta_;
  s.re.b.assign(num_subjects(), Eigen::MatrixXd::Zero(P1, G));
  s.cov.blocks.assign(P1, Eigen::MatrixXd::Identity(G, G));
  s.sigma2 = Eigen::VectorXd::Ones(G);
  for (int g = 0; g < G; ++g) {
    double ssr = 0.0;
    int nobs = 0;
    for (std::size_t i = 0; i < num_subjects(); ++i) {
      const auto& d = design(i, g);
      ssr += d.yty - 2.0 * ls_beta_[g].dot(d.xty) + ls_beta_[g].dot(d.xtx * ls_beta_[g]);
      nobs += d.n;
    }
    if (nobs > P1 && ssr > 0.0) s.sigma2[g] = ssr / (nobs - P1);
  }
  double events = 0.0, exposure = 0.0;
  for (const auto& subj : data_->subjects) {
    events += subj.survival.event ? 1.0 : 0.0;
    exposure += subj.survival.time - subj.survival.entry;
  }
  s.baseline = Eigen::VectorXd::Zero(hazard_->baseline().num_coeffs());
  if (exposure > 0.0) s.baseline[0] = std::log(std::max(events, 0.5) / exposure);
  s.gamma = Eigen::VectorXd::Zero(num_covariates());
  s.sel = selection::initial_state(spec_.prior, G, num_features(), spec_.hyper);
  return s;
}

class Sampler::AlphaContext final : public selection::LikelihoodContext {
 public:
  explicit AlphaContext(Sampler& s) : s_(s) {}

  double delta(int g, const Eigen::VectorXd& from, const Eigen::VectorXd& to) override {
    collect(g, from, to);
    double acc = 0.0;
    for (const auto& c : s_.cache_) acc += c.delta(cols_, deltas_);
    return acc;
  }

  void commit(int g, const Eigen::VectorXd& from, const Eigen::VectorXd& to) override {
    collect(g, from, to);
    for (auto& c : s_.cache_) c.commit(cols_, deltas_);
    for (std::size_t k = 0; k < cols_.size(); ++k) s_.coef_[cols_[k]] += deltas_[k];
  }

 private:
  void collect(int g, const Eigen::VectorXd& from, const Eigen::VectorXd& to) {
    cols_.clear();
    deltas_.clear();
    for (Eigen::Index j = 0; j < from.size(); ++j)
      if (from[j] != to[j]) {
        cols_.push_back(s_.m_.hazard().feature_column(g, static_cast<int>(j)));
        deltas_.push_back(to[j] - from[j]);
      }
  }

  Sampler& s_;
  std::vector<int> cols_;
  std::vector<double> deltas_;
};

Sampler::Sampler(const JointModel& model, SamplerOptions opts)
    : m_(model),
      opts_(opts),
      sel_sampler_(model.spec().prior, model.num_risk_factors(), model.num_features(), model.spec().hyper,
                   opts.selection) {
  baseline_step_.resize(model.hazard().baseline().num_coeffs());
  gamma_step_.resize(model.num_covariates());
  for (auto& st : baseline_step_) st.log_scale = std::log(0.1);
  for (auto& st : gamma_step_) st.log_scale = std::log(0.1);
}

void Sampler::set_adapt(bool on) {
  adapt_ = on;
  sel_sampler_.set_adapt(on);
}

double Sampler::covariate_offset(const ChainState& s, std::size_t i) const {
  const auto& w = m_.data().subjects[i].survival.covariates;
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * s.gamma[static_cast<Eigen::Index>(k)];
  return acc;
}

Eigen::VectorXd Sampler::survival_coef(const ChainState& s) const {
  return survival::pack_coefficients(m_.hazard(), {s.baseline, s.gamma, s.sel.alpha()});
}

void Sampler::refresh_dinv(const ChainState& s) {
  dinv_.clear();
  for (const auto& blk : s.cov.blocks) {
    Eigen::LLT<Eigen::MatrixXd> llt(blk);
    if (llt.info() != Eigen::Success) throw NumericError("covariance block not positive definite");
    dinv_.push_back(llt.solve(Eigen::MatrixXd::Identity(blk.rows(), blk.cols())));
  }
}

void Sampler::attach(ChainState& s) {
  refresh_dinv(s);
  coef_ = survival_coef(s);
  cache_.clear();
  stale_.assign(m_.num_subjects(), 0);
  if (!opts_.survival) return;
  cache_.resize(m_.num_subjects());
  for (std::size_t i = 0; i < m_.num_subjects(); ++i)
    cache_[i].build(m_.hazard(), m_.data().subjects[i].survival, s.theta(i), coef_, covariate_offset(s, i));
}

double Sampler::survival_loglik() const {
  double acc = 0.0;
  for (const auto& c : cache_) acc += c.loglik;
  return acc;
}

void Sampler::update_beta(ChainState& s, int g, Rng& rng) {
  const int P1 = m_.basis_size();
  const double sd = m_.spec().hyper.fixed_effect_sd;
  Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(P1, P1) / (sd * sd);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(P1);
  if (opts_.longitudinal) {
    const double inv_s2 = 1.0 / s.sigma2[g];
    for (std::size_t i = 0; i < m_.num_subjects(); ++i) {
      const auto& d = m_.design(i, g);
      prec += inv_s2 * d.xtx;
      rhs += inv_s2 * (d.xty - d.xtx * s.re.b[i].col(g));
    }
  }
  const Eigen::VectorXd prop = rand::mvn_canonical(rng, prec, rhs);
  ++beta_proposed_;
  if (!opts_.survival || !linked(g)) {
    // survival likelihood does not depend on beta_g; only the cached
    // feature columns go stale
    s.fe.beta[g] = prop;
    if (opts_.survival) std::fill(stale_.begin(), stale_.end(), 1);
    ++beta_accepted_;
    return;
  }
  // independence proposal from the longitudinal conditional: the survival
  // likelihood ratio is the acceptance ratio
  const Eigen::VectorXd old = s.fe.beta[g];
  s.fe.beta[g] = prop;
  trial_.resize(cache_.size());
  double diff = 0.0;
  const auto& subjects = m_.data().subjects;
  for (std::size_t i = 0; i < cache_.size(); ++i) {
    trial_[i] = m_.hazard().survival_loglik(subjects[i].survival, s.theta(i), coef_, cache_[i].offset);
    diff += trial_[i] - cache_[i].loglik;
  }
  if (std::isnan(diff)) diff = -std::numeric_limits<double>::infinity();
  if (accept_log(rng, diff)) {
    for (std::size_t i = 0; i < cache_.size(); ++i) {
      cache_[i].loglik = trial_[i];
      stale_[i] = 1;
    }
    ++beta_accepted_;
  } else {
    s.fe.beta[g] = old;
  }
}

bool Sampler::linked(int g) const {
  const int J = m_.num_features();
  for (int j = 0; j < J; ++j)
    if (coef_[m_.hazard().feature_column(g, j)] != 0.0) return true;
  return false;
}

void Sampler::update_random_effects(ChainState& s, std::size_t i, Rng& rng) {
  const int G = m_.num_risk_factors(), P1 = m_.basis_size(), K = G * P1;
  // layout: index p * G + g
  Eigen::MatrixXd prec = Eigen::MatrixXd::Zero(K, K);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K);
  for (int p = 0; p < P1; ++p) prec.block(p * G, p * G, G, G) = dinv_[p];
  if (opts_.longitudinal) {
    for (int g = 0; g < G; ++g) {
      const auto& d = m_.design(i, g);
      if (d.n == 0) continue;
      const double inv_s2 = 1.0 / s.sigma2[g];
      const Eigen::VectorXd r = inv_s2 * (d.xty - d.xtx * s.fe.beta[g]);
      for (int p = 0; p < P1; ++p) {
        rhs[p * G + g] += r[p];
        for (int q = 0; q < P1; ++q) prec(p * G + g, q * G + g) += inv_s2 * d.xtx(p, q);
      }
    }
  }
  const Eigen::VectorXd v = rand::mvn_canonical(rng, prec, rhs);
  Eigen::MatrixXd prop(P1, G);
  for (int p = 0; p < P1; ++p)
    for (int g = 0; g < G; ++g) prop(p, g) = v[p * G + g];
  ++b_proposed_;
  if (!opts_.survival) {
    s.re.b[i] = prop;
    ++b_accepted_;
    return;
  }
  const Eigen::MatrixXd old = s.re.b[i];
  s.re.b[i] = prop;
  const double ll = m_.hazard().survival_loglik(m_.data().subjects[i].survival, s.theta(i), coef_, cache_[i].offset);
  double diff = ll - cache_[i].loglik;
  if (std::isnan(diff)) diff = -std::numeric_limits<double>::infinity();
  if (accept_log(rng, diff)) {
    cache_[i].loglik = ll;
    stale_[i] = 1;
    ++b_accepted_;
  } else {
    s.re.b[i] = old;
  }
}

void Sampler::update_covariance(ChainState& s, Rng& rng) {
  const int G = m_.num_risk_factors();
  const auto& h = m_.spec().hyper;
  const double df0 = h.iw_df > 0.0 ? h.iw_df : G + 2.0;
  for (std::size_t p = 0; p < s.cov.blocks.size(); ++p) {
    Eigen::MatrixXd scale = h.iw_scale * Eigen::MatrixXd::Identity(G, G);
    for (const auto& b : s.re.b) {
      const Eigen::VectorXd r = b.row(static_cast<Eigen::Index>(p)).transpose();
      scale.noalias() += r * r.transpose();
    }
    s.cov.blocks[p] = rand::inverse_wishart(rng, df0 + static_cast<double>(s.re.b.size()), scale);
  }
  refresh_dinv(s);
}

void Sampler::update_sigma(ChainState& s, int g, Rng& rng) {
  const auto& h = m_.spec().hyper;
  double shape = h.sigma_shape, rate = h.sigma_rate;
  if (opts_.longitudinal) {
    double ssr = 0.0, nobs = 0.0;
    for (std::size_t i = 0; i < m_.num_subjects(); ++i) {
      const auto& d = m_.design(i, g);
      if (d.n == 0) continue;
      const Eigen::VectorXd th = s.fe.beta[g] + s.re.b[i].col(g);
      ssr += d.yty - 2.0 * th.dot(d.xty) + th.dot(d.xtx * th);
      nobs += d.n;
    }
    shape += 0.5 * nobs;
    rate += 0.5 * std::max(ssr, 0.0);
  }
  s.sigma2[g] = 1.0 / rand::gamma(rng, shape, rate);
}

void Sampler::refresh_caches(const ChainState& s) {
  const auto& subjects = m_.data().subjects;
  for (std::size_t i = 0; i < cache_.size(); ++i) {
    if (!stale_[i]) continue;
    cache_[i].build(m_.hazard(), subjects[i].survival, s.theta(i), coef_, cache_[i].offset);
    stale_[i] = 0;
  }
}

void Sampler::update_baseline(ChainState& s, Rng& rng) {
  const auto& h = m_.spec().hyper;
  refresh_caches(s);
  for (Eigen::Index q = 0; q < s.baseline.size(); ++q) {
    const double mean = q == 0 ? h.baseline_intercept_mean : 0.0;
    if (!opts_.survival) {
      s.baseline[q] = rand::normal(rng, mean, h.baseline_sd);
      continue;
    }
    auto& step = baseline_step_[q];
    const double delta = step.scale() * rand::normal(rng);
    const double cur = s.baseline[q], prop = cur + delta;
    const double lpr = (dens::log_normal(prop, mean, h.baseline_sd) - dens::log_normal(cur, mean, h.baseline_sd));
    const int col = static_cast<int>(q);
    double dl = 0.0;
    for (const auto& c : cache_) dl += c.delta({&col, 1}, {&delta, 1});
    const bool acc = accept_log(rng, (std::isnan(dl) ? -std::numeric_limits<double>::infinity() : dl) + lpr);
    if (acc) {
      for (auto& c : cache_) c.commit({&col, 1}, {&delta, 1});
      s.baseline[q] = prop;
      coef_[q] = prop;
    }
    step.record(acc, adapt_);
  }
}

void Sampler::update_gamma(ChainState& s, Rng& rng) {
  const auto& h = m_.spec().hyper;
  refresh_caches(s);
  const auto& subjects = m_.data().subjects;
  for (Eigen::Index k = 0; k < s.gamma.size(); ++k) {
    if (!opts_.survival) {
      s.gamma[k] = rand::normal(rng, 0.0, h.covariate_sd);
      continue;
    }
    auto& step = gamma_step_[k];
    const double delta = step.scale() * rand::normal(rng);
    const double cur = s.gamma[k], prop = cur + delta;
    const double lpr = dens::log_normal(prop, 0.0, h.covariate_sd) - dens::log_normal(cur, 0.0, h.covariate_sd);
    double dl = 0.0;
    for (std::size_t i = 0; i < cache_.size(); ++i)
      dl += cache_[i].delta_offset(delta * subjects[i].survival.covariates[k]);
    const bool acc = accept_log(rng, (std::isnan(dl) ? -std::numeric_limits<double>::infinity() : dl) + lpr);
    if (acc) {
      for (std::size_t i = 0; i < cache_.size(); ++i)
        cache_[i].commit_offset(delta * subjects[i].survival.covariates[k]);
      s.gamma[k] = prop;
    }
    step.record(acc, adapt_);
  }
}

void Sampler::sweep(ChainState& s, Rng& rng) {
  for (int g = 0; g < m_.num_risk_factors(); ++g) update_beta(s, g, rng);
  for (std::size_t i = 0; i < m_.num_subjects(); ++i) update_random_effects(s, i, rng);
  update_covariance(s, rng);
  for (int g = 0; g < m_.num_risk_factors(); ++g) update_sigma(s, g, rng);
  update_baseline(s, rng);
  update_gamma(s, rng);
  if (opts_.survival) {
    refresh_caches(s);
    AlphaContext ctx(*this);
    sel_sampler_.sweep(s.sel, ctx, rng);
  } else {
    selection::NullLikelihood ctx;
    sel_sampler_.sweep(s.sel, ctx, rng);
    coef_ = survival_coef(s);
  }
  ++s.iteration;
}

std::vector<std::pair<std::string, double>> Sampler::acceptance_rates() const {
  std::vector<std::pair<std::string, double>> out;
  auto rate = [](long a, long p) { return p ? static_cast<double>(a) / p : 0.0; };
  out.emplace_back("beta", rate(beta_accepted_, beta_proposed_));
  out.emplace_back("b", rate(b_accepted_, b_proposed_));
  auto pooled = [&](const std::vector<selection::AdaptiveStep>& v) {
    long a = 0, p = 0;
    for (const auto& st : v) {
      a += st.accepted;
      p += st.proposed;
    }
    return rate(a, p);
  };
  if (!baseline_step_.empty()) out.emplace_back("baseline", pooled(baseline_step_));
  if (!gamma_step_.empty()) out.emplace_back("gamma", pooled(gamma_step_));
  for (auto& r : sel_sampler_.acceptance_rates()) out.push_back(r);
  return out;
}

std::vector<std::string> output_columns(const JointModel& model) {
  const int G = model.num_risk_factors(), J = model.num_features(), P1 = model.basis_size();
  std::vector<std::string> c;
  for (int g = 1; g <= G; ++g)
    for (int j = 1; j <= J; ++j) c.push_back(index_name("alpha", g, j));
  for (int g = 1; g <= G; ++g)
    for (int j = 1; j <= J; ++j) c.push_back(index_name("alpha_std", g, j));
  for (int g = 1; g <= G; ++g)
    for (int j = 1; j <= J; ++j) c.push_back(index_name("incl", g, j));
  for (int g = 1; g <= G; ++g) c.push_back(index_name("group", g));
  for (int g = 1; g <= G; ++g) c.push_back(index_name("card", g));
  for (int g = 1; g <= G; ++g) c.push_back(index_name("pi_group", g));
  for (int g = 1; g <= G; ++g)
    for (int j = 1; j <= J; ++j) c.push_back(index_name("pi", g, j));
  c.insert(c.end(), {"s2", "inv_s2", "t_rate", "ss_precision"});
  for (int k = 1; k <= model.num_covariates(); ++k) c.push_back(index_name("gamma", k));
  for (int q = 1; q <= model.hazard().baseline().num_coeffs(); ++q) c.push_back(index_name("baseline", q));
  for (int g = 1; g <= G; ++g) c.push_back(index_name("sigma2", g));
  for (int g = 1; g <= G; ++g)
    for (int p = 0; p < P1; ++p) c.push_back(index_name("beta", g, p));
  return c;
}

void record_draw(const JointModel& model, const ChainState& s, double* row) {
  const int G = model.num_risk_factors(), J = model.num_features();
  const auto& scale = model.scaling().scale;
  std::size_t k = 0;
  for (int g = 0; g < G; ++g)
    for (int j = 0; j < J; ++j) row[k++] = s.sel.alpha(g, j) / scale(g, j);
  for (int g = 0; g < G; ++g)
    for (int j = 0; j < J; ++j) row[k++] = s.sel.alpha(g, j);
  for (int g = 0; g < G; ++g)
    for (int j = 0; j < J; ++j) row[k++] = s.sel.included(g, j) ? 1.0 : 0.0;
  for (int g = 0; g < G; ++g) row[k++] = s.sel.group_included(g) ? 1.0 : 0.0;
  for (int g = 0; g < G; ++g) row[k++] = s.sel.cardinality(g);
  for (int g = 0; g < G; ++g) row[k++] = s.sel.group_prob[g];
  for (int g = 0; g < G; ++g)
    for (int j = 0; j < J; ++j) row[k++] = s.sel.feature_prob(g, j);
  row[k++] = 1.0 / s.sel.inv_s2;
  row[k++] = s.sel.inv_s2;
  row[k++] = s.sel.t_rate;
  row[k++] = s.sel.ss_precision;
  for (Eigen::Index m = 0; m < s.gamma.size(); ++m) row[k++] = s.gamma[m];
  for (Eigen::Index q = 0; q < s.baseline.size(); ++q) row[k++] = s.baseline[q];
  for (int g = 0; g < G; ++g) row[k++] = s.sigma2[g];
  for (int g = 0; g < G; ++g)
    for (Eigen::Index p = 0; p < s.fe.beta[g].size(); ++p) row[k++] = s.fe.beta[g][p];
}

int ChainOutput::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("ChainOutput: no column '" + name + "'");
  return static_cast<int>(it - columns.begin());
}

bool ChainOutput::has_column(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

std::string ChainOutput::hash() const {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const auto& c : columns) h = fnv1a(c.data(), c.size() + 1, h);
  h = fnv1a(draws.data(), sizeof(double) * static_cast<std::size_t>(draws.size()), h);
  h = fnv1a(&t_hat, sizeof t_hat, h);
  h = fnv1a(pilot_inv_s2.data(), sizeof(double) * pilot_inv_s2.size(), h);
  h = fnv1a(&seed, sizeof seed, h);
  h = fnv1a(spec_hash.data(), spec_hash.size(), h);
  for (const auto& [name, rate] : acceptance) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(&rate, sizeof rate, h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string build_id() { return JMSEL_BUILD_ID; }

namespace {

std::string state_dump(const ChainState& s) {
  std::ostringstream os;
  os << "sigma2=" << s.sigma2.transpose() << "; baseline=" << s.baseline.transpose()
     << "; gamma=" << s.gamma.transpose() << "; alpha=" << s.sel.alpha().reshaped().transpose()
     << "; s2=" << 1.0 / s.sel.inv_s2;
  return os.str();
}

}  // namespace

ChainOutput run_chain(const ModelSpec& spec, const Dataset& data, const ChainSettings& settings,
                      std::uint64_t seed, const RunOptions& opts) {
  settings.validate();
  const auto start = std::chrono::steady_clock::now();
  JointModel model(spec, data);
  Sampler sampler(model, opts.sampler);
  ChainState s = model.initial_state();
  sampler.attach(s);
  Rng rng = make_stream(seed, 0);

  auto guarded_sweep = [&](long it, const char* phase) {
    try {
      sampler.sweep(s, rng);
    } catch (const std::exception& e) {
      throw NumericError(std::string(phase) + " iteration " + std::to_string(it) + ": " + e.what() +
                         " [state: " + state_dump(s) + "]");
    }
  };

  std::vector<double> pilot_draws;
  if (is_bsgs_family(spec.prior) && settings.empirical_t) {
    std::vector<double>& inv_s2 = pilot_draws;
    for (long it = 0; it < settings.pilot_iterations; ++it) {
      sampler.set_adapt(settings.adapt && it < settings.pilot_burn_in);
      guarded_sweep(it, "pilot");
      if (it >= settings.pilot_burn_in) inv_s2.push_back(s.sel.inv_s2);
    }
    s.sel.t_rate = selection::empirical_t_update(inv_s2);
  }

  ChainOutput out;
  out.columns = output_columns(model);
  const long n_draws = (settings.iterations - settings.burn_in) / settings.thin;
  out.draws.resize(n_draws, static_cast<Eigen::Index>(out.columns.size()));
  std::vector<double> row(out.columns.size());
  long k = 0;
  for (long it = 0; it < settings.iterations; ++it) {
    sampler.set_adapt(settings.adapt && it < settings.burn_in);
    guarded_sweep(it, "final");
    if (opts.on_sweep) opts.on_sweep(it, s);
    if (it >= settings.burn_in && (it - settings.burn_in + 1) % settings.thin == 0 && k < n_draws) {
      record_draw(model, s, row.data());
      for (std::size_t c = 0; c < row.size(); ++c) out.draws(k, static_cast<Eigen::Index>(c)) = row[c];
      ++k;
    }
  }
  out.acceptance = sampler.acceptance_rates();
  out.t_hat = s.sel.t_rate;
  out.pilot_inv_s2 = std::move(pilot_draws);
  out.seed = seed;
  out.spec_hash = spec_hash(spec);
  out.build_id = build_id();
  out.scaling = model.scaling();
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace jmsel::mcmc
