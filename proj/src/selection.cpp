#include "jmsel/selection.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace jmsel::selection {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// -inf is a valid (zero-probability) outcome; NaN is not.
void check_finite(double v, const char* what) {
  if (std::isnan(v)) throw NumericError(std::string("selection: NaN likelihood in ") + what);
}

}  // namespace

bool SelectionState::included(int g, int j) const {
  return group[g] && ((bits[g] >> j) & 1u);
}

bool SelectionState::group_included(int g) const {
  if (prior == PriorKind::SS) return bits[g] != 0;
  return group[g] != 0;
}

double SelectionState::tau_effective(int g, int j) const { return included(g, j) ? tau(g, j) : 0.0; }

double SelectionState::d_effective(int g, int j) const { return group[g] ? d(g, j) : 0.0; }

double SelectionState::alpha(int g, int j) const {
  if (prior == PriorKind::SS) return included(g, j) ? slab(g, j) : 0.0;
  return tau_effective(g, j) * d_effective(g, j);
}

Eigen::VectorXd SelectionState::alpha_row(int g) const {
  Eigen::VectorXd row(num_features);
  for (int j = 0; j < num_features; ++j) row[j] = alpha(g, j);
  return row;
}

Eigen::MatrixXd SelectionState::alpha() const {
  Eigen::MatrixXd a(num_groups, num_features);
  for (int g = 0; g < num_groups; ++g) a.row(g) = alpha_row(g).transpose();
  return a;
}

int SelectionState::cardinality(int g) const { return std::popcount(bits[g]); }

void SelectionState::validate() const {
  if (static_cast<int>(group.size()) != num_groups || static_cast<int>(bits.size()) != num_groups)
    throw std::logic_error("SelectionState: indicator size mismatch");
  if ((tau.array() < 0.0).any()) throw std::logic_error("SelectionState: negative tau");
  if (!(inv_s2 > 0.0) || !(t_rate > 0.0)) throw std::logic_error("SelectionState: s2 and t must be positive");
  if (uses_dirichlet(prior))
    for (int g = 0; g < num_groups; ++g)
      if (bits[g] == 0) throw std::logic_error("SelectionState: empty feature mask");
  if (prior == PriorKind::SS)
    for (int g = 0; g < num_groups; ++g)
      if (!group[g]) throw std::logic_error("SelectionState: SS has no group layer");
}

prior::DirichletWeights initial_weights(PriorKind prior, int J) {
  prior::DirichletWeights w;
  w.a.resize(J);
  w.variant = prior == PriorKind::BsgsDI ? prior::WeightVariant::BinomialScaled : prior::WeightVariant::Plain;
  for (int k = 1; k <= J; ++k) {
    w.a[k - 1] = J - k + 1;
    if (w.variant == prior::WeightVariant::BinomialScaled) w.a[k - 1] *= binomial_coefficient(J, k) / J;
  }
  return w;
}

SelectionState initial_state(PriorKind prior, int G, int J, const Hyperparameters& h) {
  if (G < 1 || J < 1 || J > prior::kMaxFeatures) throw std::invalid_argument("initial_state: bad dimensions");
  SelectionState s;
  s.prior = prior;
  s.num_groups = G;
  s.num_features = J;
  s.group.assign(G, 1);
  s.bits.assign(G, (1u << J) - 1u);
  s.tau = Eigen::MatrixXd::Constant(G, J, 0.1);
  s.d = Eigen::MatrixXd::Constant(G, J, 0.1);
  s.slab = Eigen::MatrixXd::Constant(G, J, 0.1);
  s.group_prob = Eigen::VectorXd::Constant(G, 0.5);
  s.t_rate = h.slab_rate;
  s.inv_s2 = 1.0;
  s.ss_precision = 1.0;
  if (uses_dirichlet(prior)) {
    const auto catalog = prior::enumerate_masks(J);
    s.feature_prob.resize(G, J);
    for (int g = 0; g < G; ++g) {
      s.weights.push_back(initial_weights(prior, J));
      const Eigen::VectorXd conc = prior::build_concentration(s.weights.back(), catalog);
      s.log_q.push_back((conc / conc.sum()).array().log());
      s.feature_prob.row(g) = prior::q_to_pi(s.log_q.back().array().exp(), catalog).transpose();
    }
  } else if (prior == PriorKind::Bsgs) {
    s.feature_prob = Eigen::MatrixXd::Constant(G, J, 0.5);
  } else {
    s.feature_prob = Eigen::MatrixXd::Constant(G, J, h.ss_a / (h.ss_a + h.ss_b));
  }
  return s;
}

void AdaptiveStep::record(bool acc, bool adapt, double target) {
  ++proposed;
  if (acc) ++accepted;
  if (!adapt) return;
  ++adaptations;
  log_scale += ((acc ? 1.0 : 0.0) - target) / std::pow(static_cast<double>(adaptations), 0.6);
  log_scale = std::clamp(log_scale, -12.0, 5.0);
}

SelectionSampler::SelectionSampler(PriorKind prior, int G, int J, const Hyperparameters& h,
                                   SelectionOptions opts)
    : prior_(prior), G_(G), J_(J), h_(h), opts_(opts), catalog_(prior::enumerate_masks(J)) {
  tau_step_.resize(G * J);
  d_step_.resize(G * J);
  slab_step_.resize(G * J);
  weight_step_.resize(G * J);
}

double SelectionSampler::prior_log_odds(double p) const {
  // selection reading: p is the slab weight; literal reading: the spike weight
  const double incl = h_.literal_mixture_weights ? 1.0 - p : p;
  if (incl <= 0.0) return kNegInf;
  if (incl >= 1.0) return -kNegInf;
  return std::log(incl) - std::log1p(-incl);
}

bool SelectionSampler::metropolis(int g, const Eigen::VectorXd& from, const Eigen::VectorXd& to,
                                  double log_prior_ratio, LikelihoodContext& lik, Rng& rng) {
  const double dl = (from == to) ? 0.0 : lik.delta(g, from, to);
  check_finite(dl, "metropolis step");
  const double log_r = dl + log_prior_ratio;
  const bool accept = log_r >= 0.0 || std::log(rand::uniform_open(rng)) < log_r;
  if (accept && from != to) lik.commit(g, from, to);
  return accept;
}

void SelectionSampler::update_group_indicator(SelectionState& s, int g, LikelihoodContext& lik, Rng& rng) {
  if (prior_ == PriorKind::SS) return;
  const bool z = s.group[g];
  const Eigen::VectorXd cur = s.alpha_row(g);
  s.group[g] = !z;
  const Eigen::VectorXd alt = s.alpha_row(g);
  s.group[g] = z;
  const double dl = (cur == alt) ? 0.0 : lik.delta(g, cur, alt);
  check_finite(dl, "group indicator");
  const double on_minus_off = z ? -dl : dl;
  const bool next = rand::bernoulli_logit(rng, prior_log_odds(s.group_prob[g]) + on_minus_off);
  if (next != z) {
    s.group[g] = next;
    if (cur != alt) lik.commit(g, cur, alt);
  }
}

void SelectionSampler::update_feature(SelectionState& s, int g, int j, LikelihoodContext& lik, Rng& rng) {
  const std::uint32_t bit = 1u << j;
  if (prior_ != PriorKind::SS && !s.group[g]) {
    // inactive group: d is pure prior; bits and tau are refreshed in later blocks
    s.d(g, j) = rand::normal(rng);
    return;
  }

  double log_odds = 0.0;
  bool forced = false;
  if (uses_dirichlet(prior_)) {
    const std::uint32_t m1 = s.bits[g] | bit, m0 = s.bits[g] & ~bit;
    if (m0 == 0) {
      forced = true;  // the empty mask has no prior mass
    } else {
      log_odds = s.log_q[g][catalog_.position(m1)] - s.log_q[g][catalog_.position(m0)];
    }
  } else {
    log_odds = prior_log_odds(s.feature_prob(g, j));
  }

  if (!forced) {
    const bool on = s.bits[g] & bit;
    const Eigen::VectorXd cur = s.alpha_row(g);
    s.bits[g] ^= bit;
    const Eigen::VectorXd alt = s.alpha_row(g);
    s.bits[g] ^= bit;
    const double dl = (cur == alt) ? 0.0 : lik.delta(g, cur, alt);
    check_finite(dl, "feature indicator");
    const bool next = rand::bernoulli_logit(rng, log_odds + (on ? -dl : dl));
    if (next != on) {
      s.bits[g] ^= bit;
      if (cur != alt) lik.commit(g, cur, alt);
    }
  }

  if (prior_ == PriorKind::SS) {
    if (s.included(g, j)) update_slab(s, g, j, lik, rng);
    return;
  }
  if (s.included(g, j)) {
    update_tau(s, g, j, lik, rng);
    update_d(s, g, j, lik, rng);
  } else {
    s.d(g, j) = rand::normal(rng);
  }
}

void SelectionSampler::update_tau(SelectionState& s, int g, int j, LikelihoodContext& lik, Rng& rng) {
  AdaptiveStep& step = tau_step_[g * J_ + j];
  const double old = s.tau(g, j);
  const double prop = std::abs(old + step.scale() * rand::normal(rng));  // reflection at 0
  const Eigen::VectorXd from = s.alpha_row(g);
  s.tau(g, j) = prop;
  const Eigen::VectorXd to = s.alpha_row(g);
  const double lpr = -0.5 * s.inv_s2 * (prop * prop - old * old);
  const bool acc = metropolis(g, from, to, lpr, lik, rng);
  if (!acc) s.tau(g, j) = old;
  step.record(acc, adapt_);
}

void SelectionSampler::update_d(SelectionState& s, int g, int j, LikelihoodContext& lik, Rng& rng) {
  AdaptiveStep& step = d_step_[g * J_ + j];
  const double old = s.d(g, j);
  const double prop = old + step.scale() * rand::normal(rng);
  const Eigen::VectorXd from = s.alpha_row(g);
  s.d(g, j) = prop;
  const Eigen::VectorXd to = s.alpha_row(g);
  const bool acc = metropolis(g, from, to, -0.5 * (prop * prop - old * old), lik, rng);
  if (!acc) s.d(g, j) = old;
  step.record(acc, adapt_);
}

void SelectionSampler::update_slab(SelectionState& s, int g, int j, LikelihoodContext& lik, Rng& rng) {
  AdaptiveStep& step = slab_step_[g * J_ + j];
  const double old = s.slab(g, j);
  const double prop = old + step.scale() * rand::normal(rng);
  const Eigen::VectorXd from = s.alpha_row(g);
  s.slab(g, j) = prop;
  const Eigen::VectorXd to = s.alpha_row(g);
  const double lpr = -0.5 * s.ss_precision * (prop * prop - old * old);
  const bool acc = metropolis(g, from, to, lpr, lik, rng);
  if (!acc) s.slab(g, j) = old;
  step.record(acc, adapt_);
}

void SelectionSampler::update_q_and_weights(SelectionState& s, int g, Rng& rng) {
  if (!uses_dirichlet(prior_)) return;
  Eigen::VectorXd conc = prior::build_concentration(s.weights[g], catalog_);
  if (s.group[g]) {
    conc[catalog_.position(s.bits[g])] += 1.0;
    s.log_q[g] = rand::log_dirichlet(rng, conc);
  } else {
    // mask unobserved: draw (q, M) jointly from the prior
    s.log_q[g] = rand::log_dirichlet(rng, conc);
    const std::size_t c = rand::categorical_log(
        rng, {s.log_q[g].data(), static_cast<std::size_t>(s.log_q[g].size())});
    s.bits[g] = catalog_[c].bits();
  }
  if (!opts_.fix_dirichlet_weights) update_weights(s, g, rng);
  s.feature_prob.row(g) = prior::q_to_pi(s.log_q[g].array().exp(), catalog_).transpose();
}

void SelectionSampler::update_weights(SelectionState& s, int g, Rng& rng) {
  prior::DirichletWeights& w = s.weights[g];
  double cur_dir = dens::log_dirichlet(s.log_q[g], prior::build_concentration(w, catalog_));
  for (int k = 0; k < J_; ++k) {
    AdaptiveStep& step = weight_step_[g * J_ + k];
    prior::DirichletWeights prop = w;
    const double eps = step.scale() * rand::normal(rng);
    prop.a[k] = w.a[k] * std::exp(eps);
    if (!prop.ordered()) {
      step.record(false, adapt_);
      continue;
    }
    const double prop_dir = dens::log_dirichlet(s.log_q[g], prior::build_concentration(prop, catalog_));
    // half-Cauchy prior on a_k plus the log-scale Jacobian
    const double log_r = dens::log_half_cauchy(prop.a[k]) - dens::log_half_cauchy(w.a[k]) + eps +
                         prop_dir - cur_dir;
    const bool acc = log_r >= 0.0 || std::log(rand::uniform_open(rng)) < log_r;
    if (acc) {
      w = prop;
      cur_dir = prop_dir;
    }
    step.record(acc, adapt_);
  }
}

void SelectionSampler::update_inclusion_probs(SelectionState& s, Rng& rng) {
  const bool lit = h_.literal_mixture_weights;
  auto beta_post = [&](double a, double b, double n_in, double n_out) {
    return lit ? rand::beta(rng, a + n_out, b + n_in) : rand::beta(rng, a + n_in, b + n_out);
  };
  if (uses_dirichlet(prior_)) {
    for (int g = 0; g < G_; ++g) {
      const double z = s.group[g] ? 1.0 : 0.0;
      s.group_prob[g] = beta_post(h_.group_a, h_.group_b, z, 1.0 - z);
    }
  } else if (prior_ == PriorKind::Bsgs) {
    double nz = 0.0, n1 = 0.0, n0 = 0.0;
    for (int g = 0; g < G_; ++g) {
      nz += s.group[g];
      if (!s.group[g]) continue;
      const int c = s.cardinality(g);
      n1 += c;
      n0 += J_ - c;
    }
    const double pi0 = beta_post(h_.group_a, h_.group_b, nz, G_ - nz);
    const double pi1 = beta_post(h_.feature_c, h_.feature_d, n1, n0);
    s.group_prob.setConstant(pi0);
    s.feature_prob.setConstant(pi1);
    const double p_incl = lit ? 1.0 - pi1 : pi1;
    for (int g = 0; g < G_; ++g) {
      if (s.group[g]) continue;
      std::uint32_t b = 0;
      for (int j = 0; j < J_; ++j)
        if (rand::bernoulli(rng, p_incl)) b |= 1u << j;
      s.bits[g] = b;
    }
  } else {
    for (int g = 0; g < G_; ++g)
      for (int j = 0; j < J_; ++j) {
        const double x = (s.bits[g] >> j) & 1u;
        s.feature_prob(g, j) = beta_post(h_.ss_a, h_.ss_b, x, 1.0 - x);
      }
  }
}

void SelectionSampler::update_slab_variance(SelectionState& s, Rng& rng) {
  if (prior_ == PriorKind::SS) {
    double k = 0.0, ss = 0.0;
    for (int g = 0; g < G_; ++g)
      for (int j = 0; j < J_; ++j)
        if (s.included(g, j)) {
          k += 1.0;
          ss += s.slab(g, j) * s.slab(g, j);
        }
    s.ss_precision = rand::gamma(rng, h_.ss_precision_shape + 0.5 * k, h_.ss_precision_rate + 0.5 * ss);
    const double sd = 1.0 / std::sqrt(s.ss_precision);
    for (int g = 0; g < G_; ++g)
      for (int j = 0; j < J_; ++j)
        if (!s.included(g, j)) s.slab(g, j) = rand::normal(rng, 0.0, sd);
    return;
  }
  if (!opts_.fix_slab_variance) {
    double m = 0.0, ss = 0.0;
    for (int g = 0; g < G_; ++g)
      for (int j = 0; j < J_; ++j)
        if (s.included(g, j)) {
          m += 1.0;
          ss += s.tau(g, j) * s.tau(g, j);
        }
    s.inv_s2 = rand::gamma(rng, h_.slab_shape + 0.5 * m, s.t_rate + 0.5 * ss);
  }
  const double sd = 1.0 / std::sqrt(s.inv_s2);
  for (int g = 0; g < G_; ++g)
    for (int j = 0; j < J_; ++j)
      if (!s.included(g, j)) s.tau(g, j) = rand::half_normal(rng, sd);
}

void SelectionSampler::sweep(SelectionState& s, LikelihoodContext& lik, Rng& rng) {
  for (int g = 0; g < G_; ++g) {
    update_group_indicator(s, g, lik, rng);
    for (int j = 0; j < J_; ++j) update_feature(s, g, j, lik, rng);
  }
  for (int g = 0; g < G_; ++g) update_q_and_weights(s, g, rng);
  update_inclusion_probs(s, rng);
  update_slab_variance(s, rng);
}

std::vector<std::pair<std::string, double>> SelectionSampler::acceptance_rates() const {
  auto pooled = [](const std::vector<AdaptiveStep>& steps) {
    long p = 0, a = 0;
    for (const auto& st : steps) {
      p += st.proposed;
      a += st.accepted;
    }
    return p ? static_cast<double>(a) / p : 0.0;
  };
  std::vector<std::pair<std::string, double>> out;
  if (prior_ == PriorKind::SS) {
    out.emplace_back("slab", pooled(slab_step_));
  } else {
    out.emplace_back("tau", pooled(tau_step_));
    out.emplace_back("d", pooled(d_step_));
  }
  if (uses_dirichlet(prior_) && !opts_.fix_dirichlet_weights)
    out.emplace_back("dirichlet_a", pooled(weight_step_));
  return out;
}

double empirical_t_update(std::span<const double> inv_s2_draws) {
  if (inv_s2_draws.empty()) throw std::invalid_argument("empirical_t_update: no stored draws");
  double sum = 0.0;
  for (double v : inv_s2_draws) sum += v;
  const double mean = sum / static_cast<double>(inv_s2_draws.size());
  if (!(mean > 0.0) || !std::isfinite(mean)) throw NumericError("empirical_t_update: invalid mean");
  return 1.0 / mean;
}

}  // namespace jmsel::selection
