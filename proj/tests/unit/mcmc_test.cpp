#include "jmsel/mcmc.hpp"
#include "jmsel/simgen.hpp"

#include <doctest.h>

#include <chrono>

using namespace jmsel;
using namespace jmsel::mcmc;

namespace {

sim::GeneratedDataset small_dataset(int n, std::uint64_t seed, sim::Scenario sc = sim::Scenario::I) {
  auto spec = sim::default_scenario(sc, n, seed);
  spec.censoring_rate = 0.02;
  return sim::generate(spec);
}

ModelSpec spec_for(const sim::GeneratedDataset& g, PriorKind prior = PriorKind::BsgsD) {
  ModelSpec m;
  m.thresholds = g.spec.thresholds;
  m.a_max = g.spec.a_max;
  m.prior = prior;
  return m;
}

ChainSettings short_settings(long iterations = 200, long burn = 100, long thin = 2) {
  ChainSettings c;
  c.iterations = iterations;
  c.burn_in = burn;
  c.thin = thin;
  c.pilot_iterations = 60;
  c.pilot_burn_in = 30;
  return c;
}

// Direct sum of survival log-likelihoods at the current state.
double direct_survival_loglik(const JointModel& m, const ChainState& s) {
  survival::HazardParams p{s.baseline, s.gamma, s.sel.alpha()};
  double acc = 0.0;
  for (std::size_t i = 0; i < m.num_subjects(); ++i)
    acc += m.hazard().survival_loglik(m.data().subjects[i].survival, s.theta(i), p);
  return acc;
}

}  // namespace

TEST_CASE("chain settings must leave post-burn-in draws") {
  ChainSettings c = short_settings(100, 100, 1);
  CHECK_THROWS(c.validate());
  c = short_settings(110, 100, 20);
  CHECK_THROWS(c.validate());
  c = short_settings(120, 100, 20);
  CHECK_NOTHROW(c.validate());
  const auto g = small_dataset(20, 1);
  CHECK_THROWS(run_chain(spec_for(g), g.data, short_settings(100, 100, 1), 1));
}

TEST_CASE("run_chain is deterministic and records the expected number of draws") {
  const auto g = small_dataset(30, 2);
  const auto spec = spec_for(g);
  const auto settings = short_settings(200, 100, 3);
  const auto a = run_chain(spec, g.data, settings, 17);
  const auto b = run_chain(spec, g.data, settings, 17);
  CHECK(a.num_draws() == (200 - 100) / 3);
  CHECK(a.hash() == b.hash());
  CHECK(a.draws == b.draws);
  CHECK(a.t_hat == b.t_hat);
  const auto c = run_chain(spec, g.data, settings, 18);
  CHECK(a.hash() != c.hash());
  CHECK(a.columns == output_columns(JointModel(spec, g.data)));
  // indicators are 0/1
  for (int gg = 1; gg <= 3; ++gg)
    for (int j = 1; j <= 4; ++j) {
      const Eigen::VectorXd v = a.col("incl[" + std::to_string(gg) + "," + std::to_string(j) + "]");
      CHECK((v.array() * (1.0 - v.array())).abs().maxCoeff() == 0.0);
    }
}

TEST_CASE("sweeps keep the survival cache equal to a direct evaluation") {
  const auto g = small_dataset(40, 3, sim::Scenario::IV);
  for (auto prior : {PriorKind::BsgsD, PriorKind::Bsgs, PriorKind::SS}) {
    const JointModel model(spec_for(g, prior), g.data);
    Sampler sampler(model);
    auto s = model.initial_state();
    sampler.attach(s);
    sampler.set_adapt(true);
    Rng rng = make_stream(9);
    for (int it = 0; it < 40; ++it) {
      sampler.sweep(s, rng);
      CHECK_NOTHROW(s.validate());
      const double direct = direct_survival_loglik(model, s);
      CHECK(sampler.survival_loglik() == doctest::Approx(direct).epsilon(1e-9));
    }
  }
}

TEST_CASE("conjugate beta update matches the closed-form Gaussian posterior") {
  const auto g = small_dataset(60, 4);
  const JointModel model(spec_for(g), g.data);
  Sampler sampler(model, {.longitudinal = true, .survival = false});
  auto s = model.initial_state();
  Rng rng = make_stream(10);
  for (auto& b : s.re.b) b.setConstant(0.05);
  s.sigma2.setConstant(0.2);
  sampler.attach(s);

  // oracle from the raw observations
  const int gi = 1;
  const double sd = model.spec().hyper.fixed_effect_sd;
  Eigen::Matrix3d prec = Eigen::Matrix3d::Identity() / (sd * sd);
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < g.data.subjects.size(); ++i)
    for (const auto& o : g.data.subjects[i].longitudinal[gi]) {
      const Eigen::Vector3d x = longitudinal::legendre_basis(o.age, model.basis().a_max(), 2);
      prec += x * x.transpose() / 0.2;
      rhs += x * (o.value - x.dot(s.re.b[i].col(gi))) / 0.2;
    }
  const Eigen::Matrix3d cov = prec.inverse();
  const Eigen::Vector3d mean = cov * rhs;

  const int n = 10000;
  Eigen::MatrixXd draws(n, 3);
  for (int k = 0; k < n; ++k) {
    sampler.update_beta(s, gi, rng);
    draws.row(k) = s.fe.beta[gi].transpose();
  }
  const Eigen::RowVectorXd m = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - m;
  const Eigen::MatrixXd c = centered.transpose() * centered / (n - 1);
  for (int p = 0; p < 3; ++p) {
    CHECK(std::abs(m[p] - mean[p]) < 3 * std::sqrt(cov(p, p) / n));
    CHECK(std::abs(c(p, p) - cov(p, p)) < 3 * cov(p, p) * std::sqrt(2.0 / n));
  }
  for (int p = 0; p < 3; ++p)
    for (int q = p + 1; q < 3; ++q) {
      const double se = std::sqrt((cov(p, p) * cov(q, q) + cov(p, q) * cov(p, q)) / n);
      CHECK(std::abs(c(p, q) - cov(p, q)) < 3 * se);
    }
}

TEST_CASE("prior-only sampler reproduces the group prior") {
  const auto g = small_dataset(20, 5);
  const JointModel model(spec_for(g), g.data);
  Sampler sampler(model, {.longitudinal = false, .survival = false, .selection = {.fix_dirichlet_weights = true}});
  auto s = model.initial_state();
  sampler.attach(s);
  Rng rng = make_stream(11);
  const int n = 20000;
  Eigen::VectorXd z(n);
  for (int k = 0; k < n; ++k) {
    sampler.sweep(s, rng);
    z[k] = s.sel.group[2];
  }
  double acf_se;
  {
    // batch means standard error
    const int B = 50, L = n / B;
    Eigen::VectorXd bm(B);
    for (int b = 0; b < B; ++b) bm[b] = z.segment(b * L, L).mean();
    acf_se = std::sqrt((bm.array() - bm.mean()).square().sum() / (B - 1) / B);
  }
  CHECK(std::abs(z.mean() - 0.5) < 3 * acf_se);
}

TEST_CASE("tiny dataset runs 2000 iterations quickly") {
  const auto g = small_dataset(20, 6);
  ChainSettings c = short_settings(2000, 1000, 5);
  c.pilot_iterations = 500;
  c.pilot_burn_in = 250;
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = run_chain(spec_for(g), g.data, c, 3);
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(sec < 60.0);
  CHECK(out.num_draws() == 200);
  CHECK(out.t_hat > 0.0);
  CHECK(std::isfinite(out.t_hat));
}

TEST_CASE("empirical t is the reciprocal mean of the pilot's stored inv_s2") {
  const auto g = small_dataset(25, 7);
  auto spec = spec_for(g);
  ChainSettings c = short_settings(120, 60, 1);
  c.pilot_iterations = 200;
  c.pilot_burn_in = 100;
  // the pilot is a chain with the initial rate and the pilot's lengths
  ChainSettings pilot = c;
  pilot.iterations = c.pilot_iterations;
  pilot.burn_in = c.pilot_burn_in;
  pilot.thin = 1;
  pilot.empirical_t = false;
  const auto p = run_chain(spec, g.data, pilot, 5);
  const Eigen::VectorXd inv = p.col("inv_s2");
  const auto full = run_chain(spec, g.data, c, 5);
  double sum = 0.0;
  for (Eigen::Index k = 0; k < inv.size(); ++k) sum += inv[k];
  CHECK(full.t_hat == 1.0 / (sum / static_cast<double>(inv.size())));
  CHECK((full.col("t_rate").array() == full.t_hat).all());
  CHECK(full.pilot_inv_s2 == std::vector<double>(inv.data(), inv.data() + inv.size()));
}

TEST_CASE("non-BSGS priors skip the pilot") {
  const auto g = small_dataset(20, 8);
  const auto spec = spec_for(g, PriorKind::SS);
  const auto out = run_chain(spec, g.data, short_settings(100, 50, 1), 2);
  CHECK(out.t_hat == spec.hyper.slab_rate);
}

TEST_CASE("initial state follows the documented defaults") {
  const auto g = small_dataset(30, 9);
  const JointModel model(spec_for(g), g.data);
  const auto s = model.initial_state();
  for (const auto& b : s.re.b) CHECK(b.isZero());
  for (const auto& blk : s.cov.blocks) CHECK(blk.isIdentity());
  for (int gg = 0; gg < 3; ++gg) {
    CHECK(s.sel.group_included(gg));
    for (int j = 0; j < 4; ++j) {
      CHECK(s.sel.tau(gg, j) == 0.1);
      CHECK(s.sel.d(gg, j) == 0.1);
    }
  }
  CHECK(model.scaling().scale.minCoeff() > 0.0);
}

TEST_CASE("posterior contracts around a strong feature" * doctest::test_suite("slow")) {
  auto sc = sim::default_scenario(sim::Scenario::I, 400, 21);
  const auto g = sim::generate(sc);
  ChainSettings c = short_settings(2500, 1000, 1);
  c.pilot_iterations = 600;
  c.pilot_burn_in = 300;
  const auto out = run_chain(spec_for(g), g.data, c, 4);
  const Eigen::VectorXd a = out.col("alpha[2,1]");
  const double m = a.mean();
  const double sd = std::sqrt((a.array() - m).square().sum() / (a.size() - 1));
  CHECK(std::abs(m - sc.true_alpha(1, 0)) < 3 * sd);
  CHECK(out.col("incl[2,1]").mean() > 0.9);
}
