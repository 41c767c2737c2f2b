#include "jmsel/simgen.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace jmsel::sim {

namespace {

constexpr int kG = 3;
constexpr int kJ = 4;
constexpr std::uint64_t kPilotStream = 1ULL << 40;
constexpr std::uint64_t kThresholdSeed = 20240917;

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json mat_json(const Eigen::MatrixXd& m) {
  auto j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(vec_json(m.row(r).transpose()));
  return j;
}

Eigen::MatrixXd json_mat(const nlohmann::json& j) {
  Eigen::MatrixXd m(j.size(), j.empty() ? 0 : j[0].size());
  for (std::size_t r = 0; r < j.size(); ++r) m.row(static_cast<Eigen::Index>(r)) = json_vec(j[r]).transpose();
  return m;
}

// One subject before random censoring is applied.
struct SubjectDraw {
  SubjectRecord rec;
  Eigen::MatrixXd b;
  EventDraw event;
  double censor_unit = 0.0;  // Exp(1); censoring time = entry + censor_unit / rate
};

SubjectDraw draw_subject(const ScenarioSpec& spec, const survival::HazardModel& hazard,
                         const survival::HazardParams& params, const std::vector<Eigen::MatrixXd>& d_chol,
                         Rng& rng) {
  const int G = spec.num_risk_factors();
  const int P1 = static_cast<int>(spec.d_blocks.size());
  SubjectDraw s;
  const double entry = spec.entry_max * rand::uniform(rng);
  const double race = rand::bernoulli(rng, spec.race_prob) ? 1.0 : 0.0;
  s.b.resize(P1, G);
  for (int p = 0; p < P1; ++p) {
    Eigen::VectorXd z(G);
    for (int g = 0; g < G; ++g) z[g] = rand::normal(rng);
    s.b.row(p) = (d_chol[p] * z).transpose();
  }
  Eigen::MatrixXd theta(P1, G);
  for (int g = 0; g < G; ++g) theta.col(g) = spec.beta[g] + s.b.col(g);
  s.rec.longitudinal.resize(G);
  for (int v = 0; v < spec.num_visits; ++v) {
    const double age = entry + v * spec.visit_spacing;
    const Eigen::VectorXd x = hazard.basis().value(age);
    for (int g = 0; g < G; ++g)
      s.rec.longitudinal[g].push_back({age, x.dot(theta.col(g)) + spec.sigma[g] * rand::normal(rng)});
  }
  s.rec.survival.entry = entry;
  s.rec.survival.covariates = {race};
  s.event = sample_event_time(hazard, theta, s.rec.survival.covariates, params, entry, entry + spec.horizon,
                              rand::uniform_open(rng));
  s.censor_unit = rand::exponential(rng, 1.0);
  return s;
}

std::vector<Eigen::MatrixXd> block_cholesky(const ScenarioSpec& spec) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& blk : spec.d_blocks) {
    Eigen::LLT<Eigen::MatrixXd> llt(blk);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("scenario: D block not positive definite");
    out.push_back(llt.matrixL());
  }
  return out;
}

// Apply random censoring at `rate`; returns whether the subject ends censored.
bool censor(const SubjectDraw& s, double rate, double& time) {
  const double entry = s.rec.survival.entry;
  const double c = rate > 0.0 ? entry + s.censor_unit / rate : std::numeric_limits<double>::infinity();
  if (c < s.event.time) {
    time = std::max(c, std::nextafter(entry, std::numeric_limits<double>::infinity()));
    return true;
  }
  time = s.event.time;
  return !s.event.event;
}

double censored_fraction(const std::vector<SubjectDraw>& draws, double rate) {
  std::size_t c = 0;
  double t = 0.0;
  for (const auto& s : draws) c += censor(s, rate, t) ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(draws.size());
}

}  // namespace

std::vector<double> mid_followup_medians(const ScenarioSpec& spec, int draws) {
  const int G = spec.num_risk_factors();
  const auto chol = block_cholesky(spec);
  const longitudinal::LegendreBasis basis(spec.a_max, static_cast<int>(spec.d_blocks.size()) - 1);
  Rng rng = make_stream(kThresholdSeed);
  std::vector<std::vector<double>> mu(G);
  for (int i = 0; i < draws; ++i) {
    const Eigen::VectorXd x = basis.value(spec.entry_max * rand::uniform(rng) + 0.5 * spec.horizon);
    Eigen::MatrixXd b(chol.size(), G);
    for (std::size_t p = 0; p < chol.size(); ++p) {
      Eigen::VectorXd z(G);
      for (int g = 0; g < G; ++g) z[g] = rand::normal(rng);
      b.row(static_cast<Eigen::Index>(p)) = (chol[p] * z).transpose();
    }
    for (int g = 0; g < G; ++g) mu[g].push_back(x.dot(spec.beta[g] + b.col(g)));
  }
  std::vector<double> out;
  for (auto& v : mu) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    out.push_back(v[v.size() / 2]);
  }
  return out;
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::I: return "I";
    case Scenario::II: return "II";
    case Scenario::III: return "III";
    case Scenario::IV: return "IV";
  }
  return "?";
}

Scenario parse_scenario(const std::string& s) {
  if (s == "I" || s == "1") return Scenario::I;
  if (s == "II" || s == "2") return Scenario::II;
  if (s == "III" || s == "3") return Scenario::III;
  if (s == "IV" || s == "4") return Scenario::IV;
  throw std::invalid_argument("unknown scenario '" + s + "'");
}

Eigen::MatrixXi scenario_pattern(Scenario s) {
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(kG, kJ);
  switch (s) {
    case Scenario::I: m(1, 0) = 1; break;
    case Scenario::II: m(0, 2) = m(1, 0) = m(2, 1) = 1; break;
    case Scenario::III: m(0, 0) = m(0, 2) = 1; break;
    case Scenario::IV: m(0, 0) = m(0, 2) = m(1, 0) = m(1, 2) = 1; break;
  }
  return m;
}

void ScenarioSpec::validate() const {
  const int G = num_risk_factors();
  if (n < 1) throw std::invalid_argument("scenario: n must be positive");
  if (!(censoring_target >= 0.05 && censoring_target <= 0.50))
    throw std::invalid_argument("scenario: censoring_target must lie in [0.05, 0.50]");
  if (G != kG || true_alpha.rows() != kG || true_alpha.cols() != kJ)
    throw std::invalid_argument("scenario: expected 3 risk factors and 4 features");
  if (static_cast<int>(thresholds.size()) != G || sigma.size() != G)
    throw std::invalid_argument("scenario: thresholds and sigma need one entry per risk factor");
  if ((sigma.array() < 0.0).any()) throw std::invalid_argument("scenario: sigma must be non-negative");
  if (d_blocks.empty()) throw std::invalid_argument("scenario: missing D blocks");
  for (const auto& b : beta)
    if (b.size() != static_cast<Eigen::Index>(d_blocks.size()))
      throw std::invalid_argument("scenario: beta and D disagree on the polynomial order");
  for (const auto& blk : d_blocks)
    if (blk.rows() != G || blk.cols() != G) throw std::invalid_argument("scenario: D blocks must be G x G");
  const Eigen::MatrixXi pattern = scenario_pattern(scenario);
  for (int g = 0; g < kG; ++g)
    for (int j = 0; j < kJ; ++j)
      if ((true_alpha(g, j) != 0.0) != (pattern(g, j) != 0))
        throw std::invalid_argument("scenario " + to_string(scenario) + ": alpha sparsity does not match the scenario");
  if (entry_max + (num_visits - 1) * visit_spacing > a_max || entry_max + horizon > a_max + 1e-12)
    throw std::invalid_argument("scenario: follow-up exceeds a_max");
  if (!baseline_knots.empty() && baseline_coef.size() < 1)
    throw std::invalid_argument("scenario: spline baseline needs coefficients");
}

ScenarioSpec default_scenario(Scenario sc, int n, std::uint64_t seed) {
  ScenarioSpec s;
  s.scenario = sc;
  s.n = n;
  s.seed = seed;
  s.beta = {(Eigen::VectorXd(3) << 1.0, 0.4, -0.2).finished(), (Eigen::VectorXd(3) << 0.0, 0.6, 0.2).finished(),
            (Eigen::VectorXd(3) << 0.5, -0.4, 0.3).finished()};
  Eigen::MatrixXd d0(3, 3), d1(3, 3);
  d0 << 0.50, 0.10, 0.05, 0.10, 0.50, 0.10, 0.05, 0.10, 0.50;
  d1 << 0.30, 0.03, 0.00, 0.03, 0.30, 0.03, 0.00, 0.03, 0.30;
  s.d_blocks = {d0, d1, 0.10 * Eigen::MatrixXd::Identity(3, 3)};
  s.sigma = Eigen::VectorXd::Constant(3, 0.3);
  s.thresholds = mid_followup_medians(s);
  s.true_alpha = Eigen::MatrixXd::Zero(kG, kJ);
  const Eigen::MatrixXi pattern = scenario_pattern(sc);
  const double magnitude[kJ] = {1.0, 18.0, 0.06, 1.5};
  for (int g = 0; g < kG; ++g)
    for (int j = 0; j < kJ; ++j)
      if (pattern(g, j)) s.true_alpha(g, j) = magnitude[j];
  const double log_lambda0[] = {-2.2, -2.4, -3.0, -2.8};
  s.log_lambda0 = log_lambda0[static_cast<int>(sc)];
  return s;
}

void to_json(nlohmann::json& j, const ScenarioSpec& s) {
  j = nlohmann::json{{"scenario", to_string(s.scenario)},
                     {"n", s.n},
                     {"seed", s.seed},
                     {"censoring_target", s.censoring_target},
                     {"censoring_rate", s.censoring_rate},
                     {"true_alpha", mat_json(s.true_alpha)},
                     {"true_gamma", s.true_gamma},
                     {"log_lambda0", s.log_lambda0},
                     {"sigma", vec_json(s.sigma)},
                     {"thresholds", s.thresholds},
                     {"baseline_knots", s.baseline_knots},
                     {"baseline_coef", vec_json(s.baseline_coef)},
                     {"entry_max", s.entry_max},
                     {"visit_spacing", s.visit_spacing},
                     {"num_visits", s.num_visits},
                     {"horizon", s.horizon},
                     {"a_max", s.a_max},
                     {"race_prob", s.race_prob}};
  j["beta"] = nlohmann::json::array();
  for (const auto& b : s.beta) j["beta"].push_back(vec_json(b));
  j["d_blocks"] = nlohmann::json::array();
  for (const auto& d : s.d_blocks) j["d_blocks"].push_back(mat_json(d));
}

// Keys absent from `j` keep the defaults of the named scenario.
void from_json(const nlohmann::json& j, ScenarioSpec& s) {
  const Scenario sc = parse_scenario(j.value("scenario", to_string(s.scenario)));
  if (sc != s.scenario || s.beta.empty()) s = default_scenario(sc, s.n, s.seed);
  s.n = j.value("n", s.n);
  s.seed = j.value("seed", s.seed);
  s.censoring_target = j.value("censoring_target", s.censoring_target);
  s.censoring_rate = j.value("censoring_rate", s.censoring_rate);
  if (j.contains("true_alpha")) s.true_alpha = json_mat(j["true_alpha"]);
  s.true_gamma = j.value("true_gamma", s.true_gamma);
  s.log_lambda0 = j.value("log_lambda0", s.log_lambda0);
  if (j.contains("sigma")) s.sigma = json_vec(j["sigma"]);
  if (j.contains("thresholds")) s.thresholds = j["thresholds"].get<std::vector<double>>();
  if (j.contains("baseline_knots")) s.baseline_knots = j["baseline_knots"].get<std::vector<double>>();
  if (j.contains("baseline_coef")) s.baseline_coef = json_vec(j["baseline_coef"]);
  s.entry_max = j.value("entry_max", s.entry_max);
  s.visit_spacing = j.value("visit_spacing", s.visit_spacing);
  s.num_visits = j.value("num_visits", s.num_visits);
  s.horizon = j.value("horizon", s.horizon);
  s.a_max = j.value("a_max", s.a_max);
  s.race_prob = j.value("race_prob", s.race_prob);
  if (j.contains("beta")) {
    s.beta.clear();
    for (const auto& b : j["beta"]) s.beta.push_back(json_vec(b));
  }
  if (j.contains("d_blocks")) {
    s.d_blocks.clear();
    for (const auto& d : j["d_blocks"]) s.d_blocks.push_back(json_mat(d));
  }
}

survival::HazardModel generating_hazard(const ScenarioSpec& spec) {
  survival::BaselineLayout layout;
  if (!spec.baseline_knots.empty())
    layout = survival::BaselineLayout(Eigen::Map<const Eigen::VectorXd>(spec.baseline_knots.data(),
                                                                        static_cast<Eigen::Index>(spec.baseline_knots.size())),
                                      3);
  return survival::HazardModel(longitudinal::LegendreBasis(spec.a_max, 2),
                               {FeatureKind::Value, FeatureKind::Slope, FeatureKind::Area, FeatureKind::Threshold},
                               spec.thresholds, 0.0, layout, 15);
}

survival::HazardParams generating_params(const ScenarioSpec& spec) {
  survival::HazardParams p;
  if (spec.baseline_knots.empty()) {
    p.baseline = Eigen::VectorXd::Constant(1, spec.log_lambda0);
  } else {
    p.baseline = spec.baseline_coef;
  }
  p.gamma = Eigen::VectorXd::Constant(1, spec.true_gamma);
  p.alpha = spec.true_alpha;
  return p;
}

EventDraw sample_event_time(const survival::HazardModel& model, const Eigen::MatrixXd& theta,
                            const std::vector<double>& covariates, const survival::HazardParams& params,
                            double entry, double horizon, double u) {
  if (!(u > 0.0 && u <= 1.0)) throw DomainError("sample_event_time: u must lie in (0, 1]");
  if (!(horizon > entry)) throw DomainError("sample_event_time: horizon must exceed entry");
  const double target = -std::log(u);
  if (target == 0.0) return {entry, true};
  auto excess = [&](double t) {
    return t <= entry ? -target : model.cumulative_hazard(theta, covariates, params, entry, t) - target;
  };
  const double at_horizon = excess(horizon);
  if (!std::isfinite(at_horizon)) throw NumericError("sample_event_time: non-finite cumulative hazard");
  if (at_horizon < 0.0) return {horizon, false};
  std::uintmax_t iters = 200;
  const auto [lo, hi] = boost::math::tools::toms748_solve(excess, entry, horizon, -target, at_horizon,
                                                          boost::math::tools::eps_tolerance<double>(45), iters);
  double t = 0.5 * (lo + hi);
  if (t <= entry) t = std::nextafter(entry, horizon);
  return {t, true};
}

double calibrate_censoring(const ScenarioSpec& spec, int pilot_size) {
  spec.validate();
  if (pilot_size < 500) throw std::invalid_argument("calibrate_censoring: pilot_size must be at least 500");
  const auto hazard = generating_hazard(spec);
  const auto params = generating_params(spec);
  const auto chol = block_cholesky(spec);
  std::vector<SubjectDraw> draws;
  draws.reserve(pilot_size);
  for (int i = 0; i < pilot_size; ++i) {
    Rng rng = make_stream(spec.seed, kPilotStream + static_cast<std::uint64_t>(i));
    draws.push_back(draw_subject(spec, hazard, params, chol, rng));
  }
  const double lo_frac = censored_fraction(draws, 0.0);
  const double tol = 0.005;
  if (lo_frac > spec.censoring_target + tol)
    throw DomainError("calibrate_censoring: target " + std::to_string(spec.censoring_target) +
                      " unreachable; achievable range is [" + std::to_string(lo_frac) + ", 1)");
  if (lo_frac >= spec.censoring_target - tol) return 0.0;
  double lo = 0.0, hi = 0.01;
  while (censored_fraction(draws, hi) < spec.censoring_target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw DomainError("calibrate_censoring: could not bracket the censoring rate");
  }
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = censored_fraction(draws, mid);
    if (std::abs(f - spec.censoring_target) < tol) return mid;
    (f < spec.censoring_target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

GeneratedDataset generate(ScenarioSpec spec) {
  spec.validate();
  if (spec.censoring_rate < 0.0) spec.censoring_rate = calibrate_censoring(spec);
  const auto hazard = generating_hazard(spec);
  const auto params = generating_params(spec);
  const auto chol = block_cholesky(spec);
  GeneratedDataset out;
  out.data.num_risk_factors = spec.num_risk_factors();
  out.data.covariate_names = {"race"};
  std::size_t censored = 0;
  for (int i = 0; i < spec.n; ++i) {
    Rng rng = make_stream(spec.seed, static_cast<std::uint64_t>(i) + 1);
    SubjectDraw s = draw_subject(spec, hazard, params, chol, rng);
    s.rec.id = std::to_string(i + 1);
    double time = 0.0;
    const bool cens = censor(s, spec.censoring_rate, time);
    s.rec.survival.time = time;
    s.rec.survival.event = !cens;
    censored += cens ? 1 : 0;
    for (auto& obs : s.rec.longitudinal)
      obs.erase(std::remove_if(obs.begin(), obs.end(), [&](const Observation& o) { return o.age > time; }),
                obs.end());
    out.data.subjects.push_back(std::move(s.rec));
    out.random_effects.push_back(std::move(s.b));
  }
  out.realized_censoring = static_cast<double>(censored) / spec.n;
  out.spec = std::move(spec);
  return out;
}

Dataset simulate_from_state(const mcmc::JointModel& model, const mcmc::ChainState& s, const Dataset& layout,
                            double horizon, Rng& rng) {
  const int G = model.num_risk_factors();
  survival::HazardParams params{s.baseline, s.gamma, s.sel.alpha()};
  Dataset d = layout;
  for (std::size_t i = 0; i < d.subjects.size(); ++i) {
    auto& subj = d.subjects[i];
    const Eigen::MatrixXd theta = s.theta(i);
    for (int g = 0; g < G; ++g) {
      const double sd = std::sqrt(s.sigma2[g]);
      for (auto& o : subj.longitudinal[g]) o.value = model.basis().value(o.age).dot(theta.col(g)) + sd * rand::normal(rng);
    }
    const double entry = subj.survival.entry;
    const auto ev = sample_event_time(model.hazard(), theta, subj.survival.covariates, params, entry,
                                      std::min(entry + horizon, model.basis().a_max()), rand::uniform_open(rng));
    subj.survival.time = ev.time;
    subj.survival.event = ev.event;
  }
  return d;
}

void write_truth(const GeneratedDataset& g, const std::filesystem::path& path) {
  nlohmann::json j = g.spec;
  j["realized_censoring"] = g.realized_censoring;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

ScenarioSpec read_truth(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  const auto j = nlohmann::json::parse(is);
  ScenarioSpec s = default_scenario(parse_scenario(j.at("scenario").get<std::string>()));
  from_json(j, s);
  return s;
}

}  // namespace jmsel::sim
