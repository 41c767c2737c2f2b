// Command-line front end: simulate, fit, study, compare, prior-calc, config init.

#include "jmsel/chain_io.hpp"
#include "jmsel/dataset_io.hpp"
#include "jmsel/diagnostics.hpp"
#include "jmsel/harness.hpp"
#include "jmsel/prior_calculus.hpp"
#include "jmsel/simgen.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace jmsel;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> priors;
  std::string scenario;
  std::optional<int> n;
  std::optional<int> replicates;
  std::optional<int> threads;
};

void add_common(CLI::App* app, Common& c, bool data_flags) {
  app->add_option("--config", c.config, "JSON config file (see `config init`)");
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--prior", c.priors, "BSGS-D, BSGS-D-I, BSGS or SS (repeatable)");
  if (data_flags) {
    app->add_option("--scenario", c.scenario, "I, II, III or IV");
    app->add_option("--n", c.n, "subjects per dataset");
    app->add_option("--replicates", c.replicates, "replicate datasets R");
    app->add_option("--threads", c.threads, "worker threads");
  }
}

harness::RunConfig resolve(const Common& c) {
  harness::RunConfig cfg = c.config.empty() ? harness::default_config() : harness::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (!c.priors.empty()) {
    cfg.priors.clear();
    for (const auto& p : c.priors) cfg.priors.push_back(parse_prior(p));
  }
  if (!c.scenario.empty()) {
    const auto sc = sim::parse_scenario(c.scenario);
    const int n = cfg.scenario ? cfg.scenario->n : 800;
    cfg.scenario = sim::default_scenario(sc, n, cfg.seed);
  }
  if (c.n && cfg.scenario) cfg.scenario->n = *c.n;
  if (c.replicates) cfg.replicates = *c.replicates;
  if (c.threads) cfg.threads = *c.threads;
  if (cfg.scenario) cfg.scenario->seed = cfg.seed;
  return cfg;
}

void print_progress(const harness::ReplicateResult& r) {
  std::fprintf(stderr, "replicate %d %-9s %s\n", r.replicate + 1, to_string(r.prior).c_str(),
               r.ok ? "done" : ("FAILED: " + r.error).c_str());
}

int cmd_simulate(const Common& c, std::optional<double> censoring) {
  auto cfg = resolve(c);
  if (!cfg.scenario) throw std::invalid_argument("simulate needs a scenario");
  if (censoring) cfg.scenario->censoring_target = *censoring;
  const auto g = sim::generate(*cfg.scenario);
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  io::write_dataset(g.data, dir / "longitudinal.csv", dir / "survival.csv");
  sim::write_truth(g, dir / "truth.json");
  std::printf("wrote %zu subjects (%zu observations), censoring %.3f, to %s\n", g.data.subjects.size(),
              g.data.num_observations(), g.realized_censoring, dir.string().c_str());
  return 0;
}

int cmd_fit(const Common& c, const std::string& lpath, const std::string& spath, const std::string& truth, int chains) {
  auto cfg = resolve(c);
  const Dataset data = io::read_dataset(lpath, spath, cfg.model.num_risk_factors);
  ModelSpec spec = cfg.model;
  spec.num_risk_factors = data.num_risk_factors;
  spec.prior = cfg.priors.front();
  if (!truth.empty()) {
    const auto t = sim::read_truth(truth);
    if (spec.thresholds.empty()) spec.thresholds = t.thresholds;
    if (spec.a_max <= 0.0) spec.a_max = t.a_max;
  }
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  std::vector<mcmc::ChainOutput> outs;
  for (int k = 0; k < chains; ++k) {
    outs.push_back(mcmc::run_chain(spec, data, cfg.chain, cfg.seed + static_cast<std::uint64_t>(k)));
    io::write_chain(dir / ("chain" + std::to_string(k + 1) + ".jmc"), outs.back());
    std::fprintf(stderr, "chain %d: %.1f s, hash %s\n", k + 1, outs.back().wall_seconds, outs.back().hash().c_str());
  }
  std::ofstream os(dir / "posterior.txt");
  const auto& o = outs.front();
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %10s %10s %10s\n", "parameter", "incl", "mean", "sd");
  os << line;
  for (int g = 1; g <= spec.num_risk_factors; ++g)
    for (int j = 1; j <= spec.num_features(); ++j) {
      const std::string idx = "[" + std::to_string(g) + "," + std::to_string(j) + "]";
      const Eigen::VectorXd a = o.col("alpha" + idx);
      const double mean = a.mean();
      const double sd = a.size() > 1 ? std::sqrt((a.array() - mean).square().sum() / (a.size() - 1)) : 0.0;
      std::snprintf(line, sizeof line, "%-14s %10.3f %10.4f %10.4f\n", ("alpha" + idx).c_str(),
                    o.col("incl" + idx).mean(), mean, sd);
      os << line;
    }
  os << "t_hat " << o.t_hat << "\n";
  for (const auto& [k, v] : o.acceptance) os << "acceptance " << k << " " << v << "\n";
  if (chains >= 2) {
    const auto rep = diag::diagnostics(outs);
    os << "max R-hat " << rep.max_rhat() << "\n";
    for (const auto& s : rep.scalars) os << "rhat " << s.name << " " << s.rhat << " ess " << s.ess << "\n";
    for (const auto& s : rep.indicators) os << "agreement " << s.name << " " << s.max_abs_diff << "\n";
  }
  std::cout << std::ifstream(dir / "posterior.txt").rdbuf();
  return 0;
}

int cmd_study(const Common& c) {
  const auto cfg = resolve(c);
  const auto r = harness::run_replication_study(cfg, print_progress);
  harness::write_study(r, cfg.out_dir);
  std::cout << harness::render_selection_table(r.summary, harness::TableFormat::Text);
  return 0;
}

int cmd_compare(const Common& c, const std::vector<std::string>& configs) {
  std::vector<harness::StudyResult> studies;
  if (configs.empty()) {
    studies.push_back(harness::run_replication_study(resolve(c), print_progress));
  } else {
    for (const auto& path : configs) {
      Common cc = c;
      cc.config = path;
      studies.push_back(harness::run_replication_study(resolve(cc), print_progress));
    }
  }
  const auto rep = harness::compare_priors(studies);
  const fs::path dir = c.out.empty() ? fs::path(studies.front().config.out_dir) : fs::path(c.out);
  fs::create_directories(dir);
  const auto& names = studies.front().summary.feature_names;
  std::ofstream(dir / "compare.csv") << rep.render(harness::TableFormat::Csv, names);
  std::ofstream(dir / "compare.txt") << rep.render(harness::TableFormat::Text, names);
  std::cout << rep.render(harness::TableFormat::Text, names);
  return 0;
}

int cmd_prior_calc(int J, std::vector<double> weights, bool binomial, int trials, std::uint64_t seed) {
  prior::DirichletWeights w;
  w.variant = binomial ? prior::WeightVariant::BinomialScaled : prior::WeightVariant::Plain;
  if (weights.empty()) {
    w.a.resize(J);
    for (int k = 1; k <= J; ++k) w.a[k - 1] = (J - k + 1) * (binomial ? binomial_coefficient(J, k) / J : 1.0);
  } else {
    w.a = Eigen::Map<Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    J = w.num_features();
  }
  const auto cat = prior::enumerate_masks(J);
  const Eigen::VectorXd conc = prior::build_concentration(w, cat);
  const double total = conc.sum();
  std::printf("J = %d, weights a =", J);
  for (Eigen::Index k = 0; k < w.a.size(); ++k) std::printf(" %.4g", w.a[k]);
  std::printf(" (%s, %s)\n\n", binomial ? "binomial-scaled" : "plain", w.ordered() ? "ordered" : "NOT ordered");
  std::printf("%-8s %6s %12s %12s\n", "mask", "size", "alpha_c", "E[q_c]");
  for (std::size_t c = 0; c < cat.size(); ++c)
    std::printf("%-8s %6d %12.4f %12.5f\n", cat[c].to_string().c_str(), cat[c].cardinality(), conc[c], conc[c] / total);
  const Eigen::VectorXd blocks = prior::cardinality_block_means(w);
  std::printf("\ncardinality block mass:");
  for (Eigen::Index k = 0; k < blocks.size(); ++k) std::printf(" %lld:%.4f", static_cast<long long>(k + 1), blocks[k]);
  std::printf("\nE[pi_j] = %.5f, Var[pi_j] = %.6f", prior::pi_mean(w), prior::pi_variance(w, 0, J));
  if (J >= 2) std::printf(", Cov[pi_j, pi_k] = %.6f", prior::pi_covariance(w, 0, 1, J));
  std::printf("\n");
  if (trials > 0) {
    const auto rep = prior::negativity_scan(J, trials, seed);
    std::printf("\nnegativity scan: %d ordered weight draws, %ld pairs, %ld non-negative covariances, max %.3g\n",
                rep.trials, rep.pairs_checked, rep.violations, rep.max_covariance);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint longitudinal-survival models with bi-level spike-and-slab feature selection"};
  app.require_subcommand(1);
  Common common;

  auto* simulate = app.add_subcommand("simulate", "generate a scenario dataset and truth sidecar");
  add_common(simulate, common, true);
  std::optional<double> censoring;
  simulate->add_option("--censoring", censoring, "target censored fraction");

  auto* fit = app.add_subcommand("fit", "fit one dataset");
  add_common(fit, common, false);
  std::string lpath, spath, truth;
  int chains = 1;
  fit->add_option("--longitudinal", lpath, "long-format longitudinal file")->required()->check(CLI::ExistingFile);
  fit->add_option("--survival", spath, "survival file")->required()->check(CLI::ExistingFile);
  fit->add_option("--truth", truth, "truth sidecar (thresholds, a_max)")->check(CLI::ExistingFile);
  fit->add_option("--chains", chains, "independent chains (>= 2 adds diagnostics)")->check(CLI::PositiveNumber);

  auto* study = app.add_subcommand("study", "replication study");
  add_common(study, common, true);

  auto* compare = app.add_subcommand("compare", "paired prior comparison on shared replicate seeds");
  add_common(compare, common, true);
  std::vector<std::string> configs;
  compare->add_option("--configs", configs, "one config per prior arm; seeds must match");

  auto* prior_calc = app.add_subcommand("prior-calc", "tabulate the Dirichlet feature prior");
  int J = 4, trials = 0;
  std::vector<double> weights;
  bool binomial = false;
  std::uint64_t pc_seed = 1;
  prior_calc->add_option("--features", J, "number of features J")->check(CLI::Range(1, 16));
  prior_calc->add_option("--weights", weights, "per-cardinality weights a_1..a_J");
  prior_calc->add_flag("--binomial", binomial, "binomial-scaled weights");
  prior_calc->add_option("--scan", trials, "negativity scan trials");
  prior_calc->add_option("--seed", pc_seed, "scan seed");

  auto* config = app.add_subcommand("config", "configuration helpers");
  auto* init = config->add_subcommand("init", "print every default");
  config->require_subcommand(1);
  std::string init_out;
  init->add_option("--out", init_out, "write to file instead of stdout");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*simulate) return cmd_simulate(common, censoring);
    if (*fit) return cmd_fit(common, lpath, spath, truth, chains);
    if (*study) return cmd_study(common);
    if (*compare) return cmd_compare(common, configs);
    if (*prior_calc) return cmd_prior_calc(J, weights, binomial, trials, pc_seed);
    if (*init) {
      const std::string text = nlohmann::json(harness::default_config()).dump(2) + "\n";
      if (init_out.empty()) std::cout << text;
      else std::ofstream(init_out) << text;
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
