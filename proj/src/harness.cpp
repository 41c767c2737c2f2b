#include "jmsel/harness.hpp"

#include "jmsel/chain_io.hpp"
#include "jmsel/dataset_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace jmsel::harness {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pct(double v) { return std::isfinite(v) ? fmt("%.0f", v) : "-"; }
std::string se(double v) { return std::isfinite(v) ? fmt("%.1f", v) : "-"; }
std::string num(double v) { return std::isfinite(v) ? fmt("%.3f", v) : "-"; }

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

nlohmann::json mat_json(const Eigen::MatrixXd& m) {
  auto j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back(std::isfinite(m(r, c)) ? nlohmann::json(m(r, c)) : nlohmann::json(nullptr));
    j.push_back(row);
  }
  return j;
}

bool scenario_data(const RunConfig& c) { return c.scenario.has_value(); }

}  // namespace

void RunConfig::validate() const {
  if (replicates < 1) throw std::invalid_argument("config: replicates must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("config: threshold must lie in (0, 1)");
  if (priors.empty()) throw std::invalid_argument("config: no priors");
  if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  if (!scenario && (longitudinal_path.empty() || survival_path.empty()))
    throw std::invalid_argument("config: need a scenario or both data paths");
  if (scenario) scenario->validate();
  chain.validate();
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  std::vector<std::string> priors;
  for (auto p : c.priors) priors.push_back(to_string(p));
  j = nlohmann::json{{"model", c.model},
                     {"priors", priors},
                     {"longitudinal_path", c.longitudinal_path},
                     {"survival_path", c.survival_path},
                     {"truth_path", c.truth_path},
                     {"replicates", c.replicates},
                     {"chain", c.chain},
                     {"seed", c.seed},
                     {"out_dir", c.out_dir},
                     {"threshold", c.threshold},
                     {"threads", c.threads},
                     {"save_chains", c.save_chains}};
  j["scenario"] = c.scenario ? nlohmann::json(*c.scenario) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("priors")) {
    c.priors.clear();
    for (const auto& p : j["priors"]) c.priors.push_back(parse_prior(p.get<std::string>()));
  }
  if (auto it = j.find("scenario"); it != j.end()) {
    if (it->is_null()) {
      c.scenario.reset();
    } else {
      sim::ScenarioSpec s = c.scenario.value_or(sim::ScenarioSpec{});
      from_json(*it, s);
      c.scenario = s;
    }
  }
  c.longitudinal_path = j.value("longitudinal_path", c.longitudinal_path);
  c.survival_path = j.value("survival_path", c.survival_path);
  c.truth_path = j.value("truth_path", c.truth_path);
  c.replicates = j.value("replicates", c.replicates);
  if (j.contains("chain")) j.at("chain").get_to(c.chain);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.threshold = j.value("threshold", c.threshold);
  c.threads = j.value("threads", c.threads);
  c.save_chains = j.value("save_chains", c.save_chains);
}

RunConfig default_config() {
  RunConfig c;
  c.priors = {PriorKind::BsgsD, PriorKind::Bsgs, PriorKind::BsgsDI, PriorKind::SS};
  c.scenario = sim::default_scenario(sim::Scenario::I);
  c.replicates = 100;
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  RunConfig c = default_config();
  from_json(j, c);
  return c;
}

ReplicateResult summarize_chain(const mcmc::ChainOutput& out, int G, int J) {
  ReplicateResult r;
  r.inclusion.resize(G, J);
  r.alpha_mean.resize(G, J);
  r.group_inclusion.resize(G);
  for (int g = 0; g < G; ++g) {
    r.group_inclusion[g] = out.col("group[" + std::to_string(g + 1) + "]").mean();
    for (int j = 0; j < J; ++j) {
      const std::string idx = "[" + std::to_string(g + 1) + "," + std::to_string(j + 1) + "]";
      r.inclusion(g, j) = out.col("incl" + idx).mean();
      r.alpha_mean(g, j) = out.col("alpha" + idx).mean();
    }
  }
  r.t_hat = out.t_hat;
  r.seed = out.seed;
  r.ok = true;
  return r;
}

double mc_se_pct(double p, int replicates) {
  return replicates > 0 ? std::sqrt(p * (1.0 - p) / replicates) * 100.0 : std::nan("");
}

SelectionSummary summarize(const std::vector<ReplicateResult>& results, const std::vector<PriorKind>& priors,
                           const std::vector<std::string>& feature_names, const std::optional<Eigen::MatrixXd>& truth,
                           double threshold) {
  SelectionSummary s;
  s.feature_names = feature_names;
  s.truth = truth;
  const int J = static_cast<int>(feature_names.size());
  int G = truth ? static_cast<int>(truth->rows()) : 0;
  for (const auto& r : results)
    if (r.ok) G = static_cast<int>(r.inclusion.rows());
  for (PriorKind p : table_order(priors)) {
    PriorSummary ps;
    ps.prior = p;
    Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(G, J), incl = sel, est = sel, err = sel, sq = sel;
    Eigen::VectorXd grp = Eigen::VectorXd::Zero(G);
    for (const auto& r : results) {
      if (r.prior != p || !r.ok) continue;
      ++ps.replicates;
      sel += (r.inclusion.array() > threshold).cast<double>().matrix();
      incl += r.inclusion;
      est += r.alpha_mean;
      grp += (r.group_inclusion.array() > threshold).cast<double>().matrix();
      if (truth) {
        err += r.alpha_mean - *truth;
        sq += (r.alpha_mean - *truth).array().square().matrix();
      }
    }
    const double R = ps.replicates;
    const Eigen::MatrixXd frac = sel / std::max(R, 1.0);
    ps.selected_pct = 100.0 * frac;
    ps.selected_se = frac.unaryExpr([&](double f) { return mc_se_pct(f, ps.replicates); });
    ps.mean_inclusion_pct = 100.0 * incl / std::max(R, 1.0);
    const Eigen::VectorXd gfrac = grp / std::max(R, 1.0);
    ps.group_pct = 100.0 * gfrac;
    ps.group_se = gfrac.unaryExpr([&](double f) { return mc_se_pct(f, ps.replicates); });
    if (p == PriorKind::SS) {
      // no group indicator under SS
      ps.group_pct.setConstant(std::nan(""));
      ps.group_se.setConstant(std::nan(""));
    }
    if (truth && R > 0) {
      ps.bias = err / R;
      ps.mse = sq / R;
      ps.mean_estimate = est / R;
    }
    s.priors.push_back(std::move(ps));
  }
  return s;
}

std::vector<PriorKind> table_order(std::vector<PriorKind> priors) {
  const PriorKind order[] = {PriorKind::BsgsD, PriorKind::Bsgs, PriorKind::BsgsDI, PriorKind::SS};
  std::vector<PriorKind> out;
  for (PriorKind p : order)
    if (std::find(priors.begin(), priors.end(), p) != priors.end()) out.push_back(p);
  return out;
}

StudyResult run_replication_study(const RunConfig& config, const Progress& progress) {
  config.validate();
  StudyResult study;
  study.config = config;
  const int R = config.replicates;
  for (int r = 0; r < R; ++r) study.seeds.push_back(config.seed + static_cast<std::uint64_t>(r));

  std::optional<Dataset> external;
  std::optional<sim::ScenarioSpec> external_truth;
  if (!scenario_data(config)) {
    external = io::read_dataset(config.longitudinal_path, config.survival_path, config.model.num_risk_factors);
    if (!config.truth_path.empty()) external_truth = sim::read_truth(config.truth_path);
  }

  const auto& priors = config.priors;
  const std::size_t n_tasks = static_cast<std::size_t>(R) * priors.size();
  study.results.resize(n_tasks);
  std::vector<std::optional<Dataset>> datasets(R);
  std::vector<double> censoring(R, 0.0);
  std::vector<std::once_flag> made(R);
  std::mutex progress_mutex;
  std::atomic<std::size_t> next{0};

  auto dataset_for = [&](int r) -> const Dataset& {
    if (external) return *external;
    std::call_once(made[r], [&] {
      sim::ScenarioSpec s = *config.scenario;
      s.seed = study.seeds[r];
      auto g = sim::generate(s);
      censoring[r] = g.realized_censoring;
      datasets[r] = std::move(g.data);
    });
    return *datasets[r];
  };

  auto worker = [&] {
    for (std::size_t k = next++; k < n_tasks; k = next++) {
      const int r = static_cast<int>(k / priors.size());
      ReplicateResult res;
      res.replicate = r;
      res.seed = study.seeds[r];
      res.prior = priors[k % priors.size()];
      try {
        const Dataset& data = dataset_for(r);
        ModelSpec spec = config.model;
        spec.prior = res.prior;
        spec.num_risk_factors = data.num_risk_factors;
        if (config.scenario) {
          if (spec.thresholds.empty()) spec.thresholds = config.scenario->thresholds;
          if (spec.a_max <= 0.0) spec.a_max = config.scenario->a_max;
        }
        const auto out = mcmc::run_chain(spec, data, config.chain, res.seed);
        const int r_keep = res.replicate;
        const PriorKind p_keep = res.prior;
        res = summarize_chain(out, spec.num_risk_factors, spec.num_features());
        res.replicate = r_keep;
        res.prior = p_keep;
        res.realized_censoring = censoring[r];
        if (config.save_chains) {
          std::filesystem::create_directories(std::filesystem::path(config.out_dir) / "chains");
          std::string name = to_string(res.prior);
          std::replace(name.begin(), name.end(), ' ', '_');
          io::write_chain(std::filesystem::path(config.out_dir) / "chains" /
                              ("rep" + std::to_string(r + 1) + "_" + name + ".jmc"),
                          out);
        }
      } catch (const std::exception& e) {
        res.ok = false;
        res.error = e.what();
        log_warning("replicate " + std::to_string(r + 1) + " (" + to_string(res.prior) + ") failed: " + e.what());
      }
      study.results[k] = res;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(study.results[k]);
      }
    }
  };
  const int n_threads = std::min<int>(config.threads, static_cast<int>(n_tasks));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const auto failures = std::count_if(study.results.begin(), study.results.end(), [](const auto& r) { return !r.ok; });
  if (static_cast<double>(failures) > 0.10 * static_cast<double>(n_tasks))
    throw std::runtime_error("replication study: " + std::to_string(failures) + " of " + std::to_string(n_tasks) +
                             " fits failed");

  std::optional<Eigen::MatrixXd> truth;
  if (config.scenario) truth = config.scenario->true_alpha;
  else if (external_truth) truth = external_truth->true_alpha;
  std::vector<std::string> names;
  for (auto f : config.model.features) names.push_back(to_string(f));
  study.summary = summarize(study.results, priors, names, truth, config.threshold);
  return study;
}

std::string render_selection_table(const SelectionSummary& s, TableFormat f) {
  std::ostringstream os;
  const int J = static_cast<int>(s.feature_names.size());
  const int G = s.priors.empty() ? 0 : static_cast<int>(s.priors[0].selected_pct.rows());
  if (f == TableFormat::Csv) {
    os << "risk_factor,feature";
    for (const auto& p : s.priors) os << ',' << to_string(p.prior) << "_pct," << to_string(p.prior) << "_se";
    os << '\n';
    for (int g = 0; g < G; ++g) {
      if (J > 1) {
        os << g + 1 << ",group";
        for (const auto& p : s.priors) os << ',' << pct(p.group_pct[g]) << ',' << se(p.group_se[g]);
        os << '\n';
      }
      for (int j = 0; j < J; ++j) {
        os << g + 1 << ',' << s.feature_names[j];
        for (const auto& p : s.priors) os << ',' << pct(p.selected_pct(g, j)) << ',' << se(p.selected_se(g, j));
        os << '\n';
      }
    }
    return os.str();
  }
  os << "Percentage of selection (MC SE)\n";
  os << pad("risk factor", 13) << pad("feature", 11);
  for (const auto& p : s.priors) os << pad(to_string(p.prior), 12);
  os << '\n';
  for (int g = 0; g < G; ++g) {
    // with one feature per risk factor the group row repeats the feature row
    if (J > 1) {
      os << pad(std::to_string(g + 1), 13) << pad("group", 11);
      for (const auto& p : s.priors)
        os << pad(std::isfinite(p.group_pct[g]) ? pct(p.group_pct[g]) + " (" + se(p.group_se[g]) + ")" : "-", 12);
      os << '\n';
    }
    for (int j = 0; j < J; ++j) {
      os << pad(j == 0 && J == 1 ? std::to_string(g + 1) : "", 13) << pad(s.feature_names[j], 11);
      for (const auto& p : s.priors)
        os << pad(pct(p.selected_pct(g, j)) + " (" + se(p.selected_se(g, j)) + ")", 12);
      os << '\n';
    }
  }
  return os.str();
}

std::string render_bias_table(const SelectionSummary& s, TableFormat f) {
  std::ostringstream os;
  if (!s.truth) return f == TableFormat::Csv ? "risk_factor,feature\n" : "no truth available\n";
  const Eigen::MatrixXd& t = *s.truth;
  if (f == TableFormat::Csv) {
    os << "risk_factor,feature,truth";
    for (const auto& p : s.priors) os << ',' << to_string(p.prior) << "_mean," << to_string(p.prior) << "_bias,"
                                      << to_string(p.prior) << "_mse";
    os << '\n';
  } else {
    os << "Bias and MSE of posterior-mean alpha (true features)\n";
    os << pad("risk factor", 13) << pad("feature", 11) << pad("truth", 10);
    for (const auto& p : s.priors) os << pad(to_string(p.prior) + " bias/mse", 22);
    os << '\n';
  }
  for (Eigen::Index g = 0; g < t.rows(); ++g)
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      if (t(g, j) == 0.0) continue;
      if (f == TableFormat::Csv) {
        os << g + 1 << ',' << s.feature_names[j] << ',' << num(t(g, j));
        for (const auto& p : s.priors) {
          if (p.bias) os << ',' << num((*p.mean_estimate)(g, j)) << ',' << num((*p.bias)(g, j)) << ',' << num((*p.mse)(g, j));
          else os << ",-,-,-";
        }
      } else {
        os << pad(std::to_string(g + 1), 13) << pad(s.feature_names[j], 11) << pad(num(t(g, j)), 10);
        for (const auto& p : s.priors)
          os << pad(p.bias ? num((*p.bias)(g, j)) + " / " + num((*p.mse)(g, j)) : "-", 22);
      }
      os << '\n';
    }
  return os.str();
}

double sign_test(int positives, int negatives) {
  const int n = positives + negatives;
  if (n == 0) return 1.0;
  const int k = std::min(positives, negatives);
  double tail = 0.0;
  for (int i = 0; i <= k; ++i) tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
  return std::min(1.0, 2.0 * tail);
}

PairedReport compare_priors(const std::vector<StudyResult>& studies) {
  if (studies.empty()) throw std::invalid_argument("compare_priors: no studies");
  const auto& seeds = studies[0].seeds;
  for (const auto& s : studies)
    if (s.seeds != seeds) throw std::invalid_argument("compare_priors: replicate seeds differ; pairing is invalid");
  // One arm per (study, prior); the same prior may appear in several studies.
  struct Arm {
    PriorKind prior;
    std::string label;
    std::vector<const ReplicateResult*> by_rep;
  };
  std::vector<Arm> arms;
  for (std::size_t si = 0; si < studies.size(); ++si)
    for (PriorKind p : table_order(studies[si].config.priors)) {
      Arm arm{p, to_string(p), std::vector<const ReplicateResult*>(seeds.size(), nullptr)};
      for (const auto& r : studies[si].results)
        if (r.prior == p && r.replicate >= 0 && r.replicate < static_cast<int>(seeds.size())) arm.by_rep[r.replicate] = &r;
      arms.push_back(std::move(arm));
    }
  if (arms.size() < 2) throw std::invalid_argument("compare_priors: need at least two priors");
  const auto order = table_order({PriorKind::BsgsD, PriorKind::Bsgs, PriorKind::BsgsDI, PriorKind::SS});
  std::stable_sort(arms.begin(), arms.end(), [&](const Arm& x, const Arm& y) {
    return std::find(order.begin(), order.end(), x.prior) < std::find(order.begin(), order.end(), y.prior);
  });
  for (auto& a : arms) {
    const auto same = std::count_if(arms.begin(), arms.end(), [&](const Arm& b) { return b.prior == a.prior; });
    if (same > 1) {
      const auto idx = std::count_if(arms.begin(), arms.end(), [&](const Arm& b) { return &b <= &a && b.prior == a.prior; });
      a.label += " #" + std::to_string(idx);
    }
  }
  const double threshold = studies[0].config.threshold;
  const std::optional<Eigen::MatrixXd> truth = studies[0].summary.truth;

  int G = 0, J = 0;
  for (const auto& a : arms)
    for (const auto* r : a.by_rep)
      if (r && r->ok) {
        G = static_cast<int>(r->inclusion.rows());
        J = static_cast<int>(r->inclusion.cols());
      }
  PairedReport rep;
  for (std::size_t a = 0; a < arms.size(); ++a)
    for (std::size_t b = a + 1; b < arms.size(); ++b)
      for (int g = 0; g < G; ++g)
        for (int j = 0; j < J; ++j) {
          PairedRow row;
          row.g = g;
          row.j = j;
          row.a = arms[a].prior;
          row.b = arms[b].prior;
          row.a_label = arms[a].label;
          row.b_label = arms[b].label;
          int n = 0, sa = 0, sb = 0;
          for (std::size_t r = 0; r < seeds.size(); ++r) {
            const auto* ra = arms[a].by_rep[r];
            const auto* rb = arms[b].by_rep[r];
            if (!ra || !rb || !ra->ok || !rb->ok) continue;
            const bool xa = ra->inclusion(g, j) > threshold, xb = rb->inclusion(g, j) > threshold;
            ++n;
            sa += xa;
            sb += xb;
            row.a_only += xa && !xb;
            row.b_only += xb && !xa;
          }
          row.diff_pct = n ? 100.0 * (sa - sb) / n : 0.0;
          row.sign_test_p = sign_test(row.a_only, row.b_only);
          row.unimportant = truth && (*truth)(g, j) == 0.0;
          row.highlight = row.unimportant && row.diff_pct != 0.0;
          rep.rows.push_back(row);
        }
  return rep;
}

std::string PairedReport::render(TableFormat f, const std::vector<std::string>& names) const {
  std::ostringstream os;
  if (f == TableFormat::Csv) {
    os << "prior_a,prior_b,risk_factor,feature,diff_pct,a_only,b_only,sign_test_p,unimportant\n";
    for (const auto& r : rows)
      os << r.a_label << ',' << r.b_label << ',' << r.g + 1 << ',' << names[r.j] << ',' << pct(r.diff_pct)
         << ',' << r.a_only << ',' << r.b_only << ',' << fmt("%.4f", r.sign_test_p) << ',' << (r.unimportant ? 1 : 0)
         << '\n';
    return os.str();
  }
  os << pad("A - B", 22) << pad("risk factor", 13) << pad("feature", 11) << pad("diff", 7) << pad("A only", 8)
     << pad("B only", 8) << "sign p\n";
  for (const auto& r : rows) {
    os << pad(r.a_label + " - " + r.b_label, 22) << pad(std::to_string(r.g + 1), 13) << pad(names[r.j], 11)
       << pad(pct(r.diff_pct), 7) << pad(std::to_string(r.a_only), 8) << pad(std::to_string(r.b_only), 8)
       << fmt("%.4f", r.sign_test_p);
    if (r.highlight) os << (r.diff_pct > 0 ? "  * A overselects" : "  * B overselects");
    os << '\n';
  }
  return os.str();
}

void write_study(const StudyResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    os << text;
  };
  put("selection.txt", render_selection_table(r.summary, TableFormat::Text));
  put("selection.csv", render_selection_table(r.summary, TableFormat::Csv));
  put("bias.txt", render_bias_table(r.summary, TableFormat::Text));
  put("bias.csv", render_bias_table(r.summary, TableFormat::Csv));

  std::ostringstream reps;
  reps << "replicate,seed,prior,ok,t_hat,censoring,risk_factor,feature,inclusion,alpha_mean\n";
  for (const auto& x : r.results) {
    if (!x.ok) {
      reps << x.replicate + 1 << ',' << x.seed << ',' << to_string(x.prior) << ",0,,,,,,\n";
      continue;
    }
    for (Eigen::Index g = 0; g < x.inclusion.rows(); ++g)
      for (Eigen::Index j = 0; j < x.inclusion.cols(); ++j)
        reps << x.replicate + 1 << ',' << x.seed << ',' << to_string(x.prior) << ",1," << fmt("%.6g", x.t_hat) << ','
             << fmt("%.4f", x.realized_censoring) << ',' << g + 1 << ',' << r.summary.feature_names[j] << ','
             << fmt("%.6f", x.inclusion(g, j)) << ',' << fmt("%.6g", x.alpha_mean(g, j)) << '\n';
  }
  put("replicates.csv", reps.str());

  nlohmann::json j;
  j["config"] = r.config;
  j["seeds"] = r.seeds;
  j["feature_names"] = r.summary.feature_names;
  if (r.summary.truth) j["truth"] = mat_json(*r.summary.truth);
  j["priors"] = nlohmann::json::array();
  for (const auto& p : r.summary.priors) {
    nlohmann::json pj{{"prior", to_string(p.prior)},
                      {"replicates", p.replicates},
                      {"selected_pct", mat_json(p.selected_pct)},
                      {"selected_se", mat_json(p.selected_se)},
                      {"mean_inclusion_pct", mat_json(p.mean_inclusion_pct)},
                      {"group_pct", mat_json(p.group_pct)},
                      {"group_se", mat_json(p.group_se)}};
    if (p.bias) {
      pj["bias"] = mat_json(*p.bias);
      pj["mse"] = mat_json(*p.mse);
      pj["mean_estimate"] = mat_json(*p.mean_estimate);
    }
    j["priors"].push_back(pj);
  }
  put("summary.json", j.dump(2) + "\n");
}

}  // namespace jmsel::harness
