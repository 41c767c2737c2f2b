#pragma once

// Replication studies: config, orchestration, selection summaries, tables
// and paired prior comparisons.

#include "jmsel/mcmc.hpp"
#include "jmsel/model_spec.hpp"
#include "jmsel/simgen.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace jmsel::harness {

struct RunConfig {
  ModelSpec model;
  std::vector<PriorKind> priors{PriorKind::BsgsD};
  // data source: a scenario, or external files (truth sidecar optional)
  std::optional<sim::ScenarioSpec> scenario;
  std::string longitudinal_path;
  std::string survival_path;
  std::string truth_path;
  int replicates = 1;
  ChainSettings chain;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  double threshold = 0.5;  // selected when inclusion frequency exceeds this
  int threads = 1;
  bool save_chains = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig default_config();
RunConfig load_config(const std::filesystem::path& path);

// One chain fitted to one replicate dataset.
struct ReplicateResult {
  int replicate = 0;
  std::uint64_t seed = 0;
  PriorKind prior = PriorKind::BsgsD;
  bool ok = false;
  std::string error;
  Eigen::MatrixXd inclusion;   // G x J posterior inclusion frequency
  Eigen::MatrixXd alpha_mean;  // G x J posterior mean, original scale
  Eigen::VectorXd group_inclusion;
  double t_hat = 0.0;
  double realized_censoring = 0.0;
};

// Posterior summaries of one chain.
ReplicateResult summarize_chain(const mcmc::ChainOutput& out, int num_groups, int num_features);

struct PriorSummary {
  PriorKind prior = PriorKind::BsgsD;
  int replicates = 0;  // successful
  Eigen::MatrixXd selected_pct;  // G x J, percent of replicates selecting (g, j)
  Eigen::MatrixXd selected_se;   // binomial MC SE, percent
  Eigen::MatrixXd mean_inclusion_pct;  // average posterior inclusion probability, percent
  Eigen::VectorXd group_pct;
  Eigen::VectorXd group_se;
  // present only with a truth sidecar; NaN where alpha_true = 0
  std::optional<Eigen::MatrixXd> bias;
  std::optional<Eigen::MatrixXd> mse;
  std::optional<Eigen::MatrixXd> mean_estimate;
};

struct SelectionSummary {
  std::vector<std::string> feature_names;
  std::optional<Eigen::MatrixXd> truth;
  std::vector<PriorSummary> priors;  // in table column order
};

double mc_se_pct(double p, int replicates);

SelectionSummary summarize(const std::vector<ReplicateResult>& results, const std::vector<PriorKind>& priors,
                           const std::vector<std::string>& feature_names, const std::optional<Eigen::MatrixXd>& truth,
                           double threshold);

struct StudyResult {
  RunConfig config;
  std::vector<std::uint64_t> seeds;  // per replicate
  std::vector<ReplicateResult> results;
  SelectionSummary summary;
};

using Progress = std::function<void(const ReplicateResult&)>;

// Runs every (replicate, prior) pair on a pool of config.threads workers.
// Failed replicates are recorded and excluded; more than 10% failures throws.
StudyResult run_replication_study(const RunConfig& config, const Progress& progress = {});

// Column order of the published tables: BSGS-D, BSGS, BSGS-D I, SS.
std::vector<PriorKind> table_order(std::vector<PriorKind> priors);

enum class TableFormat { Text, Csv };
std::string render_selection_table(const SelectionSummary& s, TableFormat f);
std::string render_bias_table(const SelectionSummary& s, TableFormat f);

struct PairedRow {
  int g = 0, j = 0;
  PriorKind a{}, b{};
  std::string a_label, b_label;  // prior name, numbered when a prior repeats
  double diff_pct = 0.0;  // selection percentage a - b
  int a_only = 0, b_only = 0;
  double sign_test_p = 1.0;
  bool unimportant = false;  // truth is zero here
  bool highlight = false;    // unimportant and a selects more often than b
};

struct PairedReport {
  std::vector<PairedRow> rows;
  std::string render(TableFormat f, const std::vector<std::string>& feature_names) const;
};

// Two-sided exact sign test p-value.
double sign_test(int positives, int negatives);

// Pairs every two (study, prior) arms. Throws when replicate seeds differ or
// fewer than two arms are present.
PairedReport compare_priors(const std::vector<StudyResult>& studies);

// Writes summary.json, selection.{txt,csv}, bias.{txt,csv} and replicates.csv.
void write_study(const StudyResult& r, const std::filesystem::path& dir);

}  // namespace jmsel::harness
