#pragma once

// Synthetic joint longitudinal-survival datasets for Scenarios I-IV.

#include "jmsel/data.hpp"
#include "jmsel/longitudinal.hpp"
#include "jmsel/mcmc.hpp"
#include "jmsel/numeric.hpp"
#include "jmsel/survival.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace jmsel::sim {

enum class Scenario { I, II, III, IV };

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& s);
// G x J (3 x 4) indicator of the features that enter the generating hazard.
Eigen::MatrixXi scenario_pattern(Scenario s);

struct ScenarioSpec {
  Scenario scenario = Scenario::I;
  int n = 800;
  std::uint64_t seed = 1;
  double censoring_target = 0.30;  // overall censored fraction
  double censoring_rate = -1.0;    // exponential censoring rate; < 0 => calibrate

  // generating model; features are value, slope, area, threshold
  Eigen::MatrixXd true_alpha;  // G x J, original feature scale
  double true_gamma = 0.5;     // race effect
  double log_lambda0 = 0.0;    // constant baseline log hazard
  std::vector<Eigen::VectorXd> beta;        // per risk factor, Legendre order 0..2
  std::vector<Eigen::MatrixXd> d_blocks;    // per Legendre order, G x G
  Eigen::VectorXd sigma;                    // residual SDs
  std::vector<double> thresholds;           // Gamma_g
  // optional spline baseline for stress tests (full clamped knot vector)
  std::vector<double> baseline_knots;
  Eigen::VectorXd baseline_coef;

  double entry_max = 19.0;
  double visit_spacing = 3.0;
  int num_visits = 5;
  double horizon = 15.0;  // follow-up after entry
  double a_max = 34.0;
  double race_prob = 0.5;

  int num_risk_factors() const { return static_cast<int>(beta.size()); }
  void validate() const;
};

// Marginal median of the true mu_g at mid-follow-up (entry + horizon / 2),
// from a fixed-seed population of `draws` subjects.
std::vector<double> mid_followup_medians(const ScenarioSpec& spec, int draws = 20001);

// Built-in defaults (mirrored in config/scenario_defaults.json).
ScenarioSpec default_scenario(Scenario s, int n = 800, std::uint64_t seed = 1);

void to_json(nlohmann::json& j, const ScenarioSpec& s);
void from_json(const nlohmann::json& j, ScenarioSpec& s);

struct GeneratedDataset {
  Dataset data;
  ScenarioSpec spec;  // censoring_rate filled in
  std::vector<Eigen::MatrixXd> random_effects;  // (order + 1) x G per subject
  double realized_censoring = 0.0;
};

// Hazard model of the generating process (raw features, constant or spline baseline).
survival::HazardModel generating_hazard(const ScenarioSpec& spec);
survival::HazardParams generating_params(const ScenarioSpec& spec);

struct EventDraw {
  double time = 0.0;
  bool event = false;
};

// Inverse transform: solve H(t) - H(entry) = -log u on [entry, horizon] with
// TOMS 748; no root before the horizon means censoring at the horizon.
EventDraw sample_event_time(const survival::HazardModel& model, const Eigen::MatrixXd& theta,
                            const std::vector<double>& covariates, const survival::HazardParams& params,
                            double entry, double horizon, double u);

// Bisection on the exponential censoring rate using a pilot of `pilot_size`
// subjects with common random numbers. Throws DomainError naming the
// achievable range when the target cannot be hit.
double calibrate_censoring(const ScenarioSpec& spec, int pilot_size = 2000);

GeneratedDataset generate(ScenarioSpec spec);

// Draws new longitudinal values and survival outcomes from the model at
// state s, keeping the layout's visit ages, entries and covariates; no
// truncation of observations. Used for joint-distribution tests.
Dataset simulate_from_state(const mcmc::JointModel& model, const mcmc::ChainState& s, const Dataset& layout,
                            double horizon, Rng& rng);

// Truth sidecar: the scenario spec plus the realized censoring.
void write_truth(const GeneratedDataset& g, const std::filesystem::path& path);
ScenarioSpec read_truth(const std::filesystem::path& path);

}  // namespace jmsel::sim
