#pragma once

#include <string>
#include <vector>

namespace jmsel {

struct Observation {
  double age = 0.0;
  double value = 0.0;
};

struct SurvivalOutcome {
  double entry = 0.0;  // age at study entry (delayed entry); 0 = none
  double time = 0.0;   // observed event or censoring age, > entry
  bool event = false;
  std::vector<double> covariates;  // baseline covariates w_i
};

struct SubjectRecord {
  std::string id;
  std::vector<std::vector<Observation>> longitudinal;  // indexed by risk factor
  SurvivalOutcome survival;
};

struct Dataset {
  int num_risk_factors = 0;
  std::vector<std::string> covariate_names;
  std::vector<SubjectRecord> subjects;

  std::size_t num_observations() const;
  // Largest age appearing anywhere (observations, entry, event/censoring).
  double max_age() const;
  // Throws std::invalid_argument on a broken invariant.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&);
};

bool operator==(const Observation& a, const Observation& b);
bool operator==(const SurvivalOutcome& a, const SurvivalOutcome& b);
bool operator==(const SubjectRecord& a, const SubjectRecord& b);

}  // namespace jmsel
