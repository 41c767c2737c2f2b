#pragma once

// Delimited file formats.
//
// Longitudinal (long format), header required:
//   subject_id,risk_factor,age,value        risk_factor is 1-based
// Survival, one row per subject, header required:
//   subject_id,entry,time,event,<covariate columns...>

#include "jmsel/data.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace jmsel::io {

// Parse failure with the offending file and 1-based line number.
struct ParseError : std::runtime_error {
  ParseError(const std::string& file, std::size_t line, const std::string& what);
  std::string file;
  std::size_t line;
};

// Subject present in one file but not the other.
struct ReferentialError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// num_risk_factors = 0 infers G from the largest risk factor id.
Dataset read_dataset(std::istream& longitudinal, std::istream& survival, int num_risk_factors = 0,
                     const std::string& long_name = "longitudinal", const std::string& surv_name = "survival");
Dataset read_dataset(const std::filesystem::path& longitudinal, const std::filesystem::path& survival,
                     int num_risk_factors = 0);

void write_longitudinal(std::ostream& os, const Dataset& d);
void write_survival(std::ostream& os, const Dataset& d);
void write_dataset(const Dataset& d, const std::filesystem::path& longitudinal,
                   const std::filesystem::path& survival);

}  // namespace jmsel::io
