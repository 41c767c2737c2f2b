#include "jmsel/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace jmsel {

std::size_t Dataset::num_observations() const {
  std::size_t n = 0;
  for (const auto& s : subjects)
    for (const auto& obs : s.longitudinal) n += obs.size();
  return n;
}

double Dataset::max_age() const {
  double m = 0.0;
  for (const auto& s : subjects) {
    m = std::max({m, s.survival.entry, s.survival.time});
    for (const auto& obs : s.longitudinal)
      for (const auto& o : obs) m = std::max(m, o.age);
  }
  return m;
}

void Dataset::validate() const {
  if (num_risk_factors < 1) throw std::invalid_argument("dataset: need at least one risk factor");
  if (subjects.empty()) throw std::invalid_argument("dataset: no subjects");
  std::unordered_map<std::string, int> seen;
  for (const auto& s : subjects) {
    if (!seen.emplace(s.id, 0).second) throw std::invalid_argument("dataset: duplicate subject '" + s.id + "'");
    if (static_cast<int>(s.longitudinal.size()) != num_risk_factors)
      throw std::invalid_argument("dataset: subject '" + s.id + "' has wrong risk factor count");
    const auto& o = s.survival;
    if (!(o.time > 0.0) || !std::isfinite(o.time))
      throw std::invalid_argument("dataset: subject '" + s.id + "' has non-positive event time");
    if (!(o.entry >= 0.0) || !(o.entry < o.time))
      throw std::invalid_argument("dataset: subject '" + s.id + "' needs 0 <= entry < time");
    if (o.covariates.size() != covariate_names.size())
      throw std::invalid_argument("dataset: subject '" + s.id + "' has wrong covariate count");
    for (double w : o.covariates)
      if (!std::isfinite(w)) throw std::invalid_argument("dataset: non-finite covariate for '" + s.id + "'");
    for (const auto& obs : s.longitudinal)
      for (const auto& x : obs)
        if (!std::isfinite(x.age) || !std::isfinite(x.value) || x.age < 0.0)
          throw std::invalid_argument("dataset: bad observation for '" + s.id + "'");
  }
}

bool operator==(const Observation& a, const Observation& b) { return a.age == b.age && a.value == b.value; }

bool operator==(const SurvivalOutcome& a, const SurvivalOutcome& b) {
  return a.entry == b.entry && a.time == b.time && a.event == b.event && a.covariates == b.covariates;
}

bool operator==(const SubjectRecord& a, const SubjectRecord& b) {
  return a.id == b.id && a.longitudinal == b.longitudinal && a.survival == b.survival;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.num_risk_factors == b.num_risk_factors && a.covariate_names == b.covariate_names &&
         a.subjects == b.subjects;
}

}  // namespace jmsel

namespace jmsel::io {

ParseError::ParseError(const std::string& f, std::size_t l, const std::string& what)
    : std::runtime_error(f + ":" + std::to_string(l) + ": " + what), file(f), line(l) {}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

double parse_double(const std::string& s, const std::string& file, std::size_t line, const char* field) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ParseError(file, line, std::string("invalid ") + field + " '" + s + "'");
  if (!std::isfinite(v)) throw ParseError(file, line, std::string("non-finite ") + field);
  return v;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

// Shortest round-trip representation.
std::string fmt(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

Dataset read_dataset(std::istream& lin, std::istream& sin, int num_risk_factors, const std::string& long_name,
                     const std::string& surv_name) {
  Dataset d;
  std::string line;
  std::size_t ln = 0;

  // survival file first: it defines the subject list and covariates
  if (!std::getline(sin, line)) throw ParseError(surv_name, 1, "missing header");
  ++ln;
  auto header = split(line);
  if (header.size() < 4 || header[0] != "subject_id" || header[1] != "entry" || header[2] != "time" ||
      header[3] != "event")
    throw ParseError(surv_name, 1, "expected header subject_id,entry,time,event[,covariates...]");
  d.covariate_names.assign(header.begin() + 4, header.end());
  std::unordered_map<std::string, std::size_t> index;
  while (std::getline(sin, line)) {
    ++ln;
    if (blank(line)) continue;
    const auto f = split(line);
    if (f.size() != header.size())
      throw ParseError(surv_name, ln, "expected " + std::to_string(header.size()) + " fields, got " +
                                          std::to_string(f.size()));
    SubjectRecord s;
    s.id = f[0];
    if (s.id.empty()) throw ParseError(surv_name, ln, "empty subject_id");
    s.survival.entry = parse_double(f[1], surv_name, ln, "entry");
    s.survival.time = parse_double(f[2], surv_name, ln, "time");
    if (f[3] != "0" && f[3] != "1") throw ParseError(surv_name, ln, "event must be 0 or 1");
    s.survival.event = f[3] == "1";
    if (s.survival.time <= 0.0) throw ParseError(surv_name, ln, "event time must be positive");
    if (s.survival.entry < 0.0 || s.survival.entry >= s.survival.time)
      throw ParseError(surv_name, ln, "entry must satisfy 0 <= entry < time");
    for (std::size_t k = 4; k < f.size(); ++k)
      s.survival.covariates.push_back(parse_double(f[k], surv_name, ln, "covariate"));
    if (!index.emplace(s.id, d.subjects.size()).second)
      throw ParseError(surv_name, ln, "duplicate subject '" + s.id + "'");
    d.subjects.push_back(std::move(s));
  }
  if (d.subjects.empty()) throw ParseError(surv_name, ln, "no subjects");

  ln = 0;
  if (!std::getline(lin, line)) throw ParseError(long_name, 1, "no observations");
  ++ln;
  if (split(line) != std::vector<std::string>{"subject_id", "risk_factor", "age", "value"})
    throw ParseError(long_name, 1, "expected header subject_id,risk_factor,age,value");
  struct Row {
    std::size_t subject;
    int g;
    Observation o;
  };
  std::vector<Row> rows;
  int max_g = 0;
  while (std::getline(lin, line)) {
    ++ln;
    if (blank(line)) continue;
    const auto f = split(line);
    if (f.size() != 4) throw ParseError(long_name, ln, "expected 4 fields, got " + std::to_string(f.size()));
    const auto it = index.find(f[0]);
    if (it == index.end())
      throw ReferentialError(long_name + ":" + std::to_string(ln) + ": subject '" + f[0] +
                             "' missing from the survival file");
    int g = 0;
    const auto [p, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), g);
    if (ec != std::errc() || p != f[1].data() + f[1].size() || g < 1)
      throw ParseError(long_name, ln, "invalid risk_factor '" + f[1] + "'");
    if (num_risk_factors > 0 && g > num_risk_factors)
      throw ParseError(long_name, ln, "unknown risk_factor " + f[1]);
    max_g = std::max(max_g, g);
    rows.push_back({it->second, g - 1,
                    {parse_double(f[2], long_name, ln, "age"), parse_double(f[3], long_name, ln, "value")}});
    if (rows.back().o.age < 0.0) throw ParseError(long_name, ln, "negative age");
  }
  if (rows.empty()) throw ParseError(long_name, ln, "no observations");
  d.num_risk_factors = num_risk_factors > 0 ? num_risk_factors : max_g;
  for (auto& s : d.subjects) s.longitudinal.resize(d.num_risk_factors);
  for (const auto& r : rows) d.subjects[r.subject].longitudinal[r.g].push_back(r.o);
  for (auto& s : d.subjects)
    for (auto& obs : s.longitudinal)
      std::stable_sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) { return a.age < b.age; });
  d.validate();
  return d;
}

Dataset read_dataset(const std::filesystem::path& longitudinal, const std::filesystem::path& survival,
                     int num_risk_factors) {
  std::ifstream lin(longitudinal), sin(survival);
  if (!lin) throw std::runtime_error("cannot open " + longitudinal.string());
  if (!sin) throw std::runtime_error("cannot open " + survival.string());
  return read_dataset(lin, sin, num_risk_factors, longitudinal.string(), survival.string());
}

void write_longitudinal(std::ostream& os, const Dataset& d) {
  os << "subject_id,risk_factor,age,value\n";
  for (const auto& s : d.subjects)
    for (std::size_t g = 0; g < s.longitudinal.size(); ++g)
      for (const auto& o : s.longitudinal[g]) os << s.id << ',' << g + 1 << ',' << fmt(o.age) << ',' << fmt(o.value) << '\n';
}

void write_survival(std::ostream& os, const Dataset& d) {
  os << "subject_id,entry,time,event";
  for (const auto& c : d.covariate_names) os << ',' << c;
  os << '\n';
  for (const auto& s : d.subjects) {
    os << s.id << ',' << fmt(s.survival.entry) << ',' << fmt(s.survival.time) << ',' << (s.survival.event ? 1 : 0);
    for (double w : s.survival.covariates) os << ',' << fmt(w);
    os << '\n';
  }
}

void write_dataset(const Dataset& d, const std::filesystem::path& longitudinal, const std::filesystem::path& survival) {
  std::ofstream lo(longitudinal), so(survival);
  if (!lo || !so) throw std::runtime_error("cannot write dataset files");
  write_longitudinal(lo, d);
  write_survival(so, d);
}

}  // namespace jmsel::io
