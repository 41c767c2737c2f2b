#include "jmsel/chain_io.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace jmsel::io {

namespace {

constexpr char kMagic[8] = {'J', 'M', 'S', 'C', 'H', 'A', 'I', 'N'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "chain files assume a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw std::runtime_error("chain file: truncated header");
  return v;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  auto j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

Eigen::MatrixXd json_matrix(const nlohmann::json& j) {
  if (j.empty()) return {};
  Eigen::MatrixXd m(j.size(), j[0].size());
  for (std::size_t r = 0; r < j.size(); ++r)
    for (std::size_t c = 0; c < j[r].size(); ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

}  // namespace

void write_chain(std::ostream& os, const mcmc::ChainOutput& out) {
  nlohmann::json h;
  h["columns"] = out.columns;
  h["rows"] = out.draws.rows();
  h["seed"] = out.seed;
  h["spec_hash"] = out.spec_hash;
  h["build_id"] = out.build_id;
  h["t_hat"] = out.t_hat;
  h["pilot_inv_s2"] = out.pilot_inv_s2;
  h["wall_seconds"] = out.wall_seconds;
  h["acceptance"] = nlohmann::json::array();
  for (const auto& [k, v] : out.acceptance) h["acceptance"].push_back({k, v});
  h["scaling"] = {{"center", matrix_json(out.scaling.center)}, {"scale", matrix_json(out.scaling.scale)}};
  const std::string header = h.dump();
  os.write(kMagic, sizeof kMagic);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  // Eigen is column-major, so each column is contiguous
  os.write(reinterpret_cast<const char*>(out.draws.data()),
           static_cast<std::streamsize>(sizeof(double) * out.draws.size()));
  if (!os) throw std::runtime_error("chain file: write failed");
}

mcmc::ChainOutput read_chain(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("chain file: bad magic");
  const auto version = get_u32(is);
  if (version != kVersion) throw std::runtime_error("chain file: unsupported version " + std::to_string(version));
  std::string header(get_u32(is), '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(header.size())))
    throw std::runtime_error("chain file: truncated header");
  const auto h = nlohmann::json::parse(header);
  mcmc::ChainOutput out;
  out.columns = h.at("columns").get<std::vector<std::string>>();
  out.seed = h.at("seed").get<std::uint64_t>();
  out.spec_hash = h.at("spec_hash").get<std::string>();
  out.build_id = h.at("build_id").get<std::string>();
  out.t_hat = h.at("t_hat").get<double>();
  out.wall_seconds = h.value("wall_seconds", 0.0);
  if (h.contains("pilot_inv_s2")) out.pilot_inv_s2 = h["pilot_inv_s2"].get<std::vector<double>>();
  for (const auto& a : h.at("acceptance")) out.acceptance.emplace_back(a[0].get<std::string>(), a[1].get<double>());
  if (h.contains("scaling")) {
    out.scaling.center = json_matrix(h["scaling"]["center"]);
    out.scaling.scale = json_matrix(h["scaling"]["scale"]);
  }
  const auto rows = h.at("rows").get<Eigen::Index>();
  out.draws.resize(rows, static_cast<Eigen::Index>(out.columns.size()));
  if (!is.read(reinterpret_cast<char*>(out.draws.data()),
               static_cast<std::streamsize>(sizeof(double) * out.draws.size())))
    throw std::runtime_error("chain file: truncated data");
  return out;
}

void write_chain(const std::filesystem::path& path, const mcmc::ChainOutput& out) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_chain(os, out);
}

mcmc::ChainOutput read_chain(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_chain(is);
}

}  // namespace jmsel::io
