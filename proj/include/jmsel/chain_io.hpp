#pragma once

// Columnar chain files; byte layout in docs/chain_format.md.

#include "jmsel/mcmc.hpp"

#include <filesystem>
#include <iosfwd>

namespace jmsel::io {

void write_chain(std::ostream& os, const mcmc::ChainOutput& out);
mcmc::ChainOutput read_chain(std::istream& is);
void write_chain(const std::filesystem::path& path, const mcmc::ChainOutput& out);
mcmc::ChainOutput read_chain(const std::filesystem::path& path);

}  // namespace jmsel::io
