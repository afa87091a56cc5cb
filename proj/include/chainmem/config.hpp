#pragma once

#include <string>

#include "chainmem/chain.hpp"

namespace chainmem {

// Loads a JSON configuration file into a validated ChainConfig. The file
// declares the chain parameters, one backend per role, and optionally a
// template directory; see the README for the schema. Secrets never appear in
// the file: http backends name the environment variable holding their key.
ChainConfig load_config(const std::string& path);

} // namespace chainmem
