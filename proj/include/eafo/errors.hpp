#pragma once

#include <stdexcept>
#include <string>

namespace eafo {

// Invalid experiment setup: bad dimensions, empty shards, out-of-range
// settings. Maps to CLI exit code 1.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (IDX datasets, config files). Maps to CLI exit code 1.
struct parse_error : std::runtime_error {
  explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace eafo
