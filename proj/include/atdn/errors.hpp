#pragma once

#include <stdexcept>
#include <string>

namespace atdn {

// Error taxonomy used for CLI exit codes: config/missing-input -> 2,
// numeric fault -> 3, malformed data -> 4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericFault : std::runtime_error {
  explicit NumericFault(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace atdn
