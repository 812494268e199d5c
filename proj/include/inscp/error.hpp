#pragma once

#include <stdexcept>
#include <string>

namespace inscp {

// Validation-class failures (bad config, bad arguments, malformed input
// files).  The CLI maps these to exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ArgError : std::runtime_error {
    explicit ArgError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent data (bad token ids, duplicate document ids,
// missing reports).  Exit code 1.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Runtime failures: NaN loss, port contract violations, I/O.  Exit code 2.
struct RuntimeError : std::runtime_error {
    explicit RuntimeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace inscp
