#pragma once

#include <stdexcept>
#include <string>

namespace netlim {

/// Invalid configuration or parameters (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure, e.g. a covariance that is not PSD beyond tolerance (CLI exit code 3).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace netlim
