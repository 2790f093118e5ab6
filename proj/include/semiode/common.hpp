#pragma once

#include <stdexcept>
#include <string>

namespace semiode {

// Error hierarchy used across the library. Exit-code mapping lives in the CLI.
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown by closed-form sensitivity routines when g is not safely positive
// over the traversed state range; callers fall back to ODE propagation.
struct PositivityError : NumericError {
    using NumericError::NumericError;
};

}  // namespace semiode
