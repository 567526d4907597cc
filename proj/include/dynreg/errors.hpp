#pragma once

#include <stdexcept>
#include <string>

namespace dynreg {

/// Point outside (or on the boundary of) the region where an operation is defined.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Invalid experiment, geometry or schedule configuration.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed caller input (NaN coordinates, dimension mismatch, negative increments).
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A numeric solver could not produce a certified answer.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Loss value outside the [0,1] range required by the Prod-style combiners.
struct RangeError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

/// Trace or report is missing data needed for a computation.
struct ReportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dynreg
