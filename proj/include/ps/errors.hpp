#pragma once

#include <stdexcept>
#include <string>

namespace ps {

// Base class for all toolkit errors. The CLI maps these onto exit codes:
// data/shape/config problems exit 2, numeric failures exit 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes or spatial dimensions do not line up.
struct DimensionError : Error {
    using Error::Error;
};

// Wrong number of inputs (empty set, too few lights, ...).
struct ArityError : Error {
    using Error::Error;
};

// Invalid configuration value or an unsatisfiable layer setup.
struct ConfigError : Error {
    using Error::Error;
};

// File or dataset could not be loaded / is internally inconsistent.
struct DataError : Error {
    using Error::Error;
};

// Light matrix is rank deficient; message carries the condition number.
struct DegenerateLightingError : DataError {
    using DataError::DataError;
};

// Metric evaluated over an empty domain.
struct EvalError : Error {
    using Error::Error;
};

// NaN/Inf or other numerical breakdown.
struct NumericError : Error {
    using Error::Error;
};

// Optimization produced a non-finite loss or gradient.
struct TrainingError : NumericError {
    using NumericError::NumericError;
};

}  // namespace ps
