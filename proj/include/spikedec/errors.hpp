#pragma once

#include <stdexcept>
#include <string>

namespace spikedec {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape / dimension mismatches and invalid configuration values.
struct DimensionError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// File format problems, one type per failure mode so callers can distinguish them.
struct IoError : Error {
    using Error::Error;
};
struct FormatError : IoError {
    using IoError::IoError;
};
struct TruncatedError : IoError {
    using IoError::IoError;
};
struct ChecksumError : IoError {
    using IoError::IoError;
};

// Non-finite values during simulation or training.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace spikedec
