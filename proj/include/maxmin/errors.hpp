#pragma once

#include <stdexcept>
#include <string>

namespace maxmin {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid hyperparameters or layer configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed, truncated or missing dataset files.
class DataError : public Error {
public:
    using Error::Error;
};

/// Corrupt weight files or architecture mismatches on load.
class FormatError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. backward before forward.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or gradient during training.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace maxmin
