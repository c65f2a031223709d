#pragma once

#include <stdexcept>
#include <string>

namespace ovkrff {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Argument shapes do not match (vector length, matrix size, block count).
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// Invalid specification or configuration value (bad sigma, non-PSD A,
/// incompatible kernel/variant pair, malformed experiment config).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Kernel with tr[k(0)] = 0; no spectral measure can be normalized.
class DegenerateKernelError : public Error {
public:
    explicit DegenerateKernelError(const std::string& msg) : Error(msg) {}
};

/// File could not be read or written.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Data file does not match the expected schema (ragged CSV, missing
/// JSON field, wrong column count).
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg) : Error(msg) {}
};

/// A factorization or solve failed beyond the required residual tolerance.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

/// Grid too coarse or too narrow for a requested numerical transform.
class ResolutionError : public Error {
public:
    explicit ResolutionError(const std::string& msg) : Error(msg) {}
};

/// Requested quantity is undefined for the given inputs
/// (e.g. a finite-sample bound for an unbounded feature map).
class NotApplicableError : public Error {
public:
    explicit NotApplicableError(const std::string& msg) : Error(msg) {}
};

} // namespace ovkrff
