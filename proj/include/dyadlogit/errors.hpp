#pragma once

#include <stdexcept>
#include <string>

namespace dyadlogit {

/// Base class for every error raised by the library. `kind()` is the short
/// class name the CLI prints next to the message.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "Error"; }
};

/// Bad or inconsistent configuration (missing column, invalid option values).
class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "ConfigError"; }
};

/// Malformed input data or arguments (dimension mismatch, out of range index).
class InputError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "InputError"; }
};

/// File parse failure; the message carries file and line.
class ParseError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "ParseError"; }
};

/// Edge list references an id that is absent from an attribute table.
class ReferentialError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "ReferentialError"; }
};

/// All-zero / all-one outcomes, or a diverging intercept.
class SeparationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "SeparationError"; }
};

/// Hessian (or Gamma-hat) too ill-conditioned to invert.
class SingularHessianError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "SingularHessianError"; }
};

/// Operation called on an object in the wrong state (e.g. unconverged fit).
class StateError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "StateError"; }
};

} // namespace dyadlogit
