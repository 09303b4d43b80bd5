#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace selfsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of an operation (empty-word shift, i == j, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A level or budget would need more cells / entries than the configured cap.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration; `path` names the offending key when known.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message, std::string path = {})
        : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Non-finite values during evaluation or time stepping.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Syntax / scope error in an expression, positioned by byte offset into the source.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t offset)
        : Error(message + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class EvalError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace selfsim
