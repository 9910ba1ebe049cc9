#pragma once

#include <stdexcept>
#include <string>

namespace gapnp {

/// Tensor shapes are incompatible for an operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An operation received values outside its numeric domain.
class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A caller violated an operation's preconditions.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Data that cannot support the requested operation (empty logs, failed expert runs).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. The message names the file and line.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

}  // namespace gapnp
