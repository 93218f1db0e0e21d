#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hetgp {

/// Malformed or inconsistent caller input (dimension mismatch, empty data, bad config).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A factorization or iteration broke down numerically.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A text file could not be parsed. `line()` is 1-based; 0 means "whole file".
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
          line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace hetgp
