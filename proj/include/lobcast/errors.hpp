#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lobcast {

/// Input file does not follow the expected layout (missing columns, empty file).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A single malformed data row.
class RowError : public std::runtime_error {
public:
    RowError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Not enough data for the requested computation.
class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition (unsorted input, time going backwards).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace lobcast
