#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace opmtrack {

enum class ErrorKind {
    Input,             // malformed argument or dimension mismatch
    UnsupportedRegion, // subset shape not supported by a possibility variant
    Model,             // conditional possibility not normalized
    Incompatibility,   // observation fully incompatible with the prior
    Numeric,           // non-convergence, step underflow, singular matrix
    Reentry,           // trajectory dropped below the Earth's surface
    Frame,             // degenerate reference state for a local frame
    Geometry,          // singular observation geometry
    Format,            // TLE line layout
    Checksum,          // TLE mod-10 checksum
    Field,             // TLE numeric field
    DegenerateState,   // zero angular momentum
    InsufficientData,
    ContractViolation,
    InfeasibleRegion,
    Config,
};

std::string_view to_string(ErrorKind kind);

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class TleChecksumError : public Error {
public:
    TleChecksumError(int line_number, int expected_digit, int found_digit);

    [[nodiscard]] int line_number() const noexcept { return line_; }
    [[nodiscard]] int expected_digit() const noexcept { return expected_; }
    [[nodiscard]] int found_digit() const noexcept { return found_; }

private:
    int line_;
    int expected_;
    int found_;
};

class TleFieldError : public Error {
public:
    TleFieldError(int line_number, int first_column, int last_column, std::string_view text);

    [[nodiscard]] int first_column() const noexcept { return first_; }
    [[nodiscard]] int last_column() const noexcept { return last_; }

private:
    int first_;
    int last_;
};

}  // namespace opmtrack
