#include "opmtrack/diagnostics.hpp"
#include "opmtrack/errors.hpp"

#include <iostream>
#include <mutex>
#include <string>

namespace opmtrack {

namespace {

std::mutex& handler_mutex() {
    static std::mutex m;
    return m;
}

WarningHandler& handler() {
    static WarningHandler h = [](std::string_view msg) { std::clog << "warning: " << msg << '\n'; };
    return h;
}

}  // namespace

void set_warning_handler(WarningHandler h) {
    std::lock_guard lock(handler_mutex());
    handler() = std::move(h);
}

void warn(std::string_view message) {
    std::lock_guard lock(handler_mutex());
    if (handler()) handler()(message);
}

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Input: return "input";
        case ErrorKind::UnsupportedRegion: return "unsupported-region";
        case ErrorKind::Model: return "model";
        case ErrorKind::Incompatibility: return "incompatibility";
        case ErrorKind::Numeric: return "numeric";
        case ErrorKind::Reentry: return "re-entry";
        case ErrorKind::Frame: return "frame";
        case ErrorKind::Geometry: return "geometry";
        case ErrorKind::Format: return "format";
        case ErrorKind::Checksum: return "checksum";
        case ErrorKind::Field: return "field";
        case ErrorKind::DegenerateState: return "degenerate-state";
        case ErrorKind::InsufficientData: return "insufficient-data";
        case ErrorKind::ContractViolation: return "contract-violation";
        case ErrorKind::InfeasibleRegion: return "infeasible-region";
        case ErrorKind::Config: return "config";
    }
    return "unknown";
}

TleChecksumError::TleChecksumError(int line_number, int expected_digit, int found_digit)
    : Error(ErrorKind::Checksum,
            "TLE line " + std::to_string(line_number) + ": checksum mismatch, expected digit " +
                std::to_string(expected_digit) + " in column 69 but found " + std::to_string(found_digit)),
      line_(line_number),
      expected_(expected_digit),
      found_(found_digit) {}

TleFieldError::TleFieldError(int line_number, int first_column, int last_column, std::string_view text)
    : Error(ErrorKind::Field,
            "TLE line " + std::to_string(line_number) + ": cannot parse columns " + std::to_string(first_column) +
                "-" + std::to_string(last_column) + " ('" + std::string(text) + "')"),
      first_(first_column),
      last_(last_column) {}

}  // namespace opmtrack
