#pragma once

#include "opmtrack/orbit.hpp"
#include "opmtrack/possibility.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace opmtrack::tle {

using orbit::OrbitalState;
using orbit::PhysicalConstants;

struct TleRecord {
    int catalog_id = 0;
    double epoch = 0.0;  // seconds since J2000
    orbit::KeplerElements elements;
    std::string line1;
    std::string line2;
    std::string name;  // from an optional preceding "0 ..." line
};

/// Tolerances of the TLE possibility: a one-sided trapezoid on the orbital
/// plane alignment and a symmetric trapezoid on the specific-energy offset.
/// Each ramp reaches zero at foot_factor tolerances from the nominal value.
struct TleModelParams {
    double ang_tolerance = 1e-7;       // plateau depth below 1 of the plane alignment
    double energy_nominal = -2.67e4;   // m^2/s^2, TLE energy minus true energy
    double energy_tolerance = 0.5e4;   // m^2/s^2, plateau half-width
    double foot_factor = 5.0;

    void validate() const;

    /// Trapezoid over the alignment deficit 1 - delta_ang.
    [[nodiscard]] possibility::TrapezoidPossibility angle_possibility() const;
    /// Trapezoid over the energy offset.
    [[nodiscard]] possibility::TrapezoidPossibility energy_possibility() const;
};

// ---------------------------------------------------------------------------
// Parsing

/// Mod-10 checksum of columns 1-68: digits count their value, '-' counts 1.
[[nodiscard]] int checksum_digit(std::string_view line);

/// Seconds since J2000 (2000-01-01 12:00 UTC, leap seconds ignored) of a TLE
/// epoch given as two-digit year and fractional day of year (1.0 = Jan 1 0h).
[[nodiscard]] double tle_epoch_seconds(int two_digit_year, double day_of_year);

/// Decodes one record. Throws Format, Checksum (TleChecksumError) or Field
/// (TleFieldError) errors.
[[nodiscard]] TleRecord parse_tle(std::string_view line1, std::string_view line2);

struct ParseOutcome {
    int first_line = 0;  // 1-based line number of line 1 of the record
    std::optional<TleRecord> record;
    std::string error;
};

/// Reads consecutive line pairs, skipping blank and name lines, and keeps going
/// past malformed records so that every problem gets reported.
[[nodiscard]] std::vector<ParseOutcome> scan_tle_stream(std::istream& in);

/// Strict reader: throws on the first malformed record.
[[nodiscard]] std::vector<TleRecord> read_tle_stream(std::istream& in);
[[nodiscard]] std::vector<TleRecord> read_tle_file(const std::string& path);

/// Pseudo-observation in the state space: elements taken as osculating.
[[nodiscard]] OrbitalState tle_to_eci(const TleRecord& rec, const PhysicalConstants& c);

// ---------------------------------------------------------------------------
// Possibility model

/// Cosine of the angle between the orbital planes of y and x, in [-1, 1].
/// Throws DegenerateState on zero angular momentum.
[[nodiscard]] double delta_ang(const OrbitalState& y, const OrbitalState& x);

/// 1 - delta_ang(y, x), computed from the difference of the unit normals so
/// that small plane offsets keep full relative precision.
[[nodiscard]] double angle_deficit(const OrbitalState& y, const OrbitalState& x);

/// Specific energy of y minus that of x.
[[nodiscard]] double delta_en(const OrbitalState& y, const OrbitalState& x, const PhysicalConstants& c);

[[nodiscard]] double h_ang(double delta, const TleModelParams& params = {});
[[nodiscard]] double h_ang_deficit(double deficit, const TleModelParams& params = {});
[[nodiscard]] double h_en(double delta, const TleModelParams& params = {});

/// h_ang * h_en of the offsets of TLE pseudo-observation y from state x.
[[nodiscard]] double h_tle(const OrbitalState& y, const OrbitalState& x, const TleModelParams& params,
                           const PhysicalConstants& c);

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationSample {
    double delta_ang;
    double delta_en;
};

struct Calibration {
    TleModelParams params;
    std::vector<CalibrationSample> samples;
};

/// Fits plateau tolerances to (TLE state, reference state) pairs: the angle
/// tolerance is the largest deficit, the energy nominal the mean offset and
/// the energy tolerance the largest deviation from it. Tolerances are floored
/// at 1e-12 and 1e-6 m^2/s^2. `base` supplies the foot factor.
[[nodiscard]] Calibration calibrate(std::span<const std::pair<OrbitalState, OrbitalState>> pairs,
                                    const PhysicalConstants& c, const TleModelParams& base = {});

/// CSV with columns pair,delta_ang,delta_en.
void write_calibration_csv(std::ostream& out, std::span<const CalibrationSample> samples);

}  // namespace opmtrack::tle
