#include "opmtrack/tle.hpp"
#include "opmtrack/diagnostics.hpp"
#include "opmtrack/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace opmtrack::tle {

namespace {

constexpr std::size_t kLineLength = 69;

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string_view strip_line_end(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ')) s.remove_suffix(1);
    return s;
}

// Columns are 1-based and inclusive, as in the format documentation.
std::string_view columns(std::string_view line, int first, int last) {
    return line.substr(static_cast<std::size_t>(first - 1), static_cast<std::size_t>(last - first + 1));
}

double parse_double(std::string_view line, int line_no, int first, int last) {
    const std::string_view raw = columns(line, first, last);
    std::string_view f = trim(raw);
    if (!f.empty() && f.front() == '+') f.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v))
        throw TleFieldError(line_no, first, last, raw);
    return v;
}

int parse_int(std::string_view line, int line_no, int first, int last) {
    const std::string_view raw = columns(line, first, last);
    const std::string_view f = trim(raw);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc() || ptr != f.data() + f.size()) throw TleFieldError(line_no, first, last, raw);
    return v;
}

// Eccentricity is printed with an implied leading decimal point.
double parse_implied_decimal(std::string_view line, int line_no, int first, int last) {
    const std::string_view raw = columns(line, first, last);
    const std::string_view f = trim(raw);
    if (f.empty() || !std::all_of(f.begin(), f.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
        throw TleFieldError(line_no, first, last, raw);
    double v = 0.0;
    for (char ch : f) v = v * 10.0 + (ch - '0');
    return v / std::pow(10.0, static_cast<double>(f.size()));
}

void check_line(std::string_view line, int line_no) {
    if (line.size() != kLineLength)
        throw Error(ErrorKind::Format, "TLE line " + std::to_string(line_no) + " has " + std::to_string(line.size()) +
                                           " characters, expected 69");
    if (line[0] != static_cast<char>('0' + line_no))
        throw Error(ErrorKind::Format,
                    "TLE line " + std::to_string(line_no) + " must start with '" + std::to_string(line_no) + "'");
    const char last = line[kLineLength - 1];
    if (!std::isdigit(static_cast<unsigned char>(last)))
        throw Error(ErrorKind::Format, "TLE line " + std::to_string(line_no) + ": column 69 is not a checksum digit");
    const int expected = checksum_digit(line);
    if (expected != last - '0') throw TleChecksumError(line_no, expected, last - '0');
}

double unit_normal_check(const OrbitalState& s, orbit::Vec3& out) {
    const orbit::Vec3 h = orbit::specific_angular_momentum(s);
    const double n = h.norm();
    if (!(n > 0.0)) throw Error(ErrorKind::DegenerateState, "zero specific angular momentum");
    out = h / n;
    return n;
}

}  // namespace

void TleModelParams::validate() const {
    if (!(ang_tolerance > 0.0)) throw Error(ErrorKind::Input, "TLE angle tolerance must be positive");
    if (!(energy_tolerance > 0.0)) throw Error(ErrorKind::Input, "TLE energy tolerance must be positive");
    if (!(foot_factor > 1.0)) throw Error(ErrorKind::Input, "TLE foot factor must exceed 1");
    if (!std::isfinite(energy_nominal)) throw Error(ErrorKind::Input, "TLE energy nominal must be finite");
}

possibility::TrapezoidPossibility TleModelParams::angle_possibility() const {
    return {-possibility::kInf, ang_tolerance, 0.0, (foot_factor - 1.0) * ang_tolerance};
}

possibility::TrapezoidPossibility TleModelParams::energy_possibility() const {
    const double ramp = (foot_factor - 1.0) * energy_tolerance;
    return {energy_nominal - energy_tolerance, energy_nominal + energy_tolerance, ramp, ramp};
}

int checksum_digit(std::string_view line) {
    int sum = 0;
    const std::size_t n = std::min<std::size_t>(line.size(), kLineLength - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const char ch = line[i];
        if (ch >= '0' && ch <= '9')
            sum += ch - '0';
        else if (ch == '-')
            sum += 1;
    }
    return sum % 10;
}

double tle_epoch_seconds(int two_digit_year, double day_of_year) {
    using namespace std::chrono;
    const int yr = two_digit_year < 57 ? 2000 + two_digit_year : 1900 + two_digit_year;
    const sys_days jan1{year{yr} / January / 1};
    const sys_days ref{year{2000} / January / 1};
    const double days = static_cast<double>((jan1 - ref).count()) + (day_of_year - 1.0);
    return days * orbit::kSecondsPerDay - 43200.0;
}

TleRecord parse_tle(std::string_view line1, std::string_view line2) {
    line1 = strip_line_end(line1);
    line2 = strip_line_end(line2);
    check_line(line1, 1);
    check_line(line2, 2);

    TleRecord rec;
    rec.catalog_id = parse_int(line1, 1, 3, 7);
    if (parse_int(line2, 2, 3, 7) != rec.catalog_id)
        throw Error(ErrorKind::Format, "TLE catalog numbers differ between line 1 and line 2");
    const int yy = parse_int(line1, 1, 19, 20);
    const double doy = parse_double(line1, 1, 21, 32);
    if (yy < 0 || yy > 99 || doy < 1.0 || doy >= 367.0) throw TleFieldError(1, 19, 32, columns(line1, 19, 32));
    rec.epoch = tle_epoch_seconds(yy, doy);

    auto& el = rec.elements;
    el.inclination_deg = parse_double(line2, 2, 9, 16);
    el.raan_deg = parse_double(line2, 2, 18, 25);
    el.eccentricity = parse_implied_decimal(line2, 2, 27, 33);
    el.arg_perigee_deg = parse_double(line2, 2, 35, 42);
    el.mean_anomaly_deg = parse_double(line2, 2, 44, 51);
    const double rev_per_day = parse_double(line2, 2, 53, 63);
    if (!(rev_per_day > 0.0)) throw TleFieldError(2, 53, 63, columns(line2, 53, 63));
    el.mean_motion = rev_per_day * 2.0 * orbit::kPi / orbit::kSecondsPerDay;

    rec.line1 = std::string(line1);
    rec.line2 = std::string(line2);
    return rec;
}

std::vector<ParseOutcome> scan_tle_stream(std::istream& in) {
    std::vector<ParseOutcome> out;
    std::string line;
    std::string pending_name;
    std::optional<std::pair<int, std::string>> first;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view s = strip_line_end(line);
        if (trim(s).empty()) continue;
        if (s.front() == '1' && s.size() > 1 && s[1] == ' ') {
            if (first) out.push_back({first->first, std::nullopt, "line 1 without a following line 2"});
            first = {line_no, std::string(s)};
            continue;
        }
        if (s.front() == '2' && s.size() > 1 && s[1] == ' ') {
            if (!first) {
                out.push_back({line_no, std::nullopt, "line 2 without a preceding line 1"});
                continue;
            }
            ParseOutcome o;
            o.first_line = first->first;
            try {
                o.record = parse_tle(first->second, s);
                o.record->name = pending_name;
            } catch (const Error& e) {
                o.error = e.what();
            }
            out.push_back(std::move(o));
            first.reset();
            pending_name.clear();
            continue;
        }
        // Anything else is a name line ("0 NAME" or a bare title line).
        if (first) {
            out.push_back({first->first, std::nullopt, "line 1 without a following line 2"});
            first.reset();
        }
        std::string_view name = trim(s);
        if (name.size() > 1 && name[0] == '0' && name[1] == ' ') name = trim(name.substr(2));
        pending_name = std::string(name);
    }
    if (first) out.push_back({first->first, std::nullopt, "line 1 without a following line 2"});
    return out;
}

std::vector<TleRecord> read_tle_stream(std::istream& in) {
    std::vector<TleRecord> recs;
    for (auto& o : scan_tle_stream(in)) {
        if (!o.record)
            throw Error(ErrorKind::Format, "TLE record at line " + std::to_string(o.first_line) + ": " + o.error);
        recs.push_back(std::move(*o.record));
    }
    return recs;
}

std::vector<TleRecord> read_tle_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Input, "cannot open TLE file '" + path + "'");
    return read_tle_stream(in);
}

OrbitalState tle_to_eci(const TleRecord& rec, const PhysicalConstants& c) {
    return orbit::kepler_to_cartesian(rec.elements, c, rec.epoch);
}

double delta_ang(const OrbitalState& y, const OrbitalState& x) {
    orbit::Vec3 hy, hx;
    unit_normal_check(y, hy);
    unit_normal_check(x, hx);
    return std::clamp(hy.dot(hx), -1.0, 1.0);
}

double angle_deficit(const OrbitalState& y, const OrbitalState& x) {
    orbit::Vec3 hy, hx;
    unit_normal_check(y, hy);
    unit_normal_check(x, hx);
    return std::clamp(0.5 * (hy - hx).squaredNorm(), 0.0, 2.0);
}

double delta_en(const OrbitalState& y, const OrbitalState& x, const PhysicalConstants& c) {
    return -c.mu * (1.0 / y.position.norm() - 1.0 / x.position.norm()) +
           0.5 * (y.velocity.squaredNorm() - x.velocity.squaredNorm());
}

double h_ang_deficit(double deficit, const TleModelParams& params) { return params.angle_possibility()(deficit); }

double h_ang(double delta, const TleModelParams& params) { return h_ang_deficit(1.0 - delta, params); }

double h_en(double delta, const TleModelParams& params) { return params.energy_possibility()(delta); }

double h_tle(const OrbitalState& y, const OrbitalState& x, const TleModelParams& params, const PhysicalConstants& c) {
    const double ha = h_ang_deficit(angle_deficit(y, x), params);
    if (ha == 0.0) return 0.0;
    return ha * h_en(delta_en(y, x, c), params);
}

Calibration calibrate(std::span<const std::pair<OrbitalState, OrbitalState>> pairs, const PhysicalConstants& c,
                      const TleModelParams& base) {
    if (pairs.size() < 2)
        throw Error(ErrorKind::InsufficientData, "calibration needs at least 2 (TLE, reference) pairs");
    Calibration cal;
    cal.params = base;
    double max_deficit = 0.0;
    double sum_en = 0.0;
    for (const auto& [y, x] : pairs) {
        const double deficit = angle_deficit(y, x);
        const double den = delta_en(y, x, c);
        cal.samples.push_back({1.0 - deficit, den});
        max_deficit = std::max(max_deficit, deficit);
        sum_en += den;
    }
    const double nominal = sum_en / static_cast<double>(pairs.size());
    double max_dev = 0.0;
    for (const auto& s : cal.samples) max_dev = std::max(max_dev, std::abs(s.delta_en - nominal));

    if (max_deficit < 1e-12) {
        warn("calibration: plane offsets vanish on the training set, angle tolerance floored at 1e-12");
        max_deficit = 1e-12;
    }
    if (max_dev < 1e-6) {
        warn("calibration: energy offsets are constant on the training set, tolerance floored at 1e-6 m^2/s^2");
        max_dev = 1e-6;
    }
    cal.params.ang_tolerance = max_deficit;
    cal.params.energy_nominal = nominal;
    cal.params.energy_tolerance = max_dev;
    return cal;
}

void write_calibration_csv(std::ostream& out, std::span<const CalibrationSample> samples) {
    const auto prec = out.precision(17);
    out << "pair,delta_ang,delta_en\n";
    for (std::size_t i = 0; i < samples.size(); ++i)
        out << i << ',' << samples[i].delta_ang << ',' << samples[i].delta_en << '\n';
    out.precision(prec);
}

}  // namespace opmtrack::tle
