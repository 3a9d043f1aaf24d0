#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace opmtrack::orbit {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDeg = kPi / 180.0;
inline constexpr double kSecondsPerDay = 86400.0;

struct PhysicalConstants {
    double mu = 3.986004418e14;          // m^3/s^2
    double earth_radius = 6378137.0;     // m, equatorial
    double j2 = 1.08263e-3;
    double j3 = -2.53266e-6;
    double j4 = -1.61962e-6;
    double earth_rotation_rate = 7.292115e-5;       // rad/s
    double earth_angle_at_reference = 4.894961212735793;  // rad, Earth rotation angle at epoch 0 (J2000)

    /// Throws Input unless mu, earth_radius, j2 and the rotation rate are positive.
    void validate() const;
};

/// Position and velocity in the inertial frame. Epochs are seconds since J2000.
struct OrbitalState {
    Vec3 position = Vec3::Zero();  // m
    Vec3 velocity = Vec3::Zero();  // m/s
    double epoch = 0.0;

    [[nodiscard]] Vec6 as_vector() const;
    [[nodiscard]] static OrbitalState from_vector(const Vec6& pv, double epoch);
};

/// Classical elements with angles in degrees and mean motion in rad/s.
struct KeplerElements {
    double raan_deg = 0.0;
    double inclination_deg = 0.0;
    double arg_perigee_deg = 0.0;
    double mean_motion = 0.0;
    double eccentricity = 0.0;
    double mean_anomaly_deg = 0.0;

    void validate() const;
};

/// Zonal harmonics up to `max_zonal_degree` (0 or 1: point mass; 2..4: J2..J4).
struct ForceModel {
    int max_zonal_degree = 2;
};

struct IntegratorOptions {
    double rel_tol = 1e-12;
    double abs_tol = 1e-9;  // m for positions, m/s for velocities
    double min_step = 1e-6;
    long max_steps = 50'000'000;
};

struct PropagatorConfig {
    ForceModel force;
    IntegratorOptions integrator;
};

/// Solves M = E - e sin E for E (radians) by Newton iteration.
[[nodiscard]] double solve_kepler(double mean_anomaly, double eccentricity);

[[nodiscard]] OrbitalState kepler_to_cartesian(const KeplerElements& el, const PhysicalConstants& c, double epoch);

[[nodiscard]] double semi_major_axis_from_mean_motion(double mean_motion, const PhysicalConstants& c);

[[nodiscard]] Vec3 specific_angular_momentum(const OrbitalState& x);
[[nodiscard]] double specific_orbital_energy(const OrbitalState& x, const PhysicalConstants& c);

/// Perigee radius of the osculating two-body orbit; +inf for unbounded orbits.
[[nodiscard]] double perigee_radius(const OrbitalState& x, const PhysicalConstants& c);

/// Rows are the radial, in-track and cross-track unit vectors in ECI.
/// Throws Frame when the angular momentum vanishes.
[[nodiscard]] Mat3 ric_basis(const OrbitalState& reference);
[[nodiscard]] Vec3 eci_to_ric(const OrbitalState& reference, const Vec3& v);
[[nodiscard]] Vec3 ric_to_eci(const OrbitalState& reference, const Vec3& v);

/// Central-body plus zonal acceleration at an inertial position.
[[nodiscard]] Vec3 gravity_acceleration(const Vec3& position, const PhysicalConstants& c, const ForceModel& model);

/// Integrates the state to `t_target` with an adaptive Dormand-Prince 5(4)
/// pair. When `noise` is set it is the RIC acceleration rate (m/s^3), giving an
/// extra acceleration ric_to_eci((t - x.epoch) * noise) along the current
/// osculating frame.
[[nodiscard]] OrbitalState propagate(const OrbitalState& x, double t_target, const std::optional<Vec3>& noise,
                                     const PhysicalConstants& c, const PropagatorConfig& cfg);

[[nodiscard]] inline OrbitalState propagate(const OrbitalState& x, double t_target, const PhysicalConstants& c,
                                            const PropagatorConfig& cfg) {
    return propagate(x, t_target, std::nullopt, c, cfg);
}

// ---------------------------------------------------------------------------
// Ground sites and spherical coordinates

struct GeodeticSite {
    double latitude_deg = 0.0;
    double longitude_deg = 0.0;
    double altitude_m = 0.0;
};

[[nodiscard]] double earth_rotation_angle(double epoch, const PhysicalConstants& c);

struct SiteState {
    Vec3 position;
    Vec3 velocity;
    Mat3 local;  // rows: North, East, Up unit vectors in ECI
};

/// Site on a spherical Earth rotating uniformly about the polar axis.
[[nodiscard]] SiteState site_state(const GeodeticSite& site, double epoch, const PhysicalConstants& c);

/// Spherical 6-state [r, angle, angle, r_dot, angle rate, angle rate] taken
/// either about the Earth's center in ECI axes (right ascension, declination)
/// or about a ground site in its local North-East-Up axes (azimuth from North
/// toward East, elevation). Topocentric rates are seen from the rotating site.
class SphericalFrame {
public:
    static SphericalFrame eci_centered() { return SphericalFrame(std::nullopt); }
    static SphericalFrame topocentric(const GeodeticSite& site) { return SphericalFrame(site); }

    [[nodiscard]] bool is_topocentric() const noexcept { return site_.has_value(); }
    [[nodiscard]] const GeodeticSite& site() const { return *site_; }

private:
    explicit SphericalFrame(std::optional<GeodeticSite> s) : site_(std::move(s)) {}
    std::optional<GeodeticSite> site_;
};

/// Throws Geometry when the range vanishes.
[[nodiscard]] Vec6 to_spherical(const SphericalFrame& frame, const OrbitalState& x, const PhysicalConstants& c);
[[nodiscard]] OrbitalState from_spherical(const SphericalFrame& frame, const Vec6& s, double epoch,
                                          const PhysicalConstants& c);

/// Range, azimuth, elevation and range rate of the state seen from the site.
[[nodiscard]] Vec4 eci_to_topocentric(const GeodeticSite& site, const OrbitalState& x, const PhysicalConstants& c);

/// Angle wrapped to [0, 2 pi).
[[nodiscard]] double wrap_two_pi(double a);
/// Angle wrapped to (-pi, pi].
[[nodiscard]] double wrap_pi(double a);

// ---------------------------------------------------------------------------
// Ephemeris CSV: epoch,px,py,pz,vx,vy,vz

void write_ephemeris_csv(std::ostream& out, std::span<const OrbitalState> states);
[[nodiscard]] std::vector<OrbitalState> read_ephemeris_csv(std::istream& in);

}  // namespace opmtrack::orbit
