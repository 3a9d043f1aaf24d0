#pragma once

#include "opmtrack/orbit.hpp"
#include "opmtrack/random.hpp"

#include <iosfwd>
#include <span>
#include <string>

namespace opmtrack::radar {

using orbit::OrbitalState;
using orbit::PhysicalConstants;
using orbit::Vec4;

/// Default noise: 28 m, 0.1 deg, 0.1 deg, 11 m/s.
[[nodiscard]] Vec4 default_sigmas();

struct RadarStation {
    std::string id = "radar";
    orbit::GeodeticSite site;
    double fov_radius = 2.0e6;    // m, ball around the station
    Vec4 sigmas = default_sigmas();  // range m, azimuth rad, elevation rad, range rate m/s

    void validate() const;
};

struct RadarObservation {
    Vec4 y = Vec4::Zero();  // [range m, azimuth rad, elevation rad, range rate m/s]
    double epoch = 0.0;
    std::string station_id;
};

/// Closed-ball field of view around the station position at the state epoch.
[[nodiscard]] bool in_fov(const RadarStation& st, const OrbitalState& x, const PhysicalConstants& c);

/// Noise-free observation of x (the topocentric mapping).
[[nodiscard]] Vec4 predict_observation(const RadarStation& st, const OrbitalState& x, const PhysicalConstants& c);

/// Noisy observation; one standard normal draw per axis in the order range,
/// azimuth, elevation, range rate. Throws ContractViolation outside the FOV.
[[nodiscard]] RadarObservation observe(const RadarStation& st, const OrbitalState& x, Rng& rng,
                                       const PhysicalConstants& c);

/// y - predicted with the azimuth difference wrapped to (-pi, pi].
[[nodiscard]] Vec4 residual(const Vec4& y, const Vec4& predicted);

/// Gaussian possibility of y around `predicted` with diagonal spread sigmas^2.
/// Dimensionless: invariant under any per-axis rescaling applied to all three.
[[nodiscard]] double radar_possibility(const Vec4& y, const Vec4& predicted, const Vec4& sigmas);

/// Gaussian likelihood: radar_possibility / sqrt(|2 pi S|).
[[nodiscard]] double radar_likelihood(const Vec4& y, const Vec4& predicted, const Vec4& sigmas);

[[nodiscard]] double h_rad(const RadarStation& st, const RadarObservation& obs, const OrbitalState& x,
                           const PhysicalConstants& c);
[[nodiscard]] double l_rad(const RadarStation& st, const RadarObservation& obs, const OrbitalState& x,
                           const PhysicalConstants& c);

/// CSV with columns epoch,range,azimuth,elevation,range_rate,station_id.
void write_observation_csv(std::ostream& out, std::span<const RadarObservation> observations);

}  // namespace opmtrack::radar
