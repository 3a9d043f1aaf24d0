#include "opmtrack/radar.hpp"
#include "opmtrack/errors.hpp"

#include <cmath>
#include <ostream>

namespace opmtrack::radar {

using orbit::kPi;

Vec4 default_sigmas() { return Vec4(28.0, 0.1 * orbit::kDeg, 0.1 * orbit::kDeg, 11.0); }

void RadarStation::validate() const {
    if (!(fov_radius > 0.0)) throw Error(ErrorKind::Input, "radar field-of-view radius must be positive");
    if (!(sigmas.minCoeff() > 0.0) || !sigmas.allFinite())
        throw Error(ErrorKind::Input, "radar noise standard deviations must be positive");
}

bool in_fov(const RadarStation& st, const OrbitalState& x, const PhysicalConstants& c) {
    const orbit::SiteState s = orbit::site_state(st.site, x.epoch, c);
    return (x.position - s.position).norm() <= st.fov_radius;
}

Vec4 predict_observation(const RadarStation& st, const OrbitalState& x, const PhysicalConstants& c) {
    return orbit::eci_to_topocentric(st.site, x, c);
}

RadarObservation observe(const RadarStation& st, const OrbitalState& x, Rng& rng, const PhysicalConstants& c) {
    if (!in_fov(st, x, c))
        throw Error(ErrorKind::ContractViolation, "observe: object is outside the radar field of view");
    Vec4 y = predict_observation(st, x, c);
    for (int i = 0; i < 4; ++i) y[i] += st.sigmas[i] * standard_normal(rng);
    y[0] = std::abs(y[0]);
    // Elevation past the zenith folds back over the other side.
    if (y[2] > 0.5 * kPi) {
        y[2] = kPi - y[2];
        y[1] += kPi;
    } else if (y[2] < -0.5 * kPi) {
        y[2] = -kPi - y[2];
        y[1] += kPi;
    }
    y[1] = orbit::wrap_two_pi(y[1]);
    return RadarObservation{y, x.epoch, st.id};
}

Vec4 residual(const Vec4& y, const Vec4& predicted) {
    Vec4 r = y - predicted;
    r[1] = orbit::wrap_pi(r[1]);
    return r;
}

double radar_possibility(const Vec4& y, const Vec4& predicted, const Vec4& sigmas) {
    return std::exp(-0.5 * residual(y, predicted).cwiseQuotient(sigmas).squaredNorm());
}

double radar_likelihood(const Vec4& y, const Vec4& predicted, const Vec4& sigmas) {
    const double two_pi = 2.0 * kPi;
    return radar_possibility(y, predicted, sigmas) / (two_pi * two_pi * sigmas.prod());
}

namespace {

void require_same_epoch(const RadarObservation& obs, const OrbitalState& x) {
    if (std::abs(obs.epoch - x.epoch) > 1e-6)
        throw Error(ErrorKind::ContractViolation, "radar observation and state epochs differ");
}

}  // namespace

double h_rad(const RadarStation& st, const RadarObservation& obs, const OrbitalState& x, const PhysicalConstants& c) {
    require_same_epoch(obs, x);
    return radar_possibility(obs.y, predict_observation(st, x, c), st.sigmas);
}

double l_rad(const RadarStation& st, const RadarObservation& obs, const OrbitalState& x, const PhysicalConstants& c) {
    require_same_epoch(obs, x);
    return radar_likelihood(obs.y, predict_observation(st, x, c), st.sigmas);
}

void write_observation_csv(std::ostream& out, std::span<const RadarObservation> observations) {
    const auto prec = out.precision(17);
    out << "epoch,range,azimuth,elevation,range_rate,station_id\n";
    for (const auto& o : observations)
        out << o.epoch << ',' << o.y[0] << ',' << o.y[1] << ',' << o.y[2] << ',' << o.y[3] << ',' << o.station_id
            << '\n';
    out.precision(prec);
}

}  // namespace opmtrack::radar
