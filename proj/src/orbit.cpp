#include "opmtrack/orbit.hpp"
#include "opmtrack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace opmtrack::orbit {

namespace {

[[noreturn]] void input_error(const std::string& msg) { throw Error(ErrorKind::Input, msg); }

Mat3 rot_z(double a) {
    Mat3 m;
    m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    return m;
}

Mat3 rot_x(double a) {
    Mat3 m;
    m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
    return m;
}

// Cartesian -> [r, lon, lat, r_dot, lon_dot, lat_dot] for local components.
Vec6 cartesian_to_spherical(const Vec3& d, const Vec3& dd) {
    const double r = d.norm();
    if (!(r > 0.0)) throw Error(ErrorKind::Geometry, "spherical coordinates undefined at zero range");
    const double h2 = d.x() * d.x() + d.y() * d.y();
    const double h = std::sqrt(h2);
    Vec6 s;
    s[0] = r;
    s[1] = wrap_two_pi(std::atan2(d.y(), d.x()));
    s[2] = std::atan2(d.z(), h);
    s[3] = d.dot(dd) / r;
    s[4] = h2 > 0.0 ? (d.x() * dd.y() - d.y() * dd.x()) / h2 : 0.0;
    s[5] = h > 0.0 ? (dd.z() * h2 - d.z() * (d.x() * dd.x() + d.y() * dd.y())) / (h * r * r) : 0.0;
    return s;
}

void spherical_to_cartesian(const Vec6& s, Vec3& d, Vec3& dd) {
    const double r = s[0], lon = s[1], lat = s[2];
    const double cl = std::cos(lat), sl = std::sin(lat), co = std::cos(lon), so = std::sin(lon);
    const Vec3 u(cl * co, cl * so, sl);
    const Vec3 du_dlon(-cl * so, cl * co, 0.0);
    const Vec3 du_dlat(-sl * co, -sl * so, cl);
    d = r * u;
    dd = s[3] * u + r * (s[4] * du_dlon + s[5] * du_dlat);
}

}  // namespace

void PhysicalConstants::validate() const {
    if (!(mu > 0.0) || !(earth_radius > 0.0) || !(j2 > 0.0) || !(earth_rotation_rate > 0.0))
        input_error("physical constants mu, earth_radius, j2 and earth_rotation_rate must be positive");
}

Vec6 OrbitalState::as_vector() const {
    Vec6 v;
    v << position, velocity;
    return v;
}

OrbitalState OrbitalState::from_vector(const Vec6& pv, double epoch) {
    return OrbitalState{pv.head<3>(), pv.tail<3>(), epoch};
}

void KeplerElements::validate() const {
    if (!(eccentricity >= 0.0) || !(eccentricity < 1.0)) input_error("eccentricity must lie in [0, 1)");
    if (!(mean_motion > 0.0)) input_error("mean motion must be positive");
    for (double a : {raan_deg, inclination_deg, arg_perigee_deg, mean_anomaly_deg})
        if (!std::isfinite(a)) input_error("orbital element angles must be finite");
}

double solve_kepler(double mean_anomaly, double e) {
    if (!(e >= 0.0) || !(e < 1.0)) input_error("Kepler's equation needs 0 <= e < 1");
    const double m = std::remainder(mean_anomaly, 2.0 * kPi);
    double ecc_anom = e < 0.8 ? m : (m < 0 ? -kPi : kPi);
    for (int it = 0; it < 50; ++it) {
        const double delta = (ecc_anom - e * std::sin(ecc_anom) - m) / (1.0 - e * std::cos(ecc_anom));
        ecc_anom -= delta;
        if (std::abs(delta) < 1e-12) return ecc_anom + (mean_anomaly - m);
    }
    throw Error(ErrorKind::Numeric, "Kepler's equation did not converge in 50 iterations");
}

double semi_major_axis_from_mean_motion(double n, const PhysicalConstants& c) {
    return std::cbrt(c.mu / (n * n));
}

OrbitalState kepler_to_cartesian(const KeplerElements& el, const PhysicalConstants& c, double epoch) {
    el.validate();
    const double a = semi_major_axis_from_mean_motion(el.mean_motion, c);
    const double e = el.eccentricity;
    const double ecc_anom = solve_kepler(el.mean_anomaly_deg * kDeg, e);
    const double ce = std::cos(ecc_anom), se = std::sin(ecc_anom);
    const double b = std::sqrt(1.0 - e * e);
    const double r = a * (1.0 - e * ce);
    const Vec3 p_pf(a * (ce - e), a * b * se, 0.0);
    const Vec3 v_pf = std::sqrt(c.mu * a) / r * Vec3(-se, b * ce, 0.0);
    const Mat3 q = rot_z(el.raan_deg * kDeg) * rot_x(el.inclination_deg * kDeg) * rot_z(el.arg_perigee_deg * kDeg);
    return OrbitalState{q * p_pf, q * v_pf, epoch};
}

Vec3 specific_angular_momentum(const OrbitalState& x) { return x.position.cross(x.velocity); }

double specific_orbital_energy(const OrbitalState& x, const PhysicalConstants& c) {
    return -c.mu / x.position.norm() + 0.5 * x.velocity.squaredNorm();
}

double perigee_radius(const OrbitalState& x, const PhysicalConstants& c) {
    const double energy = specific_orbital_energy(x, c);
    if (!(energy < 0.0)) return std::numeric_limits<double>::infinity();
    const double h2 = specific_angular_momentum(x).squaredNorm();
    const double e = std::sqrt(std::max(0.0, 1.0 + 2.0 * energy * h2 / (c.mu * c.mu)));
    return h2 / c.mu / (1.0 + e);
}

Mat3 ric_basis(const OrbitalState& ref) {
    const Vec3 h = specific_angular_momentum(ref);
    const double hn = h.norm();
    const double pn = ref.position.norm();
    if (!(hn > 0.0) || !(pn > 0.0) || hn <= 1e-14 * pn * ref.velocity.norm())
        throw Error(ErrorKind::Frame, "RIC frame undefined for a radial or zero state");
    const Vec3 r = ref.position / pn;
    const Vec3 cr = h / hn;
    Mat3 m;
    m.row(0) = r.transpose();
    m.row(1) = cr.cross(r).transpose();
    m.row(2) = cr.transpose();
    return m;
}

Vec3 eci_to_ric(const OrbitalState& reference, const Vec3& v) { return ric_basis(reference) * v; }

Vec3 ric_to_eci(const OrbitalState& reference, const Vec3& v) { return ric_basis(reference).transpose() * v; }

Vec3 gravity_acceleration(const Vec3& p, const PhysicalConstants& c, const ForceModel& model) {
    const double r2 = p.squaredNorm();
    const double r = std::sqrt(r2);
    const double r3 = r2 * r;
    Vec3 a = -c.mu / r3 * p;
    if (model.max_zonal_degree < 2) return a;
    const double x = p.x(), y = p.y(), z = p.z();
    const double z2 = z * z / r2;
    const double re2 = c.earth_radius * c.earth_radius;
    {
        const double k = -1.5 * c.j2 * c.mu * re2 / (r2 * r3);
        a += k * Vec3(x * (1.0 - 5.0 * z2), y * (1.0 - 5.0 * z2), z * (3.0 - 5.0 * z2));
    }
    if (model.max_zonal_degree >= 3) {
        const double k = -2.5 * c.j3 * c.mu * re2 * c.earth_radius / (r3 * r2 * r2);
        const double common = 3.0 * z - 7.0 * z * z2;
        a += k * Vec3(x * common, y * common, 6.0 * z * z - 7.0 * z * z * z2 - 0.6 * r2);
    }
    if (model.max_zonal_degree >= 4) {
        const double k = 1.875 * c.j4 * c.mu * re2 * re2 / (r3 * r2 * r2);
        const double common = 1.0 - 14.0 * z2 + 21.0 * z2 * z2;
        a += k * Vec3(x * common, y * common, z * (5.0 - 70.0 / 3.0 * z2 + 21.0 * z2 * z2));
    }
    if (model.max_zonal_degree > 4) input_error("zonal terms are supported up to degree 4");
    return a;
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

namespace {

struct Dopri {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    // b - b_hat
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
};

class Dynamics {
public:
    Dynamics(const PhysicalConstants& c, const ForceModel& m, const std::optional<Vec3>& noise, double t0)
        : c_(c), model_(m), noise_(noise), t0_(t0) {}

    Vec6 operator()(double t, const Vec6& y) const {
        const Vec3 p = y.head<3>();
        const Vec3 v = y.tail<3>();
        Vec3 acc = gravity_acceleration(p, c_, model_);
        if (noise_) {
            const OrbitalState osc{p, v, t};
            acc += ric_to_eci(osc, (t - t0_) * *noise_);
        }
        Vec6 dy;
        dy << v, acc;
        return dy;
    }

private:
    const PhysicalConstants& c_;
    const ForceModel& model_;
    const std::optional<Vec3>& noise_;
    double t0_;
};

double error_norm(const Vec6& err, const Vec6& y0, const Vec6& y1, const IntegratorOptions& o) {
    double sum = 0.0;
    for (int i = 0; i < 6; ++i) {
        const double sc = o.abs_tol + o.rel_tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        const double q = err[i] / sc;
        sum += q * q;
    }
    return std::sqrt(sum / 6.0);
}

}  // namespace

OrbitalState propagate(const OrbitalState& x, double t_target, const std::optional<Vec3>& noise,
                       const PhysicalConstants& c, const PropagatorConfig& cfg) {
    if (!(t_target >= x.epoch)) input_error("propagate: target epoch precedes the state epoch");
    if (!x.position.allFinite() || !x.velocity.allFinite()) input_error("propagate: state has non-finite components");
    if (t_target == x.epoch) return x;
    const IntegratorOptions& o = cfg.integrator;
    const Dynamics f(c, cfg.force, noise, x.epoch);

    double t = x.epoch;
    Vec6 y = x.as_vector();
    Vec6 k1 = f(t, y);
    const double span = t_target - t;

    // Starting step (Hairer, Norsett & Wanner, II.4).
    double h;
    {
        const Vec6 zero = Vec6::Zero();
        const double d0 = error_norm(y, y, zero, o) ;
        const double d1 = error_norm(k1, y, zero, o);
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, span);
        const Vec6 y1 = y + h0 * k1;
        const Vec6 k2 = f(t + h0, y1);
        const double d2 = error_norm(k2 - k1, y, zero, o) / h0;
        const double dmax = std::max(d1, d2);
        const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 1.0 / 5.0);
        h = std::min({100.0 * h0, h1, span});
    }

    using D = Dopri;
    long steps = 0;
    bool last_rejected = false;
    while (t < t_target) {
        if (++steps > o.max_steps) throw Error(ErrorKind::Numeric, "propagate: maximum number of steps exceeded");
        bool final_step = false;
        if (t + h >= t_target) {
            h = t_target - t;
            final_step = true;
        }
        if (h < o.min_step && !final_step)
            throw Error(ErrorKind::Numeric, "propagate: step size underflow at epoch " + std::to_string(t));

        const Vec6 k2 = f(t + D::c2 * h, y + h * (D::a21 * k1));
        const Vec6 k3 = f(t + D::c3 * h, y + h * (D::a31 * k1 + D::a32 * k2));
        const Vec6 k4 = f(t + D::c4 * h, y + h * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3));
        const Vec6 k5 = f(t + D::c5 * h, y + h * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4));
        const Vec6 k6 =
            f(t + h, y + h * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 + D::a65 * k5));
        const Vec6 y_new = y + h * (D::b1 * k1 + D::b3 * k3 + D::b4 * k4 + D::b5 * k5 + D::b6 * k6);
        const double t_new = final_step ? t_target : t + h;
        const Vec6 k7 = f(t_new, y_new);
        const Vec6 err = h * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 + D::e6 * k6 + D::e7 * k7);
        const double en = error_norm(err, y, y_new, o);

        if (!std::isfinite(en)) throw Error(ErrorKind::Numeric, "propagate: non-finite integration error");
        if (en <= 1.0) {
            t = t_new;
            y = y_new;
            k1 = k7;
            if (y.head<3>().norm() < c.earth_radius)
                throw Error(ErrorKind::Reentry, "propagate: trajectory fell below the Earth's surface at epoch " +
                                                    std::to_string(t));
            double factor = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
            if (last_rejected) factor = std::min(factor, 1.0);
            last_rejected = false;
            h *= factor;
        } else {
            last_rejected = true;
            h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
        }
    }
    return OrbitalState::from_vector(y, t_target);
}

// ---------------------------------------------------------------------------
// Sites and spherical frames

double wrap_two_pi(double a) {
    double w = std::fmod(a, 2.0 * kPi);
    if (w < 0.0) w += 2.0 * kPi;
    if (w >= 2.0 * kPi) w = 0.0;
    return w;
}

double wrap_pi(double a) {
    double w = std::remainder(a, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

double earth_rotation_angle(double epoch, const PhysicalConstants& c) {
    return c.earth_angle_at_reference + c.earth_rotation_rate * epoch;
}

SiteState site_state(const GeodeticSite& site, double epoch, const PhysicalConstants& c) {
    const double lat = site.latitude_deg * kDeg;
    const double lon = site.longitude_deg * kDeg + earth_rotation_angle(epoch, c);
    const double cl = std::cos(lat), sl = std::sin(lat), co = std::cos(lon), so = std::sin(lon);
    const Vec3 up(cl * co, cl * so, sl);
    const Vec3 east(-so, co, 0.0);
    const Vec3 north(-sl * co, -sl * so, cl);
    SiteState s;
    s.position = (c.earth_radius + site.altitude_m) * up;
    s.velocity = Vec3(0.0, 0.0, c.earth_rotation_rate).cross(s.position);
    s.local.row(0) = north.transpose();
    s.local.row(1) = east.transpose();
    s.local.row(2) = up.transpose();
    return s;
}

Vec6 to_spherical(const SphericalFrame& frame, const OrbitalState& x, const PhysicalConstants& c) {
    if (!frame.is_topocentric()) return cartesian_to_spherical(x.position, x.velocity);
    const SiteState s = site_state(frame.site(), x.epoch, c);
    const Vec3 omega(0.0, 0.0, c.earth_rotation_rate);
    const Vec3 d = s.local * (x.position - s.position);
    const Vec3 dd = s.local * (x.velocity - omega.cross(x.position));
    return cartesian_to_spherical(d, dd);
}

OrbitalState from_spherical(const SphericalFrame& frame, const Vec6& sph, double epoch, const PhysicalConstants& c) {
    Vec3 d, dd;
    spherical_to_cartesian(sph, d, dd);
    if (!frame.is_topocentric()) return OrbitalState{d, dd, epoch};
    const SiteState s = site_state(frame.site(), epoch, c);
    const Vec3 omega(0.0, 0.0, c.earth_rotation_rate);
    const Vec3 p = s.position + s.local.transpose() * d;
    const Vec3 v = s.local.transpose() * dd + omega.cross(p);
    return OrbitalState{p, v, epoch};
}

Vec4 eci_to_topocentric(const GeodeticSite& site, const OrbitalState& x, const PhysicalConstants& c) {
    return to_spherical(SphericalFrame::topocentric(site), x, c).head<4>();
}

// ---------------------------------------------------------------------------
// Ephemeris CSV

void write_ephemeris_csv(std::ostream& out, std::span<const OrbitalState> states) {
    const auto prec = out.precision(17);
    out << "epoch,px,py,pz,vx,vy,vz\n";
    for (const auto& s : states)
        out << s.epoch << ',' << s.position.x() << ',' << s.position.y() << ',' << s.position.z() << ','
            << s.velocity.x() << ',' << s.velocity.y() << ',' << s.velocity.z() << '\n';
    out.precision(prec);
}

std::vector<OrbitalState> read_ephemeris_csv(std::istream& in) {
    std::vector<OrbitalState> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("epoch", 0) == 0) continue;
        std::stringstream ss(line);
        std::string cell;
        double v[7];
        int n = 0;
        while (n < 7 && std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                v[n] = std::stod(cell, &used);
            } catch (const std::exception&) {
                input_error("ephemeris line " + std::to_string(line_no) + ": cannot parse '" + cell + "'");
            }
            ++n;
        }
        if (n != 7) input_error("ephemeris line " + std::to_string(line_no) + ": expected 7 columns");
        out.push_back(OrbitalState{Vec3(v[1], v[2], v[3]), Vec3(v[4], v[5], v[6]), v[0]});
    }
    return out;
}

}  // namespace opmtrack::orbit
