#include "oracles.hpp"

#include "opmtrack/errors.hpp"
#include "opmtrack/orbit.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace opmtrack;
using namespace opmtrack::orbit;

namespace {

KeplerElements leo() {
    KeplerElements el;
    el.raan_deg = 311.18;
    el.inclination_deg = 97.45;
    el.arg_perigee_deg = 144.12;
    el.mean_motion = 11.07e-4;
    el.eccentricity = 11.95e-4;
    el.mean_anomaly_deg = 216.09;
    return el;
}

// Zonal potential U = -mu/r [1 - sum J_n (R/r)^n P_n(z/r)], acceleration = -grad U.
double potential(const Vec3& p, const PhysicalConstants& c, int degree) {
    const double r = p.norm(), s = p.z() / r, q = c.earth_radius / r;
    const double p2 = 0.5 * (3 * s * s - 1);
    const double p3 = 0.5 * (5 * s * s * s - 3 * s);
    const double p4 = (35 * s * s * s * s - 30 * s * s + 3) / 8.0;
    double sum = 0.0;
    if (degree >= 2) sum += c.j2 * q * q * p2;
    if (degree >= 3) sum += c.j3 * q * q * q * p3;
    if (degree >= 4) sum += c.j4 * q * q * q * q * p4;
    return -c.mu / r * (1.0 - sum);
}

}  // namespace

TEST_CASE("Kepler equation") {
    for (double e : {0.0, 0.001, 0.3, 0.9})
        for (double m : {0.0, 0.5, 2.0, 3.1, 5.5}) {
            const double big_e = solve_kepler(m, e);
            CHECK(big_e - e * std::sin(big_e) == doctest::Approx(m).epsilon(1e-13));
        }
}

TEST_CASE("elements round-trip through the Cartesian state") {
    const PhysicalConstants c;
    const auto el = leo();
    const auto x = kepler_to_cartesian(el, c, 10.0);
    CHECK(x.epoch == 10.0);
    const auto back = oracle::cartesian_to_kepler(x.position, x.velocity, c.mu);
    CHECK(back.a == doctest::Approx(semi_major_axis_from_mean_motion(el.mean_motion, c)).epsilon(1e-12));
    CHECK(back.e == doctest::Approx(el.eccentricity).epsilon(1e-9));
    CHECK(back.i / kDeg == doctest::Approx(el.inclination_deg).epsilon(1e-12));
    CHECK(back.raan / kDeg == doctest::Approx(el.raan_deg).epsilon(1e-12));
    CHECK(back.mean_anomaly / kDeg == doctest::Approx(el.mean_anomaly_deg).epsilon(1e-7));
    CHECK(specific_orbital_energy(x, c) == doctest::Approx(oracle::energy(x.position, x.velocity, c.mu)).epsilon(1e-14));
    CHECK(perigee_radius(x, c) == doctest::Approx(oracle::perigee_radius(x.position, x.velocity, c.mu)).epsilon(1e-12));
}

TEST_CASE("zonal acceleration is the gradient of the zonal potential") {
    const PhysicalConstants c;
    oracle::Gen gen(4);
    for (int degree : {0, 2, 3, 4}) {
        ForceModel m{degree};
        for (int trial = 0; trial < 10; ++trial) {
            Vec3 p(gen.normal(), gen.normal(), gen.normal());
            p = p.normalized() * gen.uniform(6.6e6, 4.2e7);
            const Vec3 a = gravity_acceleration(p, c, m);
            for (int k = 0; k < 3; ++k) {
                const double h = 1.0;
                Vec3 up = p, dn = p;
                up[k] += h;
                dn[k] -= h;
                const double grad = (potential(up, c, degree) - potential(dn, c, degree)) / (2 * h);
                CHECK(a[k] == doctest::Approx(-grad).epsilon(1e-6).scale(a.norm()));
            }
        }
    }
}

TEST_CASE("two-body propagation returns after one period") {
    const PhysicalConstants c;
    const auto x0 = kepler_to_cartesian(leo(), c, 0.0);
    PropagatorConfig cfg;
    cfg.force.max_zonal_degree = 0;
    const double period = 2 * kPi / leo().mean_motion;
    const auto x1 = propagate(x0, period, c, cfg);
    CHECK(x1.epoch == period);
    CHECK((x1.position - x0.position).norm() < 1e-2);
    CHECK((x1.velocity - x0.velocity).norm() < 1e-5);
    CHECK_THROWS_AS((void)propagate(x1, 0.0, c, cfg), Error);
    CHECK(propagate(x0, 0.0, c, cfg).position == x0.position);
}

TEST_CASE("process noise acts along the RIC axes of the initial state") {
    const PhysicalConstants c;
    const auto x0 = kepler_to_cartesian(leo(), c, 0.0);
    PropagatorConfig cfg;
    const auto base = propagate(x0, 60.0, c, cfg);
    const auto pushed = propagate(x0, 60.0, Vec3(0.0, 1e-3, 0.0), c, cfg);
    const Vec3 dv = eci_to_ric(x0, pushed.velocity - base.velocity);
    // a(t) = t * omega grows linearly, so after 60 s dv is about 0.5 * 1e-3 * 60^2.
    CHECK(dv[1] == doctest::Approx(0.5e-3 * 3600).epsilon(0.05));
    CHECK(std::abs(dv[0]) < 0.2 * dv[1]);
    CHECK(std::abs(dv[2]) < 1e-3 * dv[1]);
}

TEST_CASE("re-entry is reported") {
    const PhysicalConstants c;
    OrbitalState x{{c.earth_radius + 1e5, 0, 0}, {0, 100.0, 0}, 0.0};
    try {
        (void)propagate(x, 2000.0, c, PropagatorConfig{});
        FAIL("expected a re-entry error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Reentry);
    }
}

TEST_CASE("RIC basis is orthonormal and right-handed") {
    const PhysicalConstants c;
    const auto x = kepler_to_cartesian(leo(), c, 0.0);
    const Mat3 b = ric_basis(x);
    CHECK((b * b.transpose() - Mat3::Identity()).norm() < 1e-14);
    CHECK(b.determinant() == doctest::Approx(1.0));
    const Vec3 v(1.0, -2.0, 3.0);
    CHECK((eci_to_ric(x, ric_to_eci(x, v)) - v).norm() < 1e-12);
    CHECK(eci_to_ric(x, x.position)[0] == doctest::Approx(x.position.norm()));
    OrbitalState radial{{7e6, 0, 0}, {1.0, 0, 0}, 0.0};
    CHECK_THROWS_AS((void)ric_basis(radial), Error);
}

TEST_CASE("spherical coordinates round-trip in both frames") {
    const PhysicalConstants c;
    const auto x = kepler_to_cartesian(leo(), c, 1234.5);
    const GeodeticSite site{64.8378, -147.7164, 136.0};
    for (const auto& frame : {SphericalFrame::eci_centered(), SphericalFrame::topocentric(site)}) {
        const Vec6 s = to_spherical(frame, x, c);
        CHECK(s[1] >= 0.0);
        CHECK(s[1] < 2 * kPi);
        CHECK(std::abs(s[2]) <= kPi / 2);
        const auto back = from_spherical(frame, s, x.epoch, c);
        CHECK((back.position - x.position).norm() < 1e-6);
        CHECK((back.velocity - x.velocity).norm() < 1e-9);
    }
}

TEST_CASE("topocentric rates are finite differences of the angles") {
    const PhysicalConstants c;
    const auto xm = kepler_to_cartesian(leo(), c, 0.0);
    const GeodeticSite site{10.0, 20.0, 0.0};
    const auto frame = SphericalFrame::topocentric(site);
    const double h = 0.01;
    const auto x = propagate(xm, h, c, PropagatorConfig{});
    const auto xp = propagate(xm, 2 * h, c, PropagatorConfig{});
    const Vec6 s = to_spherical(frame, x, c);
    const Vec6 sp = to_spherical(frame, xp, c);
    const Vec6 sm = to_spherical(frame, xm, c);
    CHECK(s[3] == doctest::Approx((sp[0] - sm[0]) / (2 * h)).epsilon(1e-6));
    CHECK(s[4] == doctest::Approx(wrap_pi(sp[1] - sm[1]) / (2 * h)).epsilon(1e-6));
    CHECK(s[5] == doctest::Approx((sp[2] - sm[2]) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("angle wrapping") {
    CHECK(wrap_two_pi(-0.5) == doctest::Approx(2 * kPi - 0.5));
    CHECK(wrap_two_pi(2 * kPi) == doctest::Approx(0.0));
    CHECK(wrap_pi(3 * kPi / 2) == doctest::Approx(-kPi / 2));
}

TEST_CASE("ephemeris CSV round-trip") {
    const PhysicalConstants c;
    std::vector<OrbitalState> states{kepler_to_cartesian(leo(), c, 0.0), kepler_to_cartesian(leo(), c, 60.0)};
    std::stringstream io;
    write_ephemeris_csv(io, states);
    const auto back = read_ephemeris_csv(io);
    REQUIRE(back.size() == 2);
    CHECK(back[1].epoch == 60.0);
    CHECK(back[1].position == states[1].position);
    CHECK(back[0].velocity == states[0].velocity);
}

TEST_CASE("invalid elements are rejected") {
    auto el = leo();
    el.eccentricity = 1.2;
    CHECK_THROWS_AS(el.validate(), Error);
    el = leo();
    el.mean_motion = -1.0;
    CHECK_THROWS_AS(el.validate(), Error);
}

TEST_CASE("circular equatorial elements") {
    const PhysicalConstants c;
    KeplerElements el;
    el.mean_motion = std::sqrt(c.mu / (7e6 * 7e6 * 7e6));
    const auto x = kepler_to_cartesian(el, c, 0.0);
    CHECK(x.position.x() == doctest::Approx(7e6).epsilon(1e-14));
    CHECK(std::abs(x.position.y()) < 1e-6);
    CHECK(x.velocity.y() == doctest::Approx(std::sqrt(c.mu / 7e6)).epsilon(1e-14));
    el.mean_anomaly_deg = 90.0;
    const auto q = kepler_to_cartesian(el, c, 0.0);
    CHECK(std::abs(q.position.x()) < 1e-6);
    CHECK(q.position.norm() == doctest::Approx(7e6).epsilon(1e-14));
    CHECK(specific_orbital_energy(x, c) == doctest::Approx(-c.mu / (2 * 7e6)).epsilon(1e-12));
}

TEST_CASE("tabulated TLE elements give the energy of their semi-major axis") {
    const PhysicalConstants c;
    const auto x = kepler_to_cartesian(leo(), c, 0.0);
    const double a = std::cbrt(c.mu / (leo().mean_motion * leo().mean_motion));
    CHECK(specific_orbital_energy(x, c) == doctest::Approx(-c.mu / (2 * a)).epsilon(1e-6));
}

TEST_CASE("angular momentum") {
    const OrbitalState x{{7e6, 0, 0}, {0, 7.5e3, 0}, 0.0};
    CHECK(specific_angular_momentum(x) == Vec3(0, 0, 5.25e10));
    const OrbitalState radial{{7e6, 0, 0}, {10, 0, 0}, 0.0};
    CHECK(specific_angular_momentum(radial).norm() == 0.0);
}

TEST_CASE("RIC examples") {
    const PhysicalConstants c;
    const auto x = kepler_to_cartesian(leo(), c, 0.0);
    const Vec3 r = eci_to_ric(x, x.position.normalized());
    CHECK(r[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(r[1]) < 1e-14);
    CHECK(std::abs(r[2]) < 1e-14);
    oracle::Gen gen(30);
    for (int k = 0; k < 20; ++k) {
        const Vec3 v(gen.normal(), gen.normal(), gen.normal());
        CHECK(eci_to_ric(x, v).norm() == doctest::Approx(v.norm()).epsilon(1e-12));
        const Mat3 b = ric_basis(x);
        CHECK(eci_to_ric(x, v)[1] == doctest::Approx(b.row(1).dot(v)).epsilon(1e-12));
    }
}

TEST_CASE("J2 conserves the total zonal energy") {
    const PhysicalConstants c;
    const auto x0 = kepler_to_cartesian(leo(), c, 0.0);
    PropagatorConfig cfg;
    const auto x1 = propagate(x0, 86400.0, c, cfg);
    auto total = [&](const OrbitalState& x) { return 0.5 * x.velocity.squaredNorm() + potential(x.position, c, 2); };
    CHECK(total(x1) == doctest::Approx(total(x0)).epsilon(1e-6));
}

TEST_CASE("elements round-trip over a range of orbits") {
    const PhysicalConstants c;
    oracle::Gen gen(31);
    for (int k = 0; k < 30; ++k) {
        KeplerElements el;
        el.raan_deg = gen.uniform(0, 360);
        el.inclination_deg = gen.uniform(5, 175);
        el.arg_perigee_deg = gen.uniform(0, 360);
        el.eccentricity = gen.uniform(0.001, 0.1);
        el.mean_anomaly_deg = gen.uniform(0, 360);
        el.mean_motion = gen.uniform(7e-4, 1.2e-3);
        const auto x = kepler_to_cartesian(el, c, 0.0);
        const auto back = oracle::cartesian_to_kepler(x.position, x.velocity, c.mu);
        auto angle_close = [](double got_rad, double want_deg) {
            return std::abs(std::remainder(got_rad / kDeg - want_deg, 360.0)) < 1e-9 * 360.0;
        };
        CHECK(angle_close(back.raan, el.raan_deg));
        CHECK(angle_close(back.i, el.inclination_deg));
        CHECK(angle_close(back.argp, el.arg_perigee_deg));
        CHECK(angle_close(back.mean_anomaly, el.mean_anomaly_deg));
        CHECK(back.e == doctest::Approx(el.eccentricity).epsilon(1e-9));
        CHECK(std::sqrt(c.mu / (back.a * back.a * back.a)) == doctest::Approx(el.mean_motion).epsilon(1e-9));
    }
}

TEST_CASE("topocentric examples") {
    const PhysicalConstants c;
    const GeodeticSite site{30.0, 40.0, 100.0};
    const double t = 500.0;
    const auto s = site_state(site, t, c);

    const OrbitalState above{s.position + 4e5 * s.local.row(2).transpose(), s.velocity, t};
    const Vec4 y = eci_to_topocentric(site, above, c);
    CHECK(y[0] == doctest::Approx(4e5).epsilon(1e-12));
    CHECK(y[2] == doctest::Approx(kPi / 2).epsilon(1e-9));

    // Co-rotating with the site: no range rate.
    const OrbitalState fixed{s.position + 3e5 * s.local.row(0).transpose(), Vec3::Zero(), t};
    OrbitalState corotating = fixed;
    corotating.velocity = Vec3(0, 0, c.earth_rotation_rate).cross(fixed.position);
    CHECK(std::abs(eci_to_topocentric(site, corotating, c)[3]) < 1e-9);

    const OrbitalState at_site{s.position, s.velocity, t};
    CHECK_THROWS_AS((void)eci_to_topocentric(site, at_site, c), Error);
}

TEST_CASE("range rate against a coasting finite difference") {
    const PhysicalConstants c;
    oracle::Gen gen(32);
    const GeodeticSite site{64.8378, -147.7164, 136.0};
    PropagatorConfig two_body;
    two_body.force.max_zonal_degree = 0;
    for (int k = 0; k < 5; ++k) {
        auto el = leo();
        el.mean_anomaly_deg = gen.uniform(0, 360);
        const auto x0 = kepler_to_cartesian(el, c, 0.0);
        const auto x = propagate(x0, 0.1, c, two_body);
        const auto x2 = propagate(x0, 0.2, c, two_body);
        const double fd = (eci_to_topocentric(site, x2, c)[0] - eci_to_topocentric(site, x0, c)[0]) / 0.2;
        CHECK(std::abs(eci_to_topocentric(site, x, c)[3] - fd) < 0.1);
    }
}
