#include "oracles.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <stdexcept>

namespace oracle {

namespace {

double angle_between(const Vec3& a, const Vec3& b) {
    return std::atan2(a.cross(b).norm(), a.dot(b));
}

double positive_mod(double a, double m) {
    double r = std::fmod(a, m);
    return r < 0 ? r + m : r;
}

}  // namespace

Elements cartesian_to_kepler(const Vec3& p, const Vec3& v, double mu) {
    const Vec3 h = p.cross(v);
    const Vec3 k(0, 0, 1);
    const Vec3 node = k.cross(h);
    const Vec3 ecc = v.cross(h) / mu - p.normalized();
    Elements el{};
    el.e = ecc.norm();
    el.a = 1.0 / (2.0 / p.norm() - v.squaredNorm() / mu);
    el.i = angle_between(k, h);
    el.raan = positive_mod(std::atan2(node.y(), node.x()), 2 * kPi);

    // Argument of perigee and true anomaly measured in the orbital plane.
    const Vec3 n_hat = node.normalized();
    const Vec3 w_hat = h.normalized().cross(n_hat);
    el.argp = positive_mod(std::atan2(ecc.dot(w_hat), ecc.dot(n_hat)), 2 * kPi);
    const Vec3 e_hat = ecc.normalized();
    const Vec3 q_hat = h.normalized().cross(e_hat);
    const double nu = std::atan2(p.dot(q_hat), p.dot(e_hat));
    const double ea = 2.0 * std::atan(std::sqrt((1 - el.e) / (1 + el.e)) * std::tan(nu / 2));
    el.mean_anomaly = positive_mod(ea - el.e * std::sin(ea), 2 * kPi);
    return el;
}

double energy(const Vec3& p, const Vec3& v, double mu) { return 0.5 * v.dot(v) - mu / std::sqrt(p.dot(p)); }

double perigee_radius(const Vec3& p, const Vec3& v, double mu) {
    const double a = -mu / (2.0 * energy(p, v, mu));
    const double h2 = p.cross(v).squaredNorm();
    const double e = std::sqrt(std::max(0.0, 1.0 - h2 / (mu * a)));
    return a * (1.0 - e);
}

std::string with_checksum(const std::string& body) {
    if (body.size() != 68) throw std::invalid_argument("TLE body must have 68 characters");
    int sum = 0;
    for (char ch : body) {
        if (ch >= '0' && ch <= '9') sum += ch - '0';
        else if (ch == '-') sum += 1;
    }
    return body + static_cast<char>('0' + sum % 10);
}

std::pair<std::string, std::string> encode_tle(const TleFields& f) {
    char l1[80], l2[80];
    std::snprintf(l1, sizeof l1, "1 %05dU 16040A   %02d%012.8f  .00000000  00000-0  00000-0 0  999", f.catalog,
                  f.two_digit_year, f.day_of_year);
    const long ecc_digits = std::lround(f.eccentricity * 1e7);
    std::snprintf(l2, sizeof l2, "2 %05d %8.4f %8.4f %07ld %8.4f %8.4f %11.8f%5d", f.catalog, f.inclination_deg,
                  f.raan_deg, ecc_digits, f.arg_perigee_deg, f.mean_anomaly_deg, f.mean_motion_rev_per_day, 1234);
    return {with_checksum(l1), with_checksum(l2)};
}

std::vector<double> importance_weights(const std::vector<double>& h, const std::vector<double>& w) {
    long double denom = 0;
    for (std::size_t i = 0; i < h.size(); ++i) denom += static_cast<long double>(h[i]) * w[i];
    std::vector<double> out(h.size());
    for (std::size_t i = 0; i < h.size(); ++i)
        out[i] = static_cast<double>(static_cast<long double>(h[i]) * w[i] / denom);
    return out;
}

Moments spherical_moments(const std::vector<Vec6>& s, const std::vector<double>& w) {
    long double total = 0;
    for (double x : w) total += x;
    long double lin[6] = {};
    std::complex<long double> circ[6];
    for (std::size_t n = 0; n < s.size(); ++n) {
        const long double wn = w[n] / total;
        for (int k = 0; k < 6; ++k) {
            if (k == 1 || k == 2) circ[k] += wn * std::polar(1.0L, static_cast<long double>(s[n][k]));
            else lin[k] += wn * s[n][k];
        }
    }
    Moments m;
    for (int k = 0; k < 6; ++k) m.mean[k] = static_cast<double>(lin[k]);
    m.mean[1] = static_cast<double>(positive_mod(static_cast<double>(std::arg(circ[1])), 2 * kPi));
    m.mean[2] = static_cast<double>(std::arg(circ[2]));

    long double cov[6][6] = {};
    for (std::size_t n = 0; n < s.size(); ++n) {
        const long double wn = w[n] / total;
        long double r[6];
        for (int k = 0; k < 6; ++k) {
            r[k] = static_cast<long double>(s[n][k]) - m.mean[k];
            if (k == 1 || k == 2) r[k] = std::remainder(r[k], 2.0L * kPi);
        }
        for (int a = 0; a < 6; ++a)
            for (int b = 0; b < 6; ++b) cov[a][b] += wn * r[a] * r[b];
    }
    for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 6; ++b) m.cov(a, b) = static_cast<double>(cov[a][b]);
    return m;
}

Gaussian1 kalman_1d(double m, double p, double y, double r) {
    const double k = p / (p + r);
    return {m + k * (y - m), (1 - k) * p};
}

double j2_raan_rate(double a, double e, double i, double mu, double radius, double j2) {
    const double n = std::sqrt(mu / (a * a * a));
    const double p = a * (1 - e * e);
    return -1.5 * n * j2 * (radius / p) * (radius / p) * std::cos(i);
}

}  // namespace oracle
