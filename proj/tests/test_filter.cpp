#include "oracles.hpp"

#include "opmtrack/diagnostics.hpp"
#include "opmtrack/errors.hpp"
#include "opmtrack/filter.hpp"
#include "opmtrack/orbit.hpp"
#include "opmtrack/radar.hpp"

#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

using namespace opmtrack;
using namespace opmtrack::smc;
using orbit::kPi;

namespace {

orbit::OrbitalState leo_state(double epoch = 0.0) {
    orbit::KeplerElements el;
    el.raan_deg = 311.18;
    el.inclination_deg = 97.45;
    el.arg_perigee_deg = 144.12;
    el.mean_motion = 11.07e-4;
    el.eccentricity = 11.95e-4;
    el.mean_anomaly_deg = 216.09;
    return orbit::kepler_to_cartesian(el, orbit::PhysicalConstants{}, epoch);
}

ParticleCloud scatter(const OrbitalState& centre, int n, double pos_sigma, double vel_sigma, oracle::Gen& gen,
                      bool random_weights = false) {
    ParticleCloud cloud;
    cloud.epoch = centre.epoch;
    for (int i = 0; i < n; ++i) {
        OrbitalState x = centre;
        for (int k = 0; k < 3; ++k) {
            x.position[k] += gen.normal(0.0, pos_sigma);
            x.velocity[k] += gen.normal(0.0, vel_sigma);
        }
        cloud.particles.push_back({random_weights ? gen.uniform(0.1, 1.0) : 1.0, x});
    }
    const double total = cloud.total_weight();
    for (auto& p : cloud.particles) p.weight /= total;
    return cloud;
}

radar::RadarStation station() {
    radar::RadarStation st;
    st.site = {64.8378, -147.7164, 136.0};
    return st;
}

// A state 1000 km from the station at 45 deg elevation due North, moving East
// at circular speed. Away from the zenith so that azimuth rates stay finite.
OrbitalState overhead(double t, const orbit::PhysicalConstants& c) {
    const auto s = orbit::site_state(station().site, t, c);
    const orbit::Vec3 los = (s.local.row(0) + s.local.row(2)).transpose().normalized();
    const orbit::Vec3 p = s.position + 1e6 * los;
    return {p, std::sqrt(c.mu / p.norm()) * s.local.row(1).transpose(), t};
}

struct CaptureWarnings {
    std::vector<std::string> messages;
    CaptureWarnings() {
        set_warning_handler([this](std::string_view m) { messages.emplace_back(m); });
    }
    ~CaptureWarnings() { set_warning_handler({}); }
};

}  // namespace

TEST_CASE("configuration validation") {
    FilterConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.particle_count = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = FilterConfig{};
    cfg.resample_threshold = 1.5;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = FilterConfig{};
    cfg.azimuth_rate_bounds = {0.01, -0.01};
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("effective ratio") {
    CHECK(effective_ratio(std::vector<double>{0.5, 0.5}) == 1.0);
    CHECK(effective_ratio(std::vector<double>{1.0, 0.0, 0.0, 0.0}) == 0.25);
    CHECK(effective_ratio(std::vector<double>{0.75, 0.25}) == doctest::Approx(0.8));
}

TEST_CASE("systematic indices") {
    const std::vector<double> w{0.1, 0.4, 0.0, 0.5};
    CHECK(systematic_indices(w, 0.0) == std::vector<std::size_t>{0, 1, 3, 3});
    CHECK(systematic_indices(w, 0.5) == std::vector<std::size_t>{1, 1, 3, 3});
    CHECK(systematic_indices(w, 0.999) == std::vector<std::size_t>{1, 1, 3, 3});
    // Zero-weight particles are never selected.
    for (double off : {0.0, 0.2, 0.41, 0.6, 0.99})
        for (auto i : systematic_indices(w, off)) CHECK(i != 2);
    // Each particle is selected floor(N w) or ceil(N w) times.
    oracle::Gen gen(2);
    std::vector<double> ww(50);
    double total = 0.0;
    for (auto& x : ww) total += (x = gen.uniform(0.0, 1.0));
    for (auto& x : ww) x /= total;
    std::vector<int> counts(50, 0);
    for (auto i : systematic_indices(ww, gen.uniform(0.0, 1.0))) ++counts[i];
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(counts[i] >= static_cast<int>(std::floor(50 * ww[i] - 1e-9)));
        CHECK(counts[i] <= static_cast<int>(std::ceil(50 * ww[i] + 1e-9)));
    }
}

TEST_CASE("reweighting") {
    oracle::Gen gen(1);
    const auto cloud = scatter(leo_state(), 20, 100.0, 0.1, gen, true);
    std::vector<double> h(20);
    for (auto& x : h) x = gen.uniform(0.0, 1.0);
    const auto out = reweight(cloud, h);
    const auto expected = oracle::importance_weights(h, cloud.weights());
    for (std::size_t i = 0; i < 20; ++i) CHECK(out.cloud.particles[i].weight == doctest::Approx(expected[i]).epsilon(1e-14));
    CHECK_NOTHROW(out.cloud.validate());
    CHECK_THROWS_AS((void)reweight(cloud, std::vector<double>(20, 0.0)), Error);
    h[3] = -1.0;
    CHECK_THROWS_AS((void)reweight(cloud, h), Error);
}

TEST_CASE("resampling equalizes weights and keeps the cloud epoch") {
    oracle::Gen gen(5);
    const auto cloud = scatter(leo_state(30.0), 100, 100.0, 0.1, gen, true);
    Rng rng(3);
    const auto out = resample(cloud, rng);
    CHECK(out.size() == 100);
    CHECK(out.epoch == 30.0);
    CHECK(effective_ratio(out) == 1.0);
    CHECK_NOTHROW(out.validate());
}

TEST_CASE("prediction is deterministic for a seed and leaves the input untouched at its own epoch") {
    const orbit::PhysicalConstants c;
    oracle::Gen gen(6);
    const auto cloud = scatter(leo_state(), 30, 200.0, 0.2, gen);
    FilterConfig cfg;
    Rng a(9), b(9);
    const auto pa = predict(cloud, 300.0, cfg, c, a);
    const auto pb = predict(cloud, 300.0, cfg, c, b);
    CHECK(pa.epoch == 300.0);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa.particles[i].state.position == pb.particles[i].state.position);
    Rng d(9);
    const auto same = predict(cloud, 0.0, cfg, c, d);
    CHECK(same.particles[4].state.position == cloud.particles[4].state.position);

    // Without process noise every particle follows the deterministic dynamics.
    cfg.process_noise_sigma = Vec3::Zero();
    const auto quiet = predict(cloud, 300.0, cfg, c, d);
    const auto ref = orbit::propagate(cloud.particles[7].state, 300.0, c, cfg.propagator);
    CHECK((quiet.particles[7].state.position - ref.position).norm() < 1e-6);
}

TEST_CASE("re-entering particles are dropped with a warning") {
    const orbit::PhysicalConstants c;
    oracle::Gen gen(8);
    auto cloud = scatter(leo_state(), 10, 100.0, 0.1, gen);
    cloud.particles[2].state.velocity *= 0.5;  // falls into the Earth within an orbit
    FilterConfig cfg;
    CaptureWarnings warnings;
    Rng rng(1);
    const auto out = predict(cloud, 3000.0, cfg, c, rng);
    CHECK(out.size() == 9);
    CHECK(out.total_weight() == doctest::Approx(1.0));
    CHECK(warnings.messages.size() == 1);
}

TEST_CASE("TLE update matches importance weighting and honours the policy") {
    const orbit::PhysicalConstants c;
    oracle::Gen gen(10);
    const auto truth = leo_state();
    const auto cloud = scatter(truth, 200, 300.0, 0.3, gen, true);
    // A TLE whose energy sits on the nominal offset of the model.
    const tle::TleModelParams params;
    OrbitalState y = truth;
    const double v2 = truth.velocity.squaredNorm();
    y.velocity *= std::sqrt(1.0 + 2.0 * params.energy_nominal / v2);

    FilterConfig cfg;
    cfg.resample_threshold = 1e-9;
    Rng rng(4);
    const auto out = update_tle(cloud, y, params, cfg, c, rng);
    CHECK(out.applied);
    CHECK_FALSE(out.resampled);
    std::vector<double> h;
    for (const auto& p : cloud.particles) h.push_back(tle::h_tle(y, p.state, params, c));
    const auto expected = oracle::importance_weights(h, cloud.weights());
    for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(out.cloud.particles[i].weight == doctest::Approx(expected[i]).epsilon(1e-12));
    CHECK(out.effective_ratio == doctest::Approx(effective_ratio(out.cloud)));

    // An energy offset far off the plateau is incompatible with every particle.
    OrbitalState far = truth;
    far.velocity *= 1.01;
    CaptureWarnings warnings;
    const auto skipped = update_tle(cloud, far, params, cfg, c, rng);
    CHECK_FALSE(skipped.applied);
    CHECK(skipped.cloud.particles[0].weight == cloud.particles[0].weight);
    CHECK(warnings.messages.size() == 1);
    cfg.tle_incompatibility = IncompatibilityPolicy::Throw;
    CHECK_THROWS_AS((void)update_tle(cloud, far, params, cfg, c, rng), Error);
}

TEST_CASE("spherical Gaussian fit uses circular statistics") {
    const orbit::PhysicalConstants c;
    oracle::Gen gen(12);
    const auto cloud = scatter(overhead(0.0, c), 400, 500.0, 0.5, gen, true);
    const auto frame = orbit::SphericalFrame::topocentric(station().site);
    const auto g = to_spherical_gaussian(cloud, frame, c);
    std::vector<oracle::Vec6> s;
    for (const auto& p : cloud.particles) s.push_back(orbit::to_spherical(frame, p.state, c));
    const auto m = oracle::spherical_moments(s, cloud.weights());
    for (int k = 0; k < 6; ++k) CHECK(g.mean[k] == doctest::Approx(m.mean[k]).epsilon(1e-10));
    CHECK((g.spread - m.cov).norm() <= 1e-9 * m.cov.norm());
    CHECK((g.spread - g.spread.transpose()).norm() == 0.0);
}

TEST_CASE("Kalman update on the observed block") {
    SphericalGaussian prior;
    prior.mean << 1e6, 0.1, 0.5, 10.0, 0.001, 0.002;
    prior.spread = Mat6::Identity();
    prior.spread.diagonal() << 400.0, 1e-4, 1e-4, 25.0, 1e-6, 1e-6;
    prior.spread(0, 3) = prior.spread(3, 0) = 50.0;
    const Vec4 sigmas(28.0, 0.0017, 0.0017, 11.0);
    const Vec4 y(1e6 + 20.0, 2 * kPi - 0.01, 0.51, 12.0);
    const auto post = kalman_update(prior, y, sigmas);
    // Azimuth is independent of everything else: scalar update with the wrapped innovation.
    const auto az = oracle::kalman_1d(0.1, 1e-4, 0.1 + orbit::wrap_pi(y[1] - 0.1), sigmas[1] * sigmas[1]);
    CHECK(post.mean[1] == doctest::Approx(orbit::wrap_two_pi(az.mean)).epsilon(1e-12));
    CHECK(post.spread(1, 1) == doctest::Approx(az.var).epsilon(1e-12));
    const auto el = oracle::kalman_1d(0.5, 1e-4, 0.51, sigmas[2] * sigmas[2]);
    CHECK(post.mean[2] == doctest::Approx(el.mean).epsilon(1e-12));
    // Unobserved rates stay put when uncorrelated.
    CHECK(post.mean[4] == prior.mean[4]);
    CHECK(post.spread(5, 5) == prior.spread(5, 5));
    CHECK(post.spread.determinant() < prior.spread.determinant());

    Vec4 bad = y;
    bad[0] = -1.0;
    CHECK_THROWS_AS((void)kalman_update(prior, bad, sigmas), Error);
}

TEST_CASE("radar update produces N equally weighted particles near the observation") {
    const orbit::PhysicalConstants c;
    oracle::Gen gen(14);
    const auto truth = overhead(0.0, c);
    const auto cloud = scatter(truth, 300, 2000.0, 2.0, gen);
    FilterConfig cfg;
    cfg.particle_count = 400;
    const auto st = station();
    radar::RadarObservation y{radar::predict_observation(st, truth, c), 0.0, "fairbanks"};
    Rng rng(2);
    const auto out = update_radar(cloud, y, st, cfg, c, rng);
    CHECK(out.size() == 400);
    CHECK(effective_ratio(out) == 1.0);
    const auto before = ric_error_stats(cloud, truth);
    const auto after = ric_error_stats(out, truth);
    CHECK(after.position_std.norm() < before.position_std.norm());
    const Vec4 p = radar::predict_observation(st, map_estimate(out, c), c);
    CHECK(std::abs(p[0] - y.y[0]) < 60.0);
}

TEST_CASE("admissible-region initialization") {
    const orbit::PhysicalConstants c;
    const auto st = station();
    const auto truth = overhead(0.0, c);
    const auto frame = orbit::SphericalFrame::topocentric(st.site);
    const orbit::Vec6 s = orbit::to_spherical(frame, truth, c);
    FilterConfig cfg;
    cfg.particle_count = 200;
    cfg.azimuth_rate_bounds = {s[4] - 0.003, s[4] + 0.003};
    cfg.elevation_rate_bounds = {s[5] - 0.003, s[5] + 0.003};
    radar::RadarObservation y{s.head<4>(), 0.0, "fairbanks"};
    Rng rng(7);
    const auto cloud = init_admissible_region(y, st, cfg, c, rng);
    CHECK(cloud.size() == 200);
    for (const auto& p : cloud.particles) {
        CHECK(admissible(p.state, cfg, c));
        const orbit::Vec6 ps = orbit::to_spherical(frame, p.state, c);
        CHECK(ps[0] == doctest::Approx(s[0]));
        CHECK(ps[4] >= cfg.azimuth_rate_bounds[0] - 1e-12);
        CHECK(ps[4] <= cfg.azimuth_rate_bounds[1] + 1e-12);
    }

    // Rates so large that nothing is bound.
    cfg.azimuth_rate_bounds = {0.5, 0.6};
    cfg.elevation_rate_bounds = {0.5, 0.6};
    CHECK_THROWS_AS((void)init_admissible_region(y, st, cfg, c, rng), Error);
}

TEST_CASE("MAP estimate and RIC statistics") {
    const orbit::PhysicalConstants c;
    const auto truth = leo_state();
    ParticleCloud single;
    single.particles.push_back({1.0, truth});
    const auto map = map_estimate(single, c);
    CHECK((map.position - truth.position).norm() < 1e-6);

    ParticleCloud pair;
    OrbitalState ahead = truth, behind = truth;
    const orbit::Mat3 b = orbit::ric_basis(truth);
    ahead.position += 100.0 * b.row(1).transpose();
    behind.position -= 100.0 * b.row(1).transpose();
    pair.particles = {{0.5, ahead}, {0.5, behind}};
    const auto stats = ric_error_stats(pair, truth);
    CHECK(stats.position_mean.norm() < 1e-9);
    CHECK(stats.position_std[1] == doctest::Approx(100.0));
    CHECK(stats.position_std[0] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("tracking filter coasts until the first radar return") {
    const orbit::PhysicalConstants c;
    FilterConfig cfg;
    cfg.particle_count = 100;
    cfg.azimuth_rate_bounds = {-0.02, 0.02};
    cfg.elevation_rate_bounds = {-0.02, 0.02};
    const auto st = station();
    TrackingFilter filter(cfg, c, st, tle::TleModelParams{});
    const auto r0 = filter.step(0.0, nullptr, nullptr);
    CHECK_FALSE(r0.initialized);
    CHECK(r0.event == EventTag::Coast);
    CHECK_FALSE(filter.initialized());
    CHECK_THROWS_AS((void)filter.cloud(), Error);

    const auto truth = overhead(60.0, c);
    radar::RadarObservation y{radar::predict_observation(st, truth, c), 60.0, "fairbanks"};
    const auto r1 = filter.step(60.0, &y, nullptr);
    CHECK(r1.initialized);
    CHECK(r1.event == EventTag::Radar);
    CHECK(filter.cloud().size() == 100);
    const auto r2 = filter.step(180.0, nullptr, nullptr);
    CHECK(filter.cloud().epoch == 180.0);
    CHECK((r2.event == EventTag::Coast || r2.event == EventTag::Resample));
    CHECK(std::string(to_string(EventTag::Tle)) == "tle");
}

TEST_CASE("reweighting examples") {
    oracle::Gen gen(40);
    const auto cloud = scatter(leo_state(), 25, 100.0, 0.1, gen, true);
    const auto same = reweight(cloud, std::vector<double>(25, 1.0));
    for (std::size_t i = 0; i < 25; ++i)
        CHECK(same.cloud.particles[i].weight == doctest::Approx(cloud.particles[i].weight).epsilon(1e-15));

    std::vector<double> h(25, 0.0);
    h[7] = 1.0;
    const auto one = reweight(cloud, h);
    CHECK(one.cloud.particles[7].weight == 1.0);
    CHECK(one.cloud.particles[3].weight == 0.0);

    for (auto& x : h) x = gen.uniform(0.0, 1.0);
    std::vector<double> scaled = h;
    for (auto& x : scaled) x *= 0.013;
    const auto a = reweight(cloud, h), b = reweight(cloud, scaled);
    CHECK(b.normalizer == doctest::Approx(0.013 * a.normalizer).epsilon(1e-14));
    for (std::size_t i = 0; i < 25; ++i)
        CHECK(b.cloud.particles[i].weight == doctest::Approx(a.cloud.particles[i].weight).epsilon(1e-14));
}

TEST_CASE("spherical Gaussian fit examples") {
    const orbit::PhysicalConstants c;
    const auto frame = orbit::SphericalFrame::topocentric(station().site);
    const auto x = overhead(0.0, c);
    ParticleCloud same;
    same.particles.assign(10, {0.1, x});
    const auto g = to_spherical_gaussian(same, frame, c);
    const orbit::Vec6 s = orbit::to_spherical(frame, x, c);
    for (int k = 0; k < 6; ++k) CHECK(g.mean[k] == doctest::Approx(s[k]).epsilon(1e-12));
    CHECK(g.spread.cwiseAbs().maxCoeff() < 1e-12 * s[0] * s[0]);

    orbit::Vec6 d;
    d << 500.0, 0.01, -0.02, 3.0, 1e-4, -2e-4;
    ParticleCloud pair;
    pair.epoch = 0.0;
    pair.particles = {{0.5, orbit::from_spherical(frame, s + d, 0.0, c)},
                      {0.5, orbit::from_spherical(frame, s - d, 0.0, c)}};
    const auto m = to_spherical_gaussian(pair, frame, c);
    for (int k = 0; k < 6; ++k) CHECK(std::abs(m.mean[k] - s[k]) < 1e-6 * std::abs(d[k]));
    for (int k = 0; k < 6; ++k) CHECK(m.spread(k, k) == doctest::Approx(d[k] * d[k]).epsilon(1e-6));
}

TEST_CASE("Kalman update limits") {
    SphericalGaussian prior;
    prior.mean << 1e6, 1.0, 0.5, 10.0, 0.001, 0.002;
    prior.spread = Mat6::Zero();
    prior.spread.diagonal() << 400.0, 1e-4, 1e-4, 25.0, 1e-6, 1e-6;
    const Vec4 y(1e6 + 40.0, 1.02, 0.48, 20.0);

    const auto vague = kalman_update(prior, y, 1e6 * Vec4(28.0, 0.0017, 0.0017, 11.0));
    for (int k = 0; k < 6; ++k)
        CHECK(std::abs(vague.mean[k] - prior.mean[k]) <= 1e-3 * std::sqrt(prior.spread(k, k)));

    const auto consistent = kalman_update(prior, prior.mean.head<4>(), Vec4(28.0, 0.0017, 0.0017, 11.0));
    for (int k = 0; k < 6; ++k) CHECK(consistent.mean[k] == doctest::Approx(prior.mean[k]).epsilon(1e-15));
    for (int k = 0; k < 4; ++k) CHECK(consistent.spread(k, k) < prior.spread(k, k));
}

TEST_CASE("radar update with vague noise keeps the prior fit") {
    const orbit::PhysicalConstants c;
    oracle::Gen gen(41);
    const auto truth = overhead(0.0, c);
    const auto cloud = scatter(truth, 500, 200.0, 0.2, gen);
    auto st = station();
    st.sigmas *= 1e6;
    FilterConfig cfg;
    cfg.particle_count = 2000;
    radar::RadarObservation y{radar::predict_observation(st, truth, c), 0.0, "fairbanks"};
    y.y[0] += 5e3;
    Rng rng(8);
    const auto out = update_radar(cloud, y, st, cfg, c, rng);
    const auto frame = orbit::SphericalFrame::topocentric(st.site);
    const auto prior = to_spherical_gaussian(reweight_radar(cloud, y, st, c).cloud, frame, c);
    const auto post = to_spherical_gaussian(out, frame, c);
    const double n = static_cast<double>(out.size());
    for (int k = 0; k < 6; ++k)
        CHECK(std::abs(post.mean[k] - prior.mean[k]) <= 3.0 * std::sqrt(prior.spread(k, k) / n) + 1e-9);
}

TEST_CASE("resampling copy counts") {
    const std::size_t n = 40;
    ParticleCloud uniform_cloud;
    for (std::size_t i = 0; i < n; ++i)
        uniform_cloud.particles.push_back({1.0 / n, {{7e6 + static_cast<double>(i), 0, 0}, {0, 7.5e3, 0}, 0.0}});
    auto counts_of = [&](const ParticleCloud& out) {
        std::vector<int> counts(n, 0);
        for (const auto& p : out.particles) ++counts[static_cast<std::size_t>(p.state.position.x() - 7e6)];
        return counts;
    };
    Rng rng(12);
    for (int rep = 0; rep < 20; ++rep)
        for (int k : counts_of(resample(uniform_cloud, rng))) CHECK((k >= 0 && k <= 2));

    ParticleCloud single = uniform_cloud;
    for (auto& p : single.particles) p.weight = 0.0;
    single.particles[5].weight = 1.0;
    CHECK(counts_of(resample(single, rng))[5] == static_cast<int>(n));

    oracle::Gen gen(42);
    ParticleCloud skewed = uniform_cloud;
    double total = 0.0;
    for (auto& p : skewed.particles) total += (p.weight = gen.uniform(0.2, 1.0));
    for (auto& p : skewed.particles) p.weight /= total;
    std::vector<double> mean(n, 0.0);
    const int reps = 10000;
    for (int rep = 0; rep < reps; ++rep) {
        const auto counts = counts_of(resample(skewed, rng));
        for (std::size_t i = 0; i < n; ++i) mean[i] += counts[i] / static_cast<double>(reps);
    }
    for (std::size_t i = 0; i < n; ++i)
        CHECK(mean[i] == doctest::Approx(static_cast<double>(n) * skewed.particles[i].weight).epsilon(0.02));
}

TEST_CASE("MAP estimate examples") {
    const orbit::PhysicalConstants c;
    oracle::Gen gen(43);
    const auto cloud = scatter(leo_state(), 100, 5e4, 10.0, gen, true);
    double rmin = 1e300, rmax = 0.0;
    for (const auto& p : cloud.particles) {
        rmin = std::min(rmin, p.state.position.norm());
        rmax = std::max(rmax, p.state.position.norm());
    }
    const double r = map_estimate(cloud, c).position.norm();
    CHECK(r >= rmin);
    CHECK(r <= rmax);

    const OrbitalState north{{7e6, 1e5, 3e5}, {0, 7.5e3, 100.0}, 0.0};
    OrbitalState south = north;
    south.position.z() = -south.position.z();
    south.velocity.z() = -south.velocity.z();
    ParticleCloud mirror;
    mirror.particles = {{0.5, north}, {0.5, south}};
    const auto m = map_estimate(mirror, c);
    CHECK(std::abs(m.position.z()) < 1e-6);
    CHECK(std::abs(m.velocity.z()) < 1e-9);
}

TEST_CASE("RIC statistics of a shifted cloud") {
    const auto truth = leo_state();
    const orbit::Mat3 b = orbit::ric_basis(truth);
    OrbitalState up = truth;
    up.position += 100.0 * b.row(0).transpose();
    ParticleCloud cloud;
    cloud.particles = {{0.3, up}, {0.7, up}};
    const auto s = ric_error_stats(cloud, truth);
    CHECK(s.position_mean[0] == doctest::Approx(100.0).epsilon(1e-10));  // 100 m added to 7e6 m coordinates
    CHECK(std::abs(s.position_mean[1]) < 1e-9);
    CHECK(s.position_std.norm() < 1e-9);
    CHECK(s.velocity_mean.norm() == 0.0);
}

TEST_CASE("admissibility bounds") {
    const orbit::PhysicalConstants c;
    const FilterConfig cfg;
    const auto x = leo_state();
    CHECK(admissible(x, cfg, c));
    OrbitalState escaping = x;
    escaping.velocity = escaping.velocity.normalized() * 1.01 * std::sqrt(2.0 * c.mu / x.position.norm());
    CHECK_FALSE(admissible(escaping, cfg, c));
    OrbitalState plunging = x;
    plunging.velocity *= 0.8;
    CHECK_FALSE(admissible(plunging, cfg, c));
}

TEST_CASE("prediction without noise follows the dynamics exactly") {
    const orbit::PhysicalConstants c;
    FilterConfig cfg;
    cfg.process_noise_sigma = Vec3::Zero();
    ParticleCloud single;
    single.particles.push_back({1.0, leo_state()});
    Rng rng(5);
    const auto out = predict(single, 600.0, cfg, c, rng);
    const auto ref = orbit::propagate(leo_state(), 600.0, c, cfg.propagator);
    CHECK(out.particles[0].weight == 1.0);
    CHECK(out.particles[0].state.position == ref.position);
    CHECK(out.particles[0].state.velocity == ref.velocity);
}

TEST_CASE("worker threads do not change the result") {
    const orbit::PhysicalConstants c;
    oracle::Gen gen(44);
    const auto cloud = scatter(leo_state(), 64, 100.0, 0.1, gen, true);
    FilterConfig one, four;
    four.threads = 4;
    Rng a(17), b(17), d(17);
    const auto p1 = predict(cloud, 900.0, one, c, a);
    const auto p1again = predict(cloud, 900.0, one, c, d);
    const auto p4 = predict(cloud, 900.0, four, c, b);
    REQUIRE(p1.size() == p4.size());
    for (std::size_t i = 0; i < p1.size(); ++i) {
        CHECK(p1.particles[i].state.position == p1again.particles[i].state.position);
        CHECK((p1.particles[i].state.position - p4.particles[i].state.position).norm() <=
              1e-12 * p1.particles[i].state.position.norm());
        CHECK(p1.particles[i].weight == p4.particles[i].weight);
    }
}
