#include "opmtrack/filter.hpp"

#include "opmtrack/diagnostics.hpp"
#include "opmtrack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

namespace opmtrack::smc {

namespace {

using Mat64 = Eigen::Matrix<double, 6, 4>;
using Mat4 = Eigen::Matrix4d;

constexpr double kEpochTolerance = 1e-6;

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

unsigned worker_count(unsigned requested, std::size_t work) {
    unsigned n = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
    return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(work, 1)));
}

/// Runs fn(i) for i in [0, n) over contiguous chunks. The first exception
/// raised by any worker is rethrown once all workers have joined.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    const unsigned workers = worker_count(threads, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        pool.emplace_back([&, w, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void require_epoch(double cloud_epoch, double obs_epoch, const char* what) {
    if (std::abs(cloud_epoch - obs_epoch) > kEpochTolerance) {
        std::ostringstream os;
        os.precision(17);
        os << what << ": cloud epoch " << cloud_epoch << " differs from observation epoch " << obs_epoch;
        fail(ErrorKind::ContractViolation, os.str());
    }
}

bool is_angle(int k) { return k == 1 || k == 2; }

/// Brings a sampled spherical vector back into the coordinate domain:
/// non-negative radius, elevation in [-pi/2, pi/2], azimuth in [0, 2 pi).
Vec6 canonical_spherical(Vec6 s) {
    if (s[0] < 0.0) s[0] = -s[0];
    s[2] = orbit::wrap_pi(s[2]);
    if (s[2] > orbit::kPi / 2) {
        s[2] = orbit::kPi - s[2];
        s[1] += orbit::kPi;
    } else if (s[2] < -orbit::kPi / 2) {
        s[2] = -orbit::kPi - s[2];
        s[1] += orbit::kPi;
    }
    s[1] = orbit::wrap_two_pi(s[1]);
    return s;
}

/// Square root A of a PSD matrix (A A^T = Q) computed on the correlation
/// matrix so that components with very different units keep their coupling.
Mat6 psd_sqrt(const Mat6& q) {
    Vec6 d;
    for (int k = 0; k < 6; ++k) d[k] = q(k, k) > 0.0 ? std::sqrt(q(k, k)) : 0.0;
    Mat6 corr = Mat6::Zero();
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            if (d[i] > 0.0 && d[j] > 0.0) corr(i, j) = q(i, j) / (d[i] * d[j]);
    Eigen::SelfAdjointEigenSolver<Mat6> eig(corr);
    if (eig.info() != Eigen::Success) fail(ErrorKind::Numeric, "eigen-decomposition of the posterior spread failed");
    const Vec6 root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return d.asDiagonal() * eig.eigenvectors() * root.asDiagonal();
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<double> ParticleCloud::weights() const {
    std::vector<double> w;
    w.reserve(particles.size());
    for (const auto& p : particles) w.push_back(p.weight);
    return w;
}

double ParticleCloud::total_weight() const {
    double s = 0.0;
    for (const auto& p : particles) s += p.weight;
    return s;
}

void ParticleCloud::validate() const {
    if (particles.empty()) fail(ErrorKind::Input, "particle cloud is empty");
    for (const auto& p : particles) {
        if (!(p.weight >= 0.0) || !std::isfinite(p.weight)) fail(ErrorKind::Input, "particle weight must be finite and >= 0");
        if (std::abs(p.state.epoch - epoch) > kEpochTolerance)
            fail(ErrorKind::Input, "particle epoch differs from the cloud epoch");
    }
    if (std::abs(total_weight() - 1.0) > 1e-9) fail(ErrorKind::Input, "particle weights do not sum to 1");
}

void FilterConfig::validate() const {
    if (particle_count < 2) fail(ErrorKind::Config, "particle count must be at least 2");
    if (!(resample_threshold > 0.0 && resample_threshold <= 1.0))
        fail(ErrorKind::Config, "resample threshold must lie in (0, 1]");
    if (!process_noise_sigma.allFinite() || (process_noise_sigma.array() < 0.0).any())
        fail(ErrorKind::Config, "process noise sigmas must be finite and >= 0");
    for (const auto* b : {&azimuth_rate_bounds, &elevation_rate_bounds})
        if (!std::isfinite((*b)[0]) || !std::isfinite((*b)[1]) || (*b)[0] > (*b)[1])
            fail(ErrorKind::Config, "angular rate bounds must be finite with lo <= hi");
    if (!std::isfinite(min_perigee_altitude)) fail(ErrorKind::Config, "minimum perigee altitude must be finite");
}

// ---------------------------------------------------------------------------
// Initialization

bool admissible(const OrbitalState& x, const FilterConfig& cfg, const PhysicalConstants& c) {
    if (!(orbit::specific_orbital_energy(x, c) < 0.0)) return false;
    return orbit::perigee_radius(x, c) - c.earth_radius >= cfg.min_perigee_altitude;
}

ParticleCloud init_admissible_region(const radar::RadarObservation& y, const radar::RadarStation& st,
                                     const FilterConfig& cfg, const PhysicalConstants& c, Rng& rng) {
    cfg.validate();
    if (!y.y.allFinite() || !(y.y[0] > 0.0)) fail(ErrorKind::Input, "radar observation must have finite values and positive range");

    constexpr long kProbeDraws = 10'000'000;
    constexpr double kMinAcceptance = 1e-4;
    const auto frame = orbit::SphericalFrame::topocentric(st.site);

    ParticleCloud cloud;
    cloud.epoch = y.epoch;
    cloud.particles.reserve(cfg.particle_count);
    const double w = 1.0 / static_cast<double>(cfg.particle_count);

    long draws = 0;
    while (cloud.particles.size() < cfg.particle_count) {
        Vec6 s;
        s.head<4>() = y.y;
        s[4] = uniform(rng, cfg.azimuth_rate_bounds[0], cfg.azimuth_rate_bounds[1]);
        s[5] = uniform(rng, cfg.elevation_rate_bounds[0], cfg.elevation_rate_bounds[1]);
        ++draws;
        const OrbitalState x = orbit::from_spherical(frame, s, y.epoch, c);
        if (admissible(x, cfg, c)) cloud.particles.push_back({w, x});

        if (draws >= kProbeDraws &&
            static_cast<double>(cloud.particles.size()) < kMinAcceptance * static_cast<double>(draws)) {
            std::ostringstream os;
            os << "admissible region: " << cloud.particles.size() << " of " << draws
               << " candidates accepted; check the angular rate bounds";
            fail(ErrorKind::InfeasibleRegion, os.str());
        }
    }
    return cloud;
}

// ---------------------------------------------------------------------------
// Prediction

ParticleCloud predict(const ParticleCloud& cloud, double t_target, const FilterConfig& cfg,
                      const PhysicalConstants& c, Rng& rng) {
    if (t_target < cloud.epoch)
        fail(ErrorKind::Input, "prediction target precedes the cloud epoch");
    if (t_target == cloud.epoch) return cloud;

    const std::size_t n = cloud.size();
    const bool noisy = (cfg.process_noise_sigma.array() > 0.0).any();

    std::vector<std::optional<Vec3>> noise(n);
    if (noisy) {
        for (std::size_t i = 0; i < n; ++i) {
            Vec3 a;
            for (int k = 0; k < 3; ++k) a[k] = cfg.process_noise_sigma[k] * standard_normal(rng);
            noise[i] = a;
        }
    }

    std::vector<OrbitalState> out(n);
    std::vector<char> lost(n, 0);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
        try {
            out[i] = orbit::propagate(cloud.particles[i].state, t_target, noise[i], c, cfg.propagator);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Reentry) throw;
            lost[i] = 1;
        }
    });

    ParticleCloud next;
    next.epoch = t_target;
    next.particles.reserve(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (lost[i]) continue;
        next.particles.push_back({cloud.particles[i].weight, out[i]});
        total += cloud.particles[i].weight;
    }
    if (next.particles.size() < n) {
        if (next.particles.empty() || !(total > 0.0))
            fail(ErrorKind::Reentry, "every particle re-entered during prediction");
        for (auto& p : next.particles) p.weight /= total;
        std::ostringstream os;
        os.precision(15);
        os << "prediction to epoch " << t_target << ": dropped " << (n - next.particles.size())
           << " re-entering particles";
        warn(os.str());
    }
    return next;
}

// ---------------------------------------------------------------------------
// Updates

Reweighted reweight(const ParticleCloud& cloud, std::span<const double> values) {
    if (values.size() != cloud.size()) fail(ErrorKind::Input, "one value per particle is required");
    double normalizer = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] >= 0.0) || !std::isfinite(values[i]))
            fail(ErrorKind::Input, "update values must be finite and >= 0");
        normalizer += values[i] * cloud.particles[i].weight;
    }
    if (!(normalizer > 0.0))
        fail(ErrorKind::Incompatibility, "observation is incompatible with every particle");

    Reweighted r{cloud, normalizer};
    for (std::size_t i = 0; i < values.size(); ++i)
        r.cloud.particles[i].weight = values[i] * cloud.particles[i].weight / normalizer;
    return r;
}

TleUpdate update_tle(const ParticleCloud& cloud, const OrbitalState& y, const tle::TleModelParams& params,
                     const FilterConfig& cfg, const PhysicalConstants& c, Rng& rng) {
    require_epoch(cloud.epoch, y.epoch, "TLE update");
    std::vector<double> h(cloud.size());
    parallel_for(cloud.size(), cfg.threads,
                 [&](std::size_t i) { h[i] = tle::h_tle(y, cloud.particles[i].state, params, c); });

    TleUpdate out;
    try {
        out.cloud = reweight(cloud, h).cloud;
        out.applied = true;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Incompatibility) throw;
        std::ostringstream os;
        os.precision(15);
        os << "TLE update at epoch " << y.epoch;
        if (cfg.tle_incompatibility == IncompatibilityPolicy::Throw)
            fail(ErrorKind::Incompatibility, os.str() + ": no particle is compatible");
        warn(os.str() + " skipped: no particle is compatible");
        out.cloud = cloud;
    }

    out.effective_ratio = effective_ratio(out.cloud);
    if (out.effective_ratio < cfg.resample_threshold) {
        out.cloud = resample(out.cloud, rng);
        out.resampled = true;
    }
    return out;
}

Reweighted reweight_radar(const ParticleCloud& cloud, const radar::RadarObservation& y,
                          const radar::RadarStation& st, const PhysicalConstants& c) {
    require_epoch(cloud.epoch, y.epoch, "radar reweight");
    std::vector<double> h(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) h[i] = radar::h_rad(st, y, cloud.particles[i].state, c);
    return reweight(cloud, h);
}

SphericalGaussian to_spherical_gaussian(const ParticleCloud& cloud, const orbit::SphericalFrame& frame,
                                        const PhysicalConstants& c) {
    const double total = cloud.total_weight();
    if (!(total > 0.0)) fail(ErrorKind::Input, "cloud has zero total weight");

    const std::size_t n = cloud.size();
    std::vector<Vec6> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = orbit::to_spherical(frame, cloud.particles[i].state, c);

    SphericalGaussian g;
    double sin_sum[6] = {};
    double cos_sum[6] = {};
    for (std::size_t i = 0; i < n; ++i) {
        const double w = cloud.particles[i].weight / total;
        for (int k = 0; k < 6; ++k) {
            if (is_angle(k)) {
                sin_sum[k] += w * std::sin(s[i][k]);
                cos_sum[k] += w * std::cos(s[i][k]);
            } else {
                g.mean[k] += w * s[i][k];
            }
        }
    }
    g.mean[1] = orbit::wrap_two_pi(std::atan2(sin_sum[1], cos_sum[1]));
    g.mean[2] = std::atan2(sin_sum[2], cos_sum[2]);

    double lo[6], hi[6];
    std::fill(lo, lo + 6, std::numeric_limits<double>::infinity());
    std::fill(hi, hi + 6, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        const double w = cloud.particles[i].weight / total;
        Vec6 r = s[i] - g.mean;
        for (int k : {1, 2}) {
            r[k] = orbit::wrap_pi(r[k]);
            lo[k] = std::min(lo[k], r[k]);
            hi[k] = std::max(hi[k], r[k]);
        }
        g.spread.noalias() += w * r * r.transpose();
    }
    g.spread = 0.5 * (g.spread + g.spread.transpose()).eval();

    for (int k : {1, 2}) {
        if (n > 0 && hi[k] - lo[k] > orbit::kPi) {
            g.wrap_ambiguous = true;
            warn(std::string("spherical Gaussian: particles span more than pi in angular coordinate ") +
                 (k == 1 ? "1" : "2"));
        }
    }
    return g;
}

SphericalGaussian kalman_update(const SphericalGaussian& prior, const Vec4& y, const Vec4& sigmas) {
    if (!y.allFinite()) fail(ErrorKind::Input, "radar observation must be finite");
    if (!(y[0] > 0.0)) fail(ErrorKind::Input, "observed range must be positive");
    if (std::abs(y[2]) > orbit::kPi / 2) fail(ErrorKind::Input, "observed elevation outside [-pi/2, pi/2]");
    if (!sigmas.allFinite() || (sigmas.array() <= 0.0).any())
        fail(ErrorKind::Input, "observation sigmas must be finite and > 0");

    const Mat64 pht = prior.spread.leftCols<4>();
    const Mat4 innovation_spread = prior.spread.topLeftCorner<4, 4>() + Mat4(sigmas.array().square().matrix().asDiagonal());
    const Eigen::LDLT<Mat4> ldlt(innovation_spread);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any())
        fail(ErrorKind::Numeric, "innovation spread is not invertible");
    const Mat64 gain = ldlt.solve(pht.transpose()).transpose();

    Vec4 nu = y - prior.mean.head<4>();
    nu[1] = orbit::wrap_pi(nu[1]);

    SphericalGaussian post;
    post.mean = prior.mean + gain * nu;
    post.mean[1] = orbit::wrap_two_pi(post.mean[1]);
    Mat6 ikh = Mat6::Identity();
    ikh.leftCols<4>() -= gain;
    post.spread = ikh * prior.spread;
    post.spread = 0.5 * (post.spread + post.spread.transpose()).eval();
    post.wrap_ambiguous = prior.wrap_ambiguous;
    return post;
}

ParticleCloud update_radar(const ParticleCloud& cloud, const radar::RadarObservation& y,
                           const radar::RadarStation& st, const FilterConfig& cfg, const PhysicalConstants& c,
                           Rng& rng) {
    require_epoch(cloud.epoch, y.epoch, "radar update");
    const auto frame = orbit::SphericalFrame::topocentric(st.site);
    const SphericalGaussian prior = to_spherical_gaussian(cloud, frame, c);
    const SphericalGaussian post = kalman_update(prior, y.y, st.sigmas);
    const Mat6 root = psd_sqrt(post.spread);

    // Draws outside the admissible set are replaced: the initial cloud only
    // holds admissible states, so the posterior has no mass outside it.
    constexpr long kProbeDraws = 10'000'000;
    constexpr double kMinAcceptance = 1e-4;
    const std::size_t n = cfg.particle_count;
    const double w = 1.0 / static_cast<double>(n);
    ParticleCloud next;
    next.epoch = cloud.epoch;
    next.particles.reserve(n);
    long draws = 0;
    while (next.particles.size() < n) {
        Vec6 z;
        for (int k = 0; k < 6; ++k) z[k] = standard_normal(rng);
        ++draws;
        const OrbitalState x = orbit::from_spherical(frame, canonical_spherical(post.mean + root * z), cloud.epoch, c);
        if (admissible(x, cfg, c)) next.particles.push_back({w, x});
        if (draws >= kProbeDraws &&
            static_cast<double>(next.particles.size()) < kMinAcceptance * static_cast<double>(draws)) {
            std::ostringstream os;
            os << "radar update at epoch " << std::setprecision(15) << y.epoch << ": " << next.particles.size()
               << " of " << draws << " posterior draws admissible";
            fail(ErrorKind::InfeasibleRegion, os.str());
        }
    }
    return next;
}

// ---------------------------------------------------------------------------
// Resampling and estimates

double effective_ratio(std::span<const double> weights) {
    if (weights.empty()) fail(ErrorKind::Input, "effective ratio of an empty weight set");
    const bool uniform_weights =
        std::all_of(weights.begin(), weights.end(), [&](double w) { return w == weights.front(); });
    if (uniform_weights && weights.front() > 0.0) return 1.0;
    double sq = 0.0;
    for (double w : weights) sq += w * w;
    return 1.0 / (static_cast<double>(weights.size()) * sq);
}

double effective_ratio(const ParticleCloud& cloud) {
    const auto w = cloud.weights();
    return effective_ratio(std::span<const double>(w));
}

std::vector<std::size_t> systematic_indices(std::span<const double> weights, double offset) {
    const std::size_t n = weights.size();
    if (n == 0) return {};
    if (!(offset >= 0.0 && offset < 1.0)) fail(ErrorKind::Input, "systematic offset must lie in [0, 1)");

    std::vector<double> cumulative(n);
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += weights[i];
        cumulative[i] = acc;
        if (weights[i] > 0.0) last_positive = i;
    }
    if (!(acc > 0.0)) fail(ErrorKind::Input, "cannot resample a cloud with zero total weight");

    std::vector<std::size_t> idx(n);
    std::size_t i = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double u = (offset + static_cast<double>(j)) / static_cast<double>(n) * acc;
        while (i < last_positive && cumulative[i] <= u) ++i;
        idx[j] = i;
    }
    return idx;
}

ParticleCloud resample(const ParticleCloud& cloud, Rng& rng) {
    const auto w = cloud.weights();
    const auto idx = systematic_indices(w, uniform(rng, 0.0, 1.0));
    ParticleCloud out;
    out.epoch = cloud.epoch;
    out.particles.reserve(idx.size());
    const double uw = 1.0 / static_cast<double>(idx.size());
    for (std::size_t k : idx) out.particles.push_back({uw, cloud.particles[k].state});
    return out;
}

OrbitalState map_estimate(const ParticleCloud& cloud, const PhysicalConstants& c) {
    const auto frame = orbit::SphericalFrame::eci_centered();
    const SphericalGaussian g = to_spherical_gaussian(cloud, frame, c);
    return orbit::from_spherical(frame, g.mean, cloud.epoch, c);
}

RicErrorStats ric_error_stats(const ParticleCloud& cloud, const OrbitalState& truth) {
    require_epoch(cloud.epoch, truth.epoch, "RIC statistics");
    const double total = cloud.total_weight();
    if (!(total > 0.0)) fail(ErrorKind::Input, "cloud has zero total weight");
    const orbit::Mat3 b = orbit::ric_basis(truth);

    const std::size_t n = cloud.size();
    std::vector<Vec3> dp(n), dv(n);
    RicErrorStats s;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = cloud.particles[i].weight / total;
        dp[i] = b * (cloud.particles[i].state.position - truth.position);
        dv[i] = b * (cloud.particles[i].state.velocity - truth.velocity);
        s.position_mean += w * dp[i];
        s.velocity_mean += w * dv[i];
    }
    Vec3 pvar = Vec3::Zero(), vvar = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const double w = cloud.particles[i].weight / total;
        pvar += w * (dp[i] - s.position_mean).cwiseAbs2();
        vvar += w * (dv[i] - s.velocity_mean).cwiseAbs2();
    }
    s.position_std = pvar.cwiseSqrt();
    s.velocity_std = vvar.cwiseSqrt();
    return s;
}

// ---------------------------------------------------------------------------
// Filter loop

const char* to_string(EventTag tag) {
    switch (tag) {
        case EventTag::Coast: return "coast";
        case EventTag::Tle: return "tle";
        case EventTag::Radar: return "radar";
        case EventTag::Resample: return "resample";
    }
    return "coast";
}

TrackingFilter::TrackingFilter(FilterConfig cfg, PhysicalConstants c, radar::RadarStation station,
                               tle::TleModelParams tle_params)
    : cfg_(std::move(cfg)),
      constants_(c),
      station_(std::move(station)),
      tle_params_(tle_params),
      rng_(cfg_.seed) {
    cfg_.validate();
    constants_.validate();
    station_.validate();
    tle_params_.validate();
}

const ParticleCloud& TrackingFilter::cloud() const {
    if (!cloud_) fail(ErrorKind::ContractViolation, "filter has not been initialized");
    return *cloud_;
}

StepReport TrackingFilter::step(double epoch, const radar::RadarObservation* radar_obs, const OrbitalState* tle_obs) {
    StepReport report;
    auto lose_track = [&](const Error& why) {
        std::ostringstream os;
        os << std::setprecision(15) << "track lost at epoch " << epoch << " (" << why.what() << "); "
           << (radar_obs ? "re-initializing from the radar observation" : "waiting for the next radar observation");
        warn(os.str());
        cloud_.reset();
        report.track_lost = true;
    };

    if (cloud_) {
        if (epoch < cloud_->epoch - kEpochTolerance)
            fail(ErrorKind::ContractViolation, "filter steps must move forward in time");
        try {
            cloud_ = predict(*cloud_, std::max(epoch, cloud_->epoch), cfg_, constants_, rng_);
            if (radar_obs) {
                cloud_ = update_radar(*cloud_, *radar_obs, station_, cfg_, constants_, rng_);
                report.event = EventTag::Radar;
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Reentry && e.kind() != ErrorKind::InfeasibleRegion) throw;
            lose_track(e);
        }
    }
    if (!cloud_) {
        if (!radar_obs) return report;
        cloud_ = init_admissible_region(*radar_obs, station_, cfg_, constants_, rng_);
        report.initialized = true;
        report.event = EventTag::Radar;
    }

    if (tle_obs) {
        TleUpdate u = update_tle(*cloud_, *tle_obs, tle_params_, cfg_, constants_, rng_);
        cloud_ = std::move(u.cloud);
        report.effective_ratio = u.effective_ratio;
        report.resampled = u.resampled;
        report.tle_skipped = !u.applied;
        if (u.applied) report.event = EventTag::Tle;
    } else {
        report.effective_ratio = effective_ratio(*cloud_);
        if (report.effective_ratio < cfg_.resample_threshold) {
            cloud_ = resample(*cloud_, rng_);
            report.resampled = true;
        }
    }
    if (report.resampled) report.event = EventTag::Resample;
    return report;
}

}  // namespace opmtrack::smc
