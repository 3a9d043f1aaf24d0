#pragma once

#include "opmtrack/orbit.hpp"
#include "opmtrack/radar.hpp"
#include "opmtrack/random.hpp"
#include "opmtrack/tle.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace opmtrack::smc {

using orbit::OrbitalState;
using orbit::PhysicalConstants;
using orbit::Vec3;
using orbit::Vec4;
using orbit::Vec6;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct Particle {
    double weight = 0.0;
    OrbitalState state;
};

/// Weighted particle approximation of the filtering density.
struct ParticleCloud {
    std::vector<Particle> particles;
    double epoch = 0.0;

    [[nodiscard]] std::size_t size() const noexcept { return particles.size(); }
    [[nodiscard]] std::vector<double> weights() const;
    [[nodiscard]] double total_weight() const;

    /// Throws Input if weights are negative, do not sum to 1 within 1e-9, or
    /// any particle epoch differs from the cloud epoch.
    void validate() const;
};

/// Gaussian summary in a spherical frame; angles use circular statistics.
struct SphericalGaussian {
    Vec6 mean = Vec6::Zero();
    Mat6 spread = Mat6::Zero();
    bool wrap_ambiguous = false;  // some angular coordinate spans more than pi
};

enum class IncompatibilityPolicy { SkipAndWarn, Throw };

struct FilterConfig {
    std::size_t particle_count = 500;
    double resample_threshold = 0.20;
    Vec3 process_noise_sigma = Vec3::Constant(1e-5);  // m/s^3 per RIC axis
    std::array<double, 2> azimuth_rate_bounds{-0.002, 0.002};    // rad/s
    std::array<double, 2> elevation_rate_bounds{-0.002, 0.002};  // rad/s
    double min_perigee_altitude = 200e3;                         // m
    std::uint64_t seed = 1;
    orbit::PropagatorConfig propagator;
    IncompatibilityPolicy tle_incompatibility = IncompatibilityPolicy::SkipAndWarn;
    unsigned threads = 1;  // 0 = hardware concurrency

    void validate() const;
};

// ---------------------------------------------------------------------------
// Initialization

/// Bounded orbit with perigee altitude at or above the configured minimum.
[[nodiscard]] bool admissible(const OrbitalState& x, const FilterConfig& cfg, const PhysicalConstants& c);

/// Admissible-region cloud from a first radar observation: angular rates are
/// drawn uniformly within the configured bounds (azimuth rate first), the
/// completed topocentric states mapped to ECI and rejected unless admissible.
/// Throws InfeasibleRegion when fewer than 1e-4 of 1e7 candidates pass.
[[nodiscard]] ParticleCloud init_admissible_region(const radar::RadarObservation& y, const radar::RadarStation& st,
                                                   const FilterConfig& cfg, const PhysicalConstants& c, Rng& rng);

// ---------------------------------------------------------------------------
// Prediction

/// Propagates every particle to t_target with its own process-noise draw
/// (three standard normals per particle, drawn in particle order before any
/// propagation). Weights are unchanged; particles that re-enter are dropped.
[[nodiscard]] ParticleCloud predict(const ParticleCloud& cloud, double t_target, const FilterConfig& cfg,
                                    const PhysicalConstants& c, Rng& rng);

// ---------------------------------------------------------------------------
// Updates

struct Reweighted {
    ParticleCloud cloud;
    double normalizer = 0.0;  // sum_j value_j * w_j
};

/// w_i <- value_i w_i / sum_j value_j w_j. Throws Incompatibility when the
/// normalizer vanishes.
[[nodiscard]] Reweighted reweight(const ParticleCloud& cloud, std::span<const double> values);

struct TleUpdate {
    ParticleCloud cloud;
    bool applied = false;
    bool resampled = false;
    double effective_ratio = 1.0;  // after reweighting, before any resampling
};

/// Importance update with the TLE possibility followed by the effective-ratio
/// check and a conditional systematic resample.
[[nodiscard]] TleUpdate update_tle(const ParticleCloud& cloud, const OrbitalState& y, const tle::TleModelParams& params,
                                   const FilterConfig& cfg, const PhysicalConstants& c, Rng& rng);

/// Direct importance update with the radar possibility (no Gaussian step).
[[nodiscard]] Reweighted reweight_radar(const ParticleCloud& cloud, const radar::RadarObservation& y,
                                        const radar::RadarStation& st, const PhysicalConstants& c);

[[nodiscard]] SphericalGaussian to_spherical_gaussian(const ParticleCloud& cloud, const orbit::SphericalFrame& frame,
                                                      const PhysicalConstants& c);

/// Linear Kalman update of a spherical Gaussian with the observation selecting
/// the first four components; the azimuth innovation is wrapped.
[[nodiscard]] SphericalGaussian kalman_update(const SphericalGaussian& prior, const Vec4& y, const Vec4& sigmas);

/// Radar update in the station's spherical frame: Gaussian fit, Kalman update,
/// fresh draw of N admissible particles (six standard normals per candidate,
/// inadmissible candidates redrawn) mapped back to ECI with uniform weights.
/// Throws InfeasibleRegion under the same acceptance floor as initialization.
[[nodiscard]] ParticleCloud update_radar(const ParticleCloud& cloud, const radar::RadarObservation& y,
                                         const radar::RadarStation& st, const FilterConfig& cfg,
                                         const PhysicalConstants& c, Rng& rng);

// ---------------------------------------------------------------------------
// Resampling and estimates

/// 1 / (N sum w^2) for normalized weights.
[[nodiscard]] double effective_ratio(std::span<const double> weights);
[[nodiscard]] double effective_ratio(const ParticleCloud& cloud);

/// Systematic selection: pointers (offset + j) / N for j = 0..N-1 with
/// offset in [0, 1). Returns the selected input index per output slot.
[[nodiscard]] std::vector<std::size_t> systematic_indices(std::span<const double> weights, double offset);

/// Systematic resampling with one uniform draw; output weights 1/N.
[[nodiscard]] ParticleCloud resample(const ParticleCloud& cloud, Rng& rng);

/// Weighted mean in ECI-centered spherical coordinates mapped back to Cartesian.
[[nodiscard]] OrbitalState map_estimate(const ParticleCloud& cloud, const PhysicalConstants& c);

struct RicErrorStats {
    Vec3 position_mean = Vec3::Zero();
    Vec3 position_std = Vec3::Zero();
    Vec3 velocity_mean = Vec3::Zero();
    Vec3 velocity_std = Vec3::Zero();
};

/// Weighted mean and standard deviation of particle offsets from the truth,
/// expressed in the truth's radial / in-track / cross-track axes.
[[nodiscard]] RicErrorStats ric_error_stats(const ParticleCloud& cloud, const OrbitalState& truth);

// ---------------------------------------------------------------------------
// Filter loop

enum class EventTag { Coast, Tle, Radar, Resample };

[[nodiscard]] const char* to_string(EventTag tag);

struct StepReport {
    EventTag event = EventTag::Coast;
    bool initialized = false;
    bool resampled = false;
    bool tle_skipped = false;
    bool track_lost = false;  // cloud discarded this step; see TrackingFilter::step
    double effective_ratio = 1.0;
};

/// Single-object tracking loop: owns the cloud and the random stream.
class TrackingFilter {
public:
    TrackingFilter(FilterConfig cfg, PhysicalConstants c, radar::RadarStation station, tle::TleModelParams tle_params);

    /// Advances to `epoch` and applies whatever data is available there. The
    /// first radar observation initializes the cloud; before that every step
    /// is a no-op coast. A radar update precedes a TLE update at the same epoch.
    ///
    /// The track is dropped (with a warning) when every particle re-enters or
    /// when a radar posterior holds no admissible state. The cloud is then
    /// re-initialized from the admissible region at the same or the next radar
    /// observation.
    StepReport step(double epoch, const radar::RadarObservation* radar_obs, const OrbitalState* tle_obs);

    [[nodiscard]] bool initialized() const noexcept { return cloud_.has_value(); }
    [[nodiscard]] const ParticleCloud& cloud() const;
    [[nodiscard]] const FilterConfig& config() const noexcept { return cfg_; }

private:
    FilterConfig cfg_;
    PhysicalConstants constants_;
    radar::RadarStation station_;
    tle::TleModelParams tle_params_;
    Rng rng_;
    std::optional<ParticleCloud> cloud_;
};

}  // namespace opmtrack::smc
