#pragma once

#include "opmtrack/filter.hpp"
#include "opmtrack/orbit.hpp"
#include "opmtrack/radar.hpp"
#include "opmtrack/tle.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opmtrack::scenario {

using orbit::OrbitalState;

enum class Mode { Radar, Fused, Both };

[[nodiscard]] const char* to_string(Mode m);
[[nodiscard]] Mode parse_mode(const std::string& text);

enum class TleSourceKind { None, Synthesize, File };

struct TleSource {
    TleSourceKind kind = TleSourceKind::Synthesize;
    std::string path;             // File: NORAD two-line records
    std::vector<double> offsets;  // Synthesize: seconds after the scenario start
    tle::TleModelParams params;   // model used by the filter and by the synthesizer
};

struct ScenarioConfig {
    double start_epoch = 0.0;  // seconds since J2000
    double duration = 86400.0;
    double step = 120.0;

    orbit::KeplerElements truth_elements;
    std::optional<OrbitalState> truth_state;  // overrides the elements when set
    orbit::ForceModel truth_force;            // may differ from the filter's model

    orbit::PhysicalConstants constants;
    radar::RadarStation station;
    TleSource tle;
    smc::FilterConfig filter;

    int mc_runs = 10;
    Mode mode = Mode::Both;
    std::string output_dir = "out";
    bool particle_snapshots = false;

    /// Throws Config on invalid values.
    void validate() const;

    /// Initial truth state at start_epoch.
    [[nodiscard]] OrbitalState initial_truth() const;
};

/// Reads the INI-style configuration documented in the README.
[[nodiscard]] ScenarioConfig parse_config(std::istream& in);
[[nodiscard]] ScenarioConfig load_config(const std::string& path);

// ---------------------------------------------------------------------------
// Timeline

struct TimelineEntry {
    double epoch = 0.0;  // absolute, seconds since J2000
    bool grid = false;
    bool tle = false;
    bool radar = false;
};

/// Even grid from the start epoch plus the given TLE epochs and radar epochs,
/// sorted and merged (entries closer than 1e-6 s share one epoch and its tags).
/// Throws Config for TLE epochs outside the scenario window.
[[nodiscard]] std::vector<TimelineEntry> build_timeline(const ScenarioConfig& cfg, std::span<const double> tle_epochs,
                                                        std::span<const double> radar_epochs = {});

/// Timeline from the configuration alone: synthesized TLE epochs, no radar tags.
[[nodiscard]] std::vector<TimelineEntry> build_timeline(const ScenarioConfig& cfg);

/// Truth propagated through every timeline epoch.
[[nodiscard]] std::vector<OrbitalState> simulate_truth(const ScenarioConfig& cfg,
                                                       std::span<const TimelineEntry> timeline);

// ---------------------------------------------------------------------------
// TLE pseudo-observations

/// Perturbs each truth state so that its plane alignment deficit and energy
/// offset fall uniformly on the respective plateaus of `params`. Per epoch the
/// draws are: deficit, rotation-axis angle, energy offset (repeated until the
/// TLE possibility of the result against the truth is 1).
[[nodiscard]] std::vector<OrbitalState> synthesize_tles(std::span<const OrbitalState> truth,
                                                        const tle::TleModelParams& params,
                                                        const orbit::PhysicalConstants& c, Rng& rng);

// ---------------------------------------------------------------------------
// Metrics and runs

struct MetricsRow {
    double epoch = 0.0;
    double map_distance = 0.0;  // m
    smc::RicErrorStats ric;
    double effective_ratio = 1.0;
    smc::EventTag event = smc::EventTag::Coast;
};

/// Header of the metrics CSV.
[[nodiscard]] std::string metrics_header();
void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);

/// Column-wise arithmetic mean of equally long runs; the tag is the most
/// frequent one at each epoch.
[[nodiscard]] std::vector<MetricsRow> average_runs(std::span<const std::vector<MetricsRow>> runs);

struct ModeResult {
    Mode mode = Mode::Radar;
    std::vector<std::vector<MetricsRow>> runs;
    std::vector<MetricsRow> mean;
};

struct ScenarioResult {
    std::vector<TimelineEntry> timeline;
    std::vector<OrbitalState> truth;  // one per timeline entry
    std::vector<OrbitalState> tles;   // pseudo-observations in epoch order
    std::vector<std::vector<radar::RadarObservation>> observations;  // per replicate
    std::vector<ModeResult> modes;
};

/// Called after each filter step once the filter is initialized.
using SnapshotSink = std::function<void(Mode, int run, const TimelineEntry&, const smc::ParticleCloud&,
                                        const OrbitalState& map)>;

/// Simulates the scenario and runs every replicate of every requested mode.
/// Replicate r uses seed base + r for both its observation noise and its filter.
/// Filter failures are rethrown with the run, mode, epoch and event attached.
[[nodiscard]] ScenarioResult run_scenario(const ScenarioConfig& cfg, const SnapshotSink& sink = {});

/// Writes truth, TLE, observation and metrics CSVs into cfg.output_dir.
void write_outputs(const ScenarioConfig& cfg, const ScenarioResult& result);

/// run_scenario + write_outputs, with particle snapshots streamed to disk when
/// enabled.
ScenarioResult run(const ScenarioConfig& cfg);

}  // namespace opmtrack::scenario
