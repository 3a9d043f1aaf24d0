#include "opmtrack/scenario.hpp"

#include "opmtrack/diagnostics.hpp"
#include "opmtrack/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace opmtrack::scenario {

namespace pt = boost::property_tree;

namespace {

constexpr double kMergeTolerance = 1e-6;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::Config, msg); }

/// Independent stream derived from a seed and a stream label.
Rng derived_rng(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32), stream};
    return Rng(seq);
}

constexpr std::uint32_t kTleStream = 1;
constexpr std::uint32_t kObservationStream = 2;

std::vector<double> parse_number_list(const std::string& text, const std::string& key) {
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            config_error("key " + key + ": '" + tok + "' is not a number");
        }
    }
    return out;
}

bool parse_bool(const std::string& text, const std::string& key) {
    if (text == "true" || text == "yes" || text == "1" || text == "on") return true;
    if (text == "false" || text == "no" || text == "0" || text == "off") return false;
    config_error("key " + key + ": expected a boolean, got '" + text + "'");
}

/// Typed access to the INI tree that remembers which keys were consumed, so
/// that misspelled keys can be reported.
class Reader {
public:
    explicit Reader(const pt::ptree& tree) : tree_(tree) {}

    double number(const std::string& key, double fallback) {
        const auto text = raw(key);
        if (!text) return fallback;
        const auto v = parse_number_list(*text, key);
        if (v.size() != 1) config_error("key " + key + ": expected one number");
        return v.front();
    }
    std::optional<std::string> raw(const std::string& key) {
        used_.insert(key);
        const auto node = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
        if (!node) return std::nullopt;
        return *node;
    }
    std::string text(const std::string& key, const std::string& fallback) { return raw(key).value_or(fallback); }

    void reject_unknown() const {
        for (const auto& [section, body] : tree_) {
            if (body.empty() && !body.data().empty()) config_error("key '" + section + "' outside any section");
            for (const auto& [key, value] : body) {
                (void)value;
                const std::string full = section + "." + key;
                if (!used_.count(full)) config_error("unknown configuration key " + full);
            }
        }
    }

private:
    const pt::ptree& tree_;
    std::set<std::string> used_;
};

std::string fmt_run(int r) {
    std::ostringstream os;
    os << std::setw(3) << std::setfill('0') << r;
    return os.str();
}

const char* event_of(const TimelineEntry& e, Mode mode) {
    if (e.radar && e.tle && mode == Mode::Fused) return "radar+tle";
    if (e.radar) return "radar";
    if (e.tle && mode == Mode::Fused) return "tle";
    return "coast";
}

MetricsRow uninitialized_row(double epoch) {
    MetricsRow row;
    row.epoch = epoch;
    row.map_distance = kNaN;
    row.ric.position_mean = row.ric.position_std = row.ric.velocity_mean = row.ric.velocity_std =
        orbit::Vec3::Constant(kNaN);
    row.effective_ratio = 1.0;
    row.event = smc::EventTag::Coast;
    return row;
}

std::vector<double> tle_epochs_from_config(const ScenarioConfig& cfg, std::vector<tle::TleRecord>* records) {
    std::vector<double> epochs;
    switch (cfg.tle.kind) {
        case TleSourceKind::None: break;
        case TleSourceKind::Synthesize:
            for (double off : cfg.tle.offsets) epochs.push_back(cfg.start_epoch + off);
            break;
        case TleSourceKind::File: {
            auto recs = tle::read_tle_file(cfg.tle.path);
            for (const auto& r : recs) epochs.push_back(r.epoch);
            if (records) *records = std::move(recs);
            break;
        }
    }
    return epochs;
}

}  // namespace

// ---------------------------------------------------------------------------

const char* to_string(Mode m) {
    switch (m) {
        case Mode::Radar: return "radar";
        case Mode::Fused: return "fused";
        case Mode::Both: return "both";
    }
    return "both";
}

Mode parse_mode(const std::string& text) {
    if (text == "radar") return Mode::Radar;
    if (text == "fused") return Mode::Fused;
    if (text == "both") return Mode::Both;
    config_error("mode must be radar, fused or both, got '" + text + "'");
}

void ScenarioConfig::validate() const {
    if (!std::isfinite(start_epoch)) config_error("start epoch must be finite");
    if (!(step > 0.0) || !std::isfinite(step)) config_error("step must be positive");
    if (!(duration >= step) || !std::isfinite(duration)) config_error("duration must be at least one step");
    if (mc_runs < 1) config_error("mc_runs must be at least 1");
    if (truth_force.max_zonal_degree < 0 || truth_force.max_zonal_degree > 4)
        config_error("truth zonal degree must lie in 0..4");
    if (filter.propagator.force.max_zonal_degree < 0 || filter.propagator.force.max_zonal_degree > 4)
        config_error("filter zonal degree must lie in 0..4");
    if (tle.kind == TleSourceKind::File && tle.path.empty()) config_error("TLE file source needs a path");
    try {
        constants.validate();
        station.validate();
        tle.params.validate();
        filter.validate();
        if (!truth_state) truth_elements.validate();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Config) throw;
        config_error(e.what());
    }
}

OrbitalState ScenarioConfig::initial_truth() const {
    if (truth_state) {
        OrbitalState x = *truth_state;
        x.epoch = start_epoch;
        return x;
    }
    return orbit::kepler_to_cartesian(truth_elements, constants, start_epoch);
}

ScenarioConfig parse_config(std::istream& in) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        config_error(std::string("malformed configuration: ") + e.what());
    }
    Reader rd(tree);
    ScenarioConfig cfg;

    cfg.start_epoch = rd.number("scenario.start_epoch", cfg.start_epoch);
    cfg.duration = rd.number("scenario.duration", cfg.duration);
    cfg.step = rd.number("scenario.step", cfg.step);
    cfg.mc_runs = static_cast<int>(rd.number("scenario.mc_runs", cfg.mc_runs));
    cfg.filter.seed = static_cast<std::uint64_t>(rd.number("scenario.seed", static_cast<double>(cfg.filter.seed)));
    cfg.mode = parse_mode(rd.text("scenario.mode", "both"));

    if (auto state = rd.raw("truth.state")) {
        const auto v = parse_number_list(*state, "truth.state");
        if (v.size() != 6) config_error("truth.state needs six numbers: px py pz vx vy vz");
        OrbitalState x;
        x.position = orbit::Vec3(v[0], v[1], v[2]);
        x.velocity = orbit::Vec3(v[3], v[4], v[5]);
        cfg.truth_state = x;
    }
    auto& el = cfg.truth_elements;
    el.raan_deg = rd.number("truth.raan_deg", el.raan_deg);
    el.inclination_deg = rd.number("truth.inclination_deg", el.inclination_deg);
    el.arg_perigee_deg = rd.number("truth.arg_perigee_deg", el.arg_perigee_deg);
    el.mean_motion = rd.number("truth.mean_motion", el.mean_motion);
    el.eccentricity = rd.number("truth.eccentricity", el.eccentricity);
    el.mean_anomaly_deg = rd.number("truth.mean_anomaly_deg", el.mean_anomaly_deg);
    cfg.truth_force.max_zonal_degree =
        static_cast<int>(rd.number("truth.max_zonal_degree", cfg.truth_force.max_zonal_degree));

    auto& st = cfg.station;
    st.id = rd.text("station.id", st.id);
    st.site.latitude_deg = rd.number("station.latitude_deg", st.site.latitude_deg);
    st.site.longitude_deg = rd.number("station.longitude_deg", st.site.longitude_deg);
    st.site.altitude_m = rd.number("station.altitude_m", st.site.altitude_m);
    st.fov_radius = rd.number("station.fov_radius_m", st.fov_radius);
    st.sigmas[0] = rd.number("station.sigma_range_m", st.sigmas[0]);
    st.sigmas[1] = rd.number("station.sigma_azimuth_deg", st.sigmas[1] / orbit::kDeg) * orbit::kDeg;
    st.sigmas[2] = rd.number("station.sigma_elevation_deg", st.sigmas[2] / orbit::kDeg) * orbit::kDeg;
    st.sigmas[3] = rd.number("station.sigma_range_rate_mps", st.sigmas[3]);

    const std::string source = rd.text("tle.source", "synthesize");
    if (source == "none") cfg.tle.kind = TleSourceKind::None;
    else if (source == "synthesize") cfg.tle.kind = TleSourceKind::Synthesize;
    else if (source == "file") cfg.tle.kind = TleSourceKind::File;
    else config_error("tle.source must be none, synthesize or file");
    cfg.tle.path = rd.text("tle.file", "");
    if (auto offsets = rd.raw("tle.offsets")) cfg.tle.offsets = parse_number_list(*offsets, "tle.offsets");
    auto& tp = cfg.tle.params;
    tp.ang_tolerance = rd.number("tle.ang_tolerance", tp.ang_tolerance);
    tp.energy_nominal = rd.number("tle.energy_nominal", tp.energy_nominal);
    tp.energy_tolerance = rd.number("tle.energy_tolerance", tp.energy_tolerance);
    tp.foot_factor = rd.number("tle.foot_factor", tp.foot_factor);

    auto& f = cfg.filter;
    f.particle_count = static_cast<std::size_t>(rd.number("filter.particles", static_cast<double>(f.particle_count)));
    f.resample_threshold = rd.number("filter.resample_threshold", f.resample_threshold);
    f.process_noise_sigma[0] = rd.number("filter.noise_sigma_radial", f.process_noise_sigma[0]);
    f.process_noise_sigma[1] = rd.number("filter.noise_sigma_in_track", f.process_noise_sigma[1]);
    f.process_noise_sigma[2] = rd.number("filter.noise_sigma_cross_track", f.process_noise_sigma[2]);
    f.azimuth_rate_bounds[0] = rd.number("filter.azimuth_rate_min", f.azimuth_rate_bounds[0]);
    f.azimuth_rate_bounds[1] = rd.number("filter.azimuth_rate_max", f.azimuth_rate_bounds[1]);
    f.elevation_rate_bounds[0] = rd.number("filter.elevation_rate_min", f.elevation_rate_bounds[0]);
    f.elevation_rate_bounds[1] = rd.number("filter.elevation_rate_max", f.elevation_rate_bounds[1]);
    f.min_perigee_altitude = rd.number("filter.min_perigee_altitude_m", f.min_perigee_altitude);
    f.propagator.force.max_zonal_degree =
        static_cast<int>(rd.number("filter.max_zonal_degree", f.propagator.force.max_zonal_degree));
    f.propagator.integrator.rel_tol = rd.number("filter.rel_tol", f.propagator.integrator.rel_tol);
    f.propagator.integrator.abs_tol = rd.number("filter.abs_tol", f.propagator.integrator.abs_tol);
    f.threads = static_cast<unsigned>(rd.number("filter.threads", f.threads));
    const std::string policy = rd.text("filter.tle_incompatibility", "skip");
    if (policy == "skip") f.tle_incompatibility = smc::IncompatibilityPolicy::SkipAndWarn;
    else if (policy == "throw") f.tle_incompatibility = smc::IncompatibilityPolicy::Throw;
    else config_error("filter.tle_incompatibility must be skip or throw");

    cfg.output_dir = rd.text("output.directory", cfg.output_dir);
    cfg.particle_snapshots = parse_bool(rd.text("output.particle_snapshots", "false"), "output.particle_snapshots");

    rd.reject_unknown();
    cfg.validate();
    return cfg;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) config_error("cannot open configuration file " + path);
    return parse_config(in);
}

// ---------------------------------------------------------------------------
// Timeline

std::vector<TimelineEntry> build_timeline(const ScenarioConfig& cfg, std::span<const double> tle_epochs,
                                          std::span<const double> radar_epochs) {
    if (!(cfg.step > 0.0) || !(cfg.duration >= cfg.step)) config_error("invalid step or duration");
    const double end = cfg.start_epoch + cfg.duration;

    std::vector<TimelineEntry> raw;
    const auto n_steps = static_cast<long>(std::floor(cfg.duration / cfg.step + 1e-9));
    for (long k = 0; k <= n_steps; ++k)
        raw.push_back({cfg.start_epoch + static_cast<double>(k) * cfg.step, true, false, false});
    for (double t : tle_epochs) {
        if (!(t >= cfg.start_epoch - kMergeTolerance && t <= end + kMergeTolerance)) {
            std::ostringstream os;
            os.precision(15);
            os << "TLE epoch " << t << " lies outside the scenario window [" << cfg.start_epoch << ", " << end << "]";
            config_error(os.str());
        }
        raw.push_back({t, false, true, false});
    }
    for (double t : radar_epochs) raw.push_back({t, false, false, true});

    std::stable_sort(raw.begin(), raw.end(),
                     [](const TimelineEntry& a, const TimelineEntry& b) { return a.epoch < b.epoch; });
    std::vector<TimelineEntry> out;
    for (const auto& e : raw) {
        if (!out.empty() && e.epoch - out.back().epoch <= kMergeTolerance) {
            auto& m = out.back();
            if (e.grid && !m.grid) m.epoch = e.epoch;  // grid epochs win exact ties
            m.grid |= e.grid;
            m.tle |= e.tle;
            m.radar |= e.radar;
        } else {
            out.push_back(e);
        }
    }
    return out;
}

std::vector<TimelineEntry> build_timeline(const ScenarioConfig& cfg) {
    const auto epochs = tle_epochs_from_config(cfg, nullptr);
    return build_timeline(cfg, epochs);
}

std::vector<OrbitalState> simulate_truth(const ScenarioConfig& cfg, std::span<const TimelineEntry> timeline) {
    orbit::PropagatorConfig prop = cfg.filter.propagator;
    prop.force = cfg.truth_force;
    std::vector<OrbitalState> truth;
    truth.reserve(timeline.size());
    OrbitalState x = cfg.initial_truth();
    for (const auto& e : timeline) {
        x = orbit::propagate(x, e.epoch, cfg.constants, prop);
        truth.push_back(x);
    }
    return truth;
}

// ---------------------------------------------------------------------------
// TLE pseudo-observations

std::vector<OrbitalState> synthesize_tles(std::span<const OrbitalState> truth, const tle::TleModelParams& params,
                                          const orbit::PhysicalConstants& c, Rng& rng) {
    params.validate();
    constexpr int kMaxAttempts = 1000;
    std::vector<OrbitalState> out;
    out.reserve(truth.size());
    for (const auto& x : truth) {
        const orbit::Vec3 h = orbit::specific_angular_momentum(x);
        if (!(h.norm() > 0.0)) throw Error(ErrorKind::DegenerateState, "cannot synthesize a TLE for a degenerate state");
        const orbit::Vec3 h_hat = h.normalized();
        const orbit::Vec3 r_hat = x.position.normalized();
        const double v2 = x.velocity.squaredNorm();

        bool done = false;
        for (int attempt = 0; attempt < kMaxAttempts && !done; ++attempt) {
            const double deficit = uniform(rng, 0.0, params.ang_tolerance);
            const double beta = uniform(rng, 0.0, 2.0 * orbit::kPi);
            const double d_energy = uniform(rng, params.energy_nominal - params.energy_tolerance,
                                            params.energy_nominal + params.energy_tolerance);

            // Tilting about an in-plane axis turns the normal by exactly alpha,
            // where 1 - cos(alpha) equals the drawn deficit.
            const double alpha = 2.0 * std::asin(std::sqrt(deficit / 2.0));
            const orbit::Vec3 axis = std::cos(beta) * r_hat + std::sin(beta) * h_hat.cross(r_hat);
            const Eigen::AngleAxisd rot(alpha, axis.normalized());

            const double scale2 = 1.0 + 2.0 * d_energy / v2;
            if (!(scale2 > 0.0)) throw Error(ErrorKind::Input, "energy offset exceeds the kinetic energy of the truth");
            OrbitalState y;
            y.epoch = x.epoch;
            y.position = rot * x.position;
            y.velocity = std::sqrt(scale2) * (rot * x.velocity);
            if (tle::h_tle(y, x, params, c) == 1.0) {
                out.push_back(y);
                done = true;
            }
        }
        if (!done) throw Error(ErrorKind::Numeric, "could not place a synthesized TLE on the plateaus");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

std::string metrics_header() {
    return "epoch,map_distance_m,"
           "pos_mean_r,pos_mean_i,pos_mean_c,pos_std_r,pos_std_i,pos_std_c,"
           "vel_mean_r,vel_mean_i,vel_mean_c,vel_std_r,vel_std_i,vel_std_c,"
           "r_eff,event";
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
    out << metrics_header() << '\n';
    out << std::setprecision(17);
    for (const auto& r : rows) {
        out << r.epoch << ',' << r.map_distance;
        for (const auto* v : {&r.ric.position_mean, &r.ric.position_std, &r.ric.velocity_mean, &r.ric.velocity_std})
            out << ',' << (*v)[0] << ',' << (*v)[1] << ',' << (*v)[2];
        out << ',' << r.effective_ratio << ',' << smc::to_string(r.event) << '\n';
    }
}

std::vector<MetricsRow> average_runs(std::span<const std::vector<MetricsRow>> runs) {
    if (runs.empty()) return {};
    const std::size_t n = runs.front().size();
    for (const auto& r : runs)
        if (r.size() != n) throw Error(ErrorKind::Input, "runs have different lengths");

    const double m = static_cast<double>(runs.size());
    std::vector<MetricsRow> mean(n);
    for (std::size_t k = 0; k < n; ++k) {
        MetricsRow acc;
        acc.epoch = runs.front()[k].epoch;
        acc.effective_ratio = 0.0;
        std::map<smc::EventTag, int> votes;
        for (const auto& run : runs) {
            const auto& row = run[k];
            if (std::abs(row.epoch - acc.epoch) > kMergeTolerance)
                throw Error(ErrorKind::Input, "runs are not aligned on the same epochs");
            acc.map_distance += row.map_distance;
            acc.ric.position_mean += row.ric.position_mean;
            acc.ric.position_std += row.ric.position_std;
            acc.ric.velocity_mean += row.ric.velocity_mean;
            acc.ric.velocity_std += row.ric.velocity_std;
            acc.effective_ratio += row.effective_ratio;
            ++votes[row.event];
        }
        acc.map_distance /= m;
        acc.ric.position_mean /= m;
        acc.ric.position_std /= m;
        acc.ric.velocity_mean /= m;
        acc.ric.velocity_std /= m;
        acc.effective_ratio /= m;
        acc.event = std::max_element(votes.begin(), votes.end(), [](const auto& a, const auto& b) {
                        return a.second < b.second;
                    })->first;
        mean[k] = acc;
    }
    return mean;
}

// ---------------------------------------------------------------------------
// Runs

ScenarioResult run_scenario(const ScenarioConfig& cfg, const SnapshotSink& sink) {
    cfg.validate();
    ScenarioResult res;

    std::vector<tle::TleRecord> records;
    const auto tle_epochs = tle_epochs_from_config(cfg, &records);
    res.timeline = build_timeline(cfg, tle_epochs);
    res.truth = simulate_truth(cfg, res.timeline);

    // Radar returns on grid epochs with the object inside the field of view.
    for (std::size_t k = 0; k < res.timeline.size(); ++k)
        if (res.timeline[k].grid && radar::in_fov(cfg.station, res.truth[k], cfg.constants))
            res.timeline[k].radar = true;

    // TLE pseudo-observations, one per TLE-tagged entry, shared by every run.
    std::vector<std::size_t> tle_index(res.timeline.size(), SIZE_MAX);
    {
        std::vector<OrbitalState> truth_at_tle;
        for (std::size_t k = 0; k < res.timeline.size(); ++k)
            if (res.timeline[k].tle) {
                tle_index[k] = truth_at_tle.size();
                truth_at_tle.push_back(res.truth[k]);
            }
        if (cfg.tle.kind == TleSourceKind::Synthesize) {
            Rng rng = derived_rng(cfg.filter.seed, kTleStream);
            res.tles = synthesize_tles(truth_at_tle, cfg.tle.params, cfg.constants, rng);
        } else if (cfg.tle.kind == TleSourceKind::File) {
            for (const auto& rec : records) res.tles.push_back(tle::tle_to_eci(rec, cfg.constants));
            std::stable_sort(res.tles.begin(), res.tles.end(),
                             [](const auto& p, const auto& q) { return p.epoch < q.epoch; });
            // Records that merged into one timeline epoch: the latest one is used.
            for (std::size_t j = 0; j < res.tles.size(); ++j) {
                const auto it = std::lower_bound(
                    res.timeline.begin(), res.timeline.end(), res.tles[j].epoch - kMergeTolerance,
                    [](const TimelineEntry& e, double t) { return e.epoch < t; });
                if (it != res.timeline.end() && it->tle)
                    tle_index[static_cast<std::size_t>(it - res.timeline.begin())] = j;
            }
        }
    }

    // Per-replicate observations.
    res.observations.resize(static_cast<std::size_t>(cfg.mc_runs));
    std::vector<std::vector<std::size_t>> obs_index(static_cast<std::size_t>(cfg.mc_runs));
    for (int r = 0; r < cfg.mc_runs; ++r) {
        Rng rng = derived_rng(cfg.filter.seed + static_cast<std::uint64_t>(r), kObservationStream);
        auto& idx = obs_index[static_cast<std::size_t>(r)];
        idx.assign(res.timeline.size(), SIZE_MAX);
        for (std::size_t k = 0; k < res.timeline.size(); ++k) {
            if (!res.timeline[k].radar) continue;
            idx[k] = res.observations[static_cast<std::size_t>(r)].size();
            auto obs = radar::observe(cfg.station, res.truth[k], rng, cfg.constants);
            obs.epoch = res.timeline[k].epoch;
            res.observations[static_cast<std::size_t>(r)].push_back(obs);
        }
    }

    std::vector<Mode> modes;
    if (cfg.mode == Mode::Radar || cfg.mode == Mode::Both) modes.push_back(Mode::Radar);
    if (cfg.mode == Mode::Fused || cfg.mode == Mode::Both) modes.push_back(Mode::Fused);

    for (Mode mode : modes) {
        ModeResult mr;
        mr.mode = mode;
        for (int r = 0; r < cfg.mc_runs; ++r) {
            smc::FilterConfig fc = cfg.filter;
            fc.seed = cfg.filter.seed + static_cast<std::uint64_t>(r);
            smc::TrackingFilter filter(fc, cfg.constants, cfg.station, cfg.tle.params);
            std::vector<MetricsRow> rows;
            rows.reserve(res.timeline.size());

            for (std::size_t k = 0; k < res.timeline.size(); ++k) {
                const auto& e = res.timeline[k];
                const radar::RadarObservation* obs =
                    e.radar ? &res.observations[static_cast<std::size_t>(r)][obs_index[static_cast<std::size_t>(r)][k]]
                            : nullptr;
                const OrbitalState* y = (mode == Mode::Fused && e.tle) ? &res.tles[tle_index[k]] : nullptr;

                try {
                    const smc::StepReport rep = filter.step(e.epoch, obs, y);
                    if (!filter.initialized()) {
                        rows.push_back(uninitialized_row(e.epoch));
                        continue;
                    }
                    const auto& cloud = filter.cloud();
                    const OrbitalState map = smc::map_estimate(cloud, cfg.constants);
                    MetricsRow row;
                    row.epoch = e.epoch;
                    row.map_distance = (map.position - res.truth[k].position).norm();
                    row.ric = smc::ric_error_stats(cloud, res.truth[k]);
                    row.effective_ratio = rep.effective_ratio;
                    row.event = rep.event;
                    rows.push_back(row);
                    if (sink) sink(mode, r, e, cloud, map);
                } catch (const Error& err) {
                    std::ostringstream os;
                    os.precision(15);
                    os << "mode " << to_string(mode) << ", run " << r << ", epoch " << e.epoch << " ("
                       << event_of(e, mode) << "): " << err.what();
                    throw Error(err.kind(), os.str());
                }
            }
            mr.runs.push_back(std::move(rows));
        }
        mr.mean = average_runs(mr.runs);
        res.modes.push_back(std::move(mr));
    }
    return res;
}

void write_outputs(const ScenarioConfig& cfg, const ScenarioResult& result) {
    namespace fs = std::filesystem;
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    auto open = [&](const std::string& name) {
        std::ofstream out(dir / name);
        if (!out) throw Error(ErrorKind::Input, "cannot write " + (dir / name).string());
        return out;
    };

    {
        auto out = open("truth.csv");
        orbit::write_ephemeris_csv(out, result.truth);
    }
    {
        auto out = open("tles.csv");
        orbit::write_ephemeris_csv(out, result.tles);
    }
    for (std::size_t r = 0; r < result.observations.size(); ++r) {
        auto out = open("observations_run" + fmt_run(static_cast<int>(r)) + ".csv");
        radar::write_observation_csv(out, result.observations[r]);
    }
    for (const auto& m : result.modes) {
        for (std::size_t r = 0; r < m.runs.size(); ++r) {
            auto out = open(std::string("metrics_") + to_string(m.mode) + "_run" + fmt_run(static_cast<int>(r)) + ".csv");
            write_metrics_csv(out, m.runs[r]);
        }
        auto out = open(std::string("metrics_") + to_string(m.mode) + "_mean.csv");
        write_metrics_csv(out, m.mean);
    }
}

ScenarioResult run(const ScenarioConfig& cfg) {
    namespace fs = std::filesystem;
    cfg.validate();
    fs::create_directories(cfg.output_dir);

    std::map<std::pair<int, int>, std::ofstream> files;
    SnapshotSink sink;
    if (cfg.particle_snapshots) {
        sink = [&](Mode mode, int r, const TimelineEntry& e, const smc::ParticleCloud& cloud, const OrbitalState& map) {
            auto key = std::make_pair(static_cast<int>(mode), r);
            auto it = files.find(key);
            if (it == files.end()) {
                const fs::path p = fs::path(cfg.output_dir) /
                                   (std::string("snapshots_") + to_string(mode) + "_run" + fmt_run(r) + ".csv");
                std::ofstream out(p);
                if (!out) throw Error(ErrorKind::Input, "cannot write " + p.string());
                out << "epoch,kind,index,weight,px,py,pz,vx,vy,vz\n" << std::setprecision(17);
                it = files.emplace(key, std::move(out)).first;
            }
            auto& out = it->second;
            auto line = [&](const char* kind, std::size_t i, double w, const OrbitalState& x) {
                out << e.epoch << ',' << kind << ',' << i << ',' << w;
                for (int k = 0; k < 3; ++k) out << ',' << x.position[k];
                for (int k = 0; k < 3; ++k) out << ',' << x.velocity[k];
                out << '\n';
            };
            line("map", 0, 1.0, map);
            for (std::size_t i = 0; i < cloud.size(); ++i)
                line("particle", i, cloud.particles[i].weight, cloud.particles[i].state);
        };
    }
    ScenarioResult res = run_scenario(cfg, sink);
    write_outputs(cfg, res);
    return res;
}

}  // namespace opmtrack::scenario
