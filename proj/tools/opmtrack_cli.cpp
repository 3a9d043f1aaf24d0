// Command-line front end: scenario runs, TLE calibration and TLE validation.

#include "opmtrack/errors.hpp"
#include "opmtrack/orbit.hpp"
#include "opmtrack/scenario.hpp"
#include "opmtrack/tle.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

using namespace opmtrack;

namespace {

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<int> mc_runs,
            const std::optional<std::string>& out_dir, const std::optional<std::string>& mode) {
    scenario::ScenarioConfig cfg = scenario::load_config(config_path);
    if (seed) cfg.filter.seed = *seed;
    if (mc_runs) cfg.mc_runs = *mc_runs;
    if (out_dir) cfg.output_dir = *out_dir;
    if (mode) cfg.mode = scenario::parse_mode(*mode);
    cfg.validate();

    const auto res = scenario::run(cfg);
    std::size_t radar_epochs = 0, tle_epochs = 0;
    for (const auto& e : res.timeline) {
        radar_epochs += e.radar ? 1 : 0;
        tle_epochs += e.tle ? 1 : 0;
    }
    std::cout << "timeline: " << res.timeline.size() << " epochs, " << radar_epochs << " with radar returns, "
              << tle_epochs << " with TLEs\n";
    for (const auto& m : res.modes) {
        const auto& last = m.mean.back();
        std::cout << scenario::to_string(m.mode) << ": " << m.runs.size() << " runs, final mean MAP distance "
                  << std::setprecision(6) << last.map_distance << " m\n";
    }
    std::cout << "outputs written to " << cfg.output_dir << '\n';
    return 0;
}

int cmd_calibrate(const std::string& tle_path, const std::string& ephemeris_path,
                  const std::optional<std::string>& samples_path, double foot_factor) {
    const orbit::PhysicalConstants c;
    const auto records = tle::read_tle_file(tle_path);
    std::ifstream eph_in(ephemeris_path);
    if (!eph_in) throw Error(ErrorKind::Input, "cannot open " + ephemeris_path);
    auto ephemeris = orbit::read_ephemeris_csv(eph_in);
    std::sort(ephemeris.begin(), ephemeris.end(), [](const auto& a, const auto& b) { return a.epoch < b.epoch; });

    // Reference state at each TLE epoch: the latest ephemeris state at or
    // before it, propagated forward with the default force model.
    std::vector<std::pair<orbit::OrbitalState, orbit::OrbitalState>> pairs;
    for (const auto& rec : records) {
        auto it = std::upper_bound(ephemeris.begin(), ephemeris.end(), rec.epoch,
                                   [](double t, const auto& x) { return t < x.epoch; });
        if (it == ephemeris.begin()) {
            std::cerr << "skipping TLE at epoch " << rec.epoch << ": no ephemeris state at or before it\n";
            continue;
        }
        const auto ref = orbit::propagate(*std::prev(it), rec.epoch, c, orbit::PropagatorConfig{});
        pairs.emplace_back(tle::tle_to_eci(rec, c), ref);
    }

    tle::TleModelParams base;
    base.foot_factor = foot_factor;
    const auto cal = tle::calibrate(pairs, c, base);
    std::cout << std::setprecision(12) << "[tle]\n"
              << "ang_tolerance = " << cal.params.ang_tolerance << '\n'
              << "energy_nominal = " << cal.params.energy_nominal << '\n'
              << "energy_tolerance = " << cal.params.energy_tolerance << '\n'
              << "foot_factor = " << cal.params.foot_factor << '\n';
    if (samples_path) {
        std::ofstream out(*samples_path);
        if (!out) throw Error(ErrorKind::Input, "cannot write " + *samples_path);
        tle::write_calibration_csv(out, cal.samples);
    }
    return 0;
}

int cmd_parse(const std::string& tle_path) {
    std::ifstream in(tle_path);
    if (!in) throw Error(ErrorKind::Input, "cannot open " + tle_path);
    const auto outcomes = tle::scan_tle_stream(in);
    int bad = 0;
    for (const auto& o : outcomes) {
        std::cout << "line " << o.first_line << ": ";
        if (o.record) {
            const auto& r = *o.record;
            std::cout << "ok catalog " << r.catalog_id << ", epoch " << std::setprecision(15) << r.epoch << " s";
            if (!r.name.empty()) std::cout << " (" << r.name << ")";
            std::cout << '\n';
        } else {
            ++bad;
            std::cout << "error: " << o.error << '\n';
        }
    }
    std::cout << outcomes.size() - static_cast<std::size_t>(bad) << " valid, " << bad << " invalid\n";
    return bad == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Possibilistic multi-source orbit tracking"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> mc_runs;
    std::optional<std::string> out_dir;
    std::optional<std::string> mode;
    auto* run = app.add_subcommand("run", "Run a scenario described by a configuration file");
    run->add_option("config", config_path, "Scenario configuration (INI)")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Base random seed");
    run->add_option("--mc-runs", mc_runs, "Number of Monte Carlo replicates")->check(CLI::PositiveNumber);
    run->add_option("--out-dir", out_dir, "Output directory");
    run->add_option("--mode", mode, "Filter modes to run")->check(CLI::IsMember({"radar", "fused", "both"}));

    std::string tle_path, ephemeris_path;
    std::optional<std::string> samples_path;
    double foot_factor = tle::TleModelParams{}.foot_factor;
    auto* calibrate = app.add_subcommand("calibrate", "Fit TLE possibility tolerances against a reference ephemeris");
    calibrate->add_option("tle-file", tle_path, "TLE records")->required()->check(CLI::ExistingFile);
    calibrate->add_option("ephemeris-file", ephemeris_path, "Reference ephemeris CSV (epoch,px,py,pz,vx,vy,vz)")
        ->required()
        ->check(CLI::ExistingFile);
    calibrate->add_option("--samples", samples_path, "Write per-pair offsets to this CSV");
    calibrate->add_option("--foot-factor", foot_factor, "Ramp length in plateau tolerances");

    std::string parse_path;
    auto* parse = app.add_subcommand("parse", "Validate a TLE file and report every malformed record");
    parse->add_option("tle-file", parse_path, "TLE records")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config_path, seed, mc_runs, out_dir, mode);
        if (*calibrate) return cmd_calibrate(tle_path, ephemeris_path, samples_path, foot_factor);
        if (*parse) return cmd_parse(parse_path);
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
