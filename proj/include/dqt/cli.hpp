#pragma once

// Command implementations behind the `dqt` executable.
//
// Configuration is a flat JSON object. Resolution order, later wins:
//   command defaults < preset < config file < command-line flags
// A manifest written by a previous run is also accepted as a config file (its
// "config" member is used), which reproduces that run's CSV output byte-for-byte.
//
// Grid keys, first match wins:
//   "grid":     [[delta, gamma, Gamma], ...]
//   "families": ["dephasing"|"hopping"|"none", ...] with "rates" and "deltas"
//   otherwise the product deltas x gammas x big_gammas

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqt/dynamics.hpp"
#include "dqt/ensemble.hpp"
#include "dqt/error.hpp"
#include "dqt/lattice.hpp"
#include "dqt/observables.hpp"
#include "dqt/trajectories.hpp"

namespace dqt::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kToolName = "dqt";
inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr const char* kOutputDirEnv = "DQT_OUTPUT_DIR";

inline json command_defaults(const std::string& command) {
    json d = {
        {"n_sites", 201},       {"g", 1.0},          {"deltas", {0.0}},       {"gammas", {0.0}},
        {"big_gammas", {0.0}},  {"t_final", 20.0},   {"dt", 0.0},             {"sample_spacing", 0.25},
        {"master_seed", 20200101}, {"n_disorder", 100}, {"n_trajectories", 0}, {"fit_window", {5.0, 20.0}},
        {"threads", 0},
    };
    if (command == "trajectory") {
        d["n_sites"] = 81;
        d["n_trajectories"] = 1;
        d["sample_spacing"] = 0.05;
    }
    return d;
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"fig3a", "fig3b", "fig3c", "fig4a", "fig4b", "fig4c", "fig5", "fig6"};
    return names;
}

/// Figure presets: disorder rows x rate columns at the scales used for each figure.
inline json preset(const std::string& name) {
    const json rows = {0.0, 0.5, 1.0, 10.0};
    const json cols = {0.1, 1.0, 10.0};
    if (name == "fig3a") return {{"n_sites", 201}, {"deltas", rows}, {"gammas", {0.0}}, {"big_gammas", {0.0}}};
    if (name == "fig3b") return {{"n_sites", 201}, {"deltas", rows}, {"gammas", cols}, {"big_gammas", {0.0}}};
    if (name == "fig3c") return {{"n_sites", 201}, {"deltas", rows}, {"gammas", {0.0}}, {"big_gammas", cols}};
    if (name == "fig4a") return {{"n_sites", 81}, {"deltas", rows}, {"gammas", {0.0}}, {"big_gammas", {0.0}}};
    if (name == "fig4b") return {{"n_sites", 81}, {"deltas", rows}, {"gammas", cols}, {"big_gammas", {0.0}}};
    if (name == "fig4c") return {{"n_sites", 81}, {"deltas", rows}, {"gammas", {0.0}}, {"big_gammas", cols}};
    if (name == "fig5")
        return {{"n_sites", 201},
                {"families", {"dephasing", "hopping"}},
                {"rates", cols},
                {"deltas", {0.0, 0.5, 1.0, 2.0, 10.0}}};
    if (name == "fig6")
        return {{"n_sites", 81}, {"deltas", {1.0}}, {"gammas", {1.0}}, {"big_gammas", {0.0}}, {"n_trajectories", 10}};
    throw ConfigError("unknown preset '" + name + "'");
}

/// Shallow merge; keys that define the grid knock out competing grid keys.
inline void merge_into(json& base, const json& over) {
    if (!over.is_object()) throw ConfigError("configuration must be a JSON object");
    const bool sets_grid = over.contains("grid");
    const bool sets_family = over.contains("families") || over.contains("rates");
    const bool sets_product = over.contains("gammas") || over.contains("big_gammas");
    if (sets_grid || sets_family || sets_product || over.contains("deltas")) base.erase("grid");
    if (sets_product) {
        base.erase("families");
        base.erase("rates");
    }
    for (auto it = over.begin(); it != over.end(); ++it) base[it.key()] = it.value();
}

inline json load_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    if (j.contains("config") && j.contains("tool")) return j.at("config");
    return j;
}

struct RunConfig {
    std::string command;
    json resolved;  // everything, after merging
    SweepConfig sweep;
    std::string output_dir = ".";
    std::optional<std::pair<double, double>> synthetic;
};

inline std::vector<double> as_list(const json& j, const char* key) {
    const json& v = j.at(key);
    if (v.is_array()) return v.get<std::vector<double>>();
    return {v.get<double>()};
}

inline std::vector<GridPoint> resolve_grid(const json& j) {
    std::vector<GridPoint> grid;
    if (j.contains("grid")) {
        for (const auto& row : j.at("grid")) {
            const auto v = row.get<std::vector<double>>();
            if (v.size() != 3) throw ConfigError("grid rows must be [delta, gamma, Gamma]");
            grid.push_back({v[0], v[1], v[2]});
        }
        return grid;
    }
    const auto deltas = as_list(j, "deltas");
    if (j.contains("families")) {
        const auto rates = as_list(j, "rates");
        for (const auto& fam : j.at("families")) {
            const auto f = fam.get<std::string>();
            if (f != "dephasing" && f != "hopping" && f != "none") throw ConfigError("unknown family '" + f + "'");
            for (double r : (f == "none" ? std::vector<double>{0.0} : rates))
                for (double d : deltas)
                    grid.push_back({d, f == "dephasing" ? r : 0.0, f == "hopping" ? r : 0.0});
        }
        return grid;
    }
    const auto gammas = as_list(j, "gammas");
    const auto big_gammas = as_list(j, "big_gammas");
    for (double d : deltas)
        for (double g : gammas)
            for (double G : big_gammas) grid.push_back({d, g, G});
    return grid;
}

/// Merge the layers and convert to a validated RunConfig.
inline RunConfig resolve(const std::string& command, const std::optional<std::string>& preset_name,
                         const std::optional<fs::path>& config_file, const json& flags) {
    json j = command_defaults(command);
    std::optional<std::string> chosen = preset_name;
    json file_layer = json::object();
    if (config_file) {
        file_layer = load_config_file(*config_file);
        if (!chosen && file_layer.contains("preset")) chosen = file_layer.at("preset").get<std::string>();
    }
    if (flags.contains("preset")) chosen = flags.at("preset").get<std::string>();
    if (chosen && !chosen->empty()) {
        merge_into(j, preset(*chosen));
        j["preset"] = *chosen;
    }
    merge_into(j, file_layer);
    merge_into(j, flags);

    RunConfig rc;
    rc.command = command;
    try {
        SweepConfig& s = rc.sweep;
        s.base.n_sites = j.at("n_sites").get<std::size_t>();
        s.base.g = j.at("g").get<double>();
        if (j.contains("initial_site") && !j.at("initial_site").is_null())
            s.base.initial_site = j.at("initial_site").get<std::size_t>();
        s.grid = resolve_grid(j);
        s.t_final = j.at("t_final").get<double>();
        s.dt = j.at("dt").get<double>();
        s.sample_spacing = j.at("sample_spacing").get<double>();
        if (j.contains("sample_times")) s.sample_times = j.at("sample_times").get<std::vector<double>>();
        s.master_seed = j.at("master_seed").get<std::uint64_t>();
        s.n_disorder = j.at("n_disorder").get<std::size_t>();
        s.n_trajectories = j.at("n_trajectories").get<std::size_t>();
        const auto w = j.at("fit_window").get<std::vector<double>>();
        if (w.size() != 2) throw ConfigError("fit_window must be [t_min, t_max]");
        s.fit_window = {w[0], w[1]};
        s.threads = j.at("threads").get<std::size_t>();
        if (j.contains("synthetic")) {
            const auto v = j.at("synthetic").get<std::vector<double>>();
            if (v.size() != 2) throw ConfigError("synthetic needs c,alpha");
            rc.synthetic = std::make_pair(v[0], v[1]);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad configuration value: ") + e.what());
    }
    if (j.contains("output_dir")) rc.output_dir = j.at("output_dir").get<std::string>();
    else if (const char* env = std::getenv(kOutputDirEnv); env && *env) rc.output_dir = env;
    j.erase("output_dir");  // not part of what determines the numbers
    rc.resolved = j;
    if (command == "trajectory" && rc.sweep.n_trajectories == 0) throw ConfigError("n_trajectories must be >= 1");
    if (command != "sweep") {
        SweepConfig probe = rc.sweep;
        probe.n_trajectories = 0;
        probe.validate();
    } else {
        rc.sweep.validate();
    }
    return rc;
}

// ---------------------------------------------------------------------------
// output helpers

inline std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline std::string num_tag(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

inline std::string point_tag(const GridPoint& p) {
    return "delta" + num_tag(p.delta) + "_gamma" + num_tag(p.gamma) + "_Gamma" + num_tag(p.big_gamma);
}

inline void write_frames_csv(const fs::path& path, const std::vector<double>& times,
                             const std::vector<std::vector<double>>& frames) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    const std::size_t n = frames.empty() ? 0 : frames.front().size();
    out << "t";
    for (std::size_t j = 0; j < n; ++j) out << ",site_" << j;
    out << '\n';
    for (std::size_t i = 0; i < times.size(); ++i) {
        out << fmt9(times[i]);
        for (double p : frames[i]) out << ',' << fmt9(p);
        out << '\n';
    }
}

inline void write_events_csv(const fs::path& path, const std::vector<JumpEvent>& events) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "t,kind,site_or_pair\n";
    for (const auto& e : events) {
        out << fmt9(e.time) << ',' << to_string(e.kind) << ',';
        if (e.kind == JumpKind::hop) out << e.site << "->" << e.target;
        else out << e.site;
        out << '\n';
    }
}

inline void write_msd_csv(const fs::path& path, const MsdSeries& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "t,msd\n";
    for (std::size_t i = 0; i < s.times.size(); ++i) out << fmt9(s.times[i]) << ',' << fmt9(s.msd[i]) << '\n';
}

inline constexpr const char* kFitsHeader = "delta,gamma,big_gamma,c,alpha,rms_log_residual,valid";

inline std::string fit_row(const GridPoint& p, const std::optional<MsdFit>& fit, bool valid) {
    std::ostringstream os;
    os << fmt9(p.delta) << ',' << fmt9(p.gamma) << ',' << fmt9(p.big_gamma) << ',';
    if (fit) os << fmt9(fit->c) << ',' << fmt9(fit->alpha) << ',' << fmt9(fit->rms_log_residual);
    else os << "nan,nan,nan";
    os << ',' << (valid ? 1 : 0);
    return os.str();
}

struct Manifest {
    json doc;
    explicit Manifest(const RunConfig& rc) {
        doc = {{"tool", kToolName},
               {"version", kToolVersion},
               {"command", rc.command},
               {"master_seed", rc.sweep.master_seed},
               {"config", rc.resolved},
               {"outputs", json::array()},
               {"runs", json::array()},
               {"warnings", json::array()}};
    }
    void output(const fs::path& p) { doc["outputs"].push_back(p.filename().string()); }
    void warn(const std::string& w, std::ostream& err) {
        err << "warning: " << w << '\n';
        doc["warnings"].push_back(w);
    }
    void write(const fs::path& dir, double seconds, bool valid) {
        doc["wall_clock_seconds"] = seconds;
        doc["valid"] = valid;
        std::ofstream out(dir / (doc["command"].get<std::string>() + "_manifest.json"), std::ios::binary);
        out << doc.dump(2) << '\n';
    }
};

inline json invariants_json(const InvariantReport& r) {
    json j = {{"max_trace_error", r.max_trace_error},
              {"max_hermiticity_error", r.max_hermiticity_error},
              {"samples_checked", r.samples_checked}};
    if (std::isfinite(r.min_eigenvalue)) j["min_eigenvalue"] = r.min_eigenvalue;
    return j;
}

inline fs::path prepare_output_dir(const RunConfig& rc) {
    fs::path dir(rc.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

// ---------------------------------------------------------------------------
// commands; each returns the process exit code

/// One master-equation run per grid point on disorder realization 0.
inline int cmd_evolve(const RunConfig& rc, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    const auto start = std::chrono::steady_clock::now();
    const fs::path dir = prepare_output_dir(rc);
    Manifest man(rc);
    bool ok = true;
    const auto& cfg = rc.sweep;
    const auto times = cfg.resolved_sample_times();
    for (const auto& p : cfg.grid) {
        const ChainSpec spec = spec_for(cfg, p);
        const auto seed = disorder_seed(cfg.master_seed, 0);
        const auto h = build_hamiltonian(spec, sample_disorder(spec, seed));
        const double dt = cfg.dt > 0 ? cfg.dt : default_time_step(spec);
        const fs::path file = dir / ("frames_" + point_tag(p) + ".csv");
        json run = {{"delta", p.delta}, {"gamma", p.gamma}, {"big_gamma", p.big_gamma}, {"disorder_seed", seed},
                    {"dt", dt}, {"frames", file.filename().string()}};
        try {
            EvolveOptions opts;
            opts.store_states = false;
            auto tr = evolve_density_matrix(DensityMatrix::localized(spec.n_sites, spec.start_site()), h,
                                            NoiseModel::from_spec(spec), cfg.t_final, dt, times, opts);
            write_frames_csv(file, tr.times, tr.populations);
            man.output(file);
            double bm = 0.0;
            for (const auto& f : tr.populations) bm = std::max(bm, boundary_mass(f, cfg.boundary_margin));
            run["max_boundary_mass"] = bm;
            run["invariants"] = invariants_json(tr.invariants);
            if (bm > cfg.boundary_threshold)
                man.warn(point_tag(p) + ": boundary mass " + fmt9(bm) + " exceeds " + fmt9(cfg.boundary_threshold),
                         err);
            log << file.string() << '\n';
        } catch (const Error& e) {
            ok = false;
            run["error"] = e.what();
            err << "error: " << point_tag(p) << ": " << e.what() << '\n';
        }
        man.doc["runs"].push_back(run);
    }
    man.write(dir, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), ok);
    return ok ? 0 : 1;
}

/// n_trajectories single trajectories per grid point on disorder realization 0.
inline int cmd_trajectory(const RunConfig& rc, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    const auto start = std::chrono::steady_clock::now();
    const fs::path dir = prepare_output_dir(rc);
    Manifest man(rc);
    bool ok = true;
    const auto& cfg = rc.sweep;
    const auto times = cfg.resolved_sample_times();
    for (const auto& p : cfg.grid) {
        if (p.gamma > 0 && p.big_gamma > 0) {
            err << "error: " << point_tag(p) << ": trajectories need a single noise channel\n";
            ok = false;
            continue;
        }
        const ChainSpec spec = spec_for(cfg, p);
        const auto dseed = disorder_seed(cfg.master_seed, 0);
        const auto h = build_hamiltonian(spec, sample_disorder(spec, dseed));
        const double dt = cfg.dt > 0 ? cfg.dt : default_time_step(spec);
        const auto psi0 = PureState::localized(spec.n_sites, spec.start_site());
        for (std::size_t k = 0; k < cfg.n_trajectories; ++k) {
            const auto seed = trajectory_seed(cfg.master_seed, p, 0, k);
            const std::string stem = "traj_" + point_tag(p) + "_k" + std::to_string(k);
            json run = {{"delta", p.delta}, {"gamma", p.gamma}, {"big_gamma", p.big_gamma}, {"trajectory", k},
                        {"disorder_seed", dseed}, {"rng_seed", seed}, {"dt", dt}};
            try {
                const auto rec = p.big_gamma > 0
                                     ? run_hopping_trajectory(psi0, h, p.big_gamma, cfg.t_final, dt, times, seed)
                                     : run_dephasing_trajectory(psi0, h, p.gamma, cfg.t_final, dt, times, seed);
                const fs::path frames = dir / (stem + "_frames.csv");
                const fs::path events = dir / (stem + "_events.csv");
                write_frames_csv(frames, rec.times, rec.site_probability_frames);
                write_events_csv(events, rec.events);
                man.output(frames);
                man.output(events);
                run["frames"] = frames.filename().string();
                run["events"] = events.filename().string();
                run["n_events"] = rec.events.size();
                run["max_norm_error"] = rec.max_norm_error;
                double bm = 0.0;
                for (const auto& f : rec.site_probability_frames) bm = std::max(bm, boundary_mass(f, cfg.boundary_margin));
                run["max_boundary_mass"] = bm;
                if (bm > cfg.boundary_threshold)
                    man.warn(stem + ": boundary mass " + fmt9(bm) + " exceeds " + fmt9(cfg.boundary_threshold), err);
                log << frames.string() << '\n';
            } catch (const Error& e) {
                ok = false;
                run["error"] = e.what();
                err << "error: " << stem << ": " << e.what() << '\n';
            }
            man.doc["runs"].push_back(run);
        }
    }
    man.write(dir, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), ok);
    return ok ? 0 : 1;
}

/// Ensemble sweep: one fits.csv row and one msd_<point>.csv per grid point. With a
/// synthetic (c, alpha) the fitter runs on c t^alpha sampled on the configured grid.
inline int cmd_sweep(const RunConfig& rc, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    const auto start = std::chrono::steady_clock::now();
    const fs::path dir = prepare_output_dir(rc);
    Manifest man(rc);
    const auto& cfg = rc.sweep;
    const fs::path fits_path = dir / "fits.csv";
    std::ofstream fits(fits_path, std::ios::binary);
    if (!fits) throw Error("cannot write " + fits_path.string());
    fits << kFitsHeader << '\n';
    bool ok = true;

    if (rc.synthetic) {
        const auto [c, alpha] = *rc.synthetic;
        MsdSeries s{cfg.resolved_sample_times(), {}, 0};
        for (double t : s.times) s.msd.push_back(c * std::pow(t, alpha));
        std::optional<MsdFit> fit;
        try {
            fit = fit_power_law(s, cfg.fit_window);
        } catch (const FitError& e) {
            ok = false;
            err << "error: synthetic fit: " << e.what() << '\n';
        }
        const GridPoint p = cfg.grid.front();
        fits << fit_row(p, fit, fit.has_value()) << '\n';
        const fs::path msd = dir / ("msd_synthetic_" + point_tag(p) + ".csv");
        write_msd_csv(msd, s);
        man.output(fits_path);
        man.output(msd);
        man.doc["runs"].push_back({{"synthetic", {c, alpha}}, {"msd", msd.filename().string()}});
    } else {
        const SweepResult res = run_sweep(cfg);
        man.output(fits_path);
        for (const auto& pr : res.points) {
            fits << fit_row(pr.point, pr.fit, pr.valid) << '\n';
            const fs::path msd = dir / ("msd_" + point_tag(pr.point) + ".csv");
            write_msd_csv(msd, pr.msd);
            man.output(msd);
            json run = {{"delta", pr.point.delta},
                        {"gamma", pr.point.gamma},
                        {"big_gamma", pr.point.big_gamma},
                        {"msd", msd.filename().string()},
                        {"realizations", pr.realizations},
                        {"used", pr.used},
                        {"failed", pr.failed},
                        {"boundary_tripped", pr.boundary_tripped},
                        {"max_boundary_mass", pr.max_boundary_mass},
                        {"invariants", invariants_json(pr.invariants)},
                        {"cpu_seconds", pr.cpu_seconds},
                        {"valid", pr.valid}};
            if (!pr.fit_error.empty()) run["fit_error"] = pr.fit_error;
            if (!pr.failures.empty()) run["failures"] = pr.failures;
            man.doc["runs"].push_back(run);
            if (pr.boundary_flag())
                man.warn(point_tag(pr.point) + ": " + std::to_string(pr.boundary_tripped) +
                             " realization(s) exceeded the boundary guard and were excluded",
                         err);
            if (!pr.valid) {
                ok = false;
                err << "error: " << point_tag(pr.point) << " is invalid"
                    << (pr.fit_error.empty() ? "" : " (" + pr.fit_error + ")") << '\n';
            }
        }
        log << fits_path.string() << '\n';
    }
    fits.close();
    man.write(dir, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), ok);
    return ok ? 0 : 1;
}

struct RabiArgs {
    double g = 1.0;
    std::optional<double> detuning;
    std::optional<double> e_diff;
    std::optional<double> eps;
    std::optional<std::vector<double>> eps_sweep;  // {start, stop, count}
};

/// Prints A^2 for a plain detuning, or the pair A^2(Ediff -+ eps), or a table over eps.
inline int cmd_rabi(const RabiArgs& a, std::ostream& out = std::cout) {
    if (!(a.g > 0)) throw ConfigError("--g must be positive");
    if (a.detuning) {
        out << "A2 " << fmt9(rabi_amplitude_sq(a.g, *a.detuning, 0.0)) << '\n';
        return 0;
    }
    const double e = a.e_diff.value_or(0.0);
    if (a.eps_sweep) {
        const auto& s = *a.eps_sweep;
        if (s.size() != 3 || s[2] < 2) throw ConfigError("--eps-sweep needs start,stop,count with count >= 2");
        const auto count = static_cast<std::size_t>(s[2]);
        out << "eps,A2_minus,A2_plus\n";
        for (std::size_t i = 0; i < count; ++i) {
            const double eps = s[0] + (s[1] - s[0]) * double(i) / double(count - 1);
            out << fmt9(eps) << ',' << fmt9(rabi_amplitude_sq(a.g, e - eps, 0.0)) << ','
                << fmt9(rabi_amplitude_sq(a.g, e + eps, 0.0)) << '\n';
        }
        return 0;
    }
    const double eps = a.eps.value_or(0.0);
    out << "A2(Ediff-eps) " << fmt9(rabi_amplitude_sq(a.g, e - eps, 0.0)) << '\n';
    out << "A2(Ediff+eps) " << fmt9(rabi_amplitude_sq(a.g, e + eps, 0.0)) << '\n';
    return 0;
}

} // namespace dqt::cli
