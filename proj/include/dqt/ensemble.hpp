#pragma once

// Disorder ensembles and parameter sweeps.
//
// Seeds never depend on grid order:
//   disorder      = derive_seed(master, disorder stream, realization)
//   trajectory    = derive_seed(master, trajectory stream, key(delta), key(gamma), key(Gamma), realization, k)
// The disorder seed deliberately ignores the rates, so every grid point sees the
// same set of static disorder draws (scaled by delta).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dqt/dynamics.hpp"
#include "dqt/error.hpp"
#include "dqt/lattice.hpp"
#include "dqt/observables.hpp"
#include "dqt/rng.hpp"
#include "dqt/trajectories.hpp"

namespace dqt {

struct GridPoint {
    double delta = 0.0;
    double gamma = 0.0;
    double big_gamma = 0.0;

    friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

struct SweepConfig {
    ChainSpec base{};
    std::vector<GridPoint> grid;
    std::size_t n_disorder = 100;
    std::size_t n_trajectories = 0;  // 0 -> master equation
    double t_final = 20.0;
    double dt = 0.0;                 // 0 -> default_time_step per point
    double sample_spacing = 0.25;
    std::vector<double> sample_times;  // overrides sample_spacing when non-empty
    std::uint64_t master_seed = 20200101;
    FitWindow fit_window{};
    std::size_t threads = 0;  // 0 -> hardware concurrency
    double boundary_threshold = kBoundaryThreshold;
    std::size_t boundary_margin = kBoundaryMargin;
    double max_excluded_fraction = 0.1;
    double support_tolerance = EvolveOptions{}.support_tolerance;
    InvariantTolerances tolerances{};

    std::vector<double> resolved_sample_times() const {
        return sample_times.empty() ? uniform_grid(t_final, sample_spacing) : sample_times;
    }

    void validate() const {
        base.validate();
        if (grid.empty()) throw ConfigError("sweep grid is empty");
        if (n_disorder < 1) throw ConfigError("n_disorder must be >= 1");
        if (!(t_final > 0.0)) throw ConfigError("t_final must be > 0");
        if (dt < 0.0) throw ConfigError("dt must be >= 0");
        if (boundary_margin < 1) throw ConfigError("boundary_margin must be >= 1");
        for (const auto& p : grid) {
            if (!(p.delta >= 0) || !(p.gamma >= 0) || !(p.big_gamma >= 0))
                throw ConfigError("grid rates must be >= 0");
            if (n_trajectories > 0 && p.gamma > 0 && p.big_gamma > 0)
                throw ConfigError("trajectory batches need a single noise channel per grid point");
        }
        validate_sample_times(resolved_sample_times(), t_final);
    }
};

struct RealizationOutcome {
    bool ok = false;
    std::string error;
    std::vector<std::vector<double>> frames;
    double max_boundary_mass = 0.0;
    bool boundary_tripped = false;
    InvariantReport invariants{};
    double max_norm_error = 0.0;
    std::size_t events = 0;
    std::size_t trajectories = 0;
    double seconds = 0.0;
};

struct PointResult {
    GridPoint point{};
    std::vector<double> times;
    std::vector<std::vector<double>> mean_frames;
    MsdSeries msd{};
    std::optional<MsdFit> fit;
    std::string fit_error;
    std::size_t realizations = 0;
    std::size_t used = 0;
    std::size_t failed = 0;
    std::size_t boundary_tripped = 0;
    double max_boundary_mass = 0.0;
    std::vector<std::string> failures;
    InvariantReport invariants{};
    double max_norm_error = 0.0;
    std::size_t total_events = 0;
    std::size_t total_trajectories = 0;
    double cpu_seconds = 0.0;
    bool valid = false;

    bool boundary_flag() const { return boundary_tripped > 0; }
};

struct SweepResult {
    std::vector<PointResult> points;
    double wall_seconds = 0.0;
};

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Exceptions are
/// rethrown (first one wins) after all workers stop.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (first_error) std::rethrow_exception(first_error);
}

inline std::uint64_t disorder_seed(std::uint64_t master, std::size_t realization) {
    return derive_seed({master, kDisorderStream, realization});
}

inline std::uint64_t trajectory_seed(std::uint64_t master, const GridPoint& p, std::size_t realization,
                                     std::size_t trajectory) {
    return derive_seed({master, kTrajectoryStream, value_key(p.delta), value_key(p.gamma), value_key(p.big_gamma),
                        realization, trajectory});
}

inline ChainSpec spec_for(const SweepConfig& cfg, const GridPoint& p) {
    ChainSpec s = cfg.base;
    s.delta = p.delta;
    s.gamma = p.gamma;
    s.big_gamma = p.big_gamma;
    return s;
}

/// Number of disorder realizations actually simulated: a zero-width ME point
/// has a single deterministic realization.
inline std::size_t effective_realizations(const SweepConfig& cfg, const GridPoint& p) {
    return (p.delta == 0.0 && cfg.n_trajectories == 0) ? 1 : cfg.n_disorder;
}

/// One disorder realization: master equation or an averaged trajectory batch.
inline RealizationOutcome run_realization(const SweepConfig& cfg, const GridPoint& p, std::size_t realization) {
    RealizationOutcome out;
    const auto start = std::chrono::steady_clock::now();
    try {
        const ChainSpec spec = spec_for(cfg, p);
        spec.validate();
        const auto disorder = sample_disorder(spec, disorder_seed(cfg.master_seed, realization));
        const auto h = build_hamiltonian(spec, disorder);
        const auto times = cfg.resolved_sample_times();
        const double dt = cfg.dt > 0 ? cfg.dt : default_time_step(spec);
        const std::size_t origin = spec.start_site();

        if (cfg.n_trajectories == 0) {
            EvolveOptions opts;
            opts.store_states = false;
            opts.support_tolerance = cfg.support_tolerance;
            opts.tolerances = cfg.tolerances;
            auto traj = evolve_density_matrix(DensityMatrix::localized(spec.n_sites, origin), h,
                                              NoiseModel::from_spec(spec), cfg.t_final, dt, times, opts);
            out.frames = std::move(traj.populations);
            out.invariants = traj.invariants;
        } else {
            out.frames.assign(times.size(), std::vector<double>(spec.n_sites, 0.0));
            const auto psi0 = PureState::localized(spec.n_sites, origin);
            for (std::size_t k = 0; k < cfg.n_trajectories; ++k) {
                const auto seed = trajectory_seed(cfg.master_seed, p, realization, k);
                TrajectoryRecord rec = p.big_gamma > 0
                                           ? run_hopping_trajectory(psi0, h, p.big_gamma, cfg.t_final, dt, times, seed)
                                           : run_dephasing_trajectory(psi0, h, p.gamma, cfg.t_final, dt, times, seed);
                for (std::size_t i = 0; i < times.size(); ++i)
                    for (std::size_t j = 0; j < spec.n_sites; ++j)
                        out.frames[i][j] += rec.site_probability_frames[i][j];
                out.max_norm_error = std::max(out.max_norm_error, rec.max_norm_error);
                out.events += rec.events.size();
            }
            const double inv = 1.0 / double(cfg.n_trajectories);
            for (auto& f : out.frames)
                for (auto& v : f) v *= inv;
            out.trajectories = cfg.n_trajectories;
        }
        for (const auto& f : out.frames)
            out.max_boundary_mass = std::max(out.max_boundary_mass, boundary_mass(f, cfg.boundary_margin));
        out.boundary_tripped = out.max_boundary_mass > cfg.boundary_threshold;
        out.ok = true;
    } catch (const Error& e) {
        out.ok = false;
        out.error = e.what();
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

/// Fixed-order average of the usable realizations, then one fit of the averaged MSD.
inline PointResult reduce_point(const SweepConfig& cfg, const GridPoint& p,
                                const std::vector<RealizationOutcome>& outcomes) {
    PointResult res;
    res.point = p;
    res.times = cfg.resolved_sample_times();
    res.realizations = outcomes.size();
    const std::size_t n = cfg.base.n_sites;
    res.mean_frames.assign(res.times.size(), std::vector<double>(n, 0.0));
    for (std::size_t r = 0; r < outcomes.size(); ++r) {
        const auto& o = outcomes[r];
        res.cpu_seconds += o.seconds;
        if (!o.ok) {
            ++res.failed;
            res.failures.push_back("realization " + std::to_string(r) + ": " + o.error);
            continue;
        }
        res.invariants.merge(o.invariants);
        res.max_norm_error = std::max(res.max_norm_error, o.max_norm_error);
        res.total_events += o.events;
        res.total_trajectories += o.trajectories;
        res.max_boundary_mass = std::max(res.max_boundary_mass, o.max_boundary_mass);
        if (o.boundary_tripped) {
            ++res.boundary_tripped;
            continue;
        }
        ++res.used;
        for (std::size_t i = 0; i < res.times.size(); ++i)
            for (std::size_t j = 0; j < n; ++j) res.mean_frames[i][j] += o.frames[i][j];
    }
    if (res.used > 0) {
        const double inv = 1.0 / double(res.used);
        for (auto& f : res.mean_frames)
            for (auto& v : f) v *= inv;
    }
    res.msd = msd_series(res.times, res.mean_frames, cfg.base.start_site());

    const double excluded = double(res.failed + res.boundary_tripped) / double(std::max<std::size_t>(1, res.realizations));
    res.valid = res.used > 0 && excluded <= cfg.max_excluded_fraction;
    if (res.used > 0) {
        try {
            res.fit = fit_power_law(res.msd, cfg.fit_window);
        } catch (const FitError& e) {
            res.fit_error = e.what();
            res.valid = false;
        }
    } else {
        res.fit_error = "no usable realizations";
    }
    return res;
}

inline PointResult run_point(const SweepConfig& cfg, const GridPoint& p) {
    SweepConfig one = cfg;
    one.grid = {p};
    one.validate();
    const std::size_t count = effective_realizations(one, p);
    std::vector<RealizationOutcome> outcomes(count);
    parallel_for(count, one.threads, [&](std::size_t r) { outcomes[r] = run_realization(one, p, r); });
    return reduce_point(one, p, outcomes);
}

inline SweepResult run_sweep(const SweepConfig& cfg) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    struct Task {
        std::size_t point;
        std::size_t realization;
    };
    std::vector<Task> tasks;
    std::vector<std::vector<RealizationOutcome>> outcomes(cfg.grid.size());
    for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
        const std::size_t count = effective_realizations(cfg, cfg.grid[i]);
        outcomes[i].resize(count);
        for (std::size_t r = 0; r < count; ++r) tasks.push_back({i, r});
    }
    parallel_for(tasks.size(), cfg.threads, [&](std::size_t t) {
        const auto [i, r] = tasks[t];
        outcomes[i][r] = run_realization(cfg, cfg.grid[i], r);
    });
    SweepResult res;
    for (std::size_t i = 0; i < cfg.grid.size(); ++i) res.points.push_back(reduce_point(cfg, cfg.grid[i], outcomes[i]));
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

} // namespace dqt
