// dqt: master-equation evolution, quantum trajectories, ensemble sweeps and the
// two-site Rabi formula for a disordered tight-binding chain.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dqt/cli.hpp"

namespace {

using dqt::cli::json;

// Flags shared by evolve, trajectory and sweep. Only flags the user actually
// passed end up in the override layer.
struct CommonFlags {
    std::optional<std::string> preset;
    std::optional<std::string> config;
    std::optional<std::string> out;
    std::optional<std::size_t> n_sites, initial_site, n_disorder, n_trajectories, threads;
    std::optional<double> g, t_final, dt, sample_spacing;
    std::optional<std::uint64_t> seed;
    std::vector<double> deltas, gammas, big_gammas, rates, sample_times, fit_window, synthetic;
    std::vector<std::string> families;

    void attach(CLI::App* app, bool with_ensemble) {
        std::string presets;
        for (const auto& p : dqt::cli::preset_names()) presets += (presets.empty() ? "" : ", ") + p;
        app->add_option("--preset", preset, "figure preset (" + presets + ")");
        app->add_option("--config", config, "JSON config file, or a manifest from an earlier run");
        app->add_option("--out", out, std::string("output directory (default $") + dqt::cli::kOutputDirEnv + " or .)");
        app->add_option("--n-sites", n_sites, "chain length");
        app->add_option("--g", g, "nearest-neighbour coupling");
        app->add_option("--initial-site", initial_site, "start site (default centre)");
        app->add_option("--delta", deltas, "disorder widths")->delimiter(',');
        app->add_option("--gamma", gammas, "dephasing rates")->delimiter(',');
        app->add_option("--big-gamma", big_gammas, "incoherent hopping rates")->delimiter(',');
        app->add_option("--families", families, "noise families for a rate sweep: dephasing,hopping,none")
            ->delimiter(',');
        app->add_option("--rates", rates, "rates used with --families")->delimiter(',');
        app->add_option("--t-final", t_final, "final time");
        app->add_option("--dt", dt, "integrator step (default 0.01/max(g,gamma,Gamma,delta,1))");
        app->add_option("--sample-spacing", sample_spacing, "output sample spacing");
        app->add_option("--sample-times", sample_times, "explicit output times")->delimiter(',');
        app->add_option("--seed", seed, "master seed");
        app->add_option("--threads", threads, "worker threads (0 = all cores)");
        if (with_ensemble) {
            app->add_option("--n-disorder", n_disorder, "disorder realizations per grid point");
            app->add_option("--n-trajectories", n_trajectories, "trajectories per realization (0 = master equation)");
            app->add_option("--fit-window", fit_window, "t_min,t_max for the power-law fit")->delimiter(',')->expected(2);
            app->add_option("--synthetic", synthetic, "fit c*t^alpha instead of simulating: c,alpha")
                ->delimiter(',')
                ->expected(2);
        } else {
            app->add_option("--n-trajectories", n_trajectories, "trajectories per grid point");
        }
    }

    json overrides() const {
        json j = json::object();
        if (preset) j["preset"] = *preset;
        if (out) j["output_dir"] = *out;
        if (n_sites) j["n_sites"] = *n_sites;
        if (g) j["g"] = *g;
        if (initial_site) j["initial_site"] = *initial_site;
        if (!deltas.empty()) j["deltas"] = deltas;
        if (!gammas.empty()) j["gammas"] = gammas;
        if (!big_gammas.empty()) j["big_gammas"] = big_gammas;
        if (!families.empty()) j["families"] = families;
        if (!rates.empty()) j["rates"] = rates;
        if (t_final) j["t_final"] = *t_final;
        if (dt) j["dt"] = *dt;
        if (sample_spacing) j["sample_spacing"] = *sample_spacing;
        if (!sample_times.empty()) j["sample_times"] = sample_times;
        if (seed) j["master_seed"] = *seed;
        if (n_disorder) j["n_disorder"] = *n_disorder;
        if (n_trajectories) j["n_trajectories"] = *n_trajectories;
        if (threads) j["threads"] = *threads;
        if (!fit_window.empty()) j["fit_window"] = fit_window;
        if (!synthetic.empty()) j["synthetic"] = synthetic;
        return j;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transport in a disordered chain with dephasing or incoherent hopping"};
    app.require_subcommand(1);

    CommonFlags evolve_flags, traj_flags, sweep_flags;
    auto* evolve = app.add_subcommand("evolve", "master-equation site populations for each grid point");
    evolve_flags.attach(evolve, false);
    auto* traj = app.add_subcommand("trajectory", "single quantum trajectories with jump records");
    traj_flags.attach(traj, false);
    auto* sweep = app.add_subcommand("sweep", "disorder-averaged MSD and power-law fits over a grid");
    sweep_flags.attach(sweep, true);

    dqt::cli::RabiArgs rabi_args;
    std::vector<double> eps_sweep;
    auto* rabi = app.add_subcommand("rabi", "two-site Rabi amplitude A^2 = g^2/(g^2 + dE^2)");
    rabi->add_option("--g", rabi_args.g, "coupling");
    rabi->add_option("--detuning", rabi_args.detuning, "site-energy difference");
    rabi->add_option("--Ediff", rabi_args.e_diff, "static energy difference, combined with --eps");
    rabi->add_option("--eps", rabi_args.eps, "fluctuation; prints A^2(Ediff-eps) and A^2(Ediff+eps)");
    rabi->add_option("--eps-sweep", eps_sweep, "start,stop,count table over eps")->delimiter(',')->expected(3);

    CLI11_PARSE(app, argc, argv);

    auto run = [](const std::string& cmd, const CommonFlags& f, auto&& body) {
        const json flags = f.overrides();
        const auto rc = dqt::cli::resolve(cmd, f.preset, f.config ? std::optional<std::filesystem::path>(*f.config)
                                                                  : std::nullopt,
                                          flags);
        return body(rc);
    };

    try {
        if (*evolve) return run("evolve", evolve_flags, [](const auto& rc) { return dqt::cli::cmd_evolve(rc); });
        if (*traj) return run("trajectory", traj_flags, [](const auto& rc) { return dqt::cli::cmd_trajectory(rc); });
        if (*sweep) return run("sweep", sweep_flags, [](const auto& rc) { return dqt::cli::cmd_sweep(rc); });
        if (*rabi) {
            if (!eps_sweep.empty()) rabi_args.eps_sweep = eps_sweep;
            return dqt::cli::cmd_rabi(rabi_args);
        }
    } catch (const dqt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const dqt::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
