#pragma once

// Disordered nearest-neighbour chain restricted to the single-excitation sector.
//
// Site basis |j> = one up-spin at j. The hopping term conserves the number of
// excitations, so a single excitation lives in an N-dimensional space where
//
//     H|j> = E_j |j> + g |j-1> + g |j+1>      (open ends)

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dqt/error.hpp"
#include "dqt/rng.hpp"

namespace dqt {

struct ChainSpec {
    std::size_t n_sites = 201;
    double g = 1.0;          // coherent coupling
    double delta = 0.0;      // disorder standard deviation
    double gamma = 0.0;      // on-site dephasing rate
    double big_gamma = 0.0;  // incoherent hopping rate
    std::optional<std::size_t> initial_site;  // unset -> centre

    std::size_t start_site() const { return initial_site.value_or((n_sites - 1) / 2); }

    void validate() const {
        if (n_sites < 2) throw ConfigError("n_sites must be >= 2");
        if (!(g > 0.0) || !std::isfinite(g)) throw ConfigError("g must be positive and finite");
        if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be >= 0");
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be >= 0");
        if (!(big_gamma >= 0.0) || !std::isfinite(big_gamma))
            throw ConfigError("big_gamma must be >= 0");
        if (start_site() >= n_sites)
            throw ConfigError("initial_site " + std::to_string(start_site()) + " outside chain of " +
                              std::to_string(n_sites) + " sites");
    }
};

struct DisorderRealization {
    std::vector<double> energies;
    std::uint64_t seed = 0;
};

/// Real symmetric tridiagonal matrix: diagonal[j] = E_j, off_diagonal[j] couples j and j+1.
struct HamiltonianMatrix {
    std::vector<double> diagonal;
    std::vector<double> off_diagonal;

    std::size_t size() const { return diagonal.size(); }

    double operator()(std::size_t j, std::size_t k) const {
        if (j == k) return diagonal[j];
        if (j + 1 == k) return off_diagonal[j];
        if (k + 1 == j) return off_diagonal[k];
        return 0.0;
    }

    Eigen::MatrixXd dense() const {
        const auto n = static_cast<Eigen::Index>(size());
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            m(j, j) = diagonal[j];
            if (j + 1 < n) m(j, j + 1) = m(j + 1, j) = off_diagonal[j];
        }
        return m;
    }

    /// Largest |eigenvalue| bound (Gershgorin), used to pick stable step sizes.
    double spectral_bound() const {
        double b = 0.0;
        for (std::size_t j = 0; j < size(); ++j) {
            double r = std::abs(diagonal[j]);
            if (j > 0) r += std::abs(off_diagonal[j - 1]);
            if (j + 1 < size()) r += std::abs(off_diagonal[j]);
            b = std::max(b, r);
        }
        return b;
    }
};

/// i.i.d. Normal(0, delta^2) on-site energies; deterministic in (spec, seed).
inline DisorderRealization sample_disorder(const ChainSpec& spec, std::uint64_t seed) {
    spec.validate();
    DisorderRealization d{std::vector<double>(spec.n_sites, 0.0), seed};
    if (spec.delta == 0.0) return d;
    auto eng = make_engine(seed);
    std::normal_distribution<double> normal(0.0, spec.delta);
    for (auto& e : d.energies) e = normal(eng);
    return d;
}

inline HamiltonianMatrix build_hamiltonian(const ChainSpec& spec, const DisorderRealization& disorder) {
    spec.validate();
    if (disorder.energies.size() != spec.n_sites)
        throw DimensionMismatch("disorder has " + std::to_string(disorder.energies.size()) +
                                " energies for a chain of " + std::to_string(spec.n_sites) + " sites");
    return HamiltonianMatrix{disorder.energies, std::vector<double>(spec.n_sites - 1, spec.g)};
}

/// Instantaneous two-site Rabi amplitude squared, g^2 / (g^2 + detuning^2)
/// with detuning = (e_j - e_k) + (eps_j - eps_k).
inline double rabi_amplitude_sq(double g, double e_j, double e_k, double eps_j = 0.0, double eps_k = 0.0) {
    if (!(g > 0.0)) throw ConfigError("rabi_amplitude_sq requires g > 0");
    const double detuning = (e_j - e_k) + (eps_j - eps_k);
    return g * g / (g * g + detuning * detuning);
}

} // namespace dqt
