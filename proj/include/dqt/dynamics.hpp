#pragma once

// Density-matrix evolution for the single-excitation chain under
//
//   drho/dt = -i[H, rho] + gamma * sum_j L[sz_j] rho + Gamma * sum_{j->k} L[|k><j|] rho
//
// with L[A] rho = A rho A^+ - 1/2 {A^+ A, rho}. Inside the single-excitation sector
// sz_j = +1 on |j> and -1 elsewhere, so the dephasing term damps every coherence
// rho_mn (m != n) at 4*gamma and leaves populations alone. Incoherent hopping runs
// over both directions of every bond: population flows j -> k at Gamma*rho_jj and
// rho_mn decays at Gamma/2 per channel leaving m or n.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "dqt/error.hpp"
#include "dqt/lattice.hpp"

namespace dqt {

using cplx = std::complex<double>;

enum class NoiseKind { none, onsite_dephasing, incoherent_hopping, both };

inline const char* to_string(NoiseKind k) {
    switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::onsite_dephasing: return "onsite_dephasing";
    case NoiseKind::incoherent_hopping: return "incoherent_hopping";
    case NoiseKind::both: return "both";
    }
    return "?";
}

struct NoiseModel {
    NoiseKind kind = NoiseKind::none;
    double gamma = 0.0;
    double big_gamma = 0.0;

    static NoiseModel from_rates(double gamma, double big_gamma) {
        NoiseModel m{NoiseKind::none, gamma, big_gamma};
        if (gamma > 0 && big_gamma > 0) m.kind = NoiseKind::both;
        else if (gamma > 0) m.kind = NoiseKind::onsite_dephasing;
        else if (big_gamma > 0) m.kind = NoiseKind::incoherent_hopping;
        m.validate();
        return m;
    }
    static NoiseModel from_spec(const ChainSpec& s) { return from_rates(s.gamma, s.big_gamma); }

    bool dephasing() const { return kind == NoiseKind::onsite_dephasing || kind == NoiseKind::both; }
    bool hopping() const { return kind == NoiseKind::incoherent_hopping || kind == NoiseKind::both; }
    double effective_gamma() const { return dephasing() ? gamma : 0.0; }
    double effective_big_gamma() const { return hopping() ? big_gamma : 0.0; }

    void validate() const {
        if (!(gamma >= 0.0) || !(big_gamma >= 0.0) || !std::isfinite(gamma) || !std::isfinite(big_gamma))
            throw ConfigError("noise rates must be finite and >= 0");
        const bool ok = (kind == NoiseKind::none && gamma == 0 && big_gamma == 0) ||
                        (kind == NoiseKind::onsite_dephasing && gamma > 0 && big_gamma == 0) ||
                        (kind == NoiseKind::incoherent_hopping && big_gamma > 0 && gamma == 0) ||
                        (kind == NoiseKind::both && gamma > 0 && big_gamma > 0);
        if (!ok)
            throw ConfigError(std::string("noise kind '") + to_string(kind) + "' inconsistent with rates gamma=" +
                              std::to_string(gamma) + " Gamma=" + std::to_string(big_gamma));
    }
};

struct DensityMatrix {
    Eigen::MatrixXcd elements;

    std::size_t size() const { return static_cast<std::size_t>(elements.rows()); }

    static DensityMatrix localized(std::size_t n, std::size_t site) {
        DensityMatrix r{Eigen::MatrixXcd::Zero(Eigen::Index(n), Eigen::Index(n))};
        r.elements(Eigen::Index(site), Eigen::Index(site)) = 1.0;
        return r;
    }
    static DensityMatrix from_pure(const Eigen::VectorXcd& psi) { return {psi * psi.adjoint()}; }
};

struct InvariantTolerances {
    double hermiticity = 1e-10;
    double trace = 1e-9;
    double positivity = 1e-8;
    std::size_t positivity_max_sites = 30;  // eigen-decomposition only up to this size
};

/// Worst values seen over a run. min_eigenvalue stays +inf when positivity was not checked.
struct InvariantReport {
    double max_hermiticity_error = 0.0;
    double max_trace_error = 0.0;
    double min_eigenvalue = std::numeric_limits<double>::infinity();
    std::size_t samples_checked = 0;

    void merge(const InvariantReport& o) {
        max_hermiticity_error = std::max(max_hermiticity_error, o.max_hermiticity_error);
        max_trace_error = std::max(max_trace_error, o.max_trace_error);
        min_eigenvalue = std::min(min_eigenvalue, o.min_eigenvalue);
        samples_checked += o.samples_checked;
    }
    bool within(const InvariantTolerances& tol) const {
        return max_hermiticity_error <= tol.hermiticity && max_trace_error <= tol.trace &&
               min_eigenvalue >= -tol.positivity;
    }
};

inline InvariantReport check_density_invariants(const DensityMatrix& rho, const InvariantTolerances& tol = {}) {
    InvariantReport rep;
    const auto& m = rho.elements;
    rep.max_hermiticity_error = (m - m.adjoint()).cwiseAbs().maxCoeff();
    rep.max_trace_error = std::abs(m.trace() - cplx(1.0, 0.0));
    if (rho.size() <= tol.positivity_max_sites) {
        Eigen::MatrixXcd herm = 0.5 * (m + m.adjoint());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm, Eigen::EigenvaluesOnly);
        rep.min_eigenvalue = es.eigenvalues().minCoeff();
    }
    rep.samples_checked = 1;
    return rep;
}

/// Full generator applied to an arbitrary square matrix (no Hermiticity assumed).
inline Eigen::MatrixXcd liouvillian_apply(const HamiltonianMatrix& h, const NoiseModel& model,
                                          const DensityMatrix& rho) {
    model.validate();
    const auto n = static_cast<Eigen::Index>(h.size());
    if (rho.elements.rows() != n || rho.elements.cols() != n)
        throw DimensionMismatch("density matrix is " + std::to_string(rho.elements.rows()) + "x" +
                                std::to_string(rho.elements.cols()) + ", Hamiltonian has " +
                                std::to_string(n) + " sites");
    const auto& r = rho.elements;
    const double gamma = model.effective_gamma();
    const double big_gamma = model.effective_big_gamma();

    Eigen::MatrixXcd out(n, n);
    for (Eigen::Index col = 0; col < n; ++col) {
        for (Eigen::Index row = 0; row < n; ++row) {
            cplx hr = h.diagonal[row] * r(row, col);
            if (row > 0) hr += h.off_diagonal[row - 1] * r(row - 1, col);
            if (row + 1 < n) hr += h.off_diagonal[row] * r(row + 1, col);
            cplx rh = r(row, col) * h.diagonal[col];
            if (col > 0) rh += r(row, col - 1) * h.off_diagonal[col - 1];
            if (col + 1 < n) rh += r(row, col + 1) * h.off_diagonal[col];
            out(row, col) = cplx(0.0, -1.0) * (hr - rh);
        }
    }
    if (gamma > 0) {
        for (Eigen::Index col = 0; col < n; ++col)
            for (Eigen::Index row = 0; row < n; ++row)
                if (row != col) out(row, col) -= 4.0 * gamma * r(row, col);
    }
    if (big_gamma > 0) {
        auto outgoing = [n](Eigen::Index j) { return double((j > 0) + (j + 1 < n)); };
        for (Eigen::Index col = 0; col < n; ++col)
            for (Eigen::Index row = 0; row < n; ++row)
                out(row, col) -= 0.5 * big_gamma * (outgoing(row) + outgoing(col)) * r(row, col);
        for (Eigen::Index k = 0; k < n; ++k) {
            cplx in = 0.0;
            if (k > 0) in += r(k - 1, k - 1);
            if (k + 1 < n) in += r(k + 1, k + 1);
            out(k, k) += big_gamma * in;
        }
    }
    return out;
}

namespace detail {

/// Generator restricted to the lower triangle (row >= col) of a Hermitian matrix
/// stored column-major with leading dimension n. Only rows/cols in [lo, hi] are
/// written; entries outside that window must be zero.
class LowerTriangleGenerator {
public:
    LowerTriangleGenerator(const HamiltonianMatrix& h, const NoiseModel& model)
        : n_(h.size()), energy_(h.diagonal), left_(n_, 0.0), right_(n_, 0.0), decay_(n_, 0.0),
          gamma_(model.effective_gamma()), big_gamma_(model.effective_big_gamma()) {
        for (std::size_t j = 0; j + 1 < n_; ++j) {
            right_[j] = h.off_diagonal[j];
            left_[j + 1] = h.off_diagonal[j];
        }
        for (std::size_t j = 0; j < n_; ++j) {
            const double outgoing = double((j > 0) + (j + 1 < n_));
            decay_[j] = 0.5 * big_gamma_ * outgoing;
        }
    }

    void apply(const cplx* r, cplx* out, std::size_t lo, std::size_t hi) const {
        const std::size_t n = n_;
        const double coh = 4.0 * gamma_;
        for (std::size_t col = lo; col <= hi; ++col) {
            const cplx* c = r + col * n;
            const cplx* cl = col > 0 ? c - n : nullptr;
            const cplx* cr = col + 1 < n ? c + n : nullptr;
            cplx* o = out + col * n;

            // diagonal: the commutator only needs the two adjacent lower entries
            {
                double comm = 0.0;
                if (col > 0) comm -= 2.0 * left_[col] * cl[col].imag();  // rho(col, col-1)
                if (col + 1 < n) comm += 2.0 * right_[col] * c[col + 1].imag();  // rho(col+1, col)
                // -i[H,rho]_kk = -2 t_{k-1} Im rho_{k,k-1} + 2 t_k Im rho_{k+1,k}
                double pop = comm - 2.0 * decay_[col] * c[col].real();
                if (big_gamma_ > 0) {
                    if (col > 0) pop += big_gamma_ * r[(col - 1) * n + col - 1].real();
                    if (col + 1 < n) pop += big_gamma_ * r[(col + 1) * n + col + 1].real();
                }
                o[col] = cplx(pop, 0.0);
            }

            const double ec = energy_[col];
            const double tl = left_[col];
            const double tr = right_[col];
            const double dc = decay_[col] + coh;
            const std::size_t last = std::min(hi, n - 2);
            for (std::size_t row = col + 1; row <= last; ++row) {
                const cplx v = c[row];
                cplx d = (energy_[row] - ec) * v + left_[row] * c[row - 1] + right_[row] * c[row + 1];
                if (cl) d -= tl * cl[row];
                d -= tr * cr[row];
                // -i * d
                o[row] = cplx(d.imag(), -d.real()) - (decay_[row] + dc) * v;
            }
            if (hi == n - 1 && col + 1 <= n - 1) {
                const std::size_t row = n - 1;
                const cplx v = c[row];
                cplx d = (energy_[row] - ec) * v + left_[row] * c[row - 1];
                if (cl) d -= tl * cl[row];
                if (cr) d -= tr * cr[row];
                o[row] = cplx(d.imag(), -d.real()) - (decay_[row] + dc) * v;
            }
        }
    }

private:
    std::size_t n_;
    std::vector<double> energy_, left_, right_, decay_;
    double gamma_, big_gamma_;
};

inline void mirror_lower(Eigen::MatrixXcd& m) {
    const auto n = m.rows();
    for (Eigen::Index col = 0; col < n; ++col) {
        m(col, col) = cplx(m(col, col).real(), 0.0);
        for (Eigen::Index row = col + 1; row < n; ++row) m(col, row) = std::conj(m(row, col));
    }
}

} // namespace detail

struct EvolveOptions {
    bool store_states = true;
    bool check_invariants = true;
    InvariantTolerances tolerances{};
    /// Sites whose population stays below this are left out of the update window.
    /// Coherences touching them are bounded by sqrt(tolerance). 0 disables windowing.
    double support_tolerance = 1e-28;
};

struct DensityTrajectory {
    std::vector<double> times;
    std::vector<DensityMatrix> states;             // empty unless store_states
    std::vector<std::vector<double>> populations;  // diag rho at each sample
    ChainSpec spec{};
    std::uint64_t disorder_seed = 0;
    InvariantReport invariants{};
    std::size_t steps = 0;
};

/// 0.01 / max(g, gamma, Gamma, Delta, 1)
inline double default_time_step(const ChainSpec& s) {
    return 0.01 / std::max({s.g, s.gamma, s.big_gamma, s.delta, 1.0});
}

/// Same bound inferred from a Hamiltonian (disorder width taken as the RMS spread of E_j).
inline double default_time_step(const HamiltonianMatrix& h, const NoiseModel& model) {
    double g = 0.0;
    for (double t : h.off_diagonal) g = std::max(g, std::abs(t));
    double mean = 0.0;
    for (double e : h.diagonal) mean += e;
    mean /= double(h.size());
    double var = 0.0;
    for (double e : h.diagonal) var += (e - mean) * (e - mean);
    const double spread = std::sqrt(var / double(h.size()));
    return 0.01 / std::max({g, model.effective_gamma(), model.effective_big_gamma(), spread, 1.0});
}

inline std::vector<double> uniform_grid(double t_final, double spacing) {
    if (!(t_final > 0) || !(spacing > 0)) throw ConfigError("uniform_grid needs t_final > 0 and spacing > 0");
    std::vector<double> out;
    const auto count = static_cast<std::size_t>(std::llround(t_final / spacing));
    for (std::size_t i = 0; i <= count; ++i) out.push_back(std::min(t_final, double(i) * spacing));
    if (out.back() < t_final * (1 - 1e-12)) out.push_back(t_final);
    return out;
}

inline void validate_sample_times(const std::vector<double>& sample_times, double t_final) {
    if (sample_times.empty()) throw ConfigError("sample_times must not be empty");
    double prev = -1.0;
    for (double t : sample_times) {
        if (!(t >= 0.0) || t <= prev || t > t_final * (1 + 1e-12))
            throw ConfigError("sample_times must be increasing and within [0, t_final]");
        prev = t;
    }
}

/// Fixed-step RK4 integration of the master equation. Steps are shortened only
/// to land exactly on sample times.
inline DensityTrajectory evolve_density_matrix(const DensityMatrix& rho0, const HamiltonianMatrix& h,
                                               const NoiseModel& model, double t_final, double dt,
                                               const std::vector<double>& sample_times,
                                               const EvolveOptions& opts = {}) {
    model.validate();
    const std::size_t n = h.size();
    if (rho0.size() != n || rho0.elements.cols() != Eigen::Index(n))
        throw DimensionMismatch("initial density matrix does not match Hamiltonian size");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    validate_sample_times(sample_times, t_final);

    DensityTrajectory out;
    out.times = sample_times;

    Eigen::MatrixXcd rho = rho0.elements;
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(Eigen::Index(n), Eigen::Index(n));
    Eigen::MatrixXcd k = y, acc = y;
    // the upper triangle is never read; zero it so windowed regions start clean
    for (Eigen::Index col = 1; col < Eigen::Index(n); ++col)
        for (Eigen::Index row = 0; row < col; ++row) rho(row, col) = 0.0;

    // window [lo, hi]: covers every site with population above support_tolerance
    const bool windowed = opts.support_tolerance > 0.0;
    constexpr std::size_t guard = 4;
    constexpr std::size_t grow = 16;
    std::size_t lo = 0, hi = n - 1;
    if (windowed) {
        const Eigen::VectorXd touch =
            rho0.elements.cwiseAbs().rowwise().sum() + rho0.elements.cwiseAbs().colwise().sum().transpose();
        std::size_t first = n, lastnz = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (touch[Eigen::Index(j)] > 0.0) {
                first = std::min(first, j);
                lastnz = std::max(lastnz, j);
            }
        }
        if (first == n) throw InvariantViolation("initial density matrix is zero");
        // every row touching a nonzero entry must be inside the window
        lo = first > grow ? first - grow : 0;
        hi = std::min(n - 1, lastnz + grow);
    }

    auto widen = [&]() {
        if (!windowed) return;
        double lo_mass = 0.0, hi_mass = 0.0;
        for (std::size_t j = lo; j < std::min(hi + 1, lo + guard); ++j)
            lo_mass = std::max(lo_mass, std::abs(rho(Eigen::Index(j), Eigen::Index(j)).real()));
        for (std::size_t j = hi + 1 > guard ? std::max(lo, hi + 1 - guard) : lo; j <= hi; ++j)
            hi_mass = std::max(hi_mass, std::abs(rho(Eigen::Index(j), Eigen::Index(j)).real()));
        if (lo > 0 && lo_mass > opts.support_tolerance) lo = lo > grow ? lo - grow : 0;
        if (hi < n - 1 && hi_mass > opts.support_tolerance) hi = std::min(n - 1, hi + grow);
    };

    const detail::LowerTriangleGenerator gen(h, model);
    auto combine = [&](Eigen::MatrixXcd& dst, const Eigen::MatrixXcd& base, const Eigen::MatrixXcd& inc,
                       double a) {
        for (std::size_t col = lo; col <= hi; ++col) {
            const cplx* b = base.data() + col * n;
            const cplx* v = inc.data() + col * n;
            cplx* d = dst.data() + col * n;
            for (std::size_t row = col; row <= hi; ++row) d[row] = b[row] + a * v[row];
        }
    };
    auto accumulate = [&](double a) {
        for (std::size_t col = lo; col <= hi; ++col) {
            const cplx* v = k.data() + col * n;
            cplx* d = acc.data() + col * n;
            for (std::size_t row = col; row <= hi; ++row) d[row] += a * v[row];
        }
    };
    auto rk4_step = [&](double step) {
        gen.apply(rho.data(), acc.data(), lo, hi);  // acc = k1
        combine(y, rho, acc, 0.5 * step);
        gen.apply(y.data(), k.data(), lo, hi);
        accumulate(2.0);
        combine(y, rho, k, 0.5 * step);
        gen.apply(y.data(), k.data(), lo, hi);
        accumulate(2.0);
        combine(y, rho, k, step);
        gen.apply(y.data(), k.data(), lo, hi);
        accumulate(1.0);
        combine(rho, rho, acc, step / 6.0);
        ++out.steps;
        widen();
    };

    auto record = [&](double t) {
        DensityMatrix full{rho};
        detail::mirror_lower(full.elements);
        std::vector<double> pop(n);
        for (std::size_t j = 0; j < n; ++j) pop[j] = full.elements(Eigen::Index(j), Eigen::Index(j)).real();
        if (opts.check_invariants) {
            // the integrator only stores the lower triangle, so judge Hermiticity on
            // the anti-Hermitian part of the diagonal plus the raw trace
            InvariantReport rep = check_density_invariants(full, opts.tolerances);
            double diag_imag = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                diag_imag = std::max(diag_imag, std::abs(rho(Eigen::Index(j), Eigen::Index(j)).imag()));
            rep.max_hermiticity_error = std::max(rep.max_hermiticity_error, 2.0 * diag_imag);
            out.invariants.merge(rep);
            if (!rep.within(opts.tolerances)) {
                std::ostringstream msg;
                msg << "density matrix invariant violated at t=" << t << " (trace error "
                    << rep.max_trace_error << ", hermiticity " << rep.max_hermiticity_error
                    << ", min eigenvalue " << rep.min_eigenvalue << "); dt=" << dt << " is probably too large";
                throw InvariantViolation(msg.str());
            }
        }
        out.populations.push_back(std::move(pop));
        if (opts.store_states) out.states.push_back(std::move(full));
    };

    double t = 0.0;
    for (double target : sample_times) {
        while (t < target) {
            double step = target - t;
            if (step > dt * (1.0 + 1e-9)) step = dt;
            rk4_step(step);
            t = (step == target - t) ? target : t + step;
        }
        record(target);
    }
    return out;
}

/// Column-stacked Liouvillian S with d vec(rho)/dt = S vec(rho), built from the
/// generic Lindblad form with explicit jump operators. Test oracle; N <= 8.
inline Eigen::MatrixXcd dense_superoperator(const HamiltonianMatrix& h, const NoiseModel& model) {
    model.validate();
    const auto n = static_cast<Eigen::Index>(h.size());
    if (n > 8) throw ConfigError("dense_superoperator is limited to N <= 8 (got " + std::to_string(n) + ")");
    const Eigen::MatrixXcd hm = h.dense().cast<cplx>();
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(n, n);

    auto kron = [](const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
        Eigen::MatrixXcd r(a.rows() * b.rows(), a.cols() * b.cols());
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j)
                r.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        return r;
    };

    Eigen::MatrixXcd s = cplx(0.0, -1.0) * (kron(id, hm) - kron(hm.transpose(), id));
    auto add_channel = [&](double rate, const Eigen::MatrixXcd& l) {
        const Eigen::MatrixXcd ldl = l.adjoint() * l;
        s += rate * (kron(l.conjugate(), l) - 0.5 * kron(id, ldl) - 0.5 * kron(ldl.transpose(), id));
    };
    if (model.dephasing()) {
        for (Eigen::Index j = 0; j < n; ++j) {
            Eigen::MatrixXcd sz = -id;
            sz(j, j) = 1.0;
            add_channel(model.gamma, sz);
        }
    }
    if (model.hopping()) {
        for (Eigen::Index j = 0; j + 1 < n; ++j) {
            Eigen::MatrixXcd fwd = Eigen::MatrixXcd::Zero(n, n), bwd = fwd;
            fwd(j + 1, j) = 1.0;  // |j+1><j|
            bwd(j, j + 1) = 1.0;
            add_channel(model.big_gamma, fwd);
            add_channel(model.big_gamma, bwd);
        }
    }
    return s;
}

/// exp(S t) vec(rho0), via Eigen's matrix exponential.
inline DensityMatrix propagate_superoperator(const Eigen::MatrixXcd& s, const DensityMatrix& rho0, double t) {
    const auto n = rho0.elements.rows();
    if (s.rows() != n * n) throw DimensionMismatch("superoperator does not match density matrix");
    Eigen::MatrixXcd st = s * t;
    const Eigen::MatrixXcd prop = st.exp();
    const Eigen::VectorXcd v = Eigen::Map<const Eigen::VectorXcd>(rho0.elements.data(), n * n);
    const Eigen::VectorXcd w = prop * v;
    return DensityMatrix{Eigen::Map<const Eigen::MatrixXcd>(w.data(), n, n)};
}

} // namespace dqt
