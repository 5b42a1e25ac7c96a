#pragma once

// Pure-state unravelings of the two master equations.
//
// On-site dephasing: each site is measured in the sz basis as a Poisson process
// of rate 2*gamma (total 2*gamma*N, site chosen uniformly). The outcome is
// "localize" (collapse onto |k>) with probability |c_k|^2, otherwise "exclude"
// (zero c_k and renormalise). Averaging P_k rho P_k + Q_k rho Q_k over events at
// that rate damps each coherence at 4*gamma, matching the master equation.
//
// Incoherent hopping: standard jump unraveling. Channel j -> k fires at
// Gamma*|c_j|^2; between jumps the state follows H - (i/2) Gamma sum_j deg(j) |j><j|
// and a jump is triggered when the squared norm falls below a uniform draw.
// A jump leaves the state exactly |k>.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dqt/dynamics.hpp"
#include "dqt/error.hpp"
#include "dqt/lattice.hpp"
#include "dqt/rng.hpp"

namespace dqt {

struct PureState {
    Eigen::VectorXcd amplitudes;

    std::size_t size() const { return static_cast<std::size_t>(amplitudes.size()); }

    static PureState localized(std::size_t n, std::size_t site) {
        PureState s{Eigen::VectorXcd::Zero(Eigen::Index(n))};
        s.amplitudes[Eigen::Index(site)] = 1.0;
        return s;
    }
    static PureState uniform(std::size_t n) {
        return {Eigen::VectorXcd::Constant(Eigen::Index(n), cplx(1.0 / std::sqrt(double(n)), 0.0))};
    }
};

enum class JumpKind { localize, exclude, hop };

inline const char* to_string(JumpKind k) {
    switch (k) {
    case JumpKind::localize: return "localize";
    case JumpKind::exclude: return "exclude";
    case JumpKind::hop: return "hop";
    }
    return "?";
}

/// For localize/exclude `site` is the measured site and `target == site`;
/// for hops the excitation moves site -> target.
struct JumpEvent {
    double time = 0.0;
    std::size_t site = 0;
    std::size_t target = 0;
    JumpKind kind = JumpKind::localize;
};

struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<std::vector<double>> site_probability_frames;
    std::vector<JumpEvent> events;
    std::uint64_t rng_seed = 0;
    double max_norm_error = 0.0;  // | sum_j |c_j|^2 - 1 | over recorded frames
};

namespace detail {

/// RK4 for d psi/dt = -i H psi - decay .* psi with tridiagonal H.
class TridiagonalStepper {
public:
    TridiagonalStepper(const HamiltonianMatrix& h, std::vector<double> decay)
        : h_(h), decay_(std::move(decay)), k_(Eigen::Index(h.size())), acc_(k_), y_(k_) {}

    void derivative(const Eigen::VectorXcd& psi, Eigen::VectorXcd& out) const {
        const auto n = psi.size();
        for (Eigen::Index j = 0; j < n; ++j) {
            cplx hpsi = h_.diagonal[j] * psi[j];
            if (j > 0) hpsi += h_.off_diagonal[j - 1] * psi[j - 1];
            if (j + 1 < n) hpsi += h_.off_diagonal[j] * psi[j + 1];
            out[j] = cplx(hpsi.imag(), -hpsi.real()) - decay_[j] * psi[j];
        }
    }

    void step(Eigen::VectorXcd& psi, double dt) {
        derivative(psi, acc_);
        y_ = psi + 0.5 * dt * acc_;
        derivative(y_, k_);
        acc_ += 2.0 * k_;
        y_ = psi + 0.5 * dt * k_;
        derivative(y_, k_);
        acc_ += 2.0 * k_;
        y_ = psi + dt * k_;
        derivative(y_, k_);
        acc_ += k_;
        psi += (dt / 6.0) * acc_;
    }

private:
    const HamiltonianMatrix& h_;
    std::vector<double> decay_;
    Eigen::VectorXcd k_, acc_, y_;
};

inline std::vector<double> normalized_probabilities(const Eigen::VectorXcd& psi, double& norm_error) {
    const double norm2 = psi.squaredNorm();
    std::vector<double> p(static_cast<std::size_t>(psi.size()));
    double total = 0.0;
    for (Eigen::Index j = 0; j < psi.size(); ++j) {
        p[std::size_t(j)] = std::norm(psi[j]) / norm2;
        total += p[std::size_t(j)];
    }
    norm_error = std::abs(total - 1.0);
    return p;
}

inline void check_inputs(const PureState& psi0, const HamiltonianMatrix& h, double rate, double t_final, double dt,
                         const std::vector<double>& sample_times) {
    if (psi0.size() != h.size()) throw DimensionMismatch("initial state does not match Hamiltonian size");
    if (!(rate >= 0.0) || !std::isfinite(rate)) throw ConfigError("jump rate must be finite and >= 0");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    validate_sample_times(sample_times, t_final);
    if (std::abs(psi0.amplitudes.squaredNorm() - 1.0) > 1e-10) throw ConfigError("initial state is not normalized");
}

// Below this squared norm a post-measurement state is treated as numerically zero.
inline constexpr double kMinBranchNorm = 1e-14;

} // namespace detail

inline TrajectoryRecord run_dephasing_trajectory(const PureState& psi0, const HamiltonianMatrix& h, double gamma,
                                                 double t_final, double dt, const std::vector<double>& sample_times,
                                                 std::uint64_t seed) {
    detail::check_inputs(psi0, h, gamma, t_final, dt, sample_times);
    const std::size_t n = h.size();
    TrajectoryRecord rec;
    rec.times = sample_times;
    rec.rng_seed = seed;

    auto eng = make_engine(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_site(0, n - 1);
    const double total_rate = 2.0 * gamma * double(n);
    std::exponential_distribution<double> wait(total_rate > 0 ? total_rate : 1.0);
    auto draw_wait = [&] { return total_rate > 0 ? wait(eng) : std::numeric_limits<double>::infinity(); };

    detail::TridiagonalStepper stepper(h, std::vector<double>(n, 0.0));
    Eigen::VectorXcd psi = psi0.amplitudes;
    double t = 0.0;
    double next_event = draw_wait();

    auto advance = [&](double step) {
        if (step <= 0.0) return;
        stepper.step(psi, step);
        psi /= psi.norm();
    };
    auto measure = [&](double when) {
        const std::size_t k = pick_site(eng);
        const auto ki = Eigen::Index(k);
        const double p = std::norm(psi[ki]);
        if (unit(eng) < p) {
            const cplx phase = psi[ki] / std::abs(psi[ki]);
            psi.setZero();
            psi[ki] = phase;
            rec.events.push_back({when, k, k, JumpKind::localize});
        } else {
            psi[ki] = 0.0;
            const double rest = psi.squaredNorm();
            if (rest < detail::kMinBranchNorm) {
                std::ostringstream msg;
                msg << "exclusion at site " << k << ", t=" << when << " left squared norm " << rest
                    << "; cannot renormalise";
                throw TrajectoryError(msg.str());
            }
            psi /= std::sqrt(rest);
            rec.events.push_back({when, k, k, JumpKind::exclude});
        }
    };

    for (double target : sample_times) {
        while (t < target) {
            const double step_end = (target - t <= dt * (1.0 + 1e-9)) ? target : t + dt;
            if (next_event <= step_end) {
                advance(next_event - t);
                t = next_event;
                measure(t);
                next_event = t + draw_wait();
                continue;
            }
            advance(step_end - t);
            t = step_end;
        }
        double err = 0.0;
        rec.site_probability_frames.push_back(detail::normalized_probabilities(psi, err));
        rec.max_norm_error = std::max(rec.max_norm_error, err);
    }
    return rec;
}

inline TrajectoryRecord run_hopping_trajectory(const PureState& psi0, const HamiltonianMatrix& h, double big_gamma,
                                               double t_final, double dt, const std::vector<double>& sample_times,
                                               std::uint64_t seed) {
    detail::check_inputs(psi0, h, big_gamma, t_final, dt, sample_times);
    const std::size_t n = h.size();
    TrajectoryRecord rec;
    rec.times = sample_times;
    rec.rng_seed = seed;

    auto eng = make_engine(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<double> outgoing(n), decay(n);
    for (std::size_t j = 0; j < n; ++j) {
        outgoing[j] = double((j > 0) + (j + 1 < n));
        decay[j] = 0.5 * big_gamma * outgoing[j];
    }
    detail::TridiagonalStepper stepper(h, decay);

    Eigen::VectorXcd psi = psi0.amplitudes;
    Eigen::VectorXcd prev(psi.size());
    double threshold = big_gamma > 0 ? unit(eng) : 0.0;
    double t = 0.0;

    // jump instant inside (0, step] where |psi|^2 crosses the threshold, by bisection
    auto locate = [&](double step) {
        double a = 0.0, b = step;
        Eigen::VectorXcd trial;
        for (int it = 0; it < 60 && (b - a) > 1e-14 * std::max(1.0, t); ++it) {
            const double mid = 0.5 * (a + b);
            trial = prev;
            stepper.step(trial, mid);
            if (trial.squaredNorm() > threshold) a = mid;
            else b = mid;
        }
        psi = prev;
        stepper.step(psi, b);
        return b;
    };
    auto jump = [&](double when) {
        // channel j -> k carries weight |c_j|^2 (times Gamma); pick j by deg(j) |c_j|^2
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += outgoing[j] * std::norm(psi[Eigen::Index(j)]);
        if (total < detail::kMinBranchNorm * psi.squaredNorm()) {
            std::ostringstream msg;
            msg << "hop at t=" << when << " found no occupied source site";
            throw TrajectoryError(msg.str());
        }
        double u = unit(eng) * total;
        std::size_t src = n - 1;
        for (std::size_t j = 0; j < n; ++j) {
            const double w = outgoing[j] * std::norm(psi[Eigen::Index(j)]);
            if (u < w) {
                src = j;
                break;
            }
            u -= w;
        }
        while (outgoing[src] == 0.0) --src;  // only reachable through round-off on the last bin
        std::size_t dst;
        if (src == 0) dst = 1;
        else if (src == n - 1) dst = n - 2;
        else dst = unit(eng) < 0.5 ? src - 1 : src + 1;
        psi.setZero();
        psi[Eigen::Index(dst)] = 1.0;
        rec.events.push_back({when, src, dst, JumpKind::hop});
        threshold = unit(eng);
    };

    for (double target : sample_times) {
        while (t < target) {
            const bool last = target - t <= dt * (1.0 + 1e-9);
            const double step = last ? target - t : dt;
            const double t_next = last ? target : t + dt;
            prev = psi;
            stepper.step(psi, step);
            if (big_gamma > 0 && psi.squaredNorm() <= threshold) {
                const double tau = locate(step);
                t = (tau >= step) ? t_next : t + tau;
                jump(t);
                continue;
            }
            t = t_next;
        }
        double err = 0.0;
        rec.site_probability_frames.push_back(detail::normalized_probabilities(psi, err));
        rec.max_norm_error = std::max(rec.max_norm_error, err);
    }
    return rec;
}

} // namespace dqt
