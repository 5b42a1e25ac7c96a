#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dqt/dynamics.hpp"
#include "dqt/error.hpp"
#include "dqt/trajectories.hpp"

namespace dqt {

inline std::vector<double> site_probabilities(const PureState& psi) {
    double err = 0.0;
    return detail::normalized_probabilities(psi.amplitudes, err);
}

inline std::vector<double> site_probabilities(const DensityMatrix& rho) {
    std::vector<double> p(rho.size());
    for (std::size_t j = 0; j < p.size(); ++j)
        p[j] = std::max(0.0, rho.elements(Eigen::Index(j), Eigen::Index(j)).real());
    return p;
}

/// sum_k p_k (k - origin)^2, in sites^2.
inline double mean_square_displacement(std::span<const double> probs, std::size_t origin) {
    double msd = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        const double d = double(k) - double(origin);
        msd += probs[k] * d * d;
    }
    return msd;
}

/// Probability held in the outermost `margin` sites at each end of the chain.
inline double boundary_mass(std::span<const double> probs, std::size_t margin) {
    if (margin == 0) throw ConfigError("boundary margin must be >= 1");
    const std::size_t n = probs.size();
    double mass = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (k < margin || k + margin >= n) mass += probs[k];
    return mass;
}

inline constexpr double kBoundaryThreshold = 1e-3;
inline constexpr std::size_t kBoundaryMargin = 5;

struct MsdSeries {
    std::vector<double> times;
    std::vector<double> msd;
    std::size_t origin = 0;
};

inline MsdSeries msd_series(const std::vector<double>& times, const std::vector<std::vector<double>>& frames,
                            std::size_t origin) {
    if (times.size() != frames.size()) throw DimensionMismatch("times and frames differ in length");
    MsdSeries s{times, {}, origin};
    s.msd.reserve(frames.size());
    for (const auto& f : frames) s.msd.push_back(mean_square_displacement(f, origin));
    return s;
}

struct FitWindow {
    double t_min = 5.0;
    double t_max = 20.0;
};

struct MsdFit {
    double c = 0.0;
    double alpha = 0.0;
    FitWindow window{};
    double rms_log_residual = 0.0;
    std::size_t n_points = 0;

    double operator()(double t) const { return c * std::pow(t, alpha); }
};

inline constexpr std::size_t kMinFitPoints = 10;

/// Least squares of log(msd) against log(t) over samples with t_min <= t <= t_max.
inline MsdFit fit_power_law(const MsdSeries& series, FitWindow window = {}) {
    if (series.times.size() != series.msd.size()) throw DimensionMismatch("MSD series has mismatched lengths");
    if (!(window.t_min > 0.0) || !(window.t_max > window.t_min))
        throw FitError("fit window needs 0 < t_min < t_max");
    std::vector<double> x, y;
    for (std::size_t i = 0; i < series.times.size(); ++i) {
        const double t = series.times[i];
        if (t < window.t_min || t > window.t_max) continue;
        if (!(series.msd[i] > 0.0))
            throw FitError("non-positive MSD " + std::to_string(series.msd[i]) + " at t=" + std::to_string(t));
        x.push_back(std::log(t));
        y.push_back(std::log(series.msd[i]));
    }
    if (x.size() < kMinFitPoints)
        throw FitError("only " + std::to_string(x.size()) + " samples in fit window, need " +
                       std::to_string(kMinFitPoints));

    const double m = double(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    MsdFit fit;
    fit.alpha = sxy / sxx;
    const double intercept = my - fit.alpha * mx;
    fit.c = std::exp(intercept);
    fit.window = window;
    fit.n_points = x.size();
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (intercept + fit.alpha * x[i]);
        ss += r * r;
    }
    fit.rms_log_residual = std::sqrt(ss / m);
    return fit;
}

} // namespace dqt
