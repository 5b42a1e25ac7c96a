#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dqt/observables.hpp"

using namespace dqt;

TEST(SiteProbabilities, LocalizedAndUniformStates) {
    const auto p = site_probabilities(PureState::localized(7, 4));
    for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(p[j], j == 4 ? 1.0 : 0.0);
    for (double v : site_probabilities(PureState::uniform(8))) EXPECT_NEAR(v, 1.0 / 8.0, 1e-15);
}

TEST(SiteProbabilities, MixedDensityMatrix) {
    DensityMatrix rho{Eigen::MatrixXcd::Zero(5, 5)};
    rho.elements(0, 0) = 0.5;
    rho.elements(1, 1) = 0.5;
    const auto p = site_probabilities(rho);
    EXPECT_EQ(p, (std::vector<double>{0.5, 0.5, 0.0, 0.0, 0.0}));
}

TEST(MeanSquareDisplacement, SimpleDistributions) {
    std::vector<double> p(11, 0.0);
    p[5] = 1.0;
    EXPECT_EQ(mean_square_displacement(p, 5), 0.0);
    p[5] = 0.0;
    p[4] = p[6] = 0.5;
    EXPECT_DOUBLE_EQ(mean_square_displacement(p, 5), 1.0);
}

TEST(MeanSquareDisplacement, BoundedByChainLength) {
    std::mt19937_64 eng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + trial % 40;
        std::vector<double> p(n);
        double total = 0.0;
        for (auto& v : p) total += (v = u(eng) * u(eng));
        for (auto& v : p) v /= total;
        const std::size_t origin = std::size_t(u(eng) * double(n)) % n;
        EXPECT_LE(mean_square_displacement(p, origin), double((n - 1) * (n - 1)) + 1e-12);
    }
    // the bound is attained by an end-to-end distance
    std::vector<double> end(9, 0.0);
    end[8] = 1.0;
    EXPECT_EQ(mean_square_displacement(end, 0), 64.0);
}

TEST(MeanSquareDisplacement, RandomWalkOracle) {
    // continuous-time walk, total hop rate 2*Gamma, 10^4 walkers
    const double big_gamma = 1.5, t = 4.0;
    std::mt19937_64 eng(11);
    std::exponential_distribution<double> wait(2.0 * big_gamma);
    std::bernoulli_distribution coin(0.5);
    const std::size_t walkers = 10000, n = 201, origin = 100;
    std::vector<double> p(n, 0.0);
    for (std::size_t w = 0; w < walkers; ++w) {
        long x = 0;
        for (double s = wait(eng); s < t; s += wait(eng)) x += coin(eng) ? 1 : -1;
        p[std::size_t(long(origin) + x)] += 1.0 / double(walkers);
    }
    EXPECT_NEAR(mean_square_displacement(p, origin), 2.0 * big_gamma * t, 0.02 * 2.0 * big_gamma * t);
}

TEST(BoundaryMass, Examples) {
    std::vector<double> centre(101, 0.0);
    centre[50] = 1.0;
    EXPECT_EQ(boundary_mass(centre, 5), 0.0);
    EXPECT_NEAR(boundary_mass(std::vector<double>(100, 0.01), 5), 0.1, 1e-12);
    EXPECT_THROW(boundary_mass(centre, 0), ConfigError);
}

TEST(BoundaryMass, ShortChainCountsEachSiteOnce) {
    EXPECT_NEAR(boundary_mass(std::vector<double>(6, 1.0 / 6.0), 5), 1.0, 1e-12);
}

namespace {

MsdSeries power_series(double c, double alpha, double t_max = 20.0, double dt = 0.25) {
    MsdSeries s;
    for (double t = 0.0; t <= t_max + 1e-12; t += dt) {
        s.times.push_back(t);
        s.msd.push_back(c * std::pow(t, alpha));
    }
    return s;
}

} // namespace

TEST(FitPowerLaw, RecoversExactPowerLaw) {
    const auto fit = fit_power_law(power_series(3.0, 1.5));
    EXPECT_NEAR(fit.c, 3.0, 1e-10);
    EXPECT_NEAR(fit.alpha, 1.5, 1e-10);
    EXPECT_LT(fit.rms_log_residual, 1e-12);
    EXPECT_EQ(fit.n_points, 61u);  // 5, 5.25, ..., 20 inclusive
    EXPECT_NEAR(fit(2.0), 3.0 * std::pow(2.0, 1.5), 1e-9);
}

TEST(FitPowerLaw, ScaleCovariance) {
    auto s = power_series(1.0, 1.0);
    for (std::size_t i = 0; i < s.msd.size(); ++i) s.msd[i] *= 1.0 + 0.1 * std::sin(double(i));
    const auto base = fit_power_law(s);
    auto scaled = s;
    for (auto& v : scaled.msd) v *= 7.5;
    const auto fit = fit_power_law(scaled);
    EXPECT_NEAR(fit.c, 7.5 * base.c, 1e-10 * fit.c);
    EXPECT_NEAR(fit.alpha, base.alpha, 1e-12);
    EXPECT_NEAR(fit.rms_log_residual, base.rms_log_residual, 1e-12);
}

TEST(FitPowerLaw, TimeRescalingCovariance) {
    auto s = power_series(2.0, 1.3);
    for (std::size_t i = 0; i < s.msd.size(); ++i) s.msd[i] *= 1.0 + 0.05 * std::cos(3.0 * double(i));
    const auto base = fit_power_law(s, {5.0, 20.0});
    const double lambda = 2.0;
    auto stretched = s;
    for (auto& t : stretched.times) t *= lambda;
    const auto fit = fit_power_law(stretched, {5.0 * lambda, 20.0 * lambda});
    EXPECT_NEAR(fit.alpha, base.alpha, 1e-10);
    EXPECT_NEAR(fit.c, base.c * std::pow(lambda, -base.alpha), 1e-10 * base.c);
}

TEST(FitPowerLaw, StoredResidualMatchesRecomputation) {
    auto s = power_series(0.4, 0.9);
    for (std::size_t i = 0; i < s.msd.size(); ++i) s.msd[i] *= std::exp(0.02 * std::sin(1.7 * double(i)));
    const auto fit = fit_power_law(s);
    double ss = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < s.times.size(); ++i)
        if (s.times[i] >= 5.0 && s.times[i] <= 20.0) {
            const double r = std::log(s.msd[i]) - std::log(fit(s.times[i]));
            ss += r * r;
            ++m;
        }
    EXPECT_NEAR(fit.rms_log_residual, std::sqrt(ss / double(m)), 1e-12);
}

TEST(FitPowerLaw, Errors) {
    auto s = power_series(1.0, 1.0);
    s.msd[30] = 0.0;  // t = 7.5
    EXPECT_THROW(fit_power_law(s), FitError);
    EXPECT_THROW(fit_power_law(power_series(1.0, 1.0, 20.0, 2.0)), FitError);  // 8 points in window
    EXPECT_THROW(fit_power_law(power_series(1.0, 1.0), {10.0, 5.0}), FitError);
    EXPECT_THROW(fit_power_law(power_series(1.0, 1.0), {0.0, 5.0}), FitError);
    auto ragged = power_series(1.0, 1.0);
    ragged.msd.pop_back();
    EXPECT_THROW(fit_power_law(ragged), DimensionMismatch);
}

TEST(FitPowerLaw, SamplesOutsideWindowAreIgnored) {
    auto s = power_series(2.0, 1.0);
    for (std::size_t i = 0; i < s.times.size(); ++i)
        if (s.times[i] < 5.0) s.msd[i] = 0.0;
    const auto fit = fit_power_law(s);
    EXPECT_NEAR(fit.c, 2.0, 1e-10);
}

TEST(MsdSeriesTest, FromFrames) {
    const std::vector<double> times{0.0, 1.0};
    const std::vector<std::vector<double>> frames{{0, 1, 0}, {0.5, 0, 0.5}};
    const auto s = msd_series(times, frames, 1);
    EXPECT_EQ(s.msd, (std::vector<double>{0.0, 1.0}));
    EXPECT_THROW(msd_series({0.0}, frames, 1), DimensionMismatch);
}
