#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "dqt/ensemble.hpp"

using namespace dqt;

namespace {

SweepConfig small_config() {
    SweepConfig cfg;
    cfg.base.n_sites = 41;
    cfg.n_disorder = 4;
    cfg.t_final = 20.0;
    cfg.sample_spacing = 0.5;
    cfg.threads = 1;
    return cfg;
}

void expect_identical(const PointResult& a, const PointResult& b) {
    EXPECT_EQ(a.point, b.point);
    EXPECT_EQ(a.mean_frames, b.mean_frames);
    EXPECT_EQ(a.msd.msd, b.msd.msd);
    ASSERT_EQ(a.fit.has_value(), b.fit.has_value());
    if (a.fit) {
        EXPECT_EQ(a.fit->c, b.fit->c);
        EXPECT_EQ(a.fit->alpha, b.fit->alpha);
    }
    EXPECT_EQ(a.valid, b.valid);
    EXPECT_EQ(a.used, b.used);
}

RealizationOutcome fake_outcome(bool ok, bool tripped, std::size_t samples, std::size_t n, double weight) {
    RealizationOutcome o;
    o.ok = ok;
    o.boundary_tripped = tripped;
    if (!ok) o.error = "synthetic failure";
    o.frames.assign(samples, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < samples; ++i) {
        o.frames[i][n / 2] = 1.0 - weight;
        o.frames[i][n / 2 + 1] = weight;
    }
    return o;
}

} // namespace

TEST(Seeds, DisorderIgnoresRatesTrajectoryUsesValues) {
    EXPECT_EQ(disorder_seed(1, 3), disorder_seed(1, 3));
    EXPECT_NE(disorder_seed(1, 3), disorder_seed(1, 4));
    EXPECT_NE(disorder_seed(1, 3), disorder_seed(2, 3));
    const GridPoint a{1.0, 0.5, 0.0}, b{1.0, 0.0, 0.5};
    EXPECT_NE(trajectory_seed(7, a, 0, 0), trajectory_seed(7, b, 0, 0));
    EXPECT_EQ(trajectory_seed(7, GridPoint{0.0, 1.0, 0.0}, 2, 3), trajectory_seed(7, GridPoint{-0.0, 1.0, 0.0}, 2, 3));
    EXPECT_NE(trajectory_seed(7, a, 0, 0), trajectory_seed(7, a, 0, 1));
    EXPECT_NE(trajectory_seed(7, a, 0, 0), trajectory_seed(7, a, 1, 0));
}

TEST(SweepConfigTest, Validation) {
    auto cfg = small_config();
    EXPECT_THROW(cfg.validate(), ConfigError);  // empty grid
    cfg.grid = {{0.0, 1.0, 0.0}};
    EXPECT_NO_THROW(cfg.validate());
    auto bad = cfg;
    bad.n_disorder = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = cfg;
    bad.grid = {{-1.0, 0.0, 0.0}};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = cfg;
    bad.n_trajectories = 5;
    bad.grid = {{0.0, 1.0, 1.0}};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = cfg;
    bad.sample_times = {0.0, 30.0};
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Sweep, SinglePointGridEqualsRunPoint) {
    auto cfg = small_config();
    cfg.grid = {{1.0, 1.0, 0.0}};
    const auto sweep = run_sweep(cfg);
    ASSERT_EQ(sweep.points.size(), 1u);
    expect_identical(sweep.points[0], run_point(cfg, cfg.grid[0]));
    EXPECT_TRUE(sweep.points[0].valid);
    EXPECT_EQ(sweep.points[0].used, 4u);
}

TEST(Sweep, GridOrderDoesNotChangeResults) {
    auto cfg = small_config();
    cfg.grid = {{1.0, 1.0, 0.0}, {0.5, 0.0, 1.0}, {2.0, 2.0, 0.0}};
    const auto a = run_sweep(cfg);
    auto permuted = cfg;
    permuted.grid = {cfg.grid[2], cfg.grid[0], cfg.grid[1]};
    const auto b = run_sweep(permuted);
    expect_identical(a.points[0], b.points[1]);
    expect_identical(a.points[1], b.points[2]);
    expect_identical(a.points[2], b.points[0]);
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
    auto cfg = small_config();
    cfg.grid = {{1.0, 0.5, 0.0}, {1.0, 0.0, 0.5}};
    cfg.n_trajectories = 0;
    const auto serial = run_sweep(cfg);
    cfg.threads = 3;
    const auto parallel = run_sweep(cfg);
    for (std::size_t i = 0; i < 2; ++i) expect_identical(serial.points[i], parallel.points[i]);

    cfg.n_trajectories = 20;
    cfg.n_disorder = 2;
    cfg.threads = 1;
    const auto traj_serial = run_sweep(cfg);
    cfg.threads = 4;
    const auto traj_parallel = run_sweep(cfg);
    for (std::size_t i = 0; i < 2; ++i) expect_identical(traj_serial.points[i], traj_parallel.points[i]);
}

TEST(Sweep, CleanMasterEquationPointUsesOneRealization) {
    auto cfg = small_config();
    cfg.grid = {{0.0, 1.0, 0.0}};
    cfg.n_disorder = 50;
    const auto res = run_point(cfg, cfg.grid[0]);
    EXPECT_EQ(res.realizations, 1u);
    EXPECT_EQ(effective_realizations(cfg, {0.0, 1.0, 0.0}), 1u);
    EXPECT_EQ(effective_realizations(cfg, {0.1, 1.0, 0.0}), 50u);
    cfg.n_trajectories = 3;
    EXPECT_EQ(effective_realizations(cfg, {0.0, 1.0, 0.0}), 50u);
}

TEST(Sweep, SharedDisorderAcrossRates) {
    auto cfg = small_config();
    cfg.n_disorder = 1;
    cfg.t_final = 1.0;
    cfg.sample_times = {0.0, 1.0};
    // no noise and infinitesimal noise see the same energies, so the frames agree closely
    const auto a = run_realization(cfg, {2.0, 0.0, 0.0}, 0);
    const auto b = run_realization(cfg, {2.0, 1e-9, 0.0}, 0);
    ASSERT_TRUE(a.ok && b.ok);
    for (std::size_t j = 0; j < 41; ++j) EXPECT_NEAR(a.frames[1][j], b.frames[1][j], 1e-8);
}

TEST(Sweep, TrajectoryBatchesTrackMasterEquation) {
    auto cfg = small_config();
    cfg.base.n_sites = 21;
    cfg.n_disorder = 1;
    cfg.t_final = 5.0;
    cfg.sample_times = {5.0};
    const GridPoint p{1.0, 1.0, 0.0};
    const auto me = run_realization(cfg, p, 0);
    cfg.n_trajectories = 1000;
    const auto batch = run_realization(cfg, p, 0);
    ASSERT_TRUE(me.ok && batch.ok);
    EXPECT_EQ(batch.trajectories, 1000u);
    EXPECT_GT(batch.events, 1000u * 100u);
    for (std::size_t j = 0; j < 21; ++j) {
        const double q = me.frames[0][j];
        // binomial-scale bound on a mean of 1000 values in [0, 1]
        EXPECT_NEAR(batch.frames[0][j], q, 5.0 * std::sqrt(std::max(q * (1 - q), 1e-4) / 1000.0)) << j;
    }
}

TEST(Sweep, BoundaryTripsExcludeRealizations) {
    auto cfg = small_config();
    cfg.base.n_sites = 15;  // a ballistic front reaches the ends long before t = 20
    cfg.dt = 0.0025;  // coarser RK4 steps push this pure state's spectrum past -1e-8 by t = 20
    cfg.grid = {{0.0, 0.0, 0.0}};
    const auto res = run_point(cfg, cfg.grid[0]);
    EXPECT_EQ(res.boundary_tripped, 1u);
    EXPECT_TRUE(res.boundary_flag());
    EXPECT_EQ(res.used, 0u);
    EXPECT_FALSE(res.valid);
    EXPECT_FALSE(res.fit.has_value());
    EXPECT_FALSE(res.fit_error.empty());
    EXPECT_GT(res.max_boundary_mass, cfg.boundary_threshold);
}

TEST(Sweep, EngineFailuresAreRecordedNotThrown) {
    auto cfg = small_config();
    cfg.base.n_sites = 8;
    cfg.dt = 1.0;  // far too coarse: RK4 loses positivity
    cfg.grid = {{0.5, 0.0, 10.0}, {0.5, 0.0, 0.0}};
    cfg.max_excluded_fraction = 0.1;
    SweepResult res;
    ASSERT_NO_THROW(res = run_sweep(cfg));
    EXPECT_EQ(res.points[0].failed, 4u);
    EXPECT_FALSE(res.points[0].valid);
    ASSERT_EQ(res.points[0].failures.size(), 4u);
    EXPECT_NE(res.points[0].failures[0].find("realization 0"), std::string::npos);
}

TEST(ReducePoint, ExcludedFractionPolicy) {
    auto cfg = small_config();
    cfg.sample_spacing = 1.0;
    cfg.grid = {{1.0, 0.0, 0.0}};
    const auto samples = cfg.resolved_sample_times().size();
    std::vector<RealizationOutcome> outs;
    for (int r = 0; r < 10; ++r) outs.push_back(fake_outcome(true, false, samples, 41, 0.5));
    // the MSD here is constant in time, so the fit itself succeeds with alpha = 0
    auto res = reduce_point(cfg, cfg.grid[0], outs);
    EXPECT_TRUE(res.valid);
    ASSERT_TRUE(res.fit.has_value());
    EXPECT_NEAR(res.fit->c, 0.5, 1e-12);
    EXPECT_NEAR(res.fit->alpha, 0.0, 1e-12);

    outs[3] = fake_outcome(false, false, samples, 41, 0.5);
    res = reduce_point(cfg, cfg.grid[0], outs);
    EXPECT_TRUE(res.valid) << "10% excluded is still acceptable";
    EXPECT_EQ(res.used, 9u);

    outs[7] = fake_outcome(true, true, samples, 41, 0.9);
    res = reduce_point(cfg, cfg.grid[0], outs);
    EXPECT_FALSE(res.valid);
    EXPECT_EQ(res.failed, 1u);
    EXPECT_EQ(res.boundary_tripped, 1u);
    // the tripped realization does not enter the mean
    EXPECT_NEAR(res.mean_frames[0][21], 0.5, 1e-15);
}

TEST(ParallelFor, CoversRangeAndPropagatesErrors) {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
    EXPECT_THROW(parallel_for(10, 3,
                              [](std::size_t i) {
                                  if (i == 6) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
    parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(SweepPhysics, DisorderSlowsDephasedTransport) {
    SweepConfig cfg;
    cfg.base.n_sites = 101;
    cfg.n_disorder = 6;
    cfg.threads = 1;
    for (double gamma : {0.1, 1.0, 10.0}) {
        cfg.grid = {{0.0, gamma, 0.0}, {10.0, gamma, 0.0}};
        const auto res = run_sweep(cfg);
        ASSERT_TRUE(res.points[0].valid && res.points[1].valid) << gamma;
        EXPECT_LE(res.points[1].fit->c, res.points[0].fit->c) << gamma;
        EXPECT_LE(res.points[1].fit->alpha, res.points[0].fit->alpha) << gamma;
    }
}
