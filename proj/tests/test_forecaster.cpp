#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <type_traits>
#include <vector>

#include "dli/dynamics.hpp"
#include "dli/forecaster.hpp"
#include "dli/spectral.hpp"
#include "support/oracles.hpp"

using namespace dli;

namespace {

SamplePairs random_linear_pairs(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    SamplePairs p;
    p.x = oracle::random_points(n, 1, rng);
    p.y.resize(n, 1);
    for (Index i = 0; i < n; ++i) p.y(i, 0) = 0.5 + 0.7 * p.x(i, 0) + 0.3 * normal(rng);
    return p;
}

SamplePairs ou_pairs(Index n, std::uint64_t seed) {
    SeededRng rng(seed);
    SamplePairs p = ou_sample_pairs(OUParams{}, n, rng);
    p.initial = sample_mixture(GaussianMixture({{0.5, -2.0, 0.04}, {0.5, 2.0, 0.04}}), 200, rng);
    return p;
}

double max_mass_error(const ForecastTrajectory& traj) {
    return (traj.weights.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

} // namespace

static_assert(!std::is_constructible_v<DliPropagator<GaussianKernel>, KoopmanFit<GaussianKernel>&&>,
              "a propagator must not bind to a temporary fit");

TEST(DliForecast, MassIsConservedForEveryEstimator) {
    // Roundoff in the mass grows with the weights, so the fits here are
    // regularized enough to have a stable deflated operator.
    const SamplePairs p = ou_pairs(80, 61);
    const PreparedData<GaussianKernel> prep(p, GaussianKernel(1.0), true);
    for (const auto& f : {fit_krr(prep, 1e-2), fit_pcr(prep, 3), fit_rrr(prep, 10, 1e-2), fit_rrr(prep, 5, 1e-2)}) {
        ASSERT_LT(spectral_radius(evolution_operator(f)), 1.0);
        const ForecastTrajectory traj = dli_forecast(f, p.initial, 3000);
        EXPECT_EQ(traj.horizon(), 3000);
        EXPECT_LE(max_mass_error(traj), 1e-10) << to_string(f.kind);
    }
}

TEST(DliForecast, OutputSampleAsInitialStaysUniform) {
    // With z = y the initial embedding equals K_xy 1_n and the deviation is 0.
    std::mt19937_64 rng(62);
    SamplePairs p = random_linear_pairs(15, rng);
    p.initial = p.y;
    const auto f = fit_rrr(p, GaussianKernel(0.9), 4, 1e-3, true);
    const ForecastTrajectory traj = dli_forecast(f, p.initial, 20);
    EXPECT_LE((traj.weights.array() - 1.0 / 15.0).abs().maxCoeff(), 1e-13);
}

TEST(DliForecast, StableFitConvergesToUniform) {
    const SamplePairs p = ou_pairs(60, 63);
    const auto f = fit_rrr(p, GaussianKernel(1.0), 5, 1e-3, true);
    ASSERT_LT(std::abs(estimator_eigenvalues(f)[0]), 1.0);
    const ForecastTrajectory traj = dli_forecast(f, p.initial, 4000);
    const Vector last = traj.weights.row(traj.horizon() - 1).transpose();
    EXPECT_LE((last.array() - 1.0 / 60.0).abs().maxCoeff(), 1e-8);
}

TEST(DliForecast, TwoPointHandCase) {
    // Linear kernel, x = (0, 2), y = (1, 3), gamma = 1: g = cxy / (cxx + gamma) = 1/2.
    // The deviation from the output mean 2 halves at every step starting
    // from z = 3, so the means are 2.5, 2.25, 2.125 and the weight on y = 3 is
    // (m - 1) / 2.
    SamplePairs p;
    p.x = scalar_points(std::vector<double>{0.0, 2.0});
    p.y = scalar_points(std::vector<double>{1.0, 3.0});
    p.initial = scalar_points(std::vector<double>{3.0});
    const auto f = fit_krr(p, oracle::LinearKernel{}, 1.0, true);
    const ForecastTrajectory traj = dli_forecast(f, p.initial, 3);
    const double upper[] = {0.75, 0.625, 0.5625};
    for (Index t = 0; t < 3; ++t) {
        EXPECT_NEAR(traj.weights(t, 0), 1.0 - upper[t], 1e-14);
        EXPECT_NEAR(traj.weights(t, 1), upper[t], 1e-14);
    }
}

TEST(DliForecast, LinearKernelMeansFollowTheScalarRecursion) {
    std::mt19937_64 rng(64);
    const oracle::LinearKernel k;
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = std::uniform_int_distribution<Index>(3, 30)(rng);
        SamplePairs p = random_linear_pairs(n, rng);
        p.initial = oracle::random_points(7, 1, rng, 2.0);
        const oracle::Moments mo = oracle::moments(p.x, p.y);
        const double zbar = p.initial.col(0).mean();
        const double gamma = 0.05;
        const double g_ridge = oracle::linear_coefficient(p.x, p.y, gamma, true);
        const double g_ls = oracle::linear_coefficient(p.x, p.y, 0.0, true);
        const std::vector<std::pair<KoopmanFit<oracle::LinearKernel>, double>> cases{
            {fit_krr(p, k, gamma, true), g_ridge}, {fit_rrr(p, k, 1, gamma, true), g_ridge}, {fit_pcr(p, k, 1, true), g_ls}};
        for (const auto& [f, g] : cases) {
            const TrajectoryStats s = trajectory_stats(dli_forecast(f, p.initial, 10));
            // Deviations from the output mean contract by g per step.
            double m = mo.my + g * (zbar - mo.my);
            for (Index t = 0; t < 10; ++t) {
                EXPECT_NEAR(s.mean(t), m, 1e-8 * std::max(1.0, std::abs(m))) << to_string(f.kind) << " t=" << t + 1;
                m = mo.my + g * (m - mo.my);
            }
        }
    }
}

TEST(DliForecast, KrrBranchesAgree) {
    const SamplePairs p = ou_pairs(40, 65);
    const auto f = fit_krr(p, GaussianKernel(0.7), 1e-3, true);
    const ForecastTrajectory direct = dli_forecast(f, p.initial, 50);
    const ForecastTrajectory factored = dli_forecast(factored_view(f), p.initial, 50);
    EXPECT_LE((direct.weights - factored.weights).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(DliForecast, TrajectoriesComposeFromStoredStates) {
    const SamplePairs p = ou_pairs(50, 66);
    for (const auto& f : {fit_rrr(p, GaussianKernel(1.0), 6, 1e-4, true), fit_krr(p, GaussianKernel(1.0), 1e-3, true)}) {
        const DliPropagator<GaussianKernel> prop(f);
        const ForecastTrajectory whole = prop.run(prop.initial_state(p.initial), 30);
        ASSERT_EQ(whole.reduced_states.rows(), 31);
        const Vector mid = whole.reduced_states.row(12).transpose();
        const ForecastTrajectory tail = prop.run(mid, 18);
        EXPECT_LE((whole.weights.bottomRows(18) - tail.weights).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(DliForecast, RejectsMisuse) {
    const SamplePairs p = ou_pairs(20, 67);
    const auto unc = fit_rrr(p, GaussianKernel(1.0), 3, 1e-3, false);
    EXPECT_THROW(dli_forecast(unc, p.initial, 5), std::invalid_argument);
    const auto cen = fit_rrr(p, GaussianKernel(1.0), 3, 1e-3, true);
    EXPECT_THROW(dli_forecast(cen, p.initial, 0), std::invalid_argument);
    EXPECT_THROW(dli_forecast(cen, Points(0, 1), 5), std::invalid_argument);
    EXPECT_THROW(dli_forecast(cen, Points::Zero(3, 2), 5), std::invalid_argument);
    const ForecastTrajectory traj = dli_forecast(cen, p.initial, 5);
    EXPECT_THROW(traj.measure(0), std::out_of_range);
    EXPECT_THROW(traj.measure(6), std::out_of_range);
    EXPECT_NEAR(traj.measure(5).mass(), 1.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Baseline

TEST(BaselineForecast, ZeroOperatorGivesTheNullMeasure) {
    const SamplePairs p = ou_pairs(20, 68);
    auto f = fit_krr(p, GaussianKernel(1.0), 1e-3, false);
    f.w.setZero();
    const ForecastTrajectory traj = baseline_forecast(f, p.initial, 4);
    EXPECT_FALSE(traj.diverged());
    EXPECT_EQ(traj.weights, Matrix::Zero(4, 20));
}

TEST(BaselineForecast, LinearKernelMeansFollowTheScalarRecursion) {
    std::mt19937_64 rng(69);
    const oracle::LinearKernel k;
    for (int trial = 0; trial < 20; ++trial) {
        SamplePairs p = random_linear_pairs(std::uniform_int_distribution<Index>(3, 30)(rng), rng);
        p.initial = oracle::random_points(5, 1, rng, 2.0);
        const double g = oracle::linear_coefficient(p.x, p.y, 0.05, false);
        for (const auto& f : {fit_krr(p, k, 0.05, false), fit_rrr(p, k, 1, 0.05, false)}) {
            const TrajectoryStats s = trajectory_stats(baseline_forecast(f, p.initial, 8));
            double m = g * p.initial.col(0).mean();
            for (Index t = 0; t < 8; ++t) {
                EXPECT_NEAR(s.mean(t), m, 1e-8 * std::max(1.0, std::abs(m)));
                m *= g;
            }
        }
    }
}

TEST(BaselineForecast, GrowthTripsTheGuard) {
    const SamplePairs p = ou_pairs(20, 70);
    auto f = fit_krr(p, GaussianKernel(1.0), 1e-3, false);
    f.w *= 1e3;
    const ForecastTrajectory traj = baseline_forecast(f, p.initial, 500);
    ASSERT_TRUE(traj.diverged());
    EXPECT_EQ(traj.horizon(), *traj.diverged_at - 1);
    EXPECT_LT(*traj.diverged_at, 500);
    EXPECT_LE(traj.weights.cwiseAbs().maxCoeff(), kOverflowGuard);
    EXPECT_THROW(baseline_forecast(fit_krr(p, GaussianKernel(1.0), 1e-3, true), p.initial, 5), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Summaries

TEST(TrajectoryStats, HandComputedMoments) {
    ForecastTrajectory traj;
    traj.support = scalar_points(std::vector<double>{0.0, 1.0, 3.0});
    traj.weights.resize(2, 3);
    traj.weights << 0.25, 0.25, 0.5, 0.0, 0.0, 0.0;
    const std::vector<double> q{0.5, 3.0};
    const TrajectoryStats s = trajectory_stats(traj, q);
    EXPECT_DOUBLE_EQ(s.mass(0), 1.0);
    EXPECT_DOUBLE_EQ(s.mean(0), 1.75);
    EXPECT_DOUBLE_EQ(s.variance(0), 0.25 * 1.75 * 1.75 + 0.25 * 0.75 * 0.75 + 0.5 * 1.25 * 1.25);
    EXPECT_DOUBLE_EQ(s.cdf(0, 0), 0.25);
    EXPECT_DOUBLE_EQ(s.cdf(0, 1), 1.0);
    EXPECT_EQ(s.mass(1), 0.0);
    EXPECT_EQ(s.variance(1), 0.0);
}
