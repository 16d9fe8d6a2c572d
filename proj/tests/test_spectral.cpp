#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dli/dynamics.hpp"
#include "dli/spectral.hpp"
#include "support/oracles.hpp"

using namespace dli;

namespace {

Matrix jordan_like() {
    Matrix m(2, 2);
    m << 0.9, 5.0, 0.0, 0.9;
    return m;
}

// Dense SVD of every power, independent of op_norm_2.
std::vector<double> brute_power_norms(const Matrix& m, Index steps) {
    std::vector<double> out{1.0};
    Matrix p = Matrix::Identity(m.rows(), m.cols());
    for (Index t = 1; t <= steps; ++t) {
        p = p * m;
        out.push_back(Eigen::JacobiSVD<Matrix>(p).singularValues()(0));
    }
    return out;
}

Matrix random_stable_diagonal(Index n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.95, 0.95);
    Vector d(n);
    for (Index i = 0; i < n; ++i) d(i) = u(rng);
    return d.asDiagonal();
}

} // namespace

TEST(SpectralRadius, Cases) {
    EXPECT_DOUBLE_EQ(spectral_radius(Matrix(0.5 * Matrix::Identity(3, 3))), 0.5);
    EXPECT_EQ(spectral_radius(Matrix::Zero(2, 2)), 0.0);
    Matrix rot(2, 2);
    rot << 0.0, -0.8, 0.8, 0.0;
    EXPECT_NEAR(spectral_radius(rot), 0.8, 1e-14);
}

TEST(PowerNorms, ScaledIdentity) {
    const PowerNormProfile p = power_norm_profile(Matrix(0.5 * Matrix::Identity(2, 2)));
    EXPECT_TRUE(p.certified);
    EXPECT_EQ(p.p_hat, 1.0);
    EXPECT_NEAR(p.s_hat, 2.0, 1e-8);
    EXPECT_LE(p.s_remainder, 1e-8);
    EXPECT_EQ(p.contraction_index, 1);
}

TEST(PowerNorms, ZeroMatrixStopsImmediately) {
    const PowerNormProfile p = power_norm_profile(Matrix::Zero(3, 3));
    EXPECT_TRUE(p.certified);
    EXPECT_EQ(p.p_hat, 1.0);
    EXPECT_EQ(p.s_hat, 1.0);
    EXPECT_EQ(p.norms.size(), 2u);
}

TEST(PowerNorms, NonNormalHumpMatchesBruteForce) {
    const Matrix m = jordan_like();
    const PowerNormProfile p = power_norm_profile(m);
    ASSERT_TRUE(p.certified);
    const std::vector<double> brute = brute_power_norms(m, 1500);
    double sup = 0.0, sum = 0.0;
    for (double v : brute) {
        sup = std::max(sup, v);
        sum += v;
    }
    EXPECT_GT(p.p_hat, 10.0);
    EXPECT_NEAR(p.p_hat, sup, 1e-10 * sup);
    EXPECT_NEAR(p.s_hat, sum, 1e-8 * sum);
    EXPECT_GE(sum + 1e-9 * sum, p.s_hat);
    EXPECT_LE(sum - p.s_hat, p.s_remainder + 1e-9 * sum);
}

TEST(PowerNorms, UnstableIsNotCertified) {
    const PowerNormProfile p = power_norm_profile(Matrix(2.0 * Matrix::Identity(2, 2)), 50);
    EXPECT_FALSE(p.certified);
    EXPECT_TRUE(std::isinf(p.s_remainder));
    EXPECT_NEAR(p.p_hat, std::pow(2.0, 50), 1e-6 * std::pow(2.0, 50));
    const PowerNormProfile q = power_norm_profile(Matrix(1e10 * Matrix::Identity(2, 2)), 10000);
    EXPECT_FALSE(q.certified);
    EXPECT_LT(q.norms.size(), 20u);
}

TEST(NormalMatrices, DiagnosticsAreExact) {
    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 25; ++trial) {
        const Index n = std::uniform_int_distribution<Index>(1, 8)(rng);
        Matrix m = random_stable_diagonal(n, rng);
        if (trial % 2 == 1) {
            // Orthogonal similarity keeps the matrix normal.
            const Matrix q = oracle::random_orthogonal(n, rng);
            m = q * m * q.transpose();
        }
        const double rho = m.diagonal().size() ? spectral_radius(m) : 0.0;
        const SpectralReport r = spectral_report(full_operator(m));
        EXPECT_EQ(r.powers.p_hat, 1.0);
        EXPECT_NEAR(r.powers.s_hat, 1.0 / (1.0 - rho), 1e-8);
        EXPECT_GE(r.eta_hat, 0.999);
        EXPECT_LE(r.eta_hat, 1.001);
        EXPECT_NEAR(r.d_hat, 1.0 - rho, 1e-4);
        EXPECT_EQ(r.verdict, Verdict::stable);
    }
}

TEST(Kreiss, JordanBlockIsStableUnderGridRefinement) {
    const Matrix m = jordan_like();
    const double coarse = kreiss_constant(m);
    ResolventGrid fine;
    fine.angles = 2560;
    fine.refinement_rounds = 6;
    const double refined = kreiss_constant(m, fine);
    EXPECT_GT(coarse, 1.0);
    EXPECT_NEAR(coarse, refined, 0.02 * refined);
}

TEST(Kreiss, MatrixTheoremSandwich) {
    // eta <= sup ||M^t|| <= e n eta for every square M.
    std::mt19937_64 rng(72);
    for (int trial = 0; trial < 15; ++trial) {
        const Index n = std::uniform_int_distribution<Index>(2, 6)(rng);
        Matrix m = oracle::random_matrix(n, n, rng);
        m *= 0.9 / spectral_radius(m);
        const double eta = kreiss_constant(m);
        const PowerNormProfile p = power_norm_profile(m);
        ASSERT_TRUE(p.certified);
        EXPECT_LE(eta, p.p_hat * (1.0 + 1e-9));
        EXPECT_LE(p.p_hat, std::numbers::e * n * eta);
    }
}

TEST(DistanceToInstability, BoundsAndSpecialCases) {
    EXPECT_EQ(distance_to_instability(Matrix(Matrix::Identity(2, 2))), 0.0);
    EXPECT_EQ(distance_to_instability(Matrix(1.5 * Matrix::Identity(2, 2))), 0.0);
    EXPECT_NEAR(distance_to_instability(Matrix::Zero(3, 3)), 1.0, 1e-12);
    // Non-normal: sigma_min(M - z) <= dist(z, spectrum), so d <= 1 - rho,
    // and the Jordan block sits much closer to instability than its spectrum.
    const Matrix m = jordan_like();
    const double d = distance_to_instability(m);
    EXPECT_GT(d, 0.0);
    EXPECT_LT(d, 0.1 * (1.0 - 0.9));
    // At z = 1 exactly: smallest singular value of [[-0.1, 5], [0, -0.1]].
    const double at_one = Eigen::JacobiSVD<Matrix>(m - Matrix::Identity(2, 2)).singularValues()(1);
    EXPECT_LE(d, at_one * (1.0 + 1e-12));
}

TEST(Verdict, Classification) {
    EXPECT_EQ(spectral_report(full_operator(Matrix(0.5 * Matrix::Identity(2, 2))), 100).verdict, Verdict::stable);
    EXPECT_EQ(spectral_report(full_operator(Matrix(Matrix::Identity(2, 2))), 100).verdict, Verdict::marginal);
    EXPECT_EQ(spectral_report(full_operator(Matrix((1.0 + 1e-9) * Matrix::Identity(2, 2))), 100).verdict,
              Verdict::marginal);
    EXPECT_EQ(spectral_report(full_operator(Matrix(1.1 * Matrix::Identity(2, 2))), 100).verdict, Verdict::unstable);
    EXPECT_STREQ(to_string(Verdict::marginal), "marginal");
}

TEST(LowRankOperator, CompressionPreservesDiagnostics) {
    std::mt19937_64 rng(73);
    for (int trial = 0; trial < 10; ++trial) {
        const Index n = 12, r = 2;
        const Matrix l = oracle::random_matrix(n, r, rng), rt = oracle::random_matrix(n, r, rng);
        Matrix full = l * rt.transpose();
        const double scale = 0.8 / spectral_radius(full);
        const EvolutionOperator op = low_rank_operator(scale * l, rt);
        full *= scale;
        ASSERT_TRUE(op.compressed());
        EXPECT_EQ(op.ambient, n);
        EXPECT_NEAR(spectral_radius(op), spectral_radius(full), 1e-10);
        const PowerNormProfile a = power_norm_profile(op), b = power_norm_profile(full);
        EXPECT_NEAR(a.p_hat, b.p_hat, 1e-9 * b.p_hat);
        EXPECT_NEAR(a.s_hat, b.s_hat, 1e-8 * b.s_hat);
        for (const Complex z : {Complex(1.2, 0.3), Complex(-1.0, 0.0), Complex(0.0, 2.5)})
            EXPECT_NEAR(sigma_min_shifted(op, z), smallest_singular_shifted(full, z), 1e-10);
        EXPECT_NEAR(distance_to_instability(op), distance_to_instability(full), 1e-8);
    }
}

TEST(LowRankOperator, FactorsSpanningEverythingFallBackToFull) {
    std::mt19937_64 rng(74);
    const Matrix l = oracle::random_matrix(3, 2, rng), r = oracle::random_matrix(3, 2, rng);
    const EvolutionOperator op = low_rank_operator(l, r);
    EXPECT_FALSE(op.compressed());
    EXPECT_LE((op.core - l * r.transpose()).norm(), 1e-14 * op.core.norm());
    EXPECT_THROW(low_rank_operator(l, Matrix::Zero(3, 1)), std::invalid_argument);
}

TEST(RankBound, HoldsOnRandomStableLowRankMaps) {
    std::mt19937_64 rng(75);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 10, r = std::uniform_int_distribution<Index>(1, 3)(rng);
        Matrix m = oracle::random_matrix(n, r, rng) * oracle::random_matrix(r, n, rng);
        m *= 0.9 / spectral_radius(m);
        const RankBoundCheck c = rank_bound_check(m, r);
        EXPECT_TRUE(c.applicable);
        EXPECT_TRUE(c.holds) << "p = " << c.p_hat << " bound = " << c.bound;
    }
    const RankBoundCheck unstable = rank_bound_check(Matrix(1.2 * Matrix::Identity(2, 2)), 2, 50);
    EXPECT_FALSE(unstable.applicable);
    EXPECT_FALSE(unstable.holds);
}

TEST(EvolutionOperator, FitSpectrumAgrees) {
    SeededRng rng(76);
    const SamplePairs p = ou_sample_pairs(OUParams{}, 60, rng);
    for (bool centered : {true, false}) {
        const auto f = fit_rrr(p, GaussianKernel(1.0), 5, 1e-4, centered);
        const double expected = std::abs(estimator_eigenvalues(f)[0]);
        EXPECT_NEAR(spectral_radius(evolution_operator(f)), expected, 1e-10);
        EXPECT_NEAR(spectral_radius(evolution_matrix(f)), expected, 1e-8);
        const auto k = fit_krr(p, GaussianKernel(1.0), 1e-3, centered);
        EXPECT_NEAR(spectral_radius(evolution_operator(k)), std::abs(estimator_eigenvalues(k)[0]), 1e-10);
    }
}
