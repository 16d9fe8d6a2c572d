#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dli/kernels.hpp"
#include "support/oracles.hpp"

using namespace dli;

TEST(GaussianKernel, BasicProperties) {
    const GaussianKernel k(0.7);
    EXPECT_DOUBLE_EQ(k(1.3, 1.3), 1.0);
    EXPECT_DOUBLE_EQ(k(0.2, -1.1), k(-1.1, 0.2));
    EXPECT_GT(k(0.0, 5.0), 0.0);
    EXPECT_LT(k(0.0, 5.0), 1.0);
    EXPECT_THROW(GaussianKernel(0.0), std::invalid_argument);
    EXPECT_THROW(GaussianKernel(-1.0), std::invalid_argument);
    EXPECT_THROW(GaussianKernel(NAN), std::invalid_argument);
}

TEST(Gram, SinglePointCases) {
    const GaussianKernel k(1.0);
    const Points p = Points::Zero(1, 1);
    EXPECT_EQ(gram(k, p, p).values, Matrix::Ones(1, 1));
    const GramBlock g = gram(k, p, p, Normalization::inv_n);
    EXPECT_EQ(g.values, Matrix::Ones(1, 1));
    EXPECT_EQ(g.normalization, Normalization::inv_n);
}

TEST(Gram, MatchesScalarFormula) {
    const GaussianKernel k(1.0);
    const Points a = scalar_points(std::vector<double>{0.0, 0.5, -1.2});
    const Points b = scalar_points(std::vector<double>{2.0, 0.1});
    const GramBlock g = gram(k, a, b, Normalization::inv_sqrt_nm);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 2; ++j) {
            const double d = a(i, 0) - b(j, 0);
            EXPECT_NEAR(g.values(i, j), std::exp(-d * d / 2.0) / std::sqrt(6.0), 1e-15);
        }
    const GramBlock self = gram(k, a, a, Normalization::inv_n);
    EXPECT_EQ(self.values, self.values.transpose());
    for (Index i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(self.values(i, i), 1.0 / 3.0);
}

TEST(Gram, MultivariatePointsUseEuclideanDistance) {
    const GaussianKernel k(2.0);
    Points a(1, 2), b(1, 2);
    a << 1.0, 2.0;
    b << -1.0, 0.5;
    EXPECT_NEAR(gram(k, a, b).values(0, 0), std::exp(-(4.0 + 2.25) / 8.0), 1e-15);
}

TEST(Gram, RejectsBadShapes) {
    const GaussianKernel k(1.0);
    EXPECT_THROW(gram(k, Points::Zero(2, 1), Points::Zero(2, 2)), std::invalid_argument);
    EXPECT_THROW(gram(k, Points(0, 1), Points::Zero(2, 1)), std::invalid_argument);
    Points bad = Points::Zero(2, 1);
    bad(1, 0) = INFINITY;
    EXPECT_THROW(gram(k, bad, bad), std::invalid_argument);
}

TEST(CenterSquare, TrivialCases) {
    EXPECT_LE(center_square(Matrix::Ones(4, 4)).norm(), 1e-15);
    Matrix expected(2, 2);
    expected << 0.5, -0.5, -0.5, 0.5;
    EXPECT_LE((center_square(Matrix::Identity(2, 2)) - expected).norm(), 1e-15);
}

TEST(CenterSquare, MatchesExplicitProjector) {
    std::mt19937_64 rng(21);
    const Matrix b = oracle::random_matrix(4, 4, rng);
    const Matrix k = b * b.transpose();
    const Matrix j = oracle::centering_matrix(4);
    EXPECT_LE((center_square(k) - j * k * j).norm(), 1e-13 * k.norm());
}

TEST(CenterSquare, ZeroSumsPsdAndNullConstant) {
    std::mt19937_64 rng(22);
    const GaussianKernel k(0.8);
    const Points p = oracle::random_points(30, 1, rng);
    const Matrix raw = gram(k, p, p).values;
    const Matrix c = center_square(raw);
    EXPECT_LE(c.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12 * raw.norm());
    EXPECT_LE(c.colwise().sum().cwiseAbs().maxCoeff(), 1e-12 * raw.norm());
    EXPECT_GE(sym_eig(c).values.minCoeff(), -1e-10);
    const Vector ones = Vector::Constant(30, 1.0 / std::sqrt(30.0));
    EXPECT_LE((c * ones).norm(), 1e-12 * raw.norm());
}

TEST(ProjectOutMean, Cases) {
    EXPECT_LE(project_out_mean(Vector(Vector::Constant(5, 3.0))).norm(), 1e-15);
    Vector centered(3);
    centered << 1.0, -2.0, 1.0;
    EXPECT_EQ(project_out_mean(centered), centered);
    std::mt19937_64 rng(23);
    const Vector v = oracle::random_matrix(7, 1, rng);
    const Vector jv = project_out_mean(v);
    EXPECT_LE((jv - oracle::centering_matrix(7) * v).norm(), 1e-14);
    EXPECT_LE(std::abs(jv.sum()), 1e-12);
    EXPECT_LE((project_out_mean(jv) - jv).norm(), 1e-15);
}

TEST(KernelMean, PointMassAndQuadratureCases) {
    const GaussianKernel k1(1.0);
    EXPECT_DOUBLE_EQ(gaussian_kernel_mean(k1, 0.3, {1.0, 0.0}), k1(0.3, 1.0));
    EXPECT_NEAR(gaussian_kernel_mean(k1, 0.0, {0.0, 1.0}), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(gaussian_kernel_mean(k1, 0.0, {0.0, 1.0}), oracle::kernel_mean_quadrature(1.0, 0.0, 0.0, 1.0), 1e-8);
    const GaussianKernel k2(2.0);
    EXPECT_NEAR(gaussian_kernel_mean(k2, 1.0, {-1.0, 0.5}), oracle::kernel_mean_quadrature(2.0, 1.0, -1.0, 0.5), 1e-8);
    EXPECT_THROW(gaussian_kernel_mean(k1, 0.0, {0.0, -1.0}), std::invalid_argument);
}

TEST(KernelDouble, QuadratureCases) {
    const GaussianKernel k(1.0);
    EXPECT_DOUBLE_EQ(gaussian_kernel_double(k, {0.0, 0.0}, {0.0, 0.0}), 1.0);
    EXPECT_NEAR(gaussian_kernel_double(k, {0.0, 1.0}, {0.0, 1.0}), 1.0 / std::sqrt(3.0), 1e-15);
    EXPECT_NEAR(gaussian_kernel_double(k, {0.0, 1.0}, {0.0, 1.0}),
                oracle::kernel_double_quadrature(1.0, 0.0, 1.0, 0.0, 1.0), 1e-7);
    EXPECT_NEAR(gaussian_kernel_double(k, {1.5, 0.3}, {-0.4, 0.8}),
                oracle::kernel_double_quadrature(1.0, 1.5, 0.3, -0.4, 0.8), 1e-7);
    EXPECT_THROW(gaussian_kernel_double(k, {0.0, -0.1}, {0.0, 1.0}), std::invalid_argument);
}

TEST(KernelMean, MonteCarloFallbackInTwoDimensions) {
    const GaussianKernel k(1.0);
    std::mt19937_64 rng(24);
    const std::vector<double> x{0.5, -0.5}, m{0.0, 0.0};
    const MonteCarloEstimate e = kernel_mean_monte_carlo(k, x, m, 1.0, 200000, rng);
    // Product of two one-dimensional closed forms.
    const double exact = gaussian_kernel_mean(k, 0.5, {0.0, 1.0}) * gaussian_kernel_mean(k, -0.5, {0.0, 1.0});
    EXPECT_GT(e.std_error, 0.0);
    EXPECT_NEAR(e.value, exact, 4.0 * e.std_error);
}

TEST(LinearKernelOracle, CenteredGramEqualsExplicitFeatureCentering) {
    std::mt19937_64 rng(25);
    const Points p = oracle::random_points(9, 1, rng);
    const Matrix c = center_square(gram(oracle::LinearKernel{}, p, p, Normalization::inv_n).values);
    const double mean = p.col(0).mean();
    for (Index i = 0; i < 9; ++i)
        for (Index j = 0; j < 9; ++j) EXPECT_NEAR(c(i, j), (p(i, 0) - mean) * (p(j, 0) - mean) / 9.0, 1e-14);
}
