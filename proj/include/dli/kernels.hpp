#pragma once

// Kernels, Gram blocks and centering.
//
// Lengthscale convention: k(x, y) = exp(-|x - y|^2 / (2 l^2)). Hyperparameter
// grids are expressed in this parametrization (l in state-space units).

#include <cmath>
#include <concepts>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "dli/numerics.hpp"

namespace dli {

/// Sample points, one per row. Row-major so that a point is a contiguous span.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> point(const Points& p, Index i) {
    return {p.data() + i * p.cols(), static_cast<std::size_t>(p.cols())};
}

/// n scalar states as an n x 1 point set.
inline Points scalar_points(std::span<const double> values) {
    Points p(static_cast<Index>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) p(static_cast<Index>(i), 0) = values[i];
    return p;
}

inline Points scalar_points(const std::vector<double>& values) { return scalar_points(std::span<const double>(values)); }

template <class K>
concept Kernel = requires(const K& k, std::span<const double> a) {
    { k(a, a) } -> std::convertible_to<double>;
};

class GaussianKernel {
public:
    explicit GaussianKernel(double lengthscale) : lengthscale_(lengthscale) {
        if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
            throw std::invalid_argument("GaussianKernel: lengthscale must be positive and finite");
    }

    double lengthscale() const { return lengthscale_; }

    double operator()(std::span<const double> a, std::span<const double> b) const {
        double d2 = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            d2 += d * d;
        }
        return std::exp(-d2 / (2.0 * lengthscale_ * lengthscale_));
    }

    double operator()(double a, double b) const {
        const double d = a - b;
        return std::exp(-d * d / (2.0 * lengthscale_ * lengthscale_));
    }

    bool operator==(const GaussianKernel&) const = default;

private:
    double lengthscale_;
};

// ---------------------------------------------------------------------------
// Gram blocks

enum class Normalization {
    raw,          ///< k(a_i, b_j)
    inv_n,        ///< k(a_i, b_j) / n, n = rows of the first block
    inv_sqrt_nm,  ///< k(a_i, b_j) / sqrt(n m)
};

struct GramBlock {
    Matrix values;
    Normalization normalization = Normalization::raw;
};

inline double normalization_factor(Normalization tag, Index n, Index m) {
    switch (tag) {
    case Normalization::raw: return 1.0;
    case Normalization::inv_n: return 1.0 / static_cast<double>(n);
    case Normalization::inv_sqrt_nm: return 1.0 / std::sqrt(static_cast<double>(n) * static_cast<double>(m));
    }
    return 1.0;
}

template <Kernel K>
GramBlock gram(const K& kernel, const Points& a, const Points& b, Normalization tag = Normalization::raw) {
    if (a.cols() < 1 || b.cols() < 1) throw std::invalid_argument("gram: point dimension must be at least 1");
    if (a.rows() < 1 || b.rows() < 1) throw std::invalid_argument("gram: empty point set");
    if (a.cols() != b.cols()) {
        std::ostringstream os;
        os << "gram: dimension mismatch (" << a.cols() << " vs " << b.cols() << ")";
        throw std::invalid_argument(os.str());
    }
    require_finite(a, "gram");
    require_finite(b, "gram");
    const double c = normalization_factor(tag, a.rows(), b.rows());
    GramBlock out{Matrix(a.rows(), b.rows()), tag};
    const bool self = (&a == &b) || (a.rows() == b.rows() && a == b);
    for (Index j = 0; j < b.rows(); ++j) {
        const auto bj = point(b, j);
        const Index start = self ? j : 0;
        for (Index i = start; i < a.rows(); ++i) out.values(i, j) = c * kernel(point(a, i), bj);
    }
    if (self)
        for (Index j = 0; j < b.rows(); ++j)
            for (Index i = 0; i < j; ++i) out.values(i, j) = out.values(j, i);
    return out;
}

// ---------------------------------------------------------------------------
// Centering

/// J K J with J = I - 1 1^T, 1 = n^{-1/2}(1,...,1), via the four-term
/// expansion (no n x n projector is formed).
inline Matrix center_square(const Matrix& k) {
    require_square(k, "center_square");
    require_finite(k, "center_square");
    const Index n = k.rows();
    if (n == 0) return k;
    const Vector row_mean = k.rowwise().mean();
    const Eigen::RowVectorXd col_mean = k.colwise().mean();
    const double all_mean = row_mean.mean();
    Matrix out = k;
    out.colwise() -= row_mean;
    out.rowwise() -= col_mean;
    out.array() += all_mean;
    return out;
}

inline GramBlock center_square(const GramBlock& k) { return {center_square(k.values), k.normalization}; }

/// J v: subtracts the mean of v.
inline Vector project_out_mean(const Vector& v) {
    if (v.size() == 0) return v;
    return v.array() - v.mean();
}

/// J applied to every column.
inline Matrix project_out_mean(const Matrix& m) {
    if (m.rows() == 0) return m;
    Matrix out = m;
    out.rowwise() -= m.colwise().mean();
    return out;
}

// ---------------------------------------------------------------------------
// Kernel integrals against Gaussians (scalar state)

struct Gaussian {
    double mean = 0.0;
    double variance = 0.0;
};

inline void require_valid(const Gaussian& g, const char* what) {
    if (!std::isfinite(g.mean) || !std::isfinite(g.variance))
        throw std::invalid_argument(std::string(what) + ": non-finite Gaussian parameters");
    if (g.variance < 0.0) throw std::invalid_argument(std::string(what) + ": negative variance");
}

/// E_{Y ~ g}[k(x, Y)] for the Gaussian kernel.
inline double gaussian_kernel_mean(const GaussianKernel& kernel, double x, const Gaussian& g) {
    require_valid(g, "gaussian_kernel_mean");
    const double l2 = kernel.lengthscale() * kernel.lengthscale();
    const double s = l2 + g.variance;
    const double d = x - g.mean;
    return std::sqrt(l2 / s) * std::exp(-d * d / (2.0 * s));
}

/// E[k(X, Y)] with X ~ g1, Y ~ g2 independent.
inline double gaussian_kernel_double(const GaussianKernel& kernel, const Gaussian& g1, const Gaussian& g2) {
    require_valid(g1, "gaussian_kernel_double");
    require_valid(g2, "gaussian_kernel_double");
    const double l2 = kernel.lengthscale() * kernel.lengthscale();
    const double s = l2 + g1.variance + g2.variance;
    const double d = g1.mean - g2.mean;
    return std::sqrt(l2 / s) * std::exp(-d * d / (2.0 * s));
}

struct MonteCarloEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// E_{Y ~ N(mean, variance I)}[k(x, Y)] in d > 1 dimensions, estimated by
/// sampling. The scalar case has the closed form above.
template <Kernel K, class Rng>
MonteCarloEstimate kernel_mean_monte_carlo(const K& kernel, std::span<const double> x, std::span<const double> mean,
                                           double variance, int samples, Rng& rng) {
    if (x.size() != mean.size()) throw std::invalid_argument("kernel_mean_monte_carlo: dimension mismatch");
    if (variance < 0.0) throw std::invalid_argument("kernel_mean_monte_carlo: negative variance");
    if (samples < 2) throw std::invalid_argument("kernel_mean_monte_carlo: need at least two samples");
    std::normal_distribution<double> normal;
    std::vector<double> y(mean.size());
    const double sd = std::sqrt(variance);
    double sum = 0.0, sum_sq = 0.0;
    for (int s = 0; s < samples; ++s) {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = mean[i] + sd * normal(rng);
        const double v = kernel(x, std::span<const double>(y));
        sum += v;
        sum_sq += v * v;
    }
    const double m = sum / samples;
    const double var = std::max(0.0, (sum_sq - samples * m * m) / (samples - 1));
    return {m, std::sqrt(var / samples)};
}

} // namespace dli
