#pragma once

// Dense real/complex linear algebra used throughout the library.
//
// Matrices are Eigen column-major types. Every entry point rejects NaN/Inf
// input. Symmetric routines accept mildly asymmetric input (roundoff from
// products such as C*K*C) and symmetrize it; grossly asymmetric input is an
// error.

#include <algorithm>
#include <cmath>
#include <limits>
#include <complex>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dli/error.hpp"

namespace dli {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Asymmetry accepted silently, relative to the Frobenius norm.
inline constexpr double kSymTol = 1e-10;
/// Asymmetry above this (relative) is treated as a caller bug, not roundoff.
inline constexpr double kAsymmetryRejectTol = 1e-6;
/// Eigenpair residual guaranteed by sym_eig, relative to ||A||_F.
inline constexpr double kEigTol = 1e-12;

template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& a, std::string_view what) {
    if (!a.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entry in input");
}

template <class Derived>
void require_square(const Eigen::MatrixBase<Derived>& a, std::string_view what) {
    if (a.rows() != a.cols()) {
        std::ostringstream os;
        os << what << ": expected a square matrix, got " << a.rows() << "x" << a.cols();
        throw std::invalid_argument(os.str());
    }
}

inline double max_asymmetry(const Matrix& a) {
    double worst = 0.0;
    for (Index j = 0; j < a.cols(); ++j)
        for (Index i = j + 1; i < a.rows(); ++i) worst = std::max(worst, std::abs(a(i, j) - a(j, i)));
    return worst;
}

namespace detail {

inline Matrix checked_symmetric(const Matrix& a, std::string_view what) {
    require_square(a, what);
    require_finite(a, what);
    const double norm = a.norm();
    const double asym = max_asymmetry(a);
    if (asym > kSymTol * norm) {
        std::ostringstream os;
        os << what << ": input asymmetry " << asym << " exceeds " << kSymTol << " * ||A||_F";
        if (asym > kAsymmetryRejectTol * norm) throw std::invalid_argument(os.str() + "; matrix is not symmetric");
        warn(os.str() + "; symmetrizing");
    }
    return 0.5 * (a + a.transpose());
}

// Fixed seed so that every norm estimate is reproducible run to run.
inline constexpr std::uint64_t kPowerIterationSeed = 0x6a09e667f3bcc908ULL;

} // namespace detail

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition

struct SymmetricEigen {
    Vector values;  ///< descending
    Matrix vectors; ///< orthonormal columns, vectors.col(i) pairs with values(i)
};

/// Cyclic Jacobi with the relative threshold |a_pq| <= eps * sqrt(|a_pp a_qq|):
/// a pair is left alone only once it cannot move either diagonal entry. Small
/// eigenvalues of PSD Gram matrices come out with high relative accuracy,
/// which the regularized solves downstream depend on. Near-null or indefinite
/// pairs can keep that test from ever passing, so after `relative_sweeps`
/// sweeps the absolute floor eps * |A|_F is added.
inline SymmetricEigen sym_eig(const Matrix& input, int max_sweeps = 100, int relative_sweeps = 40) {
    Matrix a = detail::checked_symmetric(input, "sym_eig");
    const Index n = a.rows();
    SymmetricEigen out;
    if (n == 0) return out;

    Matrix v = Matrix::Identity(n, n);
    const double eps = std::numeric_limits<double>::epsilon();
    const double tiny = std::numeric_limits<double>::min() * static_cast<double>(n);
    const double floor = eps * a.norm();

    // Rotations touch only the upper triangle; (g, h) <- (g - s (h + g tau), h + s (g - h tau)).
    auto rotate = [](double& g, double& h, double s, double tau) {
        const double g0 = g, h0 = h;
        g = g0 - s * (h0 + g0 * tau);
        h = h0 + s * (g0 - h0 * tau);
    };
    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        converged = true;
        const double abs_tol = sweep < relative_sweeps ? tiny : std::max(tiny, floor);
        for (Index q = 1; q < n; ++q) {
            for (Index p = 0; p < q; ++p) {
                const double apq = a(p, q);
                const double app = a(p, p), aqq = a(q, q);
                if (std::abs(apq) <= abs_tol || std::abs(apq) <= eps * std::sqrt(std::abs(app * aqq))) continue;
                converged = false;
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                const double tau = s / (1.0 + c);
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = 0.0;
                double* col_p = a.col(p).data();
                double* col_q = a.col(q).data();
                for (Index j = 0; j < p; ++j) rotate(col_p[j], col_q[j], s, tau);
                for (Index j = p + 1; j < q; ++j) rotate(a(p, j), col_q[j], s, tau);
                for (Index j = q + 1; j < n; ++j) rotate(a(p, j), a(q, j), s, tau);
                double* vp = v.col(p).data();
                double* vq = v.col(q).data();
                for (Index j = 0; j < n; ++j) rotate(vp[j], vq[j], s, tau);
            }
        }
    }
    if (!converged) throw NumericalError("sym_eig: Jacobi iteration did not converge");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) > a(j, j); });
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Index k = 0; k < n; ++k) {
        out.values(k) = a(order[k], order[k]);
        out.vectors.col(k) = v.col(order[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cholesky and SPD solves

/// Lower-triangular L with L L^T = A + shift*I. Throws NumericalError on a
/// non-positive pivot (A + shift*I is not positive definite).
inline Matrix cholesky(const Matrix& input, double shift = 0.0) {
    Matrix a = detail::checked_symmetric(input, "cholesky");
    if (!std::isfinite(shift)) throw std::invalid_argument("cholesky: non-finite shift");
    const Index n = a.rows();
    a.diagonal().array() += shift;
    Matrix l = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        double pivot = a(j, j) - l.row(j).head(j).squaredNorm();
        if (!(pivot > 0.0)) {
            std::ostringstream os;
            os << "cholesky: pivot " << pivot << " at column " << j << " (matrix is not positive definite)";
            throw NumericalError(os.str());
        }
        const double d = std::sqrt(pivot);
        l(j, j) = d;
        if (j + 1 < n) {
            const Index m = n - j - 1;
            l.col(j).tail(m) = (a.col(j).tail(m) - l.bottomLeftCorner(m, j) * l.row(j).head(j).transpose()) / d;
        }
    }
    return l;
}

/// Solves L X = B for lower-triangular L.
inline Matrix solve_lower(const Matrix& l, const Matrix& b) {
    if (l.rows() != b.rows()) throw std::invalid_argument("solve_lower: dimension mismatch");
    return l.triangularView<Eigen::Lower>().solve(b);
}

/// Solves L^T X = B for lower-triangular L.
inline Matrix solve_lower_transposed(const Matrix& l, const Matrix& b) {
    if (l.rows() != b.rows()) throw std::invalid_argument("solve_lower_transposed: dimension mismatch");
    return l.transpose().triangularView<Eigen::Upper>().solve(b);
}

/// A Cholesky factor kept around for repeated solves with the same matrix.
class CholeskySolver {
public:
    CholeskySolver() = default;
    explicit CholeskySolver(const Matrix& a, double shift = 0.0) : l_(cholesky(a, shift)) {}

    Matrix solve(const Matrix& b) const { return solve_lower_transposed(l_, solve_lower(l_, b)); }
    Vector solve(const Vector& b) const {
        Matrix x = solve(Matrix(b));
        return x.col(0);
    }
    const Matrix& factor() const { return l_; }

private:
    Matrix l_;
};

inline Matrix solve_spd(const Matrix& a, const Matrix& b) {
    require_finite(b, "solve_spd");
    return CholeskySolver(a).solve(b);
}

/// Low-rank factor F (n x k) of a PSD matrix with A ~= F F^T, by Cholesky
/// with diagonal pivoting that stops once every remaining pivot is below
/// rel_tol times the largest diagonal entry. The residual A - F F^T is PSD
/// with trace at most n * rel_tol * max_i A_ii. Costs O(n k^2).
inline Matrix pivoted_cholesky_factor(const Matrix& input, double rel_tol = 1e-14) {
    const Matrix a = detail::checked_symmetric(input, "pivoted_cholesky_factor");
    const Index n = a.rows();
    Vector d = a.diagonal();
    const double top = n > 0 ? d.maxCoeff() : 0.0;
    Matrix f = Matrix::Zero(n, n);
    Index k = 0;
    if (top > 0.0) {
        while (k < n) {
            Index piv = 0;
            const double best = d.maxCoeff(&piv);
            if (!(best > rel_tol * top)) break;
            Vector col = a.col(piv) - f.leftCols(k) * f.row(piv).head(k).transpose();
            col /= std::sqrt(best);
            f.col(k) = col;
            d -= col.cwiseAbs2();
            d(piv) = 0.0;
            ++k;
        }
    }
    return f.leftCols(k);
}

// ---------------------------------------------------------------------------
// Norms

/// Largest singular value. Power iteration on A^T A with seeded random
/// restarts; if the residual test is not met within the iteration budget the
/// dense eigenvalue of A^T A is used instead.
inline double op_norm_2(const Matrix& a, int restarts = 3, int max_iter = 3000) {
    require_finite(a, "op_norm_2");
    if (a.size() == 0) return 0.0;
    const double frob = a.norm();
    if (frob == 0.0) return 0.0;

    std::mt19937_64 rng(detail::kPowerIterationSeed);
    std::normal_distribution<double> normal;
    double best = 0.0;
    bool all_converged = true;
    for (int r = 0; r < restarts; ++r) {
        Vector x(a.cols());
        for (Index i = 0; i < x.size(); ++i) x(i) = normal(rng);
        x.normalize();
        bool converged = false;
        double lambda = 0.0;
        for (int it = 0; it < max_iter; ++it) {
            Vector g = a.transpose() * (a * x);
            lambda = x.dot(g);
            const double resid = (g - lambda * x).norm();
            const double gn = g.norm();
            if (gn == 0.0) break; // x in the null space; restart
            if (resid <= 1e-12 * std::max(lambda, frob * frob * 1e-300)) {
                converged = true;
                break;
            }
            x = g / gn;
        }
        best = std::max(best, lambda);
        all_converged = all_converged && converged;
        if (converged && r > 0) break;
    }
    if (!all_converged) {
        const SymmetricEigen e = sym_eig(a.transpose() * a);
        best = std::max(best, e.values(0));
    }
    return std::sqrt(std::max(best, 0.0));
}

/// sigma_min(A - zI) by inverse iteration on (A - zI)^H (A - zI). Returns 0
/// for an exactly singular shift.
inline double smallest_singular_shifted(const Matrix& a, Complex z, int max_iter = 500) {
    require_square(a, "smallest_singular_shifted");
    require_finite(a, "smallest_singular_shifted");
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw std::invalid_argument("smallest_singular_shifted: non-finite shift");
    const Index n = a.rows();
    if (n == 0) return 0.0;
    ComplexMatrix b = a.cast<Complex>();
    b.diagonal().array() -= z;

    const Eigen::PartialPivLU<ComplexMatrix> lu(b);
    const ComplexVector diag = lu.matrixLU().diagonal();
    for (Index i = 0; i < n; ++i)
        if (diag(i) == Complex(0.0, 0.0)) return 0.0;

    std::mt19937_64 rng(detail::kPowerIterationSeed);
    std::normal_distribution<double> normal;
    ComplexVector x(n);
    for (Index i = 0; i < n; ++i) x(i) = Complex(normal(rng), normal(rng));
    x.normalize();

    double mu = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        const ComplexVector y = lu.solve(x);
        const ComplexVector g = lu.adjoint().solve(y);
        if (!g.allFinite()) return 0.0;
        mu = x.dot(g).real(); // Rayleigh quotient of (B^H B)^{-1}
        const double resid = (g - mu * x).norm();
        const double gn = g.norm();
        if (gn == 0.0) break;
        if (resid <= 1e-10 * mu) return 1.0 / std::sqrt(mu);
        x = g / gn;
    }
    // Clustered smallest singular values: fall back to a dense SVD.
    const Eigen::JacobiSVD<ComplexMatrix> svd(b);
    return svd.singularValues()(n - 1);
}

// ---------------------------------------------------------------------------
// General (non-symmetric) eigenvalues

struct GeneralEigen {
    std::vector<Complex> values;
    ComplexMatrix vectors; ///< empty unless requested
};

/// Hessenberg reduction + shifted QR (Eigen::EigenSolver).
inline GeneralEigen general_eigen(const Matrix& a, bool with_vectors = false) {
    require_square(a, "general_eigenvalues");
    require_finite(a, "general_eigenvalues");
    GeneralEigen out;
    if (a.rows() == 0) return out;
    Eigen::EigenSolver<Matrix> es(a, with_vectors);
    if (es.info() != Eigen::Success) throw NumericalError("general_eigenvalues: QR iteration failed to converge");
    const ComplexVector ev = es.eigenvalues();
    out.values.assign(ev.data(), ev.data() + ev.size());
    if (with_vectors) out.vectors = es.eigenvectors();
    return out;
}

inline std::vector<Complex> general_eigenvalues(const Matrix& a) { return general_eigen(a, false).values; }

/// Orthonormal basis of the column space of A (rank-revealing QR).
inline Matrix orthonormal_basis(const Matrix& a, double rel_tol = 1e-13) {
    require_finite(a, "orthonormal_basis");
    if (a.cols() == 0 || a.rows() == 0) return Matrix(a.rows(), 0);
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    qr.setThreshold(rel_tol);
    const Index rank = qr.rank();
    Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), rank);
    return q;
}

} // namespace dli
