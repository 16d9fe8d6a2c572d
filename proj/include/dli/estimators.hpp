#pragma once

// Kernel Koopman estimators of the form G = S* W Z, in uncentered form and in
// the centered (deflated) form used by DLI forecasting.
//
// Gram conventions (n training pairs):
//   gram_x  = K_x / n, centered as J K_x J / n for centered fits
//   gram_xy = [k(x_i, y_j)] / n, never centered as a matrix
// Low-rank fits store W = U V^T through the factors; centered fits keep both
// factors projected onto the complement of the constant vector.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dli/data.hpp"
#include "dli/kernels.hpp"
#include "dli/numerics.hpp"

namespace dli {

enum class EstimatorKind { krr, pcr, rrr };

inline const char* to_string(EstimatorKind k) {
    switch (k) {
    case EstimatorKind::krr: return "krr";
    case EstimatorKind::pcr: return "pcr";
    case EstimatorKind::rrr: return "rrr";
    }
    return "?";
}

inline EstimatorKind estimator_kind_from_string(const std::string& s) {
    if (s == "krr") return EstimatorKind::krr;
    if (s == "pcr") return EstimatorKind::pcr;
    if (s == "rrr") return EstimatorKind::rrr;
    throw std::invalid_argument("unknown estimator '" + s + "' (expected krr, pcr or rrr)");
}

/// Directions with eigenvalue (PCR) or sigma^2 (RRR) below this fraction of
/// the largest one are treated as numerically null.
inline constexpr double kRankTol = 1e-10;

template <Kernel K>
struct KoopmanFit {
    K kernel;
    EstimatorKind kind = EstimatorKind::krr;
    double gamma = 0.0;
    Index rank = 0;
    bool centered = true;
    Points x;
    Points y;
    Matrix gram_x;
    Matrix gram_xy;
    Matrix w;        ///< full W (KRR)
    Matrix cholesky; ///< lower factor of gram_x + gamma I (KRR)
    Matrix u;        ///< n x r (low rank, or the factored view of a KRR fit)
    Matrix v;        ///< n x r
    Vector spectrum; ///< PCR: retained eigenvalues of gram_x; RRR: retained sigma^2

    Index size() const { return x.rows(); }
    bool factored() const { return u.size() > 0; }

    /// W as an explicit n x n matrix.
    Matrix weight_matrix() const { return factored() ? Matrix(u * v.transpose()) : w; }
};

/// Gram matrices and their decompositions for one training set, kernel and
/// centering choice. Several fits (different gamma, r) reuse the same
/// decompositions. The lazy members are not synchronized: share a
/// PreparedData across threads only after calling eig_x() and factor_y().
template <Kernel K>
class PreparedData {
public:
    PreparedData(SamplePairs data, K kernel, bool centered)
        : data_(std::move(data)), kernel_(std::move(kernel)), centered_(centered) {
        data_.validate("PreparedData");
        gram_x_ = gram(kernel_, data_.x, data_.x, Normalization::inv_n).values;
        gram_y_ = gram(kernel_, data_.y, data_.y, Normalization::inv_n).values;
        gram_xy_ = gram(kernel_, data_.x, data_.y, Normalization::inv_n).values;
        if (centered_) {
            gram_x_ = center_square(gram_x_);
            gram_y_ = center_square(gram_y_);
        }
    }

    const SamplePairs& data() const { return data_; }
    const K& kernel() const { return kernel_; }
    bool centered() const { return centered_; }
    Index size() const { return data_.size(); }
    const Matrix& gram_x() const { return gram_x_; }
    const Matrix& gram_y() const { return gram_y_; }
    const Matrix& gram_xy() const { return gram_xy_; }

    const SymmetricEigen& eig_x() const {
        if (!eig_x_) eig_x_ = sym_eig(gram_x_);
        return *eig_x_;
    }

    /// F with gram_y ~= F F^T (pivoted Cholesky, see pivoted_cholesky_factor).
    const Matrix& factor_y() const {
        if (!factor_y_) factor_y_ = pivoted_cholesky_factor(gram_y_);
        return *factor_y_;
    }

private:
    SamplePairs data_;
    K kernel_;
    bool centered_;
    Matrix gram_x_;
    Matrix gram_y_;
    Matrix gram_xy_;
    mutable std::optional<SymmetricEigen> eig_x_;
    mutable std::optional<Matrix> factor_y_;
};

namespace detail {

template <Kernel K>
KoopmanFit<K> fit_skeleton(const PreparedData<K>& p, EstimatorKind kind, double gamma) {
    KoopmanFit<K> f{p.kernel()};
    f.kind = kind;
    f.gamma = gamma;
    f.centered = p.centered();
    f.x = p.data().x;
    f.y = p.data().y;
    f.gram_x = p.gram_x();
    f.gram_xy = p.gram_xy();
    return f;
}

inline void require_gamma(double gamma, const char* what) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument(std::string(what) + ": gamma must be positive");
}

inline void require_rank(Index r, Index n, const char* what) {
    if (r < 1 || r > n) {
        std::ostringstream os;
        os << what << ": rank " << r << " outside [1, " << n << "]";
        throw std::invalid_argument(os.str());
    }
}

inline void warn_rank_shrink(const char* what, Index requested, Index kept) {
    std::ostringstream os;
    os << what << ": only " << kept << " numerically non-null directions, rank reduced from " << requested;
    warn(os.str());
}

} // namespace detail

// ---------------------------------------------------------------------------
// KRR: W = (gram_x + gamma I)^{-1}

template <Kernel K>
KoopmanFit<K> fit_krr(const PreparedData<K>& p, double gamma) {
    detail::require_gamma(gamma, "fit_krr");
    KoopmanFit<K> f = detail::fit_skeleton(p, EstimatorKind::krr, gamma);
    f.rank = p.size();
    const CholeskySolver chol(p.gram_x(), gamma);
    f.cholesky = chol.factor();
    Matrix w = chol.solve(Matrix(Matrix::Identity(p.size(), p.size())));
    f.w = 0.5 * (w + w.transpose());
    return f;
}

// ---------------------------------------------------------------------------
// PCR: W = V_r S_r^{-1} V_r^T from the top-r eigenpairs of gram_x

template <Kernel K>
KoopmanFit<K> fit_pcr(const PreparedData<K>& p, Index r) {
    detail::require_rank(r, p.size(), "fit_pcr");
    const SymmetricEigen& e = p.eig_x();
    const double top = e.values(0);
    if (!(top > 0.0)) throw NumericalError("fit_pcr: input Gram matrix has no positive eigenvalue");
    Index kept = 0;
    while (kept < r && e.values(kept) > kRankTol * top) ++kept;
    if (kept < r) detail::warn_rank_shrink("fit_pcr", r, kept);

    KoopmanFit<K> f = detail::fit_skeleton(p, EstimatorKind::pcr, 0.0);
    f.rank = kept;
    f.spectrum = e.values.head(kept);
    f.v = e.vectors.leftCols(kept);
    f.u = f.v * f.spectrum.cwiseInverse().asDiagonal();
    if (f.centered) {
        f.u = project_out_mean(f.u);
        f.v = project_out_mean(f.v);
    }
    return f;
}

// ---------------------------------------------------------------------------
// RRR: gram_y gram_x u = s^2 (gram_x + gamma I) u, u^T gram_x (gram_x + gamma I) u = 1,
// V = gram_x U.
//
// With A = gram_x = Q L Q^T, B = A + gamma I and C = A^{1/2} B^{-1/2}, the
// pencil has the eigenvalues of the symmetric C gram_y C. Writing
// gram_y = F F^T and H = C F, those are the eigenvalues of the small matrix
// H^T H (k x k, k = numerical rank of gram_y). For H^T H a = s^2 a the pencil
// eigenvector is u = B^{-1} gram_y C v with v = H a / s, which simplifies to
// u = s B^{-1} F a.

template <Kernel K>
KoopmanFit<K> fit_rrr(const PreparedData<K>& p, Index r, double gamma) {
    detail::require_gamma(gamma, "fit_rrr");
    detail::require_rank(r, p.size(), "fit_rrr");
    const SymmetricEigen& e = p.eig_x();
    const Matrix& f_y = p.factor_y();
    if (f_y.cols() == 0) throw NumericalError("fit_rrr: output Gram matrix is numerically zero");

    const Vector lam = e.values;
    const Vector inv_b = (lam.array() + gamma).inverse();
    const Vector c2 = lam.array().max(0.0) * inv_b.array();
    const Matrix qf = e.vectors.transpose() * f_y; // Q^T F
    Matrix small = qf.transpose() * c2.asDiagonal() * qf;
    const SymmetricEigen se = sym_eig(0.5 * (small + small.transpose()));

    const double top = se.values(0);
    if (!(top > 0.0)) throw NumericalError("fit_rrr: no positive singular value in the pencil");
    Index kept = 0;
    while (kept < r && kept < se.values.size() && se.values(kept) > kRankTol * top) ++kept;
    if (kept < r) detail::warn_rank_shrink("fit_rrr", r, kept);

    KoopmanFit<K> f = detail::fit_skeleton(p, EstimatorKind::rrr, gamma);
    f.rank = kept;
    f.spectrum = se.values.head(kept);
    // Coordinates of u in the eigenbasis of A.
    Matrix ut = inv_b.asDiagonal() * (qf * se.vectors.leftCols(kept));
    const Vector ab = lam.array() * (lam.array() + gamma);
    for (Index j = 0; j < kept; ++j) {
        ut.col(j) *= std::sqrt(f.spectrum(j));
        const double norm2 = ut.col(j).dot(ab.asDiagonal() * ut.col(j));
        if (!(norm2 > 0.0)) throw NumericalError("fit_rrr: eigenvector normalization is not positive");
        ut.col(j) /= std::sqrt(norm2);
    }
    f.u = e.vectors * ut;
    f.v = e.vectors * (lam.asDiagonal() * ut);
    if (f.centered) {
        f.u = project_out_mean(f.u);
        f.v = project_out_mean(f.v);
    }
    return f;
}

struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::rrr;
    double gamma = 1e-6;
    Index rank = 10;
};

template <Kernel K>
KoopmanFit<K> fit(const PreparedData<K>& p, const EstimatorSpec& spec) {
    switch (spec.kind) {
    case EstimatorKind::krr: return fit_krr(p, spec.gamma);
    case EstimatorKind::pcr: return fit_pcr(p, spec.rank);
    case EstimatorKind::rrr: return fit_rrr(p, spec.rank, spec.gamma);
    }
    throw std::invalid_argument("fit: unknown estimator");
}

template <Kernel K>
KoopmanFit<K> fit_krr(const SamplePairs& data, const K& kernel, double gamma, bool centered) {
    return fit_krr(PreparedData<K>(data, kernel, centered), gamma);
}

template <Kernel K>
KoopmanFit<K> fit_pcr(const SamplePairs& data, const K& kernel, Index r, bool centered) {
    return fit_pcr(PreparedData<K>(data, kernel, centered), r);
}

template <Kernel K>
KoopmanFit<K> fit_rrr(const SamplePairs& data, const K& kernel, Index r, double gamma, bool centered) {
    return fit_rrr(PreparedData<K>(data, kernel, centered), r, gamma);
}

/// A KRR fit rewritten as U V^T with U = J W, V = J (centered) or U = W,
/// V = I (uncentered), so that the low-rank code paths can run on it.
template <Kernel K>
KoopmanFit<K> factored_view(const KoopmanFit<K>& fit) {
    if (fit.factored()) return fit;
    KoopmanFit<K> out = fit;
    const Index n = fit.size();
    if (fit.centered) {
        out.u = project_out_mean(fit.w);
        out.v = project_out_mean(Matrix(Matrix::Identity(n, n)));
    } else {
        out.u = fit.w;
        out.v = Matrix::Identity(n, n);
    }
    out.w.resize(0, 0);
    out.cholesky.resize(0, 0);
    return out;
}

// ---------------------------------------------------------------------------
// Evolution matrices

/// The n x n map taking forecast weights (centered: their deviation from
/// uniform) one step ahead: J W^T J gram_xy when centered, W^T gram_xy
/// otherwise.
template <Kernel K>
Matrix evolution_matrix(const KoopmanFit<K>& fit) {
    if (fit.factored()) {
        Matrix m = fit.v * (fit.u.transpose() * fit.gram_xy);
        return fit.centered ? project_out_mean(m) : m;
    }
    if (fit.centered) {
        const Matrix jw = project_out_mean(Matrix(fit.w.transpose()));
        return project_out_mean(Matrix(project_out_mean(Matrix(jw.transpose())).transpose() * fit.gram_xy));
    }
    return fit.w.transpose() * fit.gram_xy;
}

/// U^T gram_xy V (r x r) for factored fits: same nonzero spectrum as the full
/// evolution matrix. Unfactored fits return the full matrix.
template <Kernel K>
Matrix reduced_evolution_matrix(const KoopmanFit<K>& fit) {
    if (!fit.factored()) return evolution_matrix(fit);
    return fit.u.transpose() * fit.gram_xy * fit.v;
}

/// Nonzero spectrum of the estimator, sorted by modulus (descending).
template <Kernel K>
std::vector<Complex> estimator_eigenvalues(const KoopmanFit<K>& fit) {
    std::vector<Complex> ev = general_eigenvalues(reduced_evolution_matrix(fit));
    std::stable_sort(ev.begin(), ev.end(), [](Complex a, Complex b) { return std::abs(a) > std::abs(b); });
    return ev;
}

// ---------------------------------------------------------------------------
// Validation risk
//
// Mean over held-out pairs (x', y') of || phi(y') - G* phi(x') ||^2, with the
// features centered by the training means for centered fits. Everything is
// expanded into Gram blocks between training and held-out points.

struct ValidationBlocks {
    bool centered = true;
    Matrix a;       ///< n x m: sampling of phi(x'_j) (centered: J applied)
    Matrix b;       ///< n x m: <phi(y_i), phi(y'_j)> / sqrt(n), centered by training means
    Vector c;       ///< m: || phi(y'_j) ||^2 (centered by the training mean)
    Matrix gram_y;  ///< uncentered K_y / n of the training outputs
    Index size() const { return c.size(); }
};

template <Kernel K>
ValidationBlocks validation_blocks(const K& kernel, const Points& train_x, const Points& train_y, bool centered,
                                   const SamplePairs& val) {
    val.validate("validation_blocks");
    if (train_x.rows() == 0) throw std::invalid_argument("validation_blocks: empty training set");
    const Index n = train_x.rows();
    const double sn = std::sqrt(static_cast<double>(n));
    ValidationBlocks out;
    out.centered = centered;
    const Matrix kyy = gram(kernel, train_y, train_y).values;
    out.gram_y = kyy / static_cast<double>(n);
    out.a = gram(kernel, train_x, val.x).values;
    out.b = gram(kernel, train_y, val.y).values;
    out.c.resize(val.size());
    for (Index j = 0; j < val.size(); ++j) out.c(j) = kernel(point(val.y, j), point(val.y, j));
    if (centered) {
        const Matrix kxx = gram(kernel, train_x, train_x).values;
        const Vector mx = kxx.rowwise().mean();
        const Vector my = kyy.rowwise().mean();
        out.a.colwise() -= mx;
        out.a = project_out_mean(out.a);
        out.c -= 2.0 * out.b.colwise().mean().transpose();
        out.c.array() += my.mean();
        out.b.colwise() -= my;
    }
    out.a /= sn;
    out.b /= sn;
    return out;
}

template <Kernel K>
ValidationBlocks validation_blocks(const PreparedData<K>& p, const SamplePairs& val) {
    return validation_blocks(p.kernel(), p.data().x, p.data().y, p.centered(), val);
}

namespace detail {

inline double risk_term(double c, double cross, double quad) {
    const double r = c - 2.0 * cross + quad;
    if (r >= 0.0) return r;
    const double scale = std::abs(c) + 2.0 * std::abs(cross) + std::abs(quad);
    if (r >= -1e-9 * scale) return 0.0;
    std::ostringstream os;
    os << "validation_risk: negative squared residual " << r << " (scale " << scale << ")";
    throw NumericalError(os.str());
}

} // namespace detail

template <Kernel K>
double validation_risk(const KoopmanFit<K>& fit, const ValidationBlocks& vb) {
    if (vb.size() == 0) throw std::invalid_argument("validation_risk: empty validation set");
    if (vb.centered != fit.centered) throw std::invalid_argument("validation_risk: centering mismatch");
    if (vb.a.rows() != fit.size()) throw std::invalid_argument("validation_risk: training size mismatch");
    const Index m = vb.size();
    double total = 0.0;
    if (fit.factored()) {
        // beta = V U^T a, so beta^T b = (U^T a)^T (V^T b), beta^T K beta = (U^T a)^T P (U^T a).
        const Matrix ua = fit.u.transpose() * vb.a;
        const Matrix vbm = fit.v.transpose() * vb.b;
        const Matrix pm = fit.v.transpose() * vb.gram_y * fit.v;
        const Matrix pua = pm * ua;
        for (Index j = 0; j < m; ++j)
            total += detail::risk_term(vb.c(j), ua.col(j).dot(vbm.col(j)), ua.col(j).dot(pua.col(j)));
    } else {
        Matrix beta = fit.w.transpose() * vb.a;
        if (fit.centered) beta = project_out_mean(beta);
        const Matrix kb = vb.gram_y * beta;
        for (Index j = 0; j < m; ++j)
            total += detail::risk_term(vb.c(j), beta.col(j).dot(vb.b.col(j)), beta.col(j).dot(kb.col(j)));
    }
    return total / static_cast<double>(m);
}

template <Kernel K>
double validation_risk(const KoopmanFit<K>& fit, const SamplePairs& val) {
    return validation_risk(fit, validation_blocks(fit.kernel, fit.x, fit.y, fit.centered, val));
}

} // namespace dli
