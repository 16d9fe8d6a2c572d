#pragma once

// Stability diagnostics of an evolution matrix M: spectral radius, the power
// norms ||M^t||_2 with their supremum p and sum s, a Kreiss-constant estimate
// and the distance to instability.
//
// These are computed on the finite evolution matrix, which stands in for the
// operator acting on the feature space; they are evolution-matrix
// diagnostics, not operator-norm quantities. The Kreiss constant and the
// distance to instability are grid estimates with the resolution recorded in
// the report.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "dli/estimators.hpp"
#include "dli/numerics.hpp"

namespace dli {

/// M acting on R^ambient, stored through a core matrix B with M = Q B Q^T for
/// some orthonormal Q (n x k). Powers and resolvent norms of M follow from B:
/// ||M^t|| = ||B^t|| and, when k < n, sigma_min(M - z) = min(sigma_min(B - z), |z|).
struct EvolutionOperator {
    Matrix core;
    Index ambient = 0;

    Index rank_bound() const { return core.rows(); }
    bool compressed() const { return core.rows() < ambient; }
};

inline EvolutionOperator full_operator(const Matrix& m) {
    require_square(m, "full_operator");
    require_finite(m, "full_operator");
    return {m, m.rows()};
}

/// The operator L R^T (both n x k) compressed onto span[L R].
inline EvolutionOperator low_rank_operator(const Matrix& l, const Matrix& r) {
    if (l.rows() != r.rows() || l.cols() != r.cols()) throw std::invalid_argument("low_rank_operator: factor shape mismatch");
    require_finite(l, "low_rank_operator");
    require_finite(r, "low_rank_operator");
    const Index n = l.rows();
    Matrix both(n, l.cols() + r.cols());
    both << l, r;
    const Matrix q = orthonormal_basis(both);
    if (q.cols() >= n) return full_operator(l * r.transpose());
    const Matrix core = (q.transpose() * l) * (r.transpose() * q);
    return {core, n};
}

/// The DLI (centered) or baseline (uncentered) evolution operator of a fit.
template <Kernel K>
EvolutionOperator evolution_operator(const KoopmanFit<K>& fit) {
    if (fit.factored()) {
        const Matrix l = fit.centered ? project_out_mean(fit.v) : fit.v;
        return low_rank_operator(l, fit.gram_xy.transpose() * fit.u);
    }
    return full_operator(evolution_matrix(fit));
}

// ---------------------------------------------------------------------------

inline double spectral_radius(const EvolutionOperator& op) {
    double rho = 0.0;
    for (const Complex& z : general_eigenvalues(op.core)) rho = std::max(rho, std::abs(z));
    return rho;
}

inline double spectral_radius(const Matrix& m) { return spectral_radius(full_operator(m)); }

struct PowerNormProfile {
    std::vector<double> norms;   ///< ||M^t||, t = 0..stop
    double p_hat = 1.0;          ///< max of norms; exact when certified
    double s_hat = 0.0;          ///< partial sum of norms
    double s_remainder = 0.0;    ///< certified bound on the omitted tail (infinity if uncertified)
    bool certified = false;
    Index contraction_index = 0; ///< first L >= 1 with ||M^L|| < 1 (0 if none found)
};

/// Power norms until the tail is certified below s_tol. Once some L has
/// q = ||M^L|| < 1, every later power factors as M^{t'} (M^L)^k with t' in the
/// last L computed steps, so
///   sum_{t > T} ||M^t|| <= q / (1 - q) * sum_{t = T-L+1}^{T} ||M^t||,
/// and no later norm can exceed the maximum already seen.
inline PowerNormProfile power_norm_profile(const EvolutionOperator& op, Index max_t = 10000, double s_tol = 1e-8) {
    PowerNormProfile out;
    out.norms.push_back(1.0);
    out.s_hat = 1.0;
    const Index k = op.core.rows();
    if (k == 0) {
        out.certified = true;
        return out;
    }
    Matrix power = Matrix::Identity(k, k);
    double q = 1.0;
    for (Index t = 1; t <= max_t; ++t) {
        power = power * op.core;
        if (!power.allFinite()) break;
        const double nt = op_norm_2(power);
        out.norms.push_back(nt);
        out.s_hat += nt;
        out.p_hat = std::max(out.p_hat, nt);
        if (nt > 1e100) break; // growing without bound; no certificate possible
        if (out.contraction_index == 0 && nt < 1.0) {
            out.contraction_index = t;
            q = nt;
        }
        if (out.contraction_index > 0) {
            const Index l = out.contraction_index;
            double window = 0.0;
            for (Index s = t - l + 1; s <= t; ++s) window += out.norms[static_cast<std::size_t>(s)];
            const double bound = window * q / (1.0 - q);
            if (bound <= s_tol) {
                out.certified = true;
                out.s_remainder = bound;
                return out;
            }
        }
    }
    out.s_remainder = std::numeric_limits<double>::infinity();
    return out;
}

inline PowerNormProfile power_norm_profile(const Matrix& m, Index max_t = 10000, double s_tol = 1e-8) {
    return power_norm_profile(full_operator(m), max_t, s_tol);
}

// ---------------------------------------------------------------------------
// Resolvent-based estimates

struct ResolventGrid {
    int angles = 256;
    int min_exponent = -6; ///< radii 1 + 10^k, k = min_exponent..max_exponent
    int max_exponent = 2;
    int refinement_rounds = 2;
};

inline double sigma_min_shifted(const EvolutionOperator& op, Complex z) {
    double s = smallest_singular_shifted(op.core, z);
    if (op.compressed()) s = std::min(s, std::abs(z));
    return s;
}

namespace detail {

/// Minimizes a unimodal-ish f on [lo, hi]; returns (argmin, min) over all
/// evaluated points.
template <class F>
std::pair<double, double> golden_section_min(F&& f, double lo, double hi, int iters = 60) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < iters && hi - lo > 1e-12; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    return f1 < f2 ? std::pair{x1, f1} : std::pair{x2, f2};
}

} // namespace detail

/// Lower estimate of sup_{|z| > 1} (|z| - 1) ||(M - z)^{-1}||. The objective
/// tends to 1 as |z| grows, so the estimate is at least 1.
inline double kreiss_constant(const EvolutionOperator& op, const ResolventGrid& grid = {}) {
    const double two_pi = 2.0 * std::numbers::pi;
    auto objective = [&](double exponent, double angle) {
        const double excess = std::pow(10.0, exponent);
        const Complex z = std::polar(1.0 + excess, angle);
        const double s = sigma_min_shifted(op, z);
        return s > 0.0 ? excess / s : std::numeric_limits<double>::infinity();
    };
    double best = 1.0;
    double best_e = 0.0, best_a = 0.0;
    for (int e = grid.min_exponent; e <= grid.max_exponent; ++e) {
        for (int j = 0; j < grid.angles; ++j) {
            const double a = two_pi * j / grid.angles;
            const double v = objective(e, a);
            if (v > best) {
                best = v;
                best_e = e;
                best_a = a;
            }
        }
    }
    // Local refinement: alternate golden-section searches in the radius
    // exponent and the angle around the incumbent, shrinking the window.
    double de = 1.0, da = two_pi / grid.angles;
    for (int round = 0; round < grid.refinement_rounds; ++round) {
        const auto [e, ve] = detail::golden_section_min(
            [&](double x) { return -objective(x, best_a); }, std::max(best_e - de, grid.min_exponent - 2.0),
            std::min(best_e + de, static_cast<double>(grid.max_exponent)));
        if (-ve > best) {
            best = -ve;
            best_e = e;
        }
        const auto [a, va] = detail::golden_section_min([&](double x) { return -objective(best_e, x); }, best_a - da,
                                                        best_a + da);
        if (-va > best) {
            best = -va;
            best_a = a;
        }
        de *= 0.5;
        da *= 0.5;
    }
    return best;
}

inline double kreiss_constant(const Matrix& m, const ResolventGrid& grid = {}) {
    return kreiss_constant(full_operator(m), grid);
}

/// inf_{|z| >= 1} sigma_min(M - z): zero when rho >= 1, otherwise searched on
/// the unit circle (angle grid, then golden-section refinement around the
/// best grid angles).
inline double distance_to_instability(const EvolutionOperator& op, const ResolventGrid& grid = {}) {
    if (spectral_radius(op) >= 1.0) return 0.0;
    const double two_pi = 2.0 * std::numbers::pi;
    auto f = [&](double a) { return sigma_min_shifted(op, std::polar(1.0, a)); };
    const int m = grid.angles;
    std::vector<double> vals(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) vals[static_cast<std::size_t>(j)] = f(two_pi * j / m);
    double best = *std::min_element(vals.begin(), vals.end());
    const double h = two_pi / m;
    // Refine the lowest discrete local minima.
    std::vector<int> minima;
    for (int j = 0; j < m; ++j) {
        const double v = vals[static_cast<std::size_t>(j)];
        if (v <= vals[static_cast<std::size_t>((j + m - 1) % m)] && v <= vals[static_cast<std::size_t>((j + 1) % m)])
            minima.push_back(j);
    }
    std::stable_sort(minima.begin(), minima.end(),
                     [&](int a, int b) { return vals[static_cast<std::size_t>(a)] < vals[static_cast<std::size_t>(b)]; });
    if (minima.size() > 8) minima.resize(8);
    for (int j : minima) {
        const double centre = two_pi * j / m;
        best = std::min(best, detail::golden_section_min(f, centre - h, centre + h).second);
    }
    return best;
}

inline double distance_to_instability(const Matrix& m, const ResolventGrid& grid = {}) {
    return distance_to_instability(full_operator(m), grid);
}

// ---------------------------------------------------------------------------

struct RankBoundCheck {
    double p_hat = 1.0;
    double bound = 0.0; ///< exp(2 r ||M|| / (1 - rho) + 1) / 2, infinite if rho >= 1
    bool holds = false;
    bool applicable = false; ///< the bound only applies to rho < 1
};

/// Checks p <= exp(2 r ||M|| / (1 - rho) + 1) / 2 for a rank-r map with
/// spectral radius rho < 1, using the certified power-norm supremum.
inline RankBoundCheck rank_bound_check(const EvolutionOperator& op, Index rank, Index max_t = 10000) {
    RankBoundCheck out;
    const double rho = spectral_radius(op);
    const PowerNormProfile prof = power_norm_profile(op, max_t);
    out.p_hat = prof.p_hat;
    out.applicable = rho < 1.0 && prof.certified;
    if (rho >= 1.0) {
        out.bound = std::numeric_limits<double>::infinity();
        return out;
    }
    const double norm = op_norm_2(op.core);
    out.bound = 0.5 * std::exp(2.0 * static_cast<double>(rank) * norm / (1.0 - rho) + 1.0);
    out.holds = out.applicable && out.p_hat <= out.bound;
    return out;
}

inline RankBoundCheck rank_bound_check(const Matrix& m, Index rank, Index max_t = 10000) {
    return rank_bound_check(full_operator(m), rank, max_t);
}

// ---------------------------------------------------------------------------

enum class Verdict { stable, marginal, unstable };

inline const char* to_string(Verdict v) {
    switch (v) {
    case Verdict::stable: return "stable";
    case Verdict::marginal: return "marginal";
    case Verdict::unstable: return "unstable";
    }
    return "?";
}

/// |rho - 1| below this is reported as marginal.
inline constexpr double kMarginalTol = 1e-8;

struct SpectralReport {
    double rho = 0.0;
    PowerNormProfile powers;
    double eta_hat = 1.0;
    double d_hat = 0.0;
    ResolventGrid grid;
    Index ambient_dim = 0;
    Index core_dim = 0;
    Verdict verdict = Verdict::stable;
};

inline SpectralReport spectral_report(const EvolutionOperator& op, Index max_t = 10000, const ResolventGrid& grid = {}) {
    SpectralReport r;
    r.rho = spectral_radius(op);
    r.powers = power_norm_profile(op, max_t);
    r.eta_hat = kreiss_constant(op, grid);
    r.d_hat = distance_to_instability(op, grid);
    r.grid = grid;
    r.ambient_dim = op.ambient;
    r.core_dim = op.core.rows();
    if (std::abs(r.rho - 1.0) <= kMarginalTol) r.verdict = Verdict::marginal;
    else r.verdict = r.rho < 1.0 ? Verdict::stable : Verdict::unstable;
    return r;
}

} // namespace dli
