#pragma once

// Propagation of an initial empirical measure under a fitted estimator.
//
// A forecast at step t is a weight vector w_t over the training outputs y_i,
// i.e. the signed measure sum_i w_{t,i} delta_{y_i}. The DLI recursion keeps
// the deviation from the empirical invariant measure (uniform weights) in a
// reduced state and adds the uniform part back at every step, so every w_t
// has unit mass up to roundoff.

#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dli/estimators.hpp"
#include "dli/metrics.hpp"

namespace dli {

enum class ForecastMethod { dli, baseline };

inline const char* to_string(ForecastMethod m) { return m == ForecastMethod::dli ? "dli" : "baseline"; }

/// Baseline weights whose sup-norm exceeds this are reported as divergence.
inline constexpr double kOverflowGuard = 1e12;

struct ForecastTrajectory {
    ForecastMethod method = ForecastMethod::dli;
    Points support;         ///< the n training outputs
    Matrix weights;         ///< row t-1 holds w_t, t = 1..T (fewer rows if diverged)
    Matrix reduced_states;  ///< DLI only: row t holds the reduced state after t updates, t = 0..T
    std::optional<Index> diverged_at; ///< baseline only: first step whose weights tripped the guard

    Index horizon() const { return weights.rows(); }
    bool diverged() const { return diverged_at.has_value(); }
    WeightedMeasure measure(Index t) const {
        if (t < 1 || t > horizon()) throw std::out_of_range("ForecastTrajectory::measure: step out of range");
        return {support, weights.row(t - 1).transpose()};
    }
};

/// K_xz 1_{n0}: the normalized kernel sums (1/(n0 sqrt(n))) sum_j k(x_i, z_j).
template <Kernel K>
Vector initial_embedding(const KoopmanFit<K>& fit, const Points& initial) {
    if (initial.rows() == 0) throw std::invalid_argument("forecast: empty initial sample");
    if (initial.cols() != fit.x.cols()) throw std::invalid_argument("forecast: initial sample dimension mismatch");
    const Index n0 = initial.rows();
    const GramBlock kxz = gram(fit.kernel, fit.x, initial, Normalization::inv_sqrt_nm);
    return kxz.values.rowwise().sum() / std::sqrt(static_cast<double>(n0));
}

/// Step-by-step DLI evolution for one centered fit. Holds the per-fit
/// factorizations so that a trajectory can be extended from any reduced state.
template <Kernel K>
class DliPropagator {
public:
    // Keeps a reference to the fit, which must outlive the propagator.
    explicit DliPropagator(KoopmanFit<K>&&) = delete;
    explicit DliPropagator(const KoopmanFit<K>& fit) : fit_(fit) {
        if (!fit.centered) throw std::invalid_argument("dli_forecast: fit is not centered");
        n_ = fit.size();
        if (fit.factored()) {
            reduced_ = fit.u.transpose() * fit.gram_xy * fit.v;
        } else {
            if (fit.cholesky.size() == 0) throw std::invalid_argument("dli_forecast: KRR fit without a factorization");
            factor_ = fit.cholesky;
        }
    }

    /// Reduced state w~_0 for the initial sample.
    Vector initial_state(const Points& initial) const {
        const Vector ones_n = Vector::Constant(n_, 1.0 / std::sqrt(static_cast<double>(n_)));
        const Vector d = initial_embedding(fit_, initial) - fit_.gram_xy * ones_n;
        if (fit_.factored()) return fit_.u.transpose() * d;
        return project_out_mean(solve(project_out_mean(d)));
    }

    Vector step(const Vector& state) const {
        if (fit_.factored()) return reduced_ * state;
        return project_out_mean(solve(project_out_mean(Vector(fit_.gram_xy * state))));
    }

    /// w = 1/n + (V w~) / sqrt(n), with V w~ projected so that the deviation
    /// carries no mass.
    Vector weights(const Vector& state) const {
        const Vector dev = fit_.factored() ? Vector(fit_.v * state) : state;
        return (project_out_mean(dev) / std::sqrt(static_cast<double>(n_))).array() + 1.0 / static_cast<double>(n_);
    }

    /// T steps from the given reduced state.
    ForecastTrajectory run(const Vector& state0, Index horizon) const {
        if (horizon < 1) throw std::invalid_argument("dli_forecast: horizon must be at least 1");
        ForecastTrajectory out;
        out.method = ForecastMethod::dli;
        out.support = fit_.y;
        out.weights.resize(horizon, n_);
        out.reduced_states.resize(horizon + 1, state0.size());
        Vector s = state0;
        out.reduced_states.row(0) = s.transpose();
        for (Index t = 1; t <= horizon; ++t) {
            out.weights.row(t - 1) = weights(s).transpose();
            s = step(s);
            out.reduced_states.row(t) = s.transpose();
        }
        if (!out.weights.allFinite()) throw NumericalError("dli_forecast: non-finite weights");
        return out;
    }

private:
    Vector solve(const Vector& rhs) const { return solve_lower_transposed(factor_, solve_lower(factor_, rhs)).col(0); }

    const KoopmanFit<K>& fit_;
    Index n_ = 0;
    Matrix reduced_;
    Matrix factor_;
};

template <Kernel K>
ForecastTrajectory dli_forecast(const KoopmanFit<K>& fit, const Points& initial, Index horizon) {
    const DliPropagator<K> prop(fit);
    return prop.run(prop.initial_state(initial), horizon);
}

/// Uncentered forecast: w_1 = W^T K_xz 1 / sqrt(n), w_{t+1} = W^T gram_xy w_t.
/// Weights are signed and carry no mass constraint. If the sup-norm of w_t
/// exceeds kOverflowGuard the trajectory stops at t - 1 and diverged_at = t.
template <Kernel K>
ForecastTrajectory baseline_forecast(const KoopmanFit<K>& fit, const Points& initial, Index horizon) {
    if (fit.centered) throw std::invalid_argument("baseline_forecast: fit is centered");
    if (horizon < 1) throw std::invalid_argument("baseline_forecast: horizon must be at least 1");
    const Index n = fit.size();
    auto apply_wt = [&](const Vector& v) -> Vector {
        if (fit.factored()) return fit.v * (fit.u.transpose() * v);
        return fit.w.transpose() * v;
    };
    ForecastTrajectory out;
    out.method = ForecastMethod::baseline;
    out.support = fit.y;
    std::vector<Vector> rows;
    Vector w = apply_wt(initial_embedding(fit, initial)) / std::sqrt(static_cast<double>(n));
    for (Index t = 1; t <= horizon; ++t) {
        if (!w.allFinite() || w.cwiseAbs().maxCoeff() > kOverflowGuard) {
            out.diverged_at = t;
            break;
        }
        rows.push_back(w);
        if (t < horizon) w = apply_wt(fit.gram_xy * w);
    }
    out.weights.resize(static_cast<Index>(rows.size()), n);
    for (std::size_t t = 0; t < rows.size(); ++t) out.weights.row(static_cast<Index>(t)) = rows[t].transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Per-step summaries

struct TrajectoryStats {
    Vector mass;     ///< sum_i w_{t,i}
    Vector mean;     ///< sum_i w_{t,i} y_i
    Vector variance; ///< sum_i w_{t,i} (y_i - mean_t)^2 / mass_t (0 when the mass is 0)
    Matrix cdf;      ///< cdf(t-1, q) = sum_i w_{t,i} 1{y_i <= query_q}
};

inline TrajectoryStats trajectory_stats(const ForecastTrajectory& traj, std::span<const double> cdf_queries = {}) {
    if (traj.support.cols() != 1) throw std::invalid_argument("trajectory_stats: scalar support required");
    const Index steps = traj.horizon();
    const Index n = traj.support.rows();
    const Eigen::Map<const Vector> y(traj.support.data(), n);
    TrajectoryStats s;
    s.mass = traj.weights.rowwise().sum();
    s.mean = traj.weights * y;
    s.variance.resize(steps);
    for (Index t = 0; t < steps; ++t) {
        double acc = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double d = y(i) - s.mean(t) / (s.mass(t) != 0.0 ? s.mass(t) : 1.0);
            acc += traj.weights(t, i) * d * d;
        }
        s.variance(t) = s.mass(t) != 0.0 ? acc / s.mass(t) : 0.0;
    }
    s.cdf = Matrix::Zero(steps, static_cast<Index>(cdf_queries.size()));
    for (std::size_t q = 0; q < cdf_queries.size(); ++q)
        for (Index t = 0; t < steps; ++t)
            for (Index i = 0; i < n; ++i)
                if (y(i) <= cdf_queries[q]) s.cdf(t, static_cast<Index>(q)) += traj.weights(t, i);
    return s;
}

} // namespace dli
