#pragma once

// Ground-truth processes: Ornstein-Uhlenbeck (exact transition, exact flow of
// Gaussian mixtures) and Cox-Ingersoll-Ross (Euler simulation, least-squares
// calibration).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "dli/data.hpp"
#include "dli/metrics.hpp"

namespace dli {

/// mt19937_64 keyed by (seed, stream). Streams with distinct indices are
/// independent for practical purposes; the same pair always gives the same
/// sequence, regardless of which thread consumes it.
class SeededRng {
public:
    using result_type = std::mt19937_64::result_type;
    static constexpr const char* algorithm = "mt19937_64/seed_seq";

    explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        engine_.seed(seq);
    }

    /// Independent stream `index` derived from the same master seed.
    SeededRng spawn(std::uint64_t index) const { return SeededRng(seed_, index); }

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Ornstein-Uhlenbeck: dX = -theta X dt + sigma dW

struct OUParams {
    double theta = 1.0;
    double sigma = 1.0;
    double dt = 0.05;

    void validate() const {
        if (!(theta > 0.0) || !(sigma > 0.0) || !(dt > 0.0) || !std::isfinite(theta) || !std::isfinite(sigma) ||
            !std::isfinite(dt))
            throw std::invalid_argument("OUParams: theta, sigma and dt must be positive and finite");
    }
    double invariant_variance() const { return sigma * sigma / (2.0 * theta); }
    bool operator==(const OUParams&) const = default;
};

/// Law of X_t given X_0 = x.
inline Gaussian ou_transition(const OUParams& p, double x, double t) {
    p.validate();
    if (!(t >= 0.0)) throw std::invalid_argument("ou_transition: negative time");
    const double decay = std::exp(-p.theta * t);
    return {x * decay, p.invariant_variance() * (-std::expm1(-2.0 * p.theta * t))};
}

/// n i.i.d. pairs: X from the invariant law, Y | X one exact step of length dt.
inline SamplePairs ou_sample_pairs(const OUParams& p, Index n, SeededRng& rng) {
    p.validate();
    if (n < 1) throw std::invalid_argument("ou_sample_pairs: n must be positive");
    std::normal_distribution<double> normal;
    const double sd_x = std::sqrt(p.invariant_variance());
    const double decay = std::exp(-p.theta * p.dt);
    const double sd_step = std::sqrt(p.invariant_variance() * (-std::expm1(-2.0 * p.theta * p.dt)));
    SamplePairs out;
    out.x.resize(n, 1);
    out.y.resize(n, 1);
    for (Index i = 0; i < n; ++i) {
        const double x = sd_x * normal(rng);
        out.x(i, 0) = x;
        out.y(i, 0) = decay * x + sd_step * normal(rng);
    }
    return out;
}

/// Pushes each component through the OU semigroup; weights are unchanged.
inline GaussianMixture mixture_flow(const OUParams& p, const GaussianMixture& initial, double t) {
    p.validate();
    if (!(t >= 0.0)) throw std::invalid_argument("mixture_flow: negative time");
    const double decay = std::exp(-p.theta * t);
    const double fill = p.invariant_variance() * (-std::expm1(-2.0 * p.theta * t));
    std::vector<GaussianMixture::Component> out;
    for (const auto& c : initial.components()) out.push_back({c.weight, c.mean * decay, c.variance * decay * decay + fill});
    return GaussianMixture(std::move(out));
}

inline Points sample_mixture(const GaussianMixture& g, Index n, SeededRng& rng) {
    if (n < 1) throw std::invalid_argument("sample_mixture: n must be positive");
    std::vector<double> w;
    for (const auto& c : g.components()) w.push_back(c.weight);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::normal_distribution<double> normal;
    Points out(n, 1);
    for (Index i = 0; i < n; ++i) {
        const auto& c = g.components()[pick(rng)];
        out(i, 0) = c.mean + std::sqrt(c.variance) * normal(rng);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cox-Ingersoll-Ross: dX = kappa (b - X) dt + sigma sqrt(X) dW

struct CIRParams {
    double kappa = 0.5;
    double b = 4.0;
    double sigma = 0.3;
    double dt = 1.0 / 52.0;

    /// sigma = 0 is allowed (deterministic limit); the rest must be positive.
    void validate() const {
        if (!(kappa > 0.0) || !(b > 0.0) || !(dt > 0.0) || !(sigma >= 0.0) || !std::isfinite(kappa) ||
            !std::isfinite(b) || !std::isfinite(sigma) || !std::isfinite(dt))
            throw std::invalid_argument("CIRParams: kappa, b, dt must be positive and sigma non-negative");
    }
    bool feller() const { return 2.0 * kappa * b >= sigma * sigma; }
    bool operator==(const CIRParams&) const = default;
};

/// Full-truncation Euler. The returned path has steps + 1 entries starting at
/// x0; the reported states are max(x, 0) while the scheme itself carries the
/// untruncated value forward.
inline std::vector<double> cir_simulate(const CIRParams& p, double x0, Index steps, SeededRng& rng) {
    p.validate();
    if (steps < 0) throw std::invalid_argument("cir_simulate: negative step count");
    if (!std::isfinite(x0)) throw std::invalid_argument("cir_simulate: non-finite start");
    std::normal_distribution<double> normal;
    std::vector<double> path;
    path.reserve(static_cast<std::size_t>(steps) + 1);
    double x = x0;
    path.push_back(std::max(x, 0.0));
    const double sq_dt = std::sqrt(p.dt);
    for (Index s = 0; s < steps; ++s) {
        const double xp = std::max(x, 0.0);
        const double xi = p.sigma > 0.0 ? normal(rng) : 0.0;
        x = x + p.kappa * (p.b - xp) * p.dt + p.sigma * std::sqrt(xp) * sq_dt * xi;
        path.push_back(std::max(x, 0.0));
    }
    return path;
}

/// Ordinary least squares of dx on [1, x]; sigma^2 from the residuals scaled
/// by 1 / (x dt).
inline CIRParams cir_calibrate_ls(std::span<const double> path, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("cir_calibrate_ls: dt must be positive");
    if (path.size() < 3) throw std::invalid_argument("cir_calibrate_ls: need at least three observations");
    for (double v : path)
        if (!std::isfinite(v)) throw std::invalid_argument("cir_calibrate_ls: non-finite observation");
    const std::size_t m = path.size() - 1;
    double mx = 0.0, md = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        mx += path[i];
        md += path[i + 1] - path[i];
    }
    mx /= static_cast<double>(m);
    md /= static_cast<double>(m);
    double sxx = 0.0, sxd = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double dx = path[i] - mx;
        sxx += dx * dx;
        sxd += dx * (path[i + 1] - path[i] - md);
    }
    if (!(sxx > 1e-14 * std::max(1.0, mx * mx) * static_cast<double>(m)))
        throw std::invalid_argument("cir_calibrate_ls: degenerate regressor (path is constant)");
    const double slope = sxd / sxx;
    const double intercept = md - slope * mx;

    CIRParams out;
    out.dt = dt;
    out.kappa = -slope / dt;
    if (out.kappa > 0.0) {
        out.b = intercept / (out.kappa * dt);
    } else {
        std::ostringstream os;
        os << "cir_calibrate_ls: fitted reversion " << out.kappa << " is not positive; flooring at 1e-6";
        warn(os.str());
        out.kappa = 1e-6;
        out.b = mx;
    }
    if (!(out.b > 0.0)) {
        warn("cir_calibrate_ls: fitted level is not positive; using the path mean");
        out.b = std::max(mx, 1e-12);
    }
    double s2 = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (path[i] <= 1e-12) continue;
        const double r = path[i + 1] - path[i] - intercept - slope * path[i];
        s2 += r * r / (path[i] * dt);
        ++used;
    }
    out.sigma = used > 0 ? std::sqrt(s2 / static_cast<double>(used)) : 0.0;
    return out;
}

/// Endpoints of n_samples simulated paths after `horizon` steps, uniformly
/// weighted.
inline WeightedMeasure cir_forecast_distribution(const CIRParams& p, double x0, Index horizon, Index n_samples,
                                                 SeededRng& rng) {
    if (n_samples < 1) throw std::invalid_argument("cir_forecast_distribution: need at least one sample");
    Points ends(n_samples, 1);
    for (Index s = 0; s < n_samples; ++s) ends(s, 0) = cir_simulate(p, x0, horizon, rng).back();
    return WeightedMeasure::uniform(std::move(ends));
}

/// All horizons 1..horizon at once: row t-1 holds the n_samples simulated
/// states after t steps (each path is reused across horizons).
inline Matrix cir_forecast_paths(const CIRParams& p, double x0, Index horizon, Index n_samples, SeededRng& rng) {
    if (n_samples < 1 || horizon < 1) throw std::invalid_argument("cir_forecast_paths: horizon and samples must be positive");
    Matrix out(horizon, n_samples);
    for (Index s = 0; s < n_samples; ++s) {
        const auto path = cir_simulate(p, x0, horizon, rng);
        for (Index t = 0; t < horizon; ++t) out(t, s) = path[static_cast<std::size_t>(t) + 1];
    }
    return out;
}

} // namespace dli
