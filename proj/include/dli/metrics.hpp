#pragma once

// Weighted empirical measures and the distances used to score forecasts:
// MMD (against empirical measures and Gaussian mixtures) and CRPS.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "dli/kernels.hpp"

namespace dli {

/// sum_i w_i delta_{x_i}. Weights may be negative; the measure is a
/// probability measure only when they sum to one.
class WeightedMeasure {
public:
    WeightedMeasure() = default;
    WeightedMeasure(Points support, Vector weights) : support_(std::move(support)), weights_(std::move(weights)) {
        if (support_.rows() != weights_.size()) throw std::invalid_argument("WeightedMeasure: support/weight size mismatch");
        require_finite(support_, "WeightedMeasure support");
        require_finite(weights_, "WeightedMeasure weights");
    }

    static WeightedMeasure uniform(Points support) {
        const Index n = support.rows();
        if (n == 0) throw std::invalid_argument("WeightedMeasure::uniform: empty support");
        return {std::move(support), Vector::Constant(n, 1.0 / static_cast<double>(n))};
    }

    const Points& support() const { return support_; }
    const Vector& weights() const { return weights_; }
    Index size() const { return weights_.size(); }
    double mass() const { return weights_.sum(); }
    bool is_probability() const { return std::abs(mass() - 1.0) <= 1e-10; }

private:
    Points support_;
    Vector weights_;
};

class GaussianMixture {
public:
    struct Component {
        double weight = 1.0;
        double mean = 0.0;
        double variance = 0.0;
        bool operator==(const Component&) const = default;
    };

    GaussianMixture() = default;
    explicit GaussianMixture(std::vector<Component> components) : components_(std::move(components)) {
        if (components_.empty()) throw std::invalid_argument("GaussianMixture: no components");
        double total = 0.0;
        for (const auto& c : components_) {
            if (!std::isfinite(c.weight) || !std::isfinite(c.mean) || !std::isfinite(c.variance))
                throw std::invalid_argument("GaussianMixture: non-finite component");
            if (c.weight < 0.0) throw std::invalid_argument("GaussianMixture: negative component weight");
            if (c.variance < 0.0) throw std::invalid_argument("GaussianMixture: negative component variance");
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-12) {
            std::ostringstream os;
            os << "GaussianMixture: component weights sum to " << total << ", expected 1";
            throw std::invalid_argument(os.str());
        }
    }

    static GaussianMixture single(double mean, double variance) { return GaussianMixture({{1.0, mean, variance}}); }

    const std::vector<Component>& components() const { return components_; }
    bool operator==(const GaussianMixture&) const = default;

private:
    std::vector<Component> components_;
};

namespace detail {

// sqrt(a - 2b + c) for a quadratic-form MMD^2. A slightly negative radicand
// is roundoff; a clearly negative one means the inputs are inconsistent.
inline double mmd_from_terms(double aa, double ab, double bb) {
    const double radicand = aa - 2.0 * ab + bb;
    if (radicand >= 0.0) return std::sqrt(radicand);
    const double scale = std::abs(aa) + 2.0 * std::abs(ab) + std::abs(bb);
    if (radicand >= -1e-12 * std::max(scale, 1e-300)) return 0.0;
    std::ostringstream os;
    os << "mmd: negative squared distance " << radicand << " (scale " << scale << ")";
    throw NumericalError(os.str());
}

} // namespace detail

template <Kernel K>
double mmd_empirical(const WeightedMeasure& mu, const WeightedMeasure& nu, const K& kernel) {
    if (mu.size() == 0 || nu.size() == 0) throw std::invalid_argument("mmd_empirical: empty support");
    const Matrix kaa = gram(kernel, mu.support(), mu.support()).values;
    const Matrix kab = gram(kernel, mu.support(), nu.support()).values;
    const Matrix kbb = gram(kernel, nu.support(), nu.support()).values;
    const double aa = mu.weights().dot(kaa * mu.weights());
    const double ab = mu.weights().dot(kab * nu.weights());
    const double bb = nu.weights().dot(kbb * nu.weights());
    return detail::mmd_from_terms(aa, ab, bb);
}

/// ||g_target||_H = sqrt(E k(X, X')) for X, X' ~ target independent.
inline double mixture_embedding_norm(const GaussianMixture& target, const GaussianKernel& kernel) {
    double s = 0.0;
    for (const auto& a : target.components())
        for (const auto& b : target.components())
            s += a.weight * b.weight * gaussian_kernel_double(kernel, {a.mean, a.variance}, {b.mean, b.variance});
    return std::sqrt(s);
}

/// MMD between weighted measures on a fixed scalar support and Gaussian
/// mixtures. The support Gram is computed once, so evaluating a whole
/// forecast trajectory costs O(n^2) per step.
class MixtureDistance {
public:
    MixtureDistance(const GaussianKernel& kernel, Points support)
        : kernel_(kernel), support_(std::move(support)) {
        if (support_.cols() != 1) throw std::invalid_argument("MixtureDistance: closed forms require scalar states");
        if (support_.rows() == 0) throw std::invalid_argument("MixtureDistance: empty support");
        gram_ = gram(kernel_, support_, support_).values;
    }

    double mmd(const Vector& weights, const GaussianMixture& target) const {
        if (weights.size() != support_.rows()) throw std::invalid_argument("MixtureDistance: weight size mismatch");
        require_finite(weights, "MixtureDistance weights");
        const double aa = weights.dot(gram_ * weights);
        double ab = 0.0;
        for (Index i = 0; i < support_.rows(); ++i) {
            double e = 0.0;
            for (const auto& c : target.components())
                e += c.weight * gaussian_kernel_mean(kernel_, support_(i, 0), {c.mean, c.variance});
            ab += weights(i) * e;
        }
        const double norm = mixture_embedding_norm(target, kernel_);
        return detail::mmd_from_terms(aa, ab, norm * norm);
    }

    double relative(const Vector& weights, const GaussianMixture& target) const {
        return mmd(weights, target) / mixture_embedding_norm(target, kernel_);
    }

    const GaussianKernel& kernel() const { return kernel_; }
    const Points& support() const { return support_; }

private:
    GaussianKernel kernel_;
    Points support_;
    Matrix gram_;
};

inline double mmd_vs_mixture(const WeightedMeasure& mu, const GaussianMixture& target, const GaussianKernel& kernel) {
    return MixtureDistance(kernel, mu.support()).mmd(mu.weights(), target);
}

/// mmd_vs_mixture / ||g_target||: zero for a perfect forecast, one for the
/// null measure.
inline double relative_mmd(const WeightedMeasure& mu, const GaussianMixture& target, const GaussianKernel& kernel) {
    return MixtureDistance(kernel, mu.support()).relative(mu.weights(), target);
}

// ---------------------------------------------------------------------------
// CRPS

/// Integral of F^2 left of the observation and (1 - F)^2 right of it, where F
/// is the (possibly non-monotone) cdf of a signed measure on the real line.
/// The integral runs over the hull of the support and the observation; for
/// unit total mass the integrand vanishes outside it, otherwise the
/// divergent tail beyond the largest point is not counted.
inline double crps(std::span<const double> support, std::span<const double> weights, double observed) {
    if (support.empty()) throw std::invalid_argument("crps: empty support");
    if (support.size() != weights.size()) throw std::invalid_argument("crps: support/weight size mismatch");
    if (!std::isfinite(observed)) throw std::invalid_argument("crps: non-finite observation");
    std::vector<std::size_t> order(support.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return support[a] < support[b]; });

    double total = 0.0;
    double cdf = 0.0;
    double pos = std::min(observed, support[order.front()]);
    bool seen_obs = false;
    auto advance = [&](double next) {
        const double len = next - pos;
        if (len > 0.0) {
            const double v = (next <= observed) ? cdf : 1.0 - cdf;
            total += v * v * len;
        }
        pos = next;
    };
    for (std::size_t k : order) {
        const double y = support[k];
        if (!seen_obs && observed <= y) {
            advance(observed);
            seen_obs = true;
        }
        advance(y);
        cdf += weights[k];
    }
    if (!seen_obs) advance(observed);
    return total;
}

inline double crps(const WeightedMeasure& mu, double observed) {
    if (mu.size() == 0) throw std::invalid_argument("crps: empty support");
    if (mu.support().cols() != 1) throw std::invalid_argument("crps: scalar support required");
    return crps(std::span<const double>(mu.support().data(), static_cast<std::size_t>(mu.size())),
                std::span<const double>(mu.weights().data(), static_cast<std::size_t>(mu.size())), observed);
}

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0; ///< sample standard deviation (n - 1); 0 for a single value
};

inline MeanStd mean_and_std(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("mean_and_std: no values");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

/// Mean and standard deviation of the per-step CRPS along a trajectory.
inline MeanStd average_crps(const std::vector<WeightedMeasure>& trajectory, std::span<const double> observed) {
    if (trajectory.size() != observed.size()) throw std::invalid_argument("average_crps: length mismatch");
    std::vector<double> scores;
    scores.reserve(trajectory.size());
    for (std::size_t t = 0; t < trajectory.size(); ++t) scores.push_back(crps(trajectory[t], observed[t]));
    return mean_and_std(scores);
}

/// Same, for a trajectory stored as rows of weights over one scalar support.
inline MeanStd average_crps(const Points& support, const Matrix& weights, std::span<const double> observed) {
    if (support.cols() != 1) throw std::invalid_argument("average_crps: scalar support required");
    if (weights.cols() != support.rows()) throw std::invalid_argument("average_crps: weight width mismatch");
    if (static_cast<std::size_t>(weights.rows()) != observed.size())
        throw std::invalid_argument("average_crps: length mismatch");
    const std::span<const double> sup(support.data(), static_cast<std::size_t>(support.rows()));
    std::vector<double> scores;
    std::vector<double> row(static_cast<std::size_t>(weights.cols()));
    for (Index t = 0; t < weights.rows(); ++t) {
        for (Index i = 0; i < weights.cols(); ++i) row[static_cast<std::size_t>(i)] = weights(t, i);
        scores.push_back(crps(sup, row, observed[static_cast<std::size_t>(t)]));
    }
    return mean_and_std(scores);
}

} // namespace dli
