#pragma once

#include <sstream>
#include <stdexcept>

#include "dli/kernels.hpp"

namespace dli {

/// Consecutive states (x_i, y_i) of one process, plus optional samples z of
/// an initial distribution to be propagated.
struct SamplePairs {
    Points x;
    Points y;
    Points initial; ///< may be empty

    Index size() const { return x.rows(); }
    Index dim() const { return x.cols(); }

    void validate(const char* what = "SamplePairs") const {
        std::ostringstream os;
        if (x.rows() == 0) os << what << ": no samples";
        else if (x.rows() != y.rows()) os << what << ": " << x.rows() << " inputs but " << y.rows() << " outputs";
        else if (x.cols() != y.cols()) os << what << ": input/output dimension mismatch";
        else if (initial.rows() > 0 && initial.cols() != x.cols()) os << what << ": initial-sample dimension mismatch";
        if (!os.str().empty()) throw std::invalid_argument(os.str());
        require_finite(x, what);
        require_finite(y, what);
        require_finite(initial, what);
    }
};

/// Pairs (s_t, s_{t+1}) from a scalar series.
inline SamplePairs consecutive_pairs(std::span<const double> series) {
    if (series.size() < 2) throw std::invalid_argument("consecutive_pairs: need at least two observations");
    SamplePairs p;
    p.x = scalar_points(series.first(series.size() - 1));
    p.y = scalar_points(series.subspan(1));
    return p;
}

} // namespace dli
