#pragma once

// Experiment harness: hyperparameter grid search on a validation split, the
// Ornstein-Uhlenbeck relative-MMD study, the CRPS study on a univariate
// series, data simulation and CSV ingestion.
//
// Repetition k of every study draws from SeededRng(config.seed, k), so the
// numbers do not depend on how repetitions are spread over threads. All
// outputs are sorted before they are written.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "dli/config.hpp"
#include "dli/dynamics.hpp"
#include "dli/estimators.hpp"
#include "dli/forecaster.hpp"
#include "dli/io.hpp"
#include "dli/metrics.hpp"
#include "dli/spectral.hpp"

namespace dli {

// ---------------------------------------------------------------------------
// Threads

/// fn(0), ..., fn(count - 1) on up to `threads` workers (0 = one per core).
/// Results come back in index order. If any call throws, the exception of the
/// lowest failing index is rethrown after all workers have finished.
template <class F>
auto parallel_map(std::size_t count, unsigned threads, F&& fn) {
    using R = std::invoke_result_t<F&, std::size_t>;
    std::vector<std::optional<R>> slots(count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    unsigned n = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
    n = static_cast<unsigned>(std::min<std::size_t>(n, count));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<R> out;
    out.reserve(count);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

// ---------------------------------------------------------------------------
// Grid search

struct GridCandidate {
    double lengthscale = 1.0;
    double gamma = 0.0; ///< unused by PCR
    Index rank = 0;     ///< unused by KRR
};

struct GridEntry {
    GridCandidate candidate;
    std::optional<double> risk; ///< empty when the fit failed
    std::string status;         ///< "ok", a rank-reduction note, or the failure message
};

struct GridSpec {
    EstimatorKind kind = EstimatorKind::rrr;
    bool centered = true;
    std::vector<double> lengthscales;
    std::vector<double> gammas;
    std::vector<Index> ranks;
};

inline GridSpec grid_spec(const ExperimentConfig& c, bool centered) {
    return {c.estimator, centered, c.lengthscales, c.gammas, c.ranks};
}

template <Kernel K>
struct BasicGridResult {
    std::vector<GridEntry> entries; ///< in grid order: lengthscale, then gamma, then rank
    std::size_t best = 0;
    KoopmanFit<K> fit; ///< the selected fit, trained on the training split

    const GridCandidate& selected() const { return entries[best].candidate; }
};

using GridResult = BasicGridResult<GaussianKernel>;

namespace detail {

inline std::vector<GridCandidate> candidates_for(const GridSpec& spec, double ell) {
    std::vector<GridCandidate> out;
    switch (spec.kind) {
    case EstimatorKind::krr:
        for (double g : spec.gammas) out.push_back({ell, g, 0});
        break;
    case EstimatorKind::pcr:
        for (Index r : spec.ranks) out.push_back({ell, 0.0, r});
        break;
    case EstimatorKind::rrr:
        for (double g : spec.gammas)
            for (Index r : spec.ranks) out.push_back({ell, g, r});
        break;
    }
    return out;
}

inline std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

} // namespace detail

/// Fits every candidate on `train`, scores it by validation risk on `val` and
/// keeps the minimizer (the first one on ties). Candidates whose fit or risk
/// throws are recorded as failed and skipped. Throws NumericalError if no
/// candidate succeeds. make_kernel maps a grid lengthscale to a kernel.
template <class MakeKernel>
auto grid_search(const SamplePairs& train, const SamplePairs& val, const GridSpec& spec, MakeKernel&& make_kernel) {
    using K = std::decay_t<std::invoke_result_t<MakeKernel&, double>>;
    if (spec.lengthscales.empty()) throw std::invalid_argument("grid_search: empty lengthscale grid");
    std::vector<GridEntry> entries;
    std::size_t best = 0;
    std::optional<double> best_risk;
    std::optional<KoopmanFit<K>> best_fit;
    for (double ell : spec.lengthscales) {
        const std::vector<GridCandidate> cands = detail::candidates_for(spec, ell);
        if (cands.empty()) throw std::invalid_argument("grid_search: empty gamma or rank grid");
        std::optional<PreparedData<K>> prep;
        std::optional<ValidationBlocks> blocks;
        std::string prep_error;
        try {
            prep.emplace(train, make_kernel(ell), spec.centered);
            blocks.emplace(validation_blocks(*prep, val));
        } catch (const NumericalError& e) {
            prep_error = e.what();
        }
        for (const GridCandidate& c : cands) {
            GridEntry entry{c, std::nullopt, "ok"};
            if (!prep_error.empty()) {
                entry.status = detail::one_line(prep_error);
                entries.push_back(entry);
                continue;
            }
            WarningCapture capture;
            try {
                KoopmanFit<K> f = fit(*prep, EstimatorSpec{spec.kind, c.gamma, c.rank});
                const double risk = validation_risk(f, *blocks);
                if (!std::isfinite(risk)) throw NumericalError("non-finite validation risk");
                entry.risk = risk;
                if (!capture.messages().empty()) entry.status = detail::one_line(capture.messages().front());
                if (!best_risk || risk < *best_risk) {
                    best_risk = risk;
                    best = entries.size();
                    best_fit = std::move(f);
                }
            } catch (const NumericalError& e) {
                entry.status = detail::one_line(e.what());
            } catch (const std::invalid_argument& e) {
                entry.status = detail::one_line(e.what());
            }
            entries.push_back(entry);
        }
    }
    if (!best_risk) throw NumericalError("grid_search: every candidate failed");
    return BasicGridResult<K>{std::move(entries), best, std::move(*best_fit)};
}

inline GridResult grid_search(const SamplePairs& train, const SamplePairs& val, const GridSpec& spec) {
    return grid_search(train, val, spec, [](double ell) { return GaussianKernel(ell); });
}

/// Refits the selected hyperparameters of a grid search on other data.
inline KoopmanFit<GaussianKernel> refit(const SamplePairs& data, const GridSpec& spec, const GridCandidate& c) {
    const PreparedData<GaussianKernel> p(data, GaussianKernel(c.lengthscale), spec.centered);
    return fit(p, EstimatorSpec{spec.kind, c.gamma, c.rank});
}

struct GridLogRow {
    std::uint64_t seed = 0;
    std::string method;
    GridEntry entry;
};

/// Header seed,method,lengthscale,gamma,rank,risk,status; a failed risk is
/// written as nan.
inline void write_grid_log_csv(std::ostream& out, std::vector<GridLogRow> rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const GridLogRow& a, const GridLogRow& b) {
        return std::tie(a.seed, a.method) < std::tie(b.seed, b.method);
    });
    write_csv_row(out, {"seed", "method", "lengthscale", "gamma", "rank", "risk", "status"});
    for (const GridLogRow& r : rows) {
        const GridCandidate& c = r.entry.candidate;
        write_csv_row(out, {std::to_string(r.seed), r.method, format_double(c.lengthscale), format_double(c.gamma),
                            std::to_string(c.rank),
                            format_double(r.entry.risk.value_or(std::numeric_limits<double>::quiet_NaN())),
                            r.entry.status});
    }
}

template <Kernel K>
std::vector<GridLogRow> grid_log(std::uint64_t seed, const std::string& method, const BasicGridResult<K>& g) {
    std::vector<GridLogRow> out;
    for (const GridEntry& e : g.entries) out.push_back({seed, method, e});
    return out;
}

// ---------------------------------------------------------------------------
// Guarded forecasts

/// A forecast whose rows past a divergence are missing. For DLI the fit may
/// still be unstable (spectral radius above one), in which case the
/// trajectory is cut exactly like the baseline's.
inline ForecastTrajectory guarded_forecast(const KoopmanFit<GaussianKernel>& f, const Points& initial, Index horizon) {
    if (!f.centered) return baseline_forecast(f, initial, horizon);
    const DliPropagator<GaussianKernel> prop(f);
    ForecastTrajectory out;
    out.method = ForecastMethod::dli;
    out.support = f.y;
    std::vector<Vector> rows;
    Vector s = prop.initial_state(initial);
    for (Index t = 1; t <= horizon; ++t) {
        const Vector w = prop.weights(s);
        if (!w.allFinite() || w.cwiseAbs().maxCoeff() > kOverflowGuard) {
            out.diverged_at = t;
            break;
        }
        rows.push_back(w);
        s = prop.step(s);
    }
    out.weights.resize(static_cast<Index>(rows.size()), f.size());
    for (std::size_t t = 0; t < rows.size(); ++t) out.weights.row(static_cast<Index>(t)) = rows[t].transpose();
    return out;
}

inline std::string method_name(EstimatorKind kind, bool centered) {
    return centered ? std::string("dli-") + to_string(kind) : std::string(to_string(kind));
}

/// Rows at t = 0 describing a tuned fit: its hyperparameters and the
/// spectral diagnostics of its evolution matrix.
inline std::vector<ResultRow> diagnostic_rows(std::uint64_t seed, const std::string& method,
                                              const KoopmanFit<GaussianKernel>& f) {
    const SpectralReport r = spectral_report(evolution_operator(f));
    auto row = [&](const char* metric, double v) { return ResultRow{seed, 0, method, metric, v}; };
    return {row("lengthscale", f.kernel.lengthscale()),
            row("gamma", f.gamma),
            row("rank", static_cast<double>(f.rank)),
            row("rho", r.rho),
            row("p_hat", r.powers.p_hat),
            row("s_hat", r.powers.certified ? r.powers.s_hat : std::numeric_limits<double>::infinity()),
            row("eta_hat", r.eta_hat),
            row("d_hat", r.d_hat)};
}

// ---------------------------------------------------------------------------
// Ornstein-Uhlenbeck relative-MMD study

inline constexpr const char* kRelativeMmd = "rel_mmd";

struct StudyOutput {
    std::vector<ResultRow> rows;
    std::vector<GridLogRow> grid;
};

struct OuData {
    SamplePairs train;
    SamplePairs validation;
    Points initial;
};

inline OuData sample_ou_data(const ExperimentConfig& c, SeededRng& rng) {
    OuData d;
    d.train = ou_sample_pairs(c.ou, c.n_train, rng);
    d.validation = ou_sample_pairs(c.ou, c.n_validation, rng);
    d.initial = sample_mixture(GaussianMixture(c.initial_mixture), c.n_initial, rng);
    return d;
}

/// Relative MMD of every forecast step against the exact flow of the initial
/// mixture. Steps after a divergence are reported as diverged.
inline std::vector<ResultRow> relative_mmd_rows(const ExperimentConfig& c, std::uint64_t seed,
                                                const std::string& method, const ForecastTrajectory& traj) {
    const MixtureDistance dist(GaussianKernel(c.eval_lengthscale), traj.support);
    const GaussianMixture start(c.initial_mixture);
    std::vector<ResultRow> rows;
    for (Index t = 1; t <= c.horizon; ++t) {
        ResultRow r{seed, t, method, kRelativeMmd, std::nullopt};
        if (t <= traj.horizon()) {
            const GaussianMixture target = mixture_flow(c.ou, start, static_cast<double>(t) * c.ou.dt);
            r.value = dist.relative(traj.weights.row(t - 1).transpose(), target);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

/// One repetition: tune a centered (DLI) and an uncentered (baseline) fit,
/// forecast the initial sample and score both against the exact flow.
inline StudyOutput run_ou_repetition(const ExperimentConfig& c, std::uint64_t rep) {
    SeededRng rng(c.seed, rep);
    const OuData d = sample_ou_data(c, rng);
    StudyOutput out;
    for (bool centered : {true, false}) {
        const GridSpec spec = grid_spec(c, centered);
        const std::string method = method_name(c.estimator, centered);
        const GridResult g = grid_search(d.train, d.validation, spec);
        const ForecastTrajectory traj = guarded_forecast(g.fit, d.initial, c.horizon);
        for (ResultRow& r : relative_mmd_rows(c, rep, method, traj)) out.rows.push_back(std::move(r));
        for (ResultRow& r : diagnostic_rows(rep, method, g.fit)) out.rows.push_back(std::move(r));
        for (GridLogRow& r : grid_log(rep, method, g)) out.grid.push_back(std::move(r));
    }
    return out;
}

inline StudyOutput merge(std::vector<StudyOutput> parts) {
    StudyOutput out;
    for (StudyOutput& p : parts) {
        out.rows.insert(out.rows.end(), p.rows.begin(), p.rows.end());
        out.grid.insert(out.grid.end(), p.grid.begin(), p.grid.end());
    }
    return out;
}

inline StudyOutput run_ou_experiment(const ExperimentConfig& c, unsigned threads) {
    c.validate();
    if (c.experiment != "ou-mmd") throw std::invalid_argument("run_ou_experiment: config is not an ou-mmd experiment");
    return merge(parallel_map(static_cast<std::size_t>(c.repetitions), threads,
                              [&](std::size_t k) { return run_ou_repetition(c, k); }));
}

// ---------------------------------------------------------------------------
// Univariate series: ingestion and splitting

struct TimeSeries {
    std::vector<std::string> dates;
    std::vector<double> values;
    std::vector<std::size_t> lines; ///< source line of each observation
};

/// Reads the date and value columns of a CSV file. Dates must be strictly
/// increasing (as text, so ISO dates); errors name the offending line.
inline TimeSeries read_time_series(std::istream& in, const std::string& source, const std::string& date_column,
                                   const std::string& value_column) {
    const CsvTable t = read_csv(in, source);
    const std::size_t cd = t.column(date_column), cv = t.column(value_column);
    TimeSeries s;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const std::string& date = t.rows[i][cd];
        const double v = t.number(i, cv);
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << source << ":" << t.line_numbers[i] << ": non-finite value";
            throw FormatError(os.str());
        }
        if (date.empty() || (!s.dates.empty() && date <= s.dates.back())) {
            std::ostringstream os;
            os << source << ":" << t.line_numbers[i] << ": date '" << date
               << "' is empty or not after the previous date '" << (s.dates.empty() ? "" : s.dates.back()) << "'";
            throw FormatError(os.str());
        }
        s.dates.push_back(date);
        s.values.push_back(v);
        s.lines.push_back(t.line_numbers[i]);
    }
    if (s.values.size() < 2) throw FormatError(source + ": a series needs at least two observations");
    return s;
}

struct SplitInfo {
    std::string name;
    Index pairs = 0;
    std::string first; ///< date of the first pair's input state
    std::string last;
};

/// Consecutive pairs of a series split into training, validation and test
/// parts. The test part is kept in time order and starts right after the
/// last state that precedes it.
struct SeriesSplit {
    SamplePairs train;
    SamplePairs validation;
    SamplePairs test;
    std::vector<double> calibration_path; ///< the states covered by training and validation
    Index total_pairs = 0;
    std::vector<SplitInfo> info;
};

namespace detail {

inline SamplePairs take_pairs(const std::vector<double>& series, const std::vector<std::size_t>& starts) {
    std::vector<double> x, y;
    for (std::size_t i : starts) {
        x.push_back(series[i]);
        y.push_back(series[i + 1]);
    }
    SamplePairs p;
    p.x = scalar_points(x);
    p.y = scalar_points(y);
    return p;
}

inline std::vector<double> path_of(const std::vector<double>& series, std::vector<std::size_t> starts) {
    std::sort(starts.begin(), starts.end());
    std::vector<double> path;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        if (k > 0 && starts[k] != starts[k - 1] + 1)
            throw std::invalid_argument("series split: training and validation ranges must be contiguous");
        path.push_back(series[starts[k]]);
    }
    if (!starts.empty()) path.push_back(series[starts.back() + 1]);
    return path;
}

} // namespace detail

/// Pairs (s_t, s_{t+1}) assigned to a split by the date of s_t. With no
/// ranges given, every pair is training data.
inline SeriesSplit split_series(const TimeSeries& s, const CsvSource& src) {
    SeriesSplit out;
    const std::size_t m = s.values.size() - 1;
    out.total_pairs = static_cast<Index>(m);
    const bool any_range = !src.train.empty() || !src.validation.empty() || !src.test.empty();
    std::vector<std::size_t> tr, va, te;
    for (std::size_t i = 0; i < m; ++i) {
        const std::string& d = s.dates[i];
        if (!any_range || (!src.train.empty() && src.train.contains(d))) tr.push_back(i);
        else if (!src.validation.empty() && src.validation.contains(d)) va.push_back(i);
        else if (!src.test.empty() && src.test.contains(d)) te.push_back(i);
    }
    auto info = [&](const char* name, const std::vector<std::size_t>& idx) {
        SplitInfo i{name, static_cast<Index>(idx.size()), "", ""};
        if (!idx.empty()) {
            i.first = s.dates[idx.front()];
            i.last = s.dates[idx.back()];
        }
        return i;
    };
    out.info = {info("train", tr), info("validation", va), info("test", te)};
    if (tr.empty()) throw std::invalid_argument("series split: no pairs in the training range");
    out.train = detail::take_pairs(s.values, tr);
    if (!va.empty()) out.validation = detail::take_pairs(s.values, va);
    if (!te.empty()) {
        for (std::size_t k = 1; k < te.size(); ++k)
            if (te[k] != te[k - 1] + 1) throw std::invalid_argument("series split: test range must be contiguous");
        out.test = detail::take_pairs(s.values, te);
    }
    std::vector<std::size_t> fitted = tr;
    fitted.insert(fitted.end(), va.begin(), va.end());
    out.calibration_path = detail::path_of(s.values, fitted);
    return out;
}

/// The synthetic counterpart: a CIR path started at its long-run level,
/// split into training (the first train_steps - validation_steps pairs),
/// validation (the next validation_steps) and test (the last test_steps).
inline SeriesSplit simulate_cir_split(const ExperimentConfig& c, SeededRng& rng) {
    const std::vector<double> path = cir_simulate(c.cir, c.cir.b, c.train_steps + c.test_steps, rng);
    TimeSeries s;
    s.values = path;
    for (std::size_t i = 0; i < path.size(); ++i) s.dates.push_back(step_label(i));
    auto range = [&](Index lo, Index hi) { return DateRange{s.dates[lo], s.dates[hi]}; };
    CsvSource src;
    const Index fit_steps = c.train_steps - c.validation_steps;
    src.train = range(0, fit_steps - 1);
    src.validation = range(fit_steps, c.train_steps - 1);
    src.test = range(c.train_steps, c.train_steps + c.test_steps - 1);
    return split_series(s, src);
}

inline SeriesSplit load_csv_split(const ExperimentConfig& c) {
    std::ifstream in = open_input(c.csv.path);
    return split_series(read_time_series(in, c.csv.path, c.csv.date_column, c.csv.value_column), c.csv);
}

// ---------------------------------------------------------------------------
// CRPS study

inline constexpr const char* kCrps = "crps";
inline constexpr const char* kAverageCrps = "avg_crps";
inline constexpr const char* kStdCrps = "std_crps";
inline constexpr const char* kCirMethod = "cir";

namespace detail {

/// Per-step CRPS rows plus the t = 0 average and standard deviation (both
/// marked diverged if any step is missing).
inline void append_crps_rows(std::vector<ResultRow>& rows, std::uint64_t seed, const std::string& method,
                             const std::vector<std::optional<double>>& scores) {
    std::vector<double> finite;
    for (std::size_t h = 0; h < scores.size(); ++h) {
        rows.push_back({seed, static_cast<Index>(h + 1), method, kCrps, scores[h]});
        if (scores[h]) finite.push_back(*scores[h]);
    }
    std::optional<double> avg, sd;
    if (finite.size() == scores.size()) {
        const MeanStd ms = mean_and_std(finite);
        avg = ms.mean;
        sd = ms.stddev;
    }
    rows.push_back({seed, 0, method, kAverageCrps, avg});
    rows.push_back({seed, 0, method, kStdCrps, sd});
}

inline std::vector<std::optional<double>> trajectory_crps(const ForecastTrajectory& traj, const Points& observed) {
    std::vector<std::optional<double>> out(static_cast<std::size_t>(observed.rows()));
    for (Index t = 1; t <= std::min(traj.horizon(), observed.rows()); ++t)
        out[static_cast<std::size_t>(t - 1)] = crps(traj.measure(t), observed(t - 1, 0));
    return out;
}

} // namespace detail

/// Scores the three forecasters of one split from the state preceding the
/// test window: the kernel estimator with and without DLI (tuned on the
/// validation part, then refit on training plus validation), and a CIR model
/// calibrated by least squares on the same states.
inline StudyOutput run_crps_split(const ExperimentConfig& c, const SeriesSplit& s, std::uint64_t rep, SeededRng& rng) {
    if (s.test.size() == 0) throw std::invalid_argument("crps study: empty test window");
    if (s.validation.size() == 0) throw std::invalid_argument("crps study: empty validation window");
    StudyOutput out;
    SamplePairs all = s.train;
    all.x.conservativeResize(s.train.size() + s.validation.size(), 1);
    all.y.conservativeResize(s.train.size() + s.validation.size(), 1);
    all.x.bottomRows(s.validation.size()) = s.validation.x;
    all.y.bottomRows(s.validation.size()) = s.validation.y;
    const Points start = s.test.x.topRows(1);
    const Index horizon = s.test.size();

    for (bool centered : {true, false}) {
        const GridSpec spec = grid_spec(c, centered);
        const std::string method = method_name(c.estimator, centered);
        const GridResult g = grid_search(s.train, s.validation, spec);
        for (GridLogRow& r : grid_log(rep, method, g)) out.grid.push_back(std::move(r));
        const KoopmanFit<GaussianKernel> f = refit(all, spec, g.selected());
        detail::append_crps_rows(out.rows, rep, method,
                                 detail::trajectory_crps(guarded_forecast(f, start, horizon), s.test.y));
        for (ResultRow& r : diagnostic_rows(rep, method, f)) out.rows.push_back(std::move(r));
    }

    const CIRParams cal = cir_calibrate_ls(s.calibration_path, c.cir.dt);
    const Matrix paths = cir_forecast_paths(cal, start(0, 0), horizon, c.forecast_samples, rng);
    std::vector<std::optional<double>> scores;
    for (Index h = 0; h < horizon; ++h)
        scores.push_back(crps(WeightedMeasure::uniform(Points(paths.row(h).transpose())), s.test.y(h, 0)));
    detail::append_crps_rows(out.rows, rep, kCirMethod, scores);
    out.rows.push_back({rep, 0, kCirMethod, "kappa", cal.kappa});
    out.rows.push_back({rep, 0, kCirMethod, "b", cal.b});
    out.rows.push_back({rep, 0, kCirMethod, "sigma", cal.sigma});
    return out;
}

inline StudyOutput run_crps_repetition(const ExperimentConfig& c, std::uint64_t rep) {
    SeededRng rng(c.seed, rep);
    if (c.system == "csv") return run_crps_split(c, load_csv_split(c), rep, rng);
    const SeriesSplit s = simulate_cir_split(c, rng);
    return run_crps_split(c, s, rep, rng);
}

/// Repetitions of the CRPS study. On recorded (csv) data only the Monte Carlo
/// of the CIR forecast differs between repetitions.
inline StudyOutput run_crps_experiment(const ExperimentConfig& c, unsigned threads) {
    c.validate();
    if (c.experiment != "crps") throw std::invalid_argument("run_crps_experiment: config is not a crps experiment");
    return merge(parallel_map(static_cast<std::size_t>(c.repetitions), threads,
                              [&](std::size_t k) { return run_crps_repetition(c, k); }));
}

struct CrpsTableRow {
    std::string model;
    double mean_crps = 0.0; ///< mean over repetitions of the per-repetition average CRPS
    double std = 0.0;       ///< mean over repetitions of the per-repetition standard deviation over steps
    Index diverged = 0;     ///< repetitions without a complete forecast (these make the mean infinite)
};

inline std::vector<CrpsTableRow> crps_table(const std::vector<ResultRow>& rows) {
    std::map<std::string, std::vector<std::optional<double>>> avg, sd;
    for (const ResultRow& r : rows) {
        if (r.metric == kAverageCrps) avg[r.method].push_back(r.value);
        if (r.metric == kStdCrps) sd[r.method].push_back(r.value);
    }
    std::vector<CrpsTableRow> out;
    for (const auto& [model, values] : avg) {
        CrpsTableRow row{model};
        double sum = 0.0, sum_sd = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k) {
            if (!values[k]) {
                ++row.diverged;
                continue;
            }
            sum += *values[k];
            sum_sd += *sd.at(model)[k];
        }
        const double n = static_cast<double>(values.size());
        row.mean_crps = row.diverged > 0 ? std::numeric_limits<double>::infinity() : sum / n;
        row.std = row.diverged > 0 ? std::numeric_limits<double>::infinity() : sum_sd / n;
        out.push_back(row);
    }
    return out;
}

inline void write_crps_table_csv(std::ostream& out, const std::vector<CrpsTableRow>& rows) {
    write_csv_row(out, {"model", "mean_crps", "std", "diverged"});
    for (const CrpsTableRow& r : rows)
        write_csv_row(out, {r.model, format_double(r.mean_crps), format_double(r.std), std::to_string(r.diverged)});
}

// ---------------------------------------------------------------------------
// Output directories

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out = open_output(path);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

/// results.csv, summary.csv (or table.csv) and grid.csv for a finished study.
inline void write_study_outputs(const ExperimentConfig& c, const StudyOutput& s, const std::filesystem::path& dir) {
    {
        std::ofstream out = open_output(dir / "results.csv");
        write_results_csv(out, s.rows);
    }
    {
        std::ofstream out = open_output(dir / "grid.csv");
        write_grid_log_csv(out, s.grid);
    }
    if (c.experiment == "ou-mmd") {
        std::ofstream out = open_output(dir / "summary.csv");
        write_summary_csv(out, summarize(s.rows, kRelativeMmd));
    } else {
        std::ofstream out = open_output(dir / "table.csv");
        write_crps_table_csv(out, crps_table(s.rows));
    }
}

// ---------------------------------------------------------------------------
// Simulation to files

/// OU: train.csv, validation.csv (pairs) and initial.csv (mixture samples).
/// CIR: series.csv with train_steps + test_steps + 1 states.
/// Both use the repetition-0 stream of the configured seed.
inline std::vector<std::filesystem::path> simulate_to_dir(const ExperimentConfig& c, const std::filesystem::path& dir) {
    c.validate();
    SeededRng rng(c.seed, 0);
    std::vector<std::filesystem::path> written;
    if (c.system == "ou") {
        const OuData d = sample_ou_data(c, rng);
        for (const auto& [name, pairs] : {std::pair{"train.csv", &d.train}, {"validation.csv", &d.validation}}) {
            std::ofstream out = open_output(dir / name);
            write_pairs_csv(out, *pairs);
            written.push_back(dir / name);
        }
        std::ofstream out = open_output(dir / "initial.csv");
        write_points_csv(out, d.initial);
        written.push_back(dir / "initial.csv");
    } else if (c.system == "cir") {
        const std::vector<double> path = cir_simulate(c.cir, c.cir.b, c.train_steps + c.test_steps, rng);
        std::ofstream out = open_output(dir / "series.csv");
        write_series_csv(out, path);
        written.push_back(dir / "series.csv");
    } else {
        throw std::invalid_argument("simulate: the csv system holds recorded data; nothing to simulate");
    }
    return written;
}

} // namespace dli
