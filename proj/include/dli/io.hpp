#pragma once

// File formats: CSV tables (header row, '.' decimals, '\n' line endings,
// 17 significant digits), schema-versioned JSON for fits and spectral
// reports, and a small deterministic SVG chart.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "dli/estimators.hpp"
#include "dli/forecaster.hpp"
#include "dli/spectral.hpp"

namespace dli {

using Json = nlohmann::json;

/// Malformed input files and documents.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Numbers

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers; ///< source line of each row (1-based)
    std::string source;

    std::size_t column(std::string_view name) const {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        throw FormatError(source + ": missing column '" + std::string(name) + "'");
    }

    double number(std::size_t row, std::size_t col) const {
        const std::optional<double> v = parse_double(rows[row][col]);
        if (!v) {
            std::ostringstream os;
            os << source << ":" << line_numbers[row] << ": column '" << header[col] << "': '" << rows[row][col]
               << "' is not a number";
            throw FormatError(os.str());
        }
        return *v;
    }
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

/// Reads a headered CSV. Blank lines are skipped; a row with the wrong number
/// of fields is reported with its line number.
inline CsvTable read_csv(std::istream& in, const std::string& source = "<csv>") {
    CsvTable t;
    t.source = source;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size()) {
            std::ostringstream os;
            os << source << ":" << lineno << ": expected " << t.header.size() << " fields, found " << fields.size();
            throw FormatError(os.str());
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(lineno);
    }
    if (t.header.empty()) throw FormatError(source + ": empty file");
    return t;
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t j = 0; j < fields.size(); ++j) {
        if (j) out << ',';
        out << fields[j];
    }
    out << '\n';
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

// ---------------------------------------------------------------------------
// Point sets and sample pairs

namespace detail {

inline std::vector<std::string> coordinate_names(const std::string& base, Index d) {
    if (d == 1) return {base};
    std::vector<std::string> out;
    for (Index j = 0; j < d; ++j) out.push_back(base + std::to_string(j));
    return out;
}

inline Points read_columns(const CsvTable& t, const std::vector<std::string>& names) {
    std::vector<std::size_t> cols;
    for (const auto& n : names) cols.push_back(t.column(n));
    Points p(static_cast<Index>(t.rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) {
            const double v = t.number(i, cols[j]);
            if (!std::isfinite(v)) {
                std::ostringstream os;
                os << t.source << ":" << t.line_numbers[i] << ": non-finite value";
                throw FormatError(os.str());
            }
            p(static_cast<Index>(i), static_cast<Index>(j)) = v;
        }
    return p;
}

inline Index count_prefixed(const CsvTable& t, const std::string& base) {
    for (const auto& h : t.header)
        if (h == base) return 1;
    Index d = 0;
    while (std::find(t.header.begin(), t.header.end(), base + std::to_string(d)) != t.header.end()) ++d;
    if (d == 0) throw FormatError(t.source + ": missing column '" + base + "'");
    return d;
}

} // namespace detail

/// Columns x, y (or x0.., y0.. in several dimensions).
inline void write_pairs_csv(std::ostream& out, const SamplePairs& p) {
    std::vector<std::string> header = detail::coordinate_names("x", p.dim());
    for (auto& n : detail::coordinate_names("y", p.dim())) header.push_back(n);
    write_csv_row(out, header);
    for (Index i = 0; i < p.size(); ++i) {
        std::vector<std::string> row;
        for (Index j = 0; j < p.dim(); ++j) row.push_back(format_double(p.x(i, j)));
        for (Index j = 0; j < p.dim(); ++j) row.push_back(format_double(p.y(i, j)));
        write_csv_row(out, row);
    }
}

inline SamplePairs read_pairs_csv(std::istream& in, const std::string& source = "<pairs>") {
    const CsvTable t = read_csv(in, source);
    const Index d = detail::count_prefixed(t, "x");
    SamplePairs p;
    p.x = detail::read_columns(t, detail::coordinate_names("x", d));
    p.y = detail::read_columns(t, detail::coordinate_names("y", d));
    if (p.size() == 0) throw FormatError(source + ": no rows");
    return p;
}

/// Column z (or z0..): samples of an initial distribution.
inline void write_points_csv(std::ostream& out, const Points& z, const std::string& base = "z") {
    write_csv_row(out, detail::coordinate_names(base, z.cols()));
    for (Index i = 0; i < z.rows(); ++i) {
        std::vector<std::string> row;
        for (Index j = 0; j < z.cols(); ++j) row.push_back(format_double(z(i, j)));
        write_csv_row(out, row);
    }
}

inline Points read_points_csv(std::istream& in, const std::string& source = "<points>", const std::string& base = "z") {
    const CsvTable t = read_csv(in, source);
    const Points p = detail::read_columns(t, detail::coordinate_names(base, detail::count_prefixed(t, base)));
    if (p.rows() == 0) throw FormatError(source + ": no rows");
    return p;
}

/// Zero-padded step index, usable wherever a date is expected (text order
/// equals time order).
inline std::string step_label(std::size_t t) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%08zu", t);
    return buf;
}

/// Header date,value with step labels as dates, so a simulated series can be
/// read back like recorded data.
inline void write_series_csv(std::ostream& out, std::span<const double> series) {
    write_csv_row(out, {"date", "value"});
    for (std::size_t t = 0; t < series.size(); ++t) write_csv_row(out, {step_label(t), format_double(series[t])});
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return in;
}

// ---------------------------------------------------------------------------
// Trajectories and result tables

/// Mass tolerance re-checked whenever DLI weights are written.
inline constexpr double kMassTol = 1e-10;

/// Header t,index,support,weight; one row per (step, support point). DLI rows
/// are checked to sum to one before anything is written.
inline void write_trajectory_csv(std::ostream& out, const ForecastTrajectory& traj) {
    if (traj.support.cols() != 1) throw std::invalid_argument("write_trajectory_csv: scalar support required");
    if (traj.method == ForecastMethod::dli) {
        for (Index t = 0; t < traj.horizon(); ++t) {
            const double mass = traj.weights.row(t).sum();
            if (!(std::abs(mass - 1.0) <= kMassTol)) {
                std::ostringstream os;
                os << "write_trajectory_csv: step " << t + 1 << " has mass " << format_double(mass);
                throw NumericalError(os.str());
            }
        }
    }
    write_csv_row(out, {"t", "index", "support", "weight"});
    for (Index t = 0; t < traj.horizon(); ++t)
        for (Index i = 0; i < traj.support.rows(); ++i)
            write_csv_row(out, {std::to_string(t + 1), std::to_string(i), format_double(traj.support(i, 0)),
                                format_double(traj.weights(t, i))});
}

/// One metric value; an empty value is written as the marker "diverged".
struct ResultRow {
    std::uint64_t seed = 0;
    Index t = 0;
    std::string method;
    std::string metric;
    std::optional<double> value;

    auto key() const { return std::tie(seed, t, method, metric); }
};

inline constexpr const char* kDivergedMarker = "diverged";

/// Rows are sorted by (seed, t, method, metric) so the file does not depend
/// on the order in which repetitions finished.
inline void write_results_csv(std::ostream& out, std::vector<ResultRow> rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) { return a.key() < b.key(); });
    write_csv_row(out, {"seed", "t", "method", "metric", "value"});
    for (const ResultRow& r : rows)
        write_csv_row(out, {std::to_string(r.seed), std::to_string(r.t), r.method, r.metric,
                            r.value ? format_double(*r.value) : kDivergedMarker});
}

inline std::vector<ResultRow> read_results_csv(std::istream& in, const std::string& source = "<results>") {
    const CsvTable t = read_csv(in, source);
    const std::size_t cs = t.column("seed"), ct = t.column("t"), cm = t.column("method"), cmet = t.column("metric"),
                      cv = t.column("value");
    std::vector<ResultRow> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        ResultRow r;
        r.seed = static_cast<std::uint64_t>(t.number(i, cs));
        r.t = static_cast<Index>(t.number(i, ct));
        r.method = t.rows[i][cm];
        r.metric = t.rows[i][cmet];
        if (t.rows[i][cv] != kDivergedMarker) r.value = t.number(i, cv);
        out.push_back(std::move(r));
    }
    return out;
}

struct SummaryRow {
    Index t = 0;
    std::string method;
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
};

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile_sorted: empty sample");
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0 || v[lo] == v[hi]) return v[lo];
    return v[lo] + frac * (v[hi] - v[lo]);
}

/// Per-(t, method) quantiles of one metric across seeds. Diverged entries
/// count as +infinity, so they push the quantiles up instead of vanishing.
inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows, const std::string& metric) {
    std::map<std::pair<Index, std::string>, std::vector<double>> groups;
    for (const ResultRow& r : rows)
        if (r.metric == metric && r.t > 0)
            groups[{r.t, r.method}].push_back(r.value ? *r.value : std::numeric_limits<double>::infinity());
    std::vector<SummaryRow> out;
    for (auto& [key, values] : groups) {
        std::sort(values.begin(), values.end());
        out.push_back({key.first, key.second, quantile_sorted(values, 0.5), quantile_sorted(values, 0.25),
                       quantile_sorted(values, 0.75)});
    }
    return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    write_csv_row(out, {"t", "method", "median", "q25", "q75"});
    for (const SummaryRow& r : rows)
        write_csv_row(out, {std::to_string(r.t), r.method, format_double(r.median), format_double(r.q25),
                            format_double(r.q75)});
}

inline std::vector<SummaryRow> read_summary_csv(std::istream& in, const std::string& source = "<summary>") {
    const CsvTable t = read_csv(in, source);
    const std::size_t ct = t.column("t"), cm = t.column("method"), c50 = t.column("median"), c25 = t.column("q25"),
                      c75 = t.column("q75");
    std::vector<SummaryRow> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        out.push_back({static_cast<Index>(t.number(i, ct)), t.rows[i][cm], t.number(i, c50), t.number(i, c25),
                       t.number(i, c75)});
    return out;
}

// ---------------------------------------------------------------------------
// JSON

inline constexpr int kFitSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

inline Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix json_to_matrix(const Json& j, const char* what) {
    if (!j.is_array()) throw FormatError(std::string(what) + ": expected an array of rows");
    if (j.empty()) return Matrix(0, 0);
    const std::size_t cols = j[0].size();
    Matrix m(static_cast<Index>(j.size()), static_cast<Index>(cols));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != cols) throw FormatError(std::string(what) + ": ragged matrix");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[i][c].is_number()) throw FormatError(std::string(what) + ": non-numeric entry");
            m(static_cast<Index>(i), static_cast<Index>(c)) = j[i][c].get<double>();
        }
    }
    return m;
}

inline Json vector_to_json(const Vector& v) {
    Json a = Json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Vector json_to_vector(const Json& j, const char* what) {
    if (!j.is_array()) throw FormatError(std::string(what) + ": expected an array");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw FormatError(std::string(what) + ": non-numeric entry");
        v(static_cast<Index>(i)) = j[i].get<double>();
    }
    return v;
}

/// A Gaussian-kernel fit. The Gram matrices are not stored; they are
/// recomputed from x and y on load, which reproduces them bit for bit.
inline Json fit_to_json(const KoopmanFit<GaussianKernel>& f) {
    Json j;
    j["schema"] = "dli.fit";
    j["version"] = kFitSchemaVersion;
    j["kernel"] = {{"type", "gaussian"}, {"lengthscale", f.kernel.lengthscale()}};
    j["estimator"] = to_string(f.kind);
    j["gamma"] = f.gamma;
    j["rank"] = f.rank;
    j["centered"] = f.centered;
    j["x"] = matrix_to_json(f.x);
    j["y"] = matrix_to_json(f.y);
    if (f.factored()) {
        j["u"] = matrix_to_json(f.u);
        j["v"] = matrix_to_json(f.v);
    } else {
        j["w"] = matrix_to_json(f.w);
        j["cholesky"] = matrix_to_json(f.cholesky);
    }
    j["spectrum"] = vector_to_json(f.spectrum);
    return j;
}

inline KoopmanFit<GaussianKernel> fit_from_json(const Json& j) {
    try {
        if (j.at("schema") != "dli.fit") throw FormatError("fit: unexpected schema");
        if (j.at("version").get<int>() != kFitSchemaVersion) throw FormatError("fit: unsupported schema version");
        if (j.at("kernel").at("type") != "gaussian") throw FormatError("fit: only Gaussian kernels are supported");
        KoopmanFit<GaussianKernel> f{GaussianKernel(j.at("kernel").at("lengthscale").get<double>())};
        f.kind = estimator_kind_from_string(j.at("estimator").get<std::string>());
        f.gamma = j.at("gamma").get<double>();
        f.rank = j.at("rank").get<Index>();
        f.centered = j.at("centered").get<bool>();
        f.x = json_to_matrix(j.at("x"), "fit.x");
        f.y = json_to_matrix(j.at("y"), "fit.y");
        if (f.x.rows() == 0 || f.x.rows() != f.y.rows() || f.x.cols() != f.y.cols())
            throw FormatError("fit: inconsistent x/y");
        const Index n = f.x.rows();
        if (j.contains("u")) {
            f.u = json_to_matrix(j.at("u"), "fit.u");
            f.v = json_to_matrix(j.at("v"), "fit.v");
            if (f.u.rows() != n || f.v.rows() != n || f.u.cols() != f.v.cols()) throw FormatError("fit: bad factor shapes");
        } else {
            f.w = json_to_matrix(j.at("w"), "fit.w");
            f.cholesky = json_to_matrix(j.at("cholesky"), "fit.cholesky");
            if (f.w.rows() != n || f.w.cols() != n || f.cholesky.rows() != n) throw FormatError("fit: bad W shape");
        }
        f.spectrum = json_to_vector(j.at("spectrum"), "fit.spectrum");
        f.gram_x = gram(f.kernel, f.x, f.x, Normalization::inv_n).values;
        if (f.centered) f.gram_x = center_square(f.gram_x);
        f.gram_xy = gram(f.kernel, f.x, f.y, Normalization::inv_n).values;
        return f;
    } catch (const Json::exception& e) {
        throw FormatError(std::string("fit: ") + e.what());
    }
}

inline Json report_to_json(const SpectralReport& r) {
    auto num = [](double v) -> Json { return std::isfinite(v) ? Json(v) : Json(format_double(v)); };
    Json j;
    j["schema"] = "dli.spectral_report";
    j["version"] = kReportSchemaVersion;
    j["verdict"] = to_string(r.verdict);
    j["rho"] = num(r.rho);
    j["p_hat"] = num(r.powers.p_hat);
    j["s_hat"] = num(r.powers.s_hat);
    j["s_remainder"] = num(r.powers.s_remainder);
    j["certified"] = r.powers.certified;
    j["power_steps"] = r.powers.norms.size() - 1;
    j["contraction_index"] = r.powers.contraction_index;
    j["eta_hat"] = num(r.eta_hat);
    j["d_hat"] = num(r.d_hat);
    j["ambient_dim"] = r.ambient_dim;
    j["core_dim"] = r.core_dim;
    j["grid"] = {{"angles", r.grid.angles},
                 {"min_exponent", r.grid.min_exponent},
                 {"max_exponent", r.grid.max_exponent},
                 {"refinement_rounds", r.grid.refinement_rounds}};
    j["note"] = "evolution-matrix diagnostics; eta_hat and d_hat are grid estimates";
    return j;
}

inline Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// SVG

/// Median curve per method with a shaded interquartile band. Non-finite
/// values break the curve. Output depends only on the input rows.
inline std::string plot_summary_svg(const std::vector<SummaryRow>& rows, const std::string& title = "") {
    if (rows.empty()) throw std::invalid_argument("plot: no data");
    const double width = 640, height = 400, left = 60, right = 20, top = 30, bottom = 45;
    std::map<std::string, std::vector<SummaryRow>> series;
    double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin, ymax = 0.0;
    for (const SummaryRow& r : rows) {
        series[r.method].push_back(r);
        tmin = std::min(tmin, static_cast<double>(r.t));
        tmax = std::max(tmax, static_cast<double>(r.t));
        for (double v : {r.median, r.q25, r.q75})
            if (std::isfinite(v)) ymax = std::max(ymax, v);
    }
    if (ymax <= 0.0) ymax = 1.0;
    if (tmax == tmin) tmax = tmin + 1.0;
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double t) { return left + (t - tmin) / (tmax - tmin) * pw; };
    auto py = [&](double v) { return top + ph - std::min(v, ymax) / ymax * ph; };
    auto f2 = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    auto esc = [](const std::string& s) {
        std::string o;
        for (char c : s) {
            if (c == '<') o += "&lt;";
            else if (c == '>') o += "&gt;";
            else if (c == '&') o += "&amp;";
            else if (c == '"') o += "&quot;";
            else o += c;
        }
        return o;
    };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    std::ostringstream s;
    s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    if (!title.empty())
        s << "<text x=\"" << f2(width / 2) << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          << "font-size=\"14\">" << esc(title) << "</text>\n";
    s << "<g stroke=\"black\" stroke-width=\"1\">\n"
      << "<line x1=\"" << f2(left) << "\" y1=\"" << f2(top + ph) << "\" x2=\"" << f2(left + pw) << "\" y2=\""
      << f2(top + ph) << "\"/>\n"
      << "<line x1=\"" << f2(left) << "\" y1=\"" << f2(top) << "\" x2=\"" << f2(left) << "\" y2=\"" << f2(top + ph)
      << "\"/>\n</g>\n";
    s << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int k = 0; k <= 4; ++k) {
        const double t = tmin + (tmax - tmin) * k / 4.0, v = ymax * k / 4.0;
        s << "<text x=\"" << f2(px(t)) << "\" y=\"" << f2(top + ph + 16) << "\" text-anchor=\"middle\">"
          << format_double(std::round(t * 100.0) / 100.0) << "</text>\n";
        s << "<text x=\"" << f2(left - 6) << "\" y=\"" << f2(py(v) + 4) << "\" text-anchor=\"end\">" << f2(v)
          << "</text>\n";
    }
    s << "<text x=\"" << f2(left + pw / 2) << "\" y=\"" << f2(height - 8) << "\" text-anchor=\"middle\">t</text>\n"
      << "</g>\n";

    std::size_t colour = 0;
    for (auto& [method, pts] : series) {
        std::sort(pts.begin(), pts.end(), [](const SummaryRow& a, const SummaryRow& b) { return a.t < b.t; });
        const char* c = palette[colour++ % (sizeof palette / sizeof *palette)];
        // Split into runs of finite points.
        std::vector<std::vector<SummaryRow>> runs(1);
        for (const SummaryRow& r : pts) {
            if (std::isfinite(r.median) && std::isfinite(r.q25) && std::isfinite(r.q75)) runs.back().push_back(r);
            else if (!runs.back().empty()) runs.emplace_back();
        }
        for (const auto& run : runs) {
            if (run.empty()) continue;
            s << "<polygon fill=\"" << c << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
            for (const SummaryRow& r : run) s << f2(px(r.t)) << ',' << f2(py(r.q75)) << ' ';
            for (auto it = run.rbegin(); it != run.rend(); ++it) s << f2(px(it->t)) << ',' << f2(py(it->q25)) << ' ';
            s << "\"/>\n<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t k = 0; k < run.size(); ++k) s << (k ? " " : "") << f2(px(run[k].t)) << ',' << f2(py(run[k].median));
            s << "\"/>\n";
        }
        const double ly = top + 14.0 * static_cast<double>(colour);
        s << "<text x=\"" << f2(left + pw - 4) << "\" y=\"" << f2(ly) << "\" text-anchor=\"end\" "
          << "font-family=\"sans-serif\" font-size=\"11\" fill=\"" << c << "\">" << esc(method) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

} // namespace dli
