#pragma once

// Experiment configuration: a versioned JSON document, validated before any
// computation. Missing keys take the defaults below; unknown keys are
// rejected so that typos do not silently fall back to defaults.

#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dli/dynamics.hpp"
#include "dli/estimators.hpp"
#include "dli/io.hpp"

namespace dli {

inline constexpr int kConfigSchemaVersion = 1;

/// n log-spaced values from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int n) {
    if (!(lo > 0.0) || !(hi >= lo) || n < 1) throw std::invalid_argument("log_grid: need 0 < lo <= hi and n >= 1");
    std::vector<double> out;
    for (int k = 0; k < n; ++k) {
        const double f = n == 1 ? 0.0 : static_cast<double>(k) / (n - 1);
        out.push_back(std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo))));
    }
    out.front() = lo;
    out.back() = hi;
    return out;
}

struct DateRange {
    std::string start; ///< inclusive, compared as text (ISO dates sort correctly)
    std::string end;   ///< inclusive
    bool contains(const std::string& d) const { return d >= start && d <= end; }
    bool empty() const { return start.empty() && end.empty(); }
    bool operator==(const DateRange&) const = default;
};

struct CsvSource {
    std::string path;
    std::string date_column = "date";
    std::string value_column = "value";
    DateRange train;
    DateRange validation;
    DateRange test;
    bool operator==(const CsvSource&) const = default;
};

struct ExperimentConfig {
    std::string experiment = "ou-mmd"; ///< ou-mmd | crps
    std::string system = "ou";         ///< ou | cir | csv
    OUParams ou;
    CIRParams cir;
    CsvSource csv;
    std::vector<GaussianMixture::Component> initial_mixture{{0.5, -2.0, 0.04}, {0.5, 2.0, 0.04}};

    std::vector<double> lengthscales = log_grid(0.1, 3.0, 8);
    EstimatorKind estimator = EstimatorKind::rrr;
    bool centered = true;
    std::vector<double> gammas = log_grid(1e-9, 1e-1, 9);
    std::vector<Index> ranks{3, 5, 10, 25};
    /// Kernel of the relative-MMD score. Held fixed so that scores of fits
    /// with different tuned lengthscales are comparable.
    double eval_lengthscale = 1.0;

    Index n_train = 250;
    Index n_validation = 500;
    Index n_initial = 1000;
    Index horizon = 200;
    Index repetitions = 20;

    // Time-series (CRPS) study.
    Index train_steps = 400;
    Index test_steps = 104;
    Index validation_steps = 80; ///< tail of the training window used for tuning
    Index forecast_samples = 1000;

    std::uint64_t seed = 20240601;
    std::string output_dir = "results";

    bool operator==(const ExperimentConfig&) const = default;

    void validate() const {
        std::ostringstream err;
        if (experiment != "ou-mmd" && experiment != "crps") err << "experiment must be ou-mmd or crps; ";
        if (system != "ou" && system != "cir" && system != "csv") err << "system must be ou, cir or csv; ";
        if (experiment == "ou-mmd" && system != "ou") err << "ou-mmd runs on the ou system; ";
        if (experiment == "crps" && system == "ou") err << "crps runs on the cir or csv system; ";
        if (system == "csv" && csv.path.empty()) err << "csv.path is required for the csv system; ";
        if (lengthscales.empty()) err << "lengthscales must be nonempty; ";
        for (double l : lengthscales)
            if (!(l > 0.0) || !std::isfinite(l)) err << "lengthscales must be positive; ";
        if (!(eval_lengthscale > 0.0) || !std::isfinite(eval_lengthscale)) err << "eval_lengthscale must be positive; ";
        if (estimator != EstimatorKind::pcr && gammas.empty()) err << "gammas must be nonempty; ";
        for (double g : gammas)
            if (!(g > 0.0) || !std::isfinite(g)) err << "gammas must be positive; ";
        if (estimator != EstimatorKind::krr && ranks.empty()) err << "ranks must be nonempty; ";
        for (Index r : ranks)
            if (r < 1) err << "ranks must be >= 1; ";
        for (const auto& [name, v] : {std::pair{"n_train", n_train},
                                      {"n_validation", n_validation},
                                      {"n_initial", n_initial},
                                      {"horizon", horizon},
                                      {"repetitions", repetitions},
                                      {"train_steps", train_steps},
                                      {"test_steps", test_steps},
                                      {"validation_steps", validation_steps},
                                      {"forecast_samples", forecast_samples}})
            if (v < 1) err << name << " must be >= 1; ";
        if (validation_steps >= train_steps) err << "validation_steps must be smaller than train_steps; ";
        try {
            ou.validate();
            cir.validate();
            if (!initial_mixture.empty()) GaussianMixture m(initial_mixture);
            else err << "initial_mixture must be nonempty; ";
        } catch (const std::invalid_argument& e) {
            err << e.what() << "; ";
        }
        if (!err.str().empty()) throw std::invalid_argument("config: " + err.str().substr(0, err.str().size() - 2));
    }
};

inline ExperimentConfig default_ou_config() { return {}; }

inline ExperimentConfig default_crps_config() {
    ExperimentConfig c;
    c.experiment = "crps";
    c.system = "cir";
    c.repetitions = 10;
    c.horizon = c.test_steps;
    return c;
}

inline Json to_json(const ExperimentConfig& c) {
    Json j;
    j["schema"] = "dli.config";
    j["version"] = kConfigSchemaVersion;
    j["experiment"] = c.experiment;
    j["system"] = c.system;
    j["ou"] = {{"theta", c.ou.theta}, {"sigma", c.ou.sigma}, {"dt", c.ou.dt}};
    j["cir"] = {{"kappa", c.cir.kappa}, {"b", c.cir.b}, {"sigma", c.cir.sigma}, {"dt", c.cir.dt}};
    auto range = [](const DateRange& r) { return Json{{"start", r.start}, {"end", r.end}}; };
    j["csv"] = {{"path", c.csv.path},
                {"date_column", c.csv.date_column},
                {"value_column", c.csv.value_column},
                {"train", range(c.csv.train)},
                {"validation", range(c.csv.validation)},
                {"test", range(c.csv.test)}};
    Json mix = Json::array();
    for (const auto& m : c.initial_mixture) mix.push_back({{"weight", m.weight}, {"mean", m.mean}, {"variance", m.variance}});
    j["initial_mixture"] = mix;
    j["lengthscales"] = c.lengthscales;
    j["estimator"] = to_string(c.estimator);
    j["centered"] = c.centered;
    j["gammas"] = c.gammas;
    j["ranks"] = c.ranks;
    j["eval_lengthscale"] = c.eval_lengthscale;
    j["n_train"] = c.n_train;
    j["n_validation"] = c.n_validation;
    j["n_initial"] = c.n_initial;
    j["horizon"] = c.horizon;
    j["repetitions"] = c.repetitions;
    j["train_steps"] = c.train_steps;
    j["test_steps"] = c.test_steps;
    j["validation_steps"] = c.validation_steps;
    j["forecast_samples"] = c.forecast_samples;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    return j;
}

namespace detail {

inline void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw FormatError("config: unknown key '" + where + key + "'");
}

template <class T>
void read_key(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace detail

/// Parses and validates. Keys absent from the document keep their defaults
/// for the declared experiment.
inline ExperimentConfig config_from_json(const Json& j) {
    try {
        if (!j.is_object()) throw FormatError("config: expected a JSON object");
        detail::reject_unknown(j,
                               {"schema", "version", "experiment", "system", "ou", "cir", "csv", "initial_mixture",
                                "lengthscales", "estimator", "centered", "gammas", "ranks", "eval_lengthscale", "n_train", "n_validation",
                                "n_initial", "horizon", "repetitions", "train_steps", "test_steps", "validation_steps",
                                "forecast_samples", "seed", "output_dir"},
                               "");
        if (j.contains("schema") && j.at("schema") != "dli.config") throw FormatError("config: unexpected schema");
        if (j.contains("version") && j.at("version").get<int>() != kConfigSchemaVersion)
            throw FormatError("config: unsupported schema version");
        ExperimentConfig c = j.value("experiment", std::string("ou-mmd")) == "crps" ? default_crps_config()
                                                                                  : default_ou_config();
        detail::read_key(j, "experiment", c.experiment);
        detail::read_key(j, "system", c.system);
        if (j.contains("ou")) {
            const Json& o = j.at("ou");
            detail::reject_unknown(o, {"theta", "sigma", "dt"}, "ou.");
            detail::read_key(o, "theta", c.ou.theta);
            detail::read_key(o, "sigma", c.ou.sigma);
            detail::read_key(o, "dt", c.ou.dt);
        }
        if (j.contains("cir")) {
            const Json& o = j.at("cir");
            detail::reject_unknown(o, {"kappa", "b", "sigma", "dt"}, "cir.");
            detail::read_key(o, "kappa", c.cir.kappa);
            detail::read_key(o, "b", c.cir.b);
            detail::read_key(o, "sigma", c.cir.sigma);
            detail::read_key(o, "dt", c.cir.dt);
        }
        if (j.contains("csv")) {
            const Json& o = j.at("csv");
            detail::reject_unknown(o, {"path", "date_column", "value_column", "train", "validation", "test"}, "csv.");
            detail::read_key(o, "path", c.csv.path);
            detail::read_key(o, "date_column", c.csv.date_column);
            detail::read_key(o, "value_column", c.csv.value_column);
            for (auto [key, range] : {std::pair{"train", &c.csv.train},
                                      {"validation", &c.csv.validation},
                                      {"test", &c.csv.test}}) {
                if (!o.contains(key)) continue;
                detail::reject_unknown(o.at(key), {"start", "end"}, std::string("csv.") + key + ".");
                detail::read_key(o.at(key), "start", range->start);
                detail::read_key(o.at(key), "end", range->end);
            }
        }
        if (j.contains("initial_mixture")) {
            c.initial_mixture.clear();
            for (const Json& m : j.at("initial_mixture")) {
                detail::reject_unknown(m, {"weight", "mean", "variance"}, "initial_mixture[].");
                c.initial_mixture.push_back(
                    {m.at("weight").get<double>(), m.at("mean").get<double>(), m.at("variance").get<double>()});
            }
        }
        detail::read_key(j, "lengthscales", c.lengthscales);
        if (j.contains("estimator")) c.estimator = estimator_kind_from_string(j.at("estimator").get<std::string>());
        detail::read_key(j, "centered", c.centered);
        detail::read_key(j, "gammas", c.gammas);
        detail::read_key(j, "ranks", c.ranks);
        detail::read_key(j, "eval_lengthscale", c.eval_lengthscale);
        detail::read_key(j, "n_train", c.n_train);
        detail::read_key(j, "n_validation", c.n_validation);
        detail::read_key(j, "n_initial", c.n_initial);
        detail::read_key(j, "horizon", c.horizon);
        detail::read_key(j, "repetitions", c.repetitions);
        detail::read_key(j, "train_steps", c.train_steps);
        detail::read_key(j, "test_steps", c.test_steps);
        detail::read_key(j, "validation_steps", c.validation_steps);
        detail::read_key(j, "forecast_samples", c.forecast_samples);
        detail::read_key(j, "seed", c.seed);
        detail::read_key(j, "output_dir", c.output_dir);
        c.validate();
        return c;
    } catch (const Json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
}

} // namespace dli
