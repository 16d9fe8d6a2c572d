// Command-line front end. Exit codes: 0 success, 1 usage or input error,
// 2 numerical failure, 3 a forecast diverged.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dli/experiments.hpp"

namespace fs = std::filesystem;
using namespace dli;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitDiverged = 3;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    unsigned threads = 0;
    bool single_thread = false;

    unsigned worker_count() const { return single_thread ? 1u : threads; }
};

void add_common(CLI::App* cmd, Common& c, bool with_threads) {
    cmd->add_option("--config", c.config, "experiment configuration (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "master seed (overrides the configuration)");
    cmd->add_option("--out", c.out, "output directory (overrides the configuration)");
    if (with_threads) {
        cmd->add_option("--threads", c.threads, "worker threads, 0 = one per core");
        cmd->add_flag("--single-thread", c.single_thread, "run repetitions one after another");
    }
}

ExperimentConfig load_config(const Common& c, const std::string& experiment = "") {
    ExperimentConfig cfg;
    if (!c.config.empty()) {
        cfg = config_from_json(read_json_file(c.config));
        if (!experiment.empty() && cfg.experiment != experiment)
            throw std::invalid_argument("configuration is for experiment '" + cfg.experiment + "', not '" +
                                        experiment + "'");
    } else {
        cfg = experiment == "crps" ? default_crps_config() : default_ou_config();
    }
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out.empty()) cfg.output_dir = c.out;
    cfg.validate();
    return cfg;
}

void write_effective_config(const ExperimentConfig& cfg) {
    write_text_file(fs::path(cfg.output_dir) / "config.json", to_json(cfg).dump(2) + "\n");
}

SamplePairs read_pairs_file(const std::string& path) {
    std::ifstream in = open_input(path);
    return read_pairs_csv(in, path);
}

KoopmanFit<GaussianKernel> read_fit_file(const std::string& path) { return fit_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------

int cmd_simulate(const Common& c) {
    const ExperimentConfig cfg = load_config(c);
    for (const fs::path& p : simulate_to_dir(cfg, cfg.output_dir)) std::cout << "wrote " << p.string() << "\n";
    write_effective_config(cfg);
    return 0;
}

int cmd_fit(const Common& c, const std::string& train_path, const std::string& val_path) {
    const ExperimentConfig cfg = load_config(c);
    const GridSpec spec = grid_spec(cfg, cfg.centered);
    const GridResult g = grid_search(read_pairs_file(train_path), read_pairs_file(val_path), spec);
    const fs::path dir(cfg.output_dir);
    write_text_file(dir / "fit.json", fit_to_json(g.fit).dump(2) + "\n");
    {
        std::ofstream out = open_output(dir / "grid.csv");
        write_grid_log_csv(out, grid_log(cfg.seed, method_name(spec.kind, spec.centered), g));
    }
    write_effective_config(cfg);
    const GridCandidate& s = g.selected();
    std::cout << "selected " << method_name(spec.kind, spec.centered) << ": lengthscale " << format_double(s.lengthscale)
              << ", gamma " << format_double(g.fit.gamma) << ", rank " << g.fit.rank << ", validation risk "
              << format_double(*g.entries[g.best].risk) << "\n";
    return 0;
}

int cmd_forecast(const std::string& fit_path, const std::string& initial_path, Index horizon, const std::string& out) {
    const KoopmanFit<GaussianKernel> f = read_fit_file(fit_path);
    std::ifstream in = open_input(initial_path);
    const Points z = read_points_csv(in, initial_path);
    const ForecastTrajectory traj = guarded_forecast(f, z, horizon);
    const fs::path path = fs::path(out) / "trajectory.csv";
    std::ofstream file = open_output(path);
    write_trajectory_csv(file, traj);
    std::cout << "wrote " << path.string() << " (" << traj.horizon() << " steps, " << to_string(traj.method) << ")\n";
    if (traj.diverged()) {
        std::cerr << "forecast diverged at step " << *traj.diverged_at << "\n";
        return kExitDiverged;
    }
    return 0;
}

int cmd_diagnose(const std::string& fit_path, const std::string& out) {
    const KoopmanFit<GaussianKernel> f = read_fit_file(fit_path);
    const SpectralReport r = spectral_report(evolution_operator(f));
    Json j = report_to_json(r);
    j["fit"] = {{"estimator", to_string(f.kind)}, {"centered", f.centered}, {"rank", f.rank}, {"gamma", f.gamma}};
    const fs::path path = fs::path(out) / "report.json";
    write_text_file(path, j.dump(2) + "\n");
    std::cout << "verdict " << to_string(r.verdict) << ", rho " << format_double(r.rho) << ", p_hat "
              << format_double(r.powers.p_hat) << "; wrote " << path.string() << "\n";
    return 0;
}

int cmd_experiment(const Common& c, const std::string& experiment) {
    const ExperimentConfig cfg = load_config(c, experiment);
    const StudyOutput s =
        experiment == "crps" ? run_crps_experiment(cfg, c.worker_count()) : run_ou_experiment(cfg, c.worker_count());
    write_study_outputs(cfg, s, cfg.output_dir);
    write_effective_config(cfg);
    if (experiment == "crps") {
        for (const CrpsTableRow& r : crps_table(s.rows))
            std::cout << r.model << ": mean CRPS " << format_double(r.mean_crps) << ", std " << format_double(r.std)
                      << "\n";
    } else {
        for (const SummaryRow& r : summarize(s.rows, kRelativeMmd))
            if (r.t == 1 || r.t == cfg.horizon || r.t % 50 == 0)
                std::cout << "t=" << r.t << " " << r.method << ": median relative MMD " << format_double(r.median)
                          << "\n";
    }
    std::cout << "results in " << cfg.output_dir << "\n";
    return 0;
}

int cmd_plot(const std::string& input, std::string out, const std::string& title) {
    std::ostringstream text;
    text << open_input(input).rdbuf();
    std::istringstream in(text.str());
    std::string header;
    std::getline(in, header);
    in.seekg(0);
    const bool is_summary = split_csv_line(header).size() > 2 && split_csv_line(header)[2] == "median";
    const std::vector<SummaryRow> rows =
        is_summary ? read_summary_csv(in, input) : summarize(read_results_csv(in, input), kRelativeMmd);
    if (out.empty()) out = fs::path(input).parent_path().string();
    const fs::path path = fs::path(out.empty() ? "." : out) / "plot.svg";
    write_text_file(path, plot_summary_svg(rows, title));
    std::cout << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_ingest(const Common& c, CsvSource src, const std::string& range_train, const std::string& range_val,
               const std::string& range_test) {
    if (!c.config.empty()) {
        const ExperimentConfig cfg = config_from_json(read_json_file(c.config));
        if (src.path.empty()) src = cfg.csv;
    }
    auto parse_range = [](const std::string& s, DateRange& r) {
        if (s.empty()) return;
        const std::size_t colon = s.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("date range '" + s + "' must be START:END");
        r = {s.substr(0, colon), s.substr(colon + 1)};
    };
    parse_range(range_train, src.train);
    parse_range(range_val, src.validation);
    parse_range(range_test, src.test);
    if (src.path.empty()) throw std::invalid_argument("ingest: no input file (use --input or a csv config)");
    std::ifstream in = open_input(src.path);
    const TimeSeries ts = read_time_series(in, src.path, src.date_column, src.value_column);
    const SeriesSplit split = split_series(ts, src);
    const fs::path dir(c.out.empty() ? "." : c.out);
    std::cerr << "ingest: " << ts.values.size() << " observations, " << split.total_pairs << " pairs\n";
    for (const SplitInfo& i : split.info) {
        std::cerr << "  " << i.name << ": " << i.pairs << " pairs";
        if (i.pairs > 0) std::cerr << " from " << i.first << " to " << i.last;
        std::cerr << "\n";
    }
    for (const auto& [name, pairs] : {std::pair{"train.csv", &split.train},
                                      {"validation.csv", &split.validation},
                                      {"test.csv", &split.test}}) {
        if (pairs->size() == 0) continue;
        std::ofstream out = open_output(dir / name);
        write_pairs_csv(out, *pairs);
        std::cout << "wrote " << (dir / name).string() << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dli: forecasting distributions with deflated kernel Koopman estimators"};
    app.require_subcommand(1);

    Common common;
    CLI::App* simulate = app.add_subcommand("simulate", "sample training, validation and initial data");
    add_common(simulate, common, false);

    std::string train_path, val_path;
    CLI::App* fit = app.add_subcommand("fit", "grid-search and fit an estimator");
    add_common(fit, common, false);
    fit->add_option("--train", train_path, "training pairs CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--validation", val_path, "validation pairs CSV")->required()->check(CLI::ExistingFile);

    std::string fit_path, initial_path;
    Index horizon = 0;
    CLI::App* forecast = app.add_subcommand("forecast", "forecast an initial sample with a fitted estimator");
    forecast->add_option("--fit", fit_path, "fit JSON")->required()->check(CLI::ExistingFile);
    forecast->add_option("--initial", initial_path, "initial sample CSV")->required()->check(CLI::ExistingFile);
    forecast->add_option("--horizon,-T", horizon, "number of steps")->required()->check(CLI::PositiveNumber);
    forecast->add_option("--out", common.out, "output directory");

    CLI::App* diagnose = app.add_subcommand("diagnose", "spectral stability report of a fitted estimator");
    diagnose->add_option("--fit", fit_path, "fit JSON")->required()->check(CLI::ExistingFile);
    diagnose->add_option("--out", common.out, "output directory");

    CLI::App* experiment = app.add_subcommand("experiment", "run a study");
    experiment->require_subcommand(1);
    CLI::App* ou = experiment->add_subcommand("ou-mmd", "Ornstein-Uhlenbeck relative-MMD study");
    add_common(ou, common, true);
    CLI::App* crps_cmd = experiment->add_subcommand("crps", "CRPS study on a CIR or recorded series");
    add_common(crps_cmd, common, true);

    std::string plot_input, title;
    CLI::App* plot = app.add_subcommand("plot", "SVG chart of median relative MMD per method");
    plot->add_option("input", plot_input, "results.csv or summary.csv")->required()->check(CLI::ExistingFile);
    plot->add_option("--out", common.out, "output directory (default: next to the input)");
    plot->add_option("--title", title, "chart title");

    CsvSource src;
    std::string range_train, range_val, range_test;
    CLI::App* ingest = app.add_subcommand("ingest", "split a univariate series into consecutive-state pairs");
    add_common(ingest, common, false);
    ingest->add_option("--input", src.path, "series CSV")->check(CLI::ExistingFile);
    ingest->add_option("--date-column", src.date_column, "date column name")->default_val("date");
    ingest->add_option("--value-column", src.value_column, "value column name")->default_val("value");
    ingest->add_option("--train", range_train, "training dates START:END (inclusive)");
    ingest->add_option("--validation", range_val, "validation dates START:END");
    ingest->add_option("--test", range_test, "test dates START:END");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*simulate) return cmd_simulate(common);
        if (*fit) return cmd_fit(common, train_path, val_path);
        if (*forecast) return cmd_forecast(fit_path, initial_path, horizon, common.out.empty() ? "." : common.out);
        if (*diagnose) return cmd_diagnose(fit_path, common.out.empty() ? "." : common.out);
        if (*ou) return cmd_experiment(common, "ou-mmd");
        if (*crps_cmd) return cmd_experiment(common, "crps");
        if (*plot) return cmd_plot(plot_input, common.out, title);
        if (*ingest) return cmd_ingest(common, src, range_train, range_val, range_test);
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
