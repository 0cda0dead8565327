// tobitcheck: estimate, test, bound and simulate censored-outcome models
// from the command line. Exit codes: 0 ok, 2 usage or input error, 3
// numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "tobit/bounds.hpp"
#include "tobit/data.hpp"
#include "tobit/errors.hpp"
#include "tobit/estimate.hpp"
#include "tobit/momtest.hpp"
#include "tobit/montecarlo.hpp"
#include "tobit/parallel.hpp"
#include "tobit/report.hpp"

namespace {

using tobit::report::Json;

constexpr int kUsage = 2;
constexpr int kNumerical = 3;

struct Common {
    std::string input;
    std::string y, d, z;
    std::vector<std::string> x;
    std::string model = "classic";
    std::uint64_t seed = 20221201;
    int threads = 0;
    std::string json;
};

struct TestArgs {
    int k = 4;
    int q = 4;
    std::vector<double> alpha{0.10, 0.05, 0.01};
    int draws = 1000;
    int grid_points = 30;
    std::string scale = "unit";
    std::string process = "multinomial";
    bool no_estimation_effect = false;
    bool no_selection = false;
};

struct BoundsArgs {
    std::string levels = "quantile";
    int bins = 10;
    std::string pairs = "adjacent";
    bool continuous = false;
    int grid_points = 20;
    double bandwidth = 0.0;
    std::string direction = "decreasing";
    double alpha = 0.05;
    int reps = 500;
    int min_count = 30;
};

struct SimulateArgs {
    std::string config;
    int reps = 0;
    std::vector<double> alpha;
    std::string csv;
    std::string journal;
    bool resume = false;
    bool seed_given = false;
};

std::vector<std::string> g_argv;

void add_data_options(CLI::App* app, Common& c, bool needs_y) {
    app->add_option("--input", c.input, "CSV file with a header row")->required()->check(CLI::ExistingFile);
    auto* y = app->add_option("--y", c.y, "outcome column (censored at zero)");
    if (needs_y) y->required();
    app->add_option("--d", c.d, "treatment column")->required();
    app->add_option("--z", c.z, "instrument column (IV model)");
    app->add_option("--x", c.x, "covariate columns")->delimiter(',');
}

void add_run_options(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "random seed")->capture_default_str();
    app->add_option("--threads", c.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    app->add_option("--json", c.json, "write a JSON report here");
}

tobit::report::RunManifest manifest(const std::string& sub, const Common& c, Json options) {
    tobit::report::RunManifest m;
    m.subcommand = sub;
    m.timestamp = tobit::report::utc_timestamp();
    m.seed = c.seed;
    m.threads = tobit::parallel::resolve_threads(c.threads);
    m.options = std::move(options);
    m.command_line = g_argv;
    return m;
}

Json data_options(const Common& c) {
    Json o;
    o["input"] = c.input;
    o["y"] = c.y;
    o["d"] = c.d;
    o["z"] = c.z;
    o["x"] = c.x;
    o["model"] = c.model;
    return o;
}

tobit::data::LoadReport load(const Common& c, tobit::report::RunManifest& m) {
    tobit::data::ColumnMapping map;
    map.y = c.y;
    map.d = c.d;
    if (!c.z.empty()) map.z = c.z;
    map.x = c.x;
    tobit::data::LoadReport r = tobit::data::load_csv(c.input, map);
    m.inputs.push_back({c.input, tobit::report::sha256_file(c.input), r.rows_read, r.rows_dropped});
    if (r.rows_dropped > 0) std::cerr << "note: dropped " << r.rows_dropped << " rows with missing values\n";
    return r;
}

void require_model(const Common& c) {
    if (c.model != "classic" && c.model != "iv") throw tobit::InputError("--model must be classic or iv");
    if (c.model == "iv" && c.z.empty()) throw tobit::InputError("--model iv needs --z");
}

void write_json(const std::string& path, const Json& doc) {
    if (path.empty()) return;
    if (path == "-") {
        std::cout << doc.dump(2) << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw tobit::InputError("cannot write " + path);
    out << doc.dump(2) << '\n';
}

void check_alpha(double a) {
    if (!(a > 0.0 && a <= 0.5)) throw tobit::InputError("--alpha values must lie in (0, 0.5]");
}

int cmd_estimate(const Common& c) {
    require_model(c);
    Json opts = data_options(c);
    auto m = manifest("estimate", c, opts);
    const auto data = load(c, m);
    const bool cov = !c.x.empty();
    Json result;
    if (c.model == "classic") {
        const auto fit = tobit::estimate::fit_classic_tobit(data.sample, cov);
        std::cout << tobit::report::format_fit(fit);
        result = tobit::report::to_json(fit);
    } else {
        const auto fit = tobit::estimate::fit_iv_tobit(data.sample, cov);
        std::cout << tobit::report::format_fit(fit);
        result = tobit::report::to_json(fit);
    }
    result["sample"] = tobit::report::to_json(tobit::data::summarize(data.sample));
    write_json(c.json, tobit::report::envelope("estimate", m, result));
    return 0;
}

int cmd_test(const Common& c, const TestArgs& t) {
    require_model(c);
    for (double a : t.alpha) check_alpha(a);
    tobit::momtest::TestOptions opt;
    opt.K = t.k;
    opt.Q = t.q;
    opt.alphas = t.alpha;
    opt.draws = t.draws;
    opt.grid_points = t.grid_points;
    opt.seed = c.seed;
    opt.threads = c.threads;
    opt.use_covariates = !c.x.empty();
    if (t.scale == "unit") opt.scale = tobit::equalities::Scale::unit;
    else if (t.scale == "estimated") opt.scale = tobit::equalities::Scale::estimated;
    else throw tobit::InputError("--scale must be unit or estimated");
    opt.estimation_effect = !t.no_estimation_effect;
    opt.process = t.process == "gaussian" ? tobit::momtest::NullProcess::gaussian
                                          : tobit::momtest::NullProcess::multinomial;
    opt.adaptive_selection = !t.no_selection;

    Json opts = data_options(c);
    opts["k"] = t.k;
    opts["q"] = c.model == "iv" ? t.q : 0;
    opts["alpha"] = t.alpha;
    opts["draws"] = t.draws;
    opts["grid_points"] = t.grid_points;
    opts["scale"] = t.scale;
    opts["estimation_effect"] = opt.estimation_effect;
    opts["process"] = t.process;
    opts["adaptive_selection"] = opt.adaptive_selection;
    auto m = manifest("test", c, opts);
    const auto data = load(c, m);
    const auto model = c.model == "classic" ? tobit::momtest::Model::classic : tobit::momtest::Model::iv;
    const tobit::momtest::TestRun run = tobit::momtest::run_test(data.sample, model, opt);

    if (run.classic_fit) std::cout << tobit::report::format_fit(*run.classic_fit) << '\n';
    if (run.iv_fit) std::cout << tobit::report::format_fit(*run.iv_fit) << '\n';
    for (const auto& w : run.warnings) std::cout << "warning: " << w << '\n';
    std::cout << std::fixed << std::setprecision(4);
    std::cout << "alpha     statistic   critical   reject\n";
    for (const auto& r : run.results)
        std::cout << std::setw(5) << r.alpha << "  " << std::setw(11) << r.statistic << std::setw(11) << r.kappa
                  << "   " << (r.reject ? "yes" : "no") << '\n';

    // Per-cell diagnostics at the first level: the binding point of each column.
    const auto& first = run.results.front();
    std::cout << "\ncell diagnostics (alpha " << first.alpha << ", binding point per column)\n";
    int width = 6;
    for (const auto& p : first.per_cell) width = std::max(width, static_cast<int>(p.label.size()) + 2);
    std::cout << std::left << std::setw(width) << "cell" << std::right << std::setw(10) << "v" << std::setw(10) << "theta"
              << std::setw(10) << "se" << std::setw(10) << "t" << '\n';
    std::map<Eigen::Index, const tobit::momtest::CellPoint*> best;
    for (const auto& p : first.per_cell) {
        auto it = best.find(p.column);
        const double score = p.theta - first.kappa * p.se;
        if (it == best.end() || score > it->second->theta - first.kappa * it->second->se) best[p.column] = &p;
    }
    for (const auto& [col, p] : best)
        std::cout << std::left << std::setw(width) << p->label << std::right << std::setw(10) << p->v << std::setw(10)
                  << p->theta << std::setw(10) << p->se << std::setw(10) << p->studentized << '\n';

    Json result = tobit::report::to_json(run);
    result["sample"] = tobit::report::to_json(tobit::data::summarize(data.sample));
    write_json(c.json, tobit::report::envelope("test", m, result));
    return 0;
}

int cmd_bounds(const Common& c, const BoundsArgs& b) {
    check_alpha(b.alpha);
    tobit::bounds::Direction dir;
    if (b.direction == "decreasing") dir = tobit::bounds::Direction::decreasing;
    else if (b.direction == "increasing") dir = tobit::bounds::Direction::increasing;
    else throw tobit::InputError("--direction must be decreasing or increasing");

    Json opts = data_options(c);
    opts.erase("model");
    opts["continuous"] = b.continuous;
    opts["levels"] = b.levels;
    opts["bins"] = b.bins;
    opts["pairs"] = b.pairs;
    opts["grid_points"] = b.grid_points;
    opts["bandwidth"] = b.bandwidth;
    opts["direction"] = b.direction;
    opts["alpha"] = b.alpha;
    opts["reps"] = b.reps;
    opts["min_count"] = b.min_count;
    auto m = manifest("bounds", c, opts);
    const auto data = load(c, m);
    const auto& s = data.sample;

    tobit::bounds::BootstrapOptions boot;
    boot.reps = b.reps;
    boot.alpha = b.alpha;
    boot.seed = c.seed;
    boot.threads = c.threads;

    tobit::bounds::MtsBound out;
    if (b.continuous) {
        tobit::bounds::ContinuousSpec spec;
        spec.direction = dir;
        spec.use_covariates = !c.x.empty();
        spec.bandwidth = b.bandwidth;
        spec.grid = tobit::bounds::default_grid(s, b.grid_points);
        out = tobit::bounds::bound_confidence(s, spec, boot);
    } else {
        if (!c.x.empty()) throw tobit::InputError("covariates are only supported with --continuous");
        std::vector<tobit::bounds::Level> levels;
        if (b.levels == "quantile") {
            levels = tobit::bounds::quantile_levels(s, b.bins);
        } else if (b.levels == "exact") {
            std::set<double> values;
            for (Eigen::Index i = 0; i < s.n(); ++i)
                if (s.y()[i] > 0.0) values.insert(s.d()[i]);
            if (values.size() > 50)
                throw tobit::InputError("--levels exact found " + std::to_string(values.size()) +
                                        " distinct treatment values; use --levels quantile or --continuous");
            for (double v : values) levels.push_back(tobit::bounds::exact_level(v));
        } else {
            throw tobit::InputError("--levels must be exact or quantile");
        }
        tobit::bounds::DiscreteSpec spec;
        spec.direction = dir;
        spec.min_count = b.min_count;
        if (b.pairs == "adjacent") spec.pairs = tobit::bounds::adjacent_pairs(levels);
        else if (b.pairs == "all") spec.pairs = tobit::bounds::all_pairs(levels);
        else throw tobit::InputError("--pairs must be adjacent or all");
        out = tobit::bounds::bound_confidence(s, spec, boot);
    }

    std::cout << std::fixed << std::setprecision(4);
    const char* side = out.is_lower() ? "lower" : "upper";
    std::cout << side << " bound on alpha1: " << out.bound << '\n';
    std::cout << "one-sided " << std::defaultfloat << (1.0 - b.alpha) * 100.0 << std::fixed << "% confidence limit: " << out.ci_limit << " (critical value "
              << out.ci_critical << ", " << out.boot_reps << " resamples, " << out.boot_failures << " failed)\n\n";
    if (out.continuous) {
        std::cout << "bandwidth " << out.bandwidth << '\n';
        std::cout << std::setw(10) << "d" << std::setw(12) << "slope" << std::setw(10) << "se" << std::setw(12) << "rbc slope"
                  << std::setw(10) << "rbc se" << '\n';
        for (std::size_t i = 0; i < out.evaluations.size(); ++i) {
            const auto& e = out.evaluations[i];
            std::cout << std::setw(10) << e.d << std::setw(12) << e.estimate << std::setw(10) << e.se << std::setw(12)
                      << e.rbc_estimate << std::setw(10) << e.rbc_se << (i == out.binding ? "  <" : "") << '\n';
        }
    } else {
        std::cout << std::setw(10) << "d" << std::setw(10) << "d*" << std::setw(12) << "quotient" << std::setw(10) << "se"
                  << std::setw(8) << "n(d)" << std::setw(8) << "n(d*)" << '\n';
        for (std::size_t i = 0; i < out.evaluations.size(); ++i) {
            const auto& e = out.evaluations[i];
            std::cout << std::setw(10) << e.d << std::setw(10) << e.d_star << std::setw(12) << e.estimate << std::setw(10)
                      << e.se << std::setw(8) << e.count_d << std::setw(8) << e.count_d_star
                      << (i == out.binding ? "  <" : "") << '\n';
        }
    }
    write_json(c.json, tobit::report::envelope("bounds", m, tobit::report::to_json(out)));
    return 0;
}

int cmd_simulate(const Common& c, const SimulateArgs& a) {
    std::vector<tobit::montecarlo::DgpConfig> grid = tobit::montecarlo::load_config(a.config);
    for (double x : a.alpha) check_alpha(x);
    if (a.reps < 0) throw tobit::InputError("--reps must be positive");
    for (auto& g : grid) {
        if (a.reps > 0) g.reps = a.reps;
        if (a.seed_given) g.seed = c.seed;
        if (!a.alpha.empty()) g.test.alphas = a.alpha;
    }
    Json opts;
    opts["config"] = a.config;
    opts["reps"] = a.reps;
    opts["alpha"] = a.alpha;
    opts["seed_override"] = a.seed_given;
    opts["csv"] = a.csv;
    opts["journal"] = a.journal;
    opts["resume"] = a.resume;
    auto m = manifest("simulate", c, opts);
    m.inputs.push_back({a.config, tobit::report::sha256_file(a.config), 0, 0});

    tobit::montecarlo::StudyOptions so;
    so.threads = c.threads;
    so.journal = a.journal;
    so.resume = a.resume;
    const auto report = tobit::montecarlo::run_study(grid, so);

    std::cout << std::fixed << std::setprecision(2);
    for (const auto& r : report.configs) {
        std::cout << r.config.name << ": " << r.completed << " of " << r.config.reps << " replications";
        if (r.resumed) std::cout << " (" << r.resumed << " resumed)";
        std::cout << '\n';
        for (std::size_t i = 0; i < r.config.test.alphas.size(); ++i)
            std::cout << "  alpha " << r.config.test.alphas[i] << ": rejection " << 100.0 * r.rejection_rate[i]
                      << "% (se " << 100.0 * r.rejection_se(i) << ")\n";
        std::cout << std::setprecision(5) << "  MSE(alpha0) " << r.mse_alpha0 << "  MSE(alpha1) " << r.mse_alpha1
                  << std::setprecision(2) << '\n';
        for (const auto& [msg, count] : r.failures) std::cout << "  failed x" << count << ": " << msg << '\n';
    }
    if (report.journal_skipped > 0)
        std::cerr << "note: skipped " << report.journal_skipped << " unreadable journal lines\n";

    if (!a.csv.empty()) {
        std::ofstream out(a.csv);
        if (!out) throw tobit::InputError("cannot write " + a.csv);
        tobit::montecarlo::write_csv(out, report);
    }
    write_json(c.json, tobit::report::envelope("simulate", m, tobit::report::to_json(report)));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    g_argv.assign(argv, argv + argc);
    CLI::App app{"Specification tests and bounds for Tobit models"};
    app.set_version_flag("--version", std::string(TOBIT_VERSION));
    app.require_subcommand(1);

    Common common;
    TestArgs targs;
    BoundsArgs bargs;
    SimulateArgs sargs;

    auto* est = app.add_subcommand("estimate", "fit a classic or IV Tobit by maximum likelihood");
    add_data_options(est, common, true);
    est->add_option("--model", common.model, "classic or iv")->check(CLI::IsMember({"classic", "iv"}));
    add_run_options(est, common);

    auto* test = app.add_subcommand("test", "test the Tobit cell equalities");
    add_data_options(test, common, true);
    test->add_option("--model", common.model, "classic or iv")->check(CLI::IsMember({"classic", "iv"}));
    test->add_option("--k", targs.k, "outcome cells above zero")->check(CLI::PositiveNumber);
    test->add_option("--q", targs.q, "treatment cut points (IV)")->check(CLI::PositiveNumber);
    test->add_option("--alpha", targs.alpha, "significance levels")->delimiter(',');
    test->add_option("--draws", targs.draws, "simulation draws for the critical value");
    test->add_option("--grid-points", targs.grid_points, "evaluation points per equality")->check(CLI::PositiveNumber);
    test->add_option("--scale", targs.scale, "unit or estimated")->check(CLI::IsMember({"unit", "estimated"}));
    test->add_option("--process", targs.process, "null process for the critical value: multinomial or gaussian")
        ->check(CLI::IsMember({"multinomial", "gaussian"}));
    test->add_flag("--no-estimation-effect", targs.no_estimation_effect, "treat the fitted parameters as known");
    test->add_flag("--no-selection", targs.no_selection, "use every grid point for the critical value");
    add_run_options(test, common);

    auto* bnd = app.add_subcommand("bounds", "bound alpha1 under monotone treatment selection");
    add_data_options(bnd, common, true);
    bnd->add_flag("--continuous", bargs.continuous, "local polynomial slopes instead of difference quotients");
    bnd->add_option("--levels", bargs.levels, "exact or quantile")->check(CLI::IsMember({"exact", "quantile"}));
    bnd->add_option("--bins", bargs.bins, "quantile levels")->check(CLI::PositiveNumber);
    bnd->add_option("--pairs", bargs.pairs, "adjacent or all")->check(CLI::IsMember({"adjacent", "all"}));
    bnd->add_option("--min-count", bargs.min_count, "positive outcomes required per level");
    bnd->add_option("--grid-points", bargs.grid_points, "evaluation points (continuous)")->check(CLI::PositiveNumber);
    bnd->add_option("--bandwidth", bargs.bandwidth, "bandwidth (continuous; 0: rule of thumb)");
    bnd->add_option("--direction", bargs.direction, "decreasing (lower bound) or increasing (upper bound)")
        ->check(CLI::IsMember({"decreasing", "increasing"}));
    bnd->add_option("--alpha", bargs.alpha, "one-sided level of the confidence limit");
    bnd->add_option("--reps", bargs.reps, "bootstrap resamples")->check(CLI::PositiveNumber);
    add_run_options(bnd, common);

    auto* sim = app.add_subcommand("simulate", "run a Monte Carlo study from a config file");
    sim->add_option("config,--config", sargs.config, "study config")->required()->check(CLI::ExistingFile);
    sim->add_option("--reps", sargs.reps, "override replications of every design");
    sim->add_option("--alpha", sargs.alpha, "override significance levels")->delimiter(',');
    sim->add_option("--csv", sargs.csv, "write the CSV summary here");
    sim->add_option("--journal", sargs.journal, "per-replication JSON-lines journal");
    sim->add_flag("--resume", sargs.resume, "reuse replications already in the journal");
    auto* seed_opt = sim->add_option("--seed", common.seed, "override the seed of every design");
    sim->add_option("--threads", common.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    sim->add_option("--json", common.json, "write a JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsage;
    }

    try {
        if (*est) return cmd_estimate(common);
        if (*test) return cmd_test(common, targs);
        if (*bnd) return cmd_bounds(common, bargs);
        if (*sim) {
            sargs.seed_given = seed_opt->count() > 0;
            if (sargs.resume && sargs.journal.empty()) throw tobit::InputError("--resume needs --journal");
            return cmd_simulate(common, sargs);
        }
    } catch (const tobit::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const tobit::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    }
    return 0;
}
