#include "tobit/montecarlo.hpp"

#include <algorithm>
#include <array>
#include <boost/math/distributions/students_t.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

#include "json.hpp"

#include "tobit/errors.hpp"
#include "tobit/numcore.hpp"
#include "tobit/parallel.hpp"
#include "tobit/rng.hpp"

namespace tobit::montecarlo {

namespace {

using nlohmann::json;

std::string fmt(double v) {
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

double family_error(ErrorFamily f, double df, double x) {
    switch (f) {
        case ErrorFamily::normal:
            return x;
        case ErrorFamily::student_t: {
            const boost::math::students_t dist(df);
            return x > 0.0 ? -boost::math::quantile(dist, numcore::std_normal_cdf(-x))
                           : boost::math::quantile(dist, numcore::std_normal_cdf(x));
        }
        case ErrorFamily::lognormal:
            return std::exp(x);
        case ErrorFamily::uniform:
            return std::sqrt(3.0) * (1.0 - 2.0 * numcore::std_normal_cdf(-x));
    }
    return x;
}

const char* model_name(momtest::Model m) { return m == momtest::Model::classic ? "classic" : "iv"; }

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

json replication_json(const std::string& fingerprint, const std::string& name, const Replication& r) {
    json j;
    j["fingerprint"] = fingerprint;
    j["config"] = name;
    j["rep"] = r.rep;
    j["ok"] = r.ok;
    if (!r.ok) {
        j["error"] = r.error;
        return j;
    }
    j["censoring"] = r.censoring;
    j["alpha0"] = number_or_null(r.alpha0);
    j["alpha1"] = number_or_null(r.alpha1);
    json stat = json::array(), kap = json::array();
    for (double v : r.statistic) stat.push_back(number_or_null(v));
    for (double v : r.kappa) kap.push_back(number_or_null(v));
    j["statistic"] = stat;
    j["kappa"] = kap;
    j["reject"] = r.reject;
    return j;
}

Replication replication_from(const json& j, std::size_t alphas) {
    Replication r;
    r.rep = j.at("rep").get<int>();
    r.ok = j.at("ok").get<bool>();
    if (!r.ok) {
        r.error = j.at("error").get<std::string>();
        return r;
    }
    r.censoring = j.at("censoring").get<double>();
    r.alpha0 = number_from(j.at("alpha0"));
    r.alpha1 = number_from(j.at("alpha1"));
    for (const json& v : j.at("statistic")) r.statistic.push_back(number_from(v));
    for (const json& v : j.at("kappa")) r.kappa.push_back(number_from(v));
    r.reject = j.at("reject").get<std::vector<bool>>();
    if (r.statistic.size() != alphas || r.kappa.size() != alphas || r.reject.size() != alphas)
        throw InputError("journal entry has the wrong number of levels");
    return r;
}

ConfigResult aggregate(const DgpConfig& cfg, const std::vector<Replication>& reps, int resumed) {
    ConfigResult out;
    out.config = cfg;
    out.resumed = resumed;
    const std::size_t na = cfg.test.alphas.size();
    out.rejections.assign(na, 0);
    out.mean_statistic.assign(na, 0.0);
    out.mean_kappa.assign(na, 0.0);
    for (const Replication& r : reps) {
        if (!r.ok) {
            ++out.failed;
            ++out.failures[r.error];
            continue;
        }
        ++out.completed;
        for (std::size_t a = 0; a < na; ++a) {
            out.rejections[a] += r.reject[a] ? 1 : 0;
            out.mean_statistic[a] += r.statistic[a];
            out.mean_kappa[a] += r.kappa[a];
        }
        out.mean_alpha0 += r.alpha0;
        out.mean_alpha1 += r.alpha1;
        out.mse_alpha0 += r.alpha0 * r.alpha0;
        out.mse_alpha1 += (r.alpha1 - 1.0) * (r.alpha1 - 1.0);
        out.mean_censoring += r.censoring;
    }
    out.rejection_rate.assign(na, std::numeric_limits<double>::quiet_NaN());
    if (out.completed == 0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        out.mean_statistic.assign(na, nan);
        out.mean_kappa.assign(na, nan);
        out.mean_alpha0 = out.mean_alpha1 = out.mse_alpha0 = out.mse_alpha1 = out.mean_censoring = nan;
        return out;
    }
    const double c = out.completed;
    for (std::size_t a = 0; a < na; ++a) {
        out.rejection_rate[a] = out.rejections[a] / c;
        out.mean_statistic[a] /= c;
        out.mean_kappa[a] /= c;
    }
    out.mean_alpha0 /= c;
    out.mean_alpha1 /= c;
    out.mse_alpha0 /= c;
    out.mse_alpha1 /= c;
    out.mean_censoring /= c;
    return out;
}

}  // namespace

std::string family_name(ErrorFamily f, double df) {
    switch (f) {
        case ErrorFamily::normal:
            return "normal";
        case ErrorFamily::student_t:
            return "t(" + fmt(df) + ")";
        case ErrorFamily::lognormal:
            return "lognormal";
        case ErrorFamily::uniform:
            return "uniform";
    }
    return "?";
}

momtest::TestOptions DgpConfig::default_test_options() {
    momtest::TestOptions t;
    t.alphas = {0.10, 0.05, 0.01};
    return t;
}

void DgpConfig::validate() const {
    if (n < 200) throw InputError(name + ": n must be at least 200");
    if (reps < 1) throw InputError(name + ": reps must be at least 1");
    if (!(rho > -1.0 && rho < 1.0)) throw InputError(name + ": rho must lie in (-1, 1)");
    if (family == ErrorFamily::student_t && !(df >= 3.0)) throw InputError(name + ": df must be at least 3");
    if (test.alphas.empty()) throw InputError(name + ": at least one alpha is required");
    for (double a : test.alphas)
        if (!(a > 0.0 && a <= 0.5)) throw InputError(name + ": alpha must lie in (0, 0.5]");
    if (test.draws < 200) throw InputError(name + ": draws must be at least 200");
    if (test.K < 1) throw InputError(name + ": k must be at least 1");
    if (model == momtest::Model::iv && test.Q < 1) throw InputError(name + ": q must be at least 1");
    if (test.grid_points < 1) throw InputError(name + ": grid_points must be at least 1");
}

std::string DgpConfig::fingerprint() const {
    json j;
    j["model"] = model_name(model);
    j["n"] = n;
    j["rho"] = rho;
    j["family"] = family_name(family, df);
    j["seed"] = seed;
    j["alphas"] = test.alphas;
    j["k"] = test.K;
    j["q"] = model == momtest::Model::iv ? test.Q : 0;
    j["draws"] = test.draws;
    j["grid_points"] = test.grid_points;
    j["min_local_count"] = test.min_local_count;
    j["scale"] = test.scale == equalities::Scale::unit ? "unit" : "estimated";
    j["adaptive_selection"] = test.adaptive_selection;
    j["estimation_effect"] = test.estimation_effect;
    j["process"] = test.process == momtest::NullProcess::gaussian ? "gaussian" : "multinomial";
    j["max_iterations"] = test.fit.max_iterations;
    j["gradient_tolerance"] = test.fit.gradient_tolerance;
    std::ostringstream os;
    os << std::hex << fnv1a(j.dump());
    return os.str();
}

LatentDraw draw_latent(const DgpConfig& cfg, int rep) {
    cfg.validate();
    rng::Engine eng = rng::make_stream(cfg.seed, {rng::tag(rng::Purpose::dgp), static_cast<std::uint64_t>(rep)});
    const Eigen::Index n = cfg.n;
    LatentDraw out{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
    const double tail = std::sqrt(1.0 - cfg.rho * cfg.rho);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.z[i] = rng::standard_normal(eng);
        out.v[i] = rng::standard_normal(eng);
        const double e = rng::standard_normal(eng);
        out.u[i] = family_error(cfg.family, cfg.df, cfg.rho * out.v[i] + tail * e);
    }
    return out;
}

data::Sample draw_dgp(const DgpConfig& cfg, int rep) {
    LatentDraw w = draw_latent(cfg, rep);
    Eigen::VectorXd d = 2.0 * w.z - w.v;
    Eigen::VectorXd y = (d + w.u).cwiseMax(0.0);
    return data::Sample(std::move(y), std::move(d), std::move(w.z));
}

Replication run_replication(const DgpConfig& cfg, int rep) {
    Replication r;
    r.rep = rep;
    try {
        const data::Sample s = draw_dgp(cfg, rep);
        r.censoring = data::censoring_fraction(s);
        momtest::TestOptions opt = cfg.test;
        opt.threads = 1;
        opt.use_covariates = false;
        rng::Engine eng =
            rng::make_stream(cfg.seed, {rng::tag(rng::Purpose::simulate), static_cast<std::uint64_t>(rep)});
        opt.seed = eng();
        const momtest::TestRun run = momtest::run_test(s, cfg.model, opt);
        if (run.classic_fit) {
            r.alpha0 = run.classic_fit->alpha0();
            r.alpha1 = run.classic_fit->alpha1();
        } else {
            r.alpha0 = run.iv_fit->alpha0();
            r.alpha1 = run.iv_fit->alpha1();
        }
        for (const momtest::TestResult& t : run.results) {
            r.statistic.push_back(t.statistic);
            r.kappa.push_back(t.kappa);
            r.reject.push_back(t.reject);
        }
        r.ok = true;
    } catch (const InputError& e) {
        r.error = e.what();
    } catch (const NumericalError& e) {
        r.error = e.what();
    }
    return r;
}

double ConfigResult::rejection_se(std::size_t a) const {
    if (completed == 0) return std::numeric_limits<double>::quiet_NaN();
    const double p = rejection_rate.at(a);
    return std::sqrt(p * (1.0 - p) / completed);
}

StudyReport run_study(const std::vector<DgpConfig>& grid, const StudyOptions& opt) {
    if (grid.empty()) throw InputError("the study grid is empty");
    std::vector<std::string> prints;
    for (const DgpConfig& c : grid) {
        c.validate();
        prints.push_back(c.fingerprint());
    }
    if (opt.resume && opt.journal.empty()) throw InputError("resuming needs a journal file");

    std::vector<std::vector<Replication>> results(grid.size());
    std::vector<std::vector<char>> have(grid.size());
    std::vector<int> resumed(grid.size(), 0);
    for (std::size_t c = 0; c < grid.size(); ++c) {
        results[c].resize(grid[c].reps);
        have[c].assign(grid[c].reps, 0);
    }

    StudyReport report;
    report.threads = parallel::resolve_threads(opt.threads);
    if (opt.resume) {
        std::ifstream in(opt.journal);
        std::string line;
        while (in && std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                const json j = json::parse(line);
                const std::string fp = j.at("fingerprint").get<std::string>();
                const int rep = j.at("rep").get<int>();
                for (std::size_t c = 0; c < grid.size(); ++c) {
                    if (prints[c] != fp || rep < 0 || rep >= grid[c].reps || have[c][rep]) continue;
                    results[c][rep] = replication_from(j, grid[c].test.alphas.size());
                    have[c][rep] = 1;
                    ++resumed[c];
                }
            } catch (const std::exception&) {
                ++report.journal_skipped;
            }
        }
    }

    bool needs_newline = false;
    if (opt.resume) {
        std::ifstream tail(opt.journal, std::ios::binary | std::ios::ate);
        if (tail && tail.tellg() > 0) {
            tail.seekg(-1, std::ios::end);
            needs_newline = tail.get() != '\n';
        }
    }
    std::ofstream journal;
    if (!opt.journal.empty()) {
        journal.open(opt.journal, opt.resume ? std::ios::app : std::ios::trunc);
        if (!journal) throw InputError("cannot open journal " + opt.journal);
        if (needs_newline) journal << '\n';
    }

    std::vector<std::pair<std::size_t, int>> tasks;
    for (std::size_t c = 0; c < grid.size(); ++c)
        for (int r = 0; r < grid[c].reps; ++r)
            if (!have[c][r]) tasks.emplace_back(c, r);

    std::mutex io;
    parallel::for_each(tasks.size(), opt.threads, [&](std::size_t t) {
        const auto [c, r] = tasks[t];
        Replication rep = run_replication(grid[c], r);
        if (journal.is_open()) {
            const std::string line = replication_json(prints[c], grid[c].name, rep).dump();
            std::lock_guard<std::mutex> lock(io);
            journal << line << '\n';
            journal.flush();
        }
        results[c][r] = std::move(rep);
    });

    for (std::size_t c = 0; c < grid.size(); ++c) report.configs.push_back(aggregate(grid[c], results[c], resumed[c]));
    return report;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

struct Entry {
    std::string value;
    int line = 0;
};

struct Section {
    std::string name;
    int line = 0;
    std::vector<std::pair<std::string, Entry>> entries;
};

class KeyError {
public:
    KeyError(const std::string& source, int line, const std::string& key) : prefix_(source + ":" + std::to_string(line) + ": key '" + key + "': ") {}
    [[noreturn]] void fail(const std::string& msg) const { throw InputError(prefix_ + msg); }

private:
    std::string prefix_;
};

double parse_real(const std::string& v, const KeyError& err) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) err.fail("'" + v + "' is not a number");
    return out;
}

long long parse_int(const std::string& v, const KeyError& err) {
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) err.fail("'" + v + "' is not an integer");
    return out;
}

bool parse_bool(const std::string& v, const KeyError& err) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    err.fail("'" + v + "' is not true or false");
}

// family values: normal, t, t(df), lognormal, uniform
std::pair<ErrorFamily, double> parse_family(const std::string& v, double df, const KeyError& err) {
    if (v == "normal") return {ErrorFamily::normal, df};
    if (v == "lognormal") return {ErrorFamily::lognormal, df};
    if (v == "uniform") return {ErrorFamily::uniform, df};
    if (v == "t") return {ErrorFamily::student_t, df};
    if (v.size() > 3 && v.rfind("t(", 0) == 0 && v.back() == ')')
        return {ErrorFamily::student_t, parse_real(v.substr(2, v.size() - 3), err)};
    err.fail("unknown error family '" + v + "'");
}

void apply(DgpConfig& cfg, const std::string& key, const Entry& e, const std::string& source) {
    const KeyError err(source, e.line, key);
    const std::string& v = e.value;
    auto positive_int = [&](long long lo) {
        const long long x = parse_int(v, err);
        if (x < lo || x > std::numeric_limits<int>::max()) err.fail("must be at least " + std::to_string(lo));
        return static_cast<int>(x);
    };
    if (key == "model") {
        if (v == "classic") cfg.model = momtest::Model::classic;
        else if (v == "iv") cfg.model = momtest::Model::iv;
        else err.fail("model must be classic or iv");
    } else if (key == "n") {
        cfg.n = positive_int(200);
    } else if (key == "rho") {
        cfg.rho = parse_real(v, err);
        if (!(cfg.rho > -1.0 && cfg.rho < 1.0)) err.fail("must lie in (-1, 1)");
    } else if (key == "family") {
        auto [f, df] = parse_family(v, cfg.df, err);
        cfg.family = f;
        cfg.df = df;
    } else if (key == "df") {
        cfg.df = parse_real(v, err);
        if (!(cfg.df >= 3.0)) err.fail("must be at least 3");
    } else if (key == "reps") {
        cfg.reps = positive_int(1);
    } else if (key == "seed") {
        const long long s = parse_int(v, err);
        if (s < 0) err.fail("must be nonnegative");
        cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "alpha") {
        cfg.test.alphas.clear();
        for (const std::string& a : split_list(v)) {
            const double x = parse_real(a, err);
            if (!(x > 0.0 && x <= 0.5)) err.fail("levels must lie in (0, 0.5]");
            cfg.test.alphas.push_back(x);
        }
    } else if (key == "k") {
        cfg.test.K = positive_int(1);
    } else if (key == "q") {
        cfg.test.Q = positive_int(1);
    } else if (key == "draws") {
        cfg.test.draws = positive_int(200);
    } else if (key == "grid_points") {
        cfg.test.grid_points = positive_int(1);
    } else if (key == "min_local_count") {
        cfg.test.min_local_count = parse_real(v, err);
        if (!(cfg.test.min_local_count >= 0.0)) err.fail("must be nonnegative");
    } else if (key == "scale") {
        if (v == "unit") cfg.test.scale = equalities::Scale::unit;
        else if (v == "estimated") cfg.test.scale = equalities::Scale::estimated;
        else err.fail("scale must be unit or estimated");
    } else if (key == "estimation_effect") {
        cfg.test.estimation_effect = parse_bool(v, err);
    } else if (key == "process") {
        if (v == "multinomial") cfg.test.process = momtest::NullProcess::multinomial;
        else if (v == "gaussian") cfg.test.process = momtest::NullProcess::gaussian;
        else err.fail("process must be multinomial or gaussian");
    } else if (key == "adaptive_selection") {
        cfg.test.adaptive_selection = parse_bool(v, err);
    } else if (key == "max_iterations") {
        cfg.test.fit.max_iterations = positive_int(1);
    } else {
        err.fail("unknown key");
    }
}

bool is_grid_key(const std::string& k) { return k == "n" || k == "rho" || k == "family"; }

}  // namespace

std::vector<DgpConfig> parse_config(std::istream& in, const std::string& source) {
    std::vector<Section> sections;
    Section defaults;
    bool in_defaults = false;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') throw InputError(source + ":" + std::to_string(line) + ": malformed section header");
            const std::string name = trim(text.substr(1, text.size() - 2));
            if (name.empty()) throw InputError(source + ":" + std::to_string(line) + ": empty section name");
            in_defaults = name == "defaults";
            if (!in_defaults) {
                for (const Section& s : sections)
                    if (s.name == name)
                        throw InputError(source + ":" + std::to_string(line) + ": duplicate section '" + name + "'");
                sections.push_back({name, line, {}});
            }
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw InputError(source + ":" + std::to_string(line) + ": expected key = value");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key.empty()) throw InputError(source + ":" + std::to_string(line) + ": missing key");
        if (value.empty()) KeyError(source, line, key).fail("missing value");
        if (!in_defaults && sections.empty())
            KeyError(source, line, key).fail("appears before any section");
        Section& target = in_defaults ? defaults : sections.back();
        for (const auto& kv : target.entries)
            if (kv.first == key) KeyError(source, line, key).fail("set twice in one section");
        target.entries.push_back({key, {value, line}});
    }
    if (sections.empty()) throw InputError(source + ": no study sections");

    std::vector<DgpConfig> out;
    for (const Section& sec : sections) {
        DgpConfig base;
        base.name = sec.name;
        std::vector<std::pair<std::string, Entry>> grid_keys;
        auto absorb = [&](const Section& s, bool allow_override) {
            for (const auto& [key, e] : s.entries) {
                if (is_grid_key(key)) {
                    auto it = std::find_if(grid_keys.begin(), grid_keys.end(),
                                           [&](const auto& kv) { return kv.first == key; });
                    if (it == grid_keys.end()) grid_keys.push_back({key, e});
                    else if (allow_override) it->second = e;
                } else {
                    apply(base, key, e, source);
                }
            }
        };
        absorb(defaults, false);
        absorb(sec, true);

        std::vector<DgpConfig> expanded{base};
        for (const auto& [key, e] : grid_keys) {
            const std::vector<std::string> values = split_list(e.value);
            const bool multi = values.size() > 1;
            std::vector<DgpConfig> next;
            for (const DgpConfig& c : expanded) {
                for (const std::string& v : values) {
                    DgpConfig d = c;
                    apply(d, key, {v, e.line}, source);
                    if (multi) {
                        d.name += d.name == sec.name ? "/" : ",";
                        d.name += key + "=" + v;
                    }
                    next.push_back(std::move(d));
                }
            }
            expanded = std::move(next);
        }
        for (DgpConfig& c : expanded) {
            try {
                c.validate();
            } catch (const InputError& e) {
                throw InputError(source + ":" + std::to_string(sec.line) + ": " + e.what());
            }
            out.push_back(std::move(c));
        }
    }
    return out;
}

std::vector<DgpConfig> load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path);
    return parse_config(in, path);
}

void write_csv(std::ostream& out, const StudyReport& report) {
    out << "config,model,n,rho,family,reps,completed,failed,alpha,rejections,rejection_rate,rejection_se,"
           "mean_statistic,mean_kappa,mean_alpha0,mean_alpha1,mse_alpha0,mse_alpha1,censoring,seed\n";
    for (const ConfigResult& r : report.configs) {
        const DgpConfig& c = r.config;
        for (std::size_t a = 0; a < c.test.alphas.size(); ++a) {
            out << '"' << c.name << "\"," << model_name(c.model) << ',' << c.n << ',' << fmt(c.rho) << ','
                << family_name(c.family, c.df) << ',' << c.reps << ',' << r.completed << ',' << r.failed << ','
                << fmt(c.test.alphas[a]) << ',' << r.rejections[a] << ',' << fmt(r.rejection_rate[a]) << ','
                << fmt(r.rejection_se(a)) << ',' << fmt(r.mean_statistic[a]) << ',' << fmt(r.mean_kappa[a]) << ','
                << fmt(r.mean_alpha0) << ',' << fmt(r.mean_alpha1) << ',' << fmt(r.mse_alpha0) << ','
                << fmt(r.mse_alpha1) << ',' << fmt(r.mean_censoring) << ',' << c.seed << '\n';
        }
    }
}

}  // namespace tobit::montecarlo
