#include "tobit/report.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "tobit/errors.hpp"
#include "tobit/numcore.hpp"

namespace tobit::report {

namespace {

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json nums(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(num(v[i]));
    return out;
}

Json nums(const std::vector<double>& v) {
    Json out = Json::array();
    for (double x : v) out.push_back(num(x));
    return out;
}

Json coefficient(const std::string& name, double est, double se) {
    Json j;
    j["name"] = name;
    j["estimate"] = num(est);
    j["se"] = num(se);
    j["z"] = num(se > 0.0 ? est / se : std::nan(""));
    j["p_value"] = num(p_value(est, se));
    j["stars"] = stars(est, se);
    return j;
}

Json column(const data::ColumnSummary& c) {
    Json j;
    j["name"] = c.name;
    j["mean"] = num(c.mean);
    j["sd"] = num(c.sd);
    j["min"] = num(c.min);
    j["q25"] = num(c.q25);
    j["median"] = num(c.median);
    j["q75"] = num(c.q75);
    j["max"] = num(c.max);
    return j;
}

const char* model_name(momtest::Model m) { return m == momtest::Model::classic ? "classic" : "iv"; }

std::string row(const std::string& name, double est, double se) {
    std::ostringstream os;
    os << std::left << std::setw(22) << name << std::right << std::fixed << std::setprecision(4) << std::setw(12)
       << est << std::setw(12) << se << "  " << stars(est, se) << '\n';
    return os.str();
}

std::string header(const std::string& title) {
    std::ostringstream os;
    os << title << '\n' << std::left << std::setw(22) << "" << std::right << std::setw(12) << "estimate" << std::setw(12)
       << "se" << '\n';
    return os.str();
}

}  // namespace

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path);
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw NumericalError("SHA-256 initialisation failed");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

double p_value(double estimate, double se) {
    if (!(se > 0.0) || !std::isfinite(estimate)) return std::nan("");
    return 2.0 * numcore::std_normal_cdf(-std::abs(estimate / se));
}

std::string stars(double estimate, double se) {
    const double p = p_value(estimate, se);
    if (!(p == p)) return "";
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.10) return "*";
    return "";
}

Json to_json(const RunManifest& m) {
    Json j;
    j["subcommand"] = m.subcommand;
    j["tool_version"] = m.tool_version;
    j["timestamp"] = m.timestamp;
    j["seed"] = m.seed;
    j["threads"] = m.threads;
    Json inputs = Json::array();
    for (const InputDigest& d : m.inputs) {
        Json i;
        i["path"] = d.path;
        i["sha256"] = d.sha256;
        i["rows_read"] = d.rows_read;
        i["rows_dropped"] = d.rows_dropped;
        inputs.push_back(i);
    }
    j["inputs"] = inputs;
    j["options"] = m.options;
    j["command_line"] = m.command_line;
    return j;
}

Json to_json(const data::SampleSummary& s) {
    Json j;
    j["n"] = s.n;
    j["censored"] = s.censored;
    j["censoring_fraction"] = num(s.censoring_fraction);
    Json cols = Json::array();
    cols.push_back(column(s.y));
    cols.push_back(column(s.d));
    if (s.z) cols.push_back(column(*s.z));
    for (const auto& c : s.x) cols.push_back(column(c));
    j["columns"] = cols;
    return j;
}

Json to_json(const estimate::ClassicTobitFit& fit) {
    Json j;
    j["model"] = "classic";
    j["n"] = fit.n;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["gradient_norm"] = num(fit.gradient_norm);
    j["loglik"] = num(fit.loglik);
    Json coefs = Json::array();
    for (Eigen::Index i = 0; i < fit.coef.size(); ++i) coefs.push_back(coefficient(fit.names[i], fit.coef[i], fit.se(i)));
    j["coefficients"] = coefs;
    j["sigma"] = coefficient("sigma", fit.sigma, fit.se(fit.coef.size()));
    return j;
}

Json to_json(const estimate::IvTobitFit& fit) {
    Json j;
    j["model"] = "iv";
    j["n"] = fit.n;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["gradient_norm"] = num(fit.gradient_norm);
    j["loglik"] = num(fit.loglik);
    Json structural = Json::array();
    for (Eigen::Index i = 0; i < fit.alpha.size(); ++i)
        structural.push_back(coefficient(fit.structural_names[i], fit.alpha[i], std::sqrt(fit.alpha_vcov(i, i))));
    j["structural"] = structural;
    Json reduced = Json::array();
    const Eigen::Index k = fit.beta.size();
    for (Eigen::Index i = 0; i < fit.vcov.rows(); ++i) {
        double est = 0.0;
        if (i < k) est = fit.beta[i];
        else if (i < 2 * k) est = fit.gamma[i - k];
        else if (i == 2 * k) est = fit.sigma_w;
        else if (i == 2 * k + 1) est = fit.sigma_v;
        else est = fit.rho;
        reduced.push_back(coefficient(fit.names[i], est, std::sqrt(std::max(fit.vcov(i, i), 0.0))));
    }
    j["reduced_form"] = reduced;
    j["sigma_u"] = coefficient("sigma_u", fit.sigma_u, fit.sigma_u_se);
    j["rho_uv"] = coefficient("rho_uv", fit.rho_uv, fit.rho_uv_se);
    j["first_stage_t"] = num(fit.gamma1_t());
    j["rho_fixed"] = fit.rho_fixed;
    j["weak_first_stage"] = fit.weak_first_stage;
    j["boundary"] = fit.boundary;
    return j;
}

Json to_json(const momtest::TestRun& run) {
    Json j;
    j["model"] = model_name(run.model);
    if (run.classic_fit) j["fit"] = to_json(*run.classic_fit);
    else if (run.iv_fit) j["fit"] = to_json(*run.iv_fit);
    Json part;
    part["y_cuts"] = nums(run.partition.y_cuts);
    part["d_cuts"] = nums(run.partition.d_cuts);
    Json cells = Json::array();
    for (const auto& c : run.partition.cells()) cells.push_back(c.label());
    part["cells"] = cells;
    j["partition"] = part;
    j["warnings"] = run.warnings;
    Json results = Json::array();
    for (const momtest::TestResult& r : run.results) {
        Json t;
        t["alpha"] = r.alpha;
        t["statistic"] = num(r.statistic);
        t["critical_value"] = num(r.kappa);
        t["reject"] = r.reject;
        t["selection_k"] = num(r.selection_k);
        t["draws"] = r.draws;
        t["seed"] = r.seed;
        t["bandwidths"] = nums(r.bandwidths);
        Json pts = Json::array();
        for (const momtest::CellPoint& p : r.per_cell) {
            Json c;
            c["column"] = p.column;
            c["label"] = p.label;
            c["v"] = num(p.v);
            c["theta"] = num(p.theta);
            c["se"] = num(p.se);
            c["studentized"] = num(p.studentized);
            c["selected"] = p.selected;
            pts.push_back(c);
        }
        t["points"] = pts;
        results.push_back(t);
    }
    j["results"] = results;
    return j;
}

Json to_json(const bounds::MtsBound& b) {
    Json j;
    j["direction"] = b.direction == bounds::Direction::decreasing ? "decreasing" : "increasing";
    j["side"] = b.is_lower() ? "lower" : "upper";
    j["continuous"] = b.continuous;
    j["bound"] = num(b.bound);
    j["binding"] = b.binding;
    j["bandwidth"] = num(b.bandwidth);
    j["covariate_effect"] = nums(b.covariate_effect);
    Json ci;
    ci["limit"] = num(b.ci_limit);
    ci["alpha"] = b.ci_alpha;
    ci["critical_value"] = num(b.ci_critical);
    ci["reps"] = b.boot_reps;
    ci["failures"] = b.boot_failures;
    ci["seed"] = b.seed;
    j["confidence"] = ci;
    Json evs = Json::array();
    for (const bounds::Evaluation& e : b.evaluations) {
        Json x;
        x["d"] = num(e.d);
        x["d_star"] = num(e.d_star);
        x["estimate"] = num(e.estimate);
        x["se"] = num(e.se);
        x["rbc_estimate"] = num(e.rbc_estimate);
        x["rbc_se"] = num(e.rbc_se);
        x["count_d"] = e.count_d;
        x["count_d_star"] = e.count_d_star;
        evs.push_back(x);
    }
    j["evaluations"] = evs;
    return j;
}

Json to_json(const montecarlo::StudyReport& r) {
    Json j;
    j["threads"] = r.threads;
    j["journal_skipped"] = r.journal_skipped;
    Json configs = Json::array();
    for (const montecarlo::ConfigResult& c : r.configs) {
        const montecarlo::DgpConfig& cfg = c.config;
        Json x;
        x["name"] = cfg.name;
        x["model"] = model_name(cfg.model);
        x["n"] = cfg.n;
        x["rho"] = cfg.rho;
        x["family"] = montecarlo::family_name(cfg.family, cfg.df);
        x["reps"] = cfg.reps;
        x["seed"] = cfg.seed;
        x["fingerprint"] = cfg.fingerprint();
        x["k"] = cfg.test.K;
        x["q"] = cfg.model == momtest::Model::iv ? cfg.test.Q : 0;
        x["draws"] = cfg.test.draws;
        x["completed"] = c.completed;
        x["failed"] = c.failed;
        x["resumed"] = c.resumed;
        Json levels = Json::array();
        for (std::size_t a = 0; a < cfg.test.alphas.size(); ++a) {
            Json l;
            l["alpha"] = cfg.test.alphas[a];
            l["rejections"] = c.rejections[a];
            l["rejection_rate"] = num(c.rejection_rate[a]);
            l["rejection_se"] = num(c.rejection_se(a));
            l["mean_statistic"] = num(c.mean_statistic[a]);
            l["mean_critical_value"] = num(c.mean_kappa[a]);
            levels.push_back(l);
        }
        x["levels"] = levels;
        x["mean_alpha0"] = num(c.mean_alpha0);
        x["mean_alpha1"] = num(c.mean_alpha1);
        x["mse_alpha0"] = num(c.mse_alpha0);
        x["mse_alpha1"] = num(c.mse_alpha1);
        x["mean_censoring"] = num(c.mean_censoring);
        Json fails = Json::array();
        for (const auto& [msg, count] : c.failures) fails.push_back({{"message", msg}, {"count", count}});
        x["failures"] = fails;
        configs.push_back(x);
    }
    j["configs"] = configs;
    return j;
}

Json envelope(const std::string& kind, const RunManifest& m, Json result) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = kind;
    j["manifest"] = to_json(m);
    j["result"] = std::move(result);
    return j;
}

std::string format_fit(const estimate::ClassicTobitFit& fit) {
    std::string out = header("Tobit (n = " + std::to_string(fit.n) + ")");
    for (Eigen::Index i = 0; i < fit.coef.size(); ++i) out += row(fit.names[i], fit.coef[i], fit.se(i));
    out += row("sigma", fit.sigma, fit.se(fit.coef.size()));
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << "log-likelihood " << fit.loglik << '\n';
    return out + os.str() + "*** p<0.01, ** p<0.05, * p<0.1\n";
}

std::string format_fit(const estimate::IvTobitFit& fit) {
    std::string out = header("IV Tobit (n = " + std::to_string(fit.n) + ")");
    for (Eigen::Index i = 0; i < fit.alpha.size(); ++i)
        out += row(fit.structural_names[i], fit.alpha[i], std::sqrt(fit.alpha_vcov(i, i)));
    out += row("sigma_u", fit.sigma_u, fit.sigma_u_se);
    out += row("rho_uv", fit.rho_uv, fit.rho_uv_se);
    out += "first stage\n";
    const Eigen::Index k = fit.gamma.size();
    for (Eigen::Index i = 0; i < k; ++i) out += row(fit.names[k + i], fit.gamma[i], std::sqrt(fit.vcov(k + i, k + i)));
    out += row("sigma_v", fit.sigma_v, std::sqrt(fit.vcov(2 * k + 1, 2 * k + 1)));
    out += row("rho (reduced form)", fit.rho, std::sqrt(std::max(fit.vcov(2 * k + 2, 2 * k + 2), 0.0)));
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << "log-likelihood " << fit.loglik << '\n';
    if (fit.weak_first_stage) os << "warning: weak first stage (|t| < 2)\n";
    if (fit.boundary) os << "warning: correlation estimate at the boundary\n";
    return out + os.str() + "*** p<0.01, ** p<0.05, * p<0.1\n";
}

}  // namespace tobit::report
