#pragma once

// Simulation studies of the test: size and power under the design
//   Y* = D + U,  D = 2Z - V,  Y = max(0, Y*),
// with (U, V, Z) standard normal, corr(U, V) = rho and Z independent. The
// non-normal families replace U by a draw from that family, used without
// rescaling.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "tobit/data.hpp"
#include "tobit/momtest.hpp"

namespace tobit::montecarlo {

// normal: N(0, 1). student_t: t(df). lognormal: exp(N(0, 1)).
// uniform: uniform on [-sqrt 3, sqrt 3].
enum class ErrorFamily { normal, student_t, lognormal, uniform };

std::string family_name(ErrorFamily f, double df);

struct DgpConfig {
    std::string name = "study";
    momtest::Model model = momtest::Model::classic;
    Eigen::Index n = 10000;
    double rho = 0.0;
    ErrorFamily family = ErrorFamily::normal;
    double df = 5.0;
    int reps = 200;
    std::uint64_t seed = 20221201;
    momtest::TestOptions test = default_test_options();

    static momtest::TestOptions default_test_options();
    // Throws InputError naming the offending field.
    void validate() const;
    // Stable digest of everything that affects the results (not threads).
    std::string fingerprint() const;
};

struct LatentDraw {
    Eigen::VectorXd u;
    Eigen::VectorXd v;
    Eigen::VectorXd z;
};

// Replication rep of the design. The error of a non-normal family is the
// family's quantile transform of rho V + sqrt(1 - rho^2) E, so it has the
// family's marginal and is independent of V when rho = 0. Every draw depends
// only on (seed, rep).
data::Sample draw_dgp(const DgpConfig& cfg, int rep);
// The latent errors and instrument behind draw_dgp(cfg, rep).
LatentDraw draw_latent(const DgpConfig& cfg, int rep);

struct Replication {
    int rep = 0;
    bool ok = false;
    std::string error;
    double censoring = 0.0;
    double alpha0 = 0.0;
    double alpha1 = 0.0;
    std::vector<double> statistic;  // one per alpha
    std::vector<double> kappa;
    std::vector<bool> reject;
};

// Draw, fit and test one replication. Estimation and numerical failures are
// returned in `error`, not thrown.
Replication run_replication(const DgpConfig& cfg, int rep);

struct ConfigResult {
    DgpConfig config;
    int completed = 0;
    int failed = 0;
    int resumed = 0;  // replications taken from the journal
    std::vector<int> rejections;        // per alpha
    std::vector<double> rejection_rate;
    std::vector<double> mean_statistic;
    std::vector<double> mean_kappa;
    double mean_alpha0 = 0.0;
    double mean_alpha1 = 0.0;
    double mse_alpha0 = 0.0;  // about the true value 0
    double mse_alpha1 = 0.0;  // about the true value 1
    double mean_censoring = 0.0;
    std::map<std::string, int> failures;  // message -> count

    double rejection_se(std::size_t a) const;
};

struct StudyReport {
    std::vector<ConfigResult> configs;
    int threads = 1;
    int journal_skipped = 0;  // unreadable journal lines ignored on resume
};

struct StudyOptions {
    int threads = 1;
    // JSON-lines file of per-replication results. With resume set, matching
    // replications already in the file are reused and new ones appended;
    // otherwise the file is rewritten.
    std::string journal;
    bool resume = false;
};

StudyReport run_study(const std::vector<DgpConfig>& grid, const StudyOptions& opt = {});

// Line-oriented config: [section] headers, key = value lines, '#' comments.
// Keys in [defaults] apply to every other section. n, rho and family accept
// comma lists; a section expands to every combination, named
// "section/n=...,rho=...". Errors name the source line and key.
std::vector<DgpConfig> parse_config(std::istream& in, const std::string& source = "config");
std::vector<DgpConfig> load_config(const std::string& path);

// One row per config and alpha.
void write_csv(std::ostream& out, const StudyReport& report);

}  // namespace tobit::montecarlo
