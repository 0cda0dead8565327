#pragma once

// Conditional moment inequality test of the Tobit cell equalities.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tobit/data.hpp"
#include "tobit/equalities.hpp"
#include "tobit/estimate.hpp"

namespace tobit::momtest {

// Per-observation moment functions. Equality j occupies columns 2j (indicator
// of the cell minus its model probability) and 2j+1 (the negation).
struct MomentPanel {
    Eigen::MatrixXd values;                 // n x M
    Eigen::VectorXd conditioning;           // D (classic) or Z (IV)
    std::vector<std::string> cell_labels;   // one per column
    // n x (M/2) model probability of each cell, used for the grid region and
    // the null variance floor. Empty for panels built from raw moments.
    Eigen::MatrixXd implied;
    // Estimation effect of plugged-in parameters: influence functions of the
    // estimator (n x q) and, per equality, the derivative of the cell
    // probability in those parameters (n x q). Empty when parameters are
    // treated as known.
    Eigen::MatrixXd influence;
    Eigen::MatrixXd param_vcov;
    std::vector<Eigen::MatrixXd> prob_gradient;
    // Per equality, Cov(1{cell}, score) per observation: the derivative of the
    // cell probability at the fitted parameters, including components the
    // evaluator holds fixed (sigma under the unit scale). Empty when it equals
    // prob_gradient.
    std::vector<Eigen::MatrixXd> score_cov;

    bool has_estimation_effect() const { return influence.size() > 0; }
    Eigen::Index n() const { return values.rows(); }
    Eigen::Index columns() const { return values.cols(); }
    Eigen::Index equalities() const { return values.cols() / 2; }
};

// Builds the paired panel from one column per equality.
MomentPanel make_panel(const Eigen::MatrixXd& moments, const Eigen::VectorXd& conditioning,
                       const std::vector<std::string>& labels, Eigen::MatrixXd implied = {});

MomentPanel build_moments_classic(const data::Sample& s, const equalities::ClassicIndex& idx,
                                  const equalities::Partition& p, bool use_covariates);
// The fit-based builders use the fit's covariates when it has them and, with
// estimation_effect set, attach the estimation effect of the MLE.
MomentPanel build_moments_classic(const data::Sample& s, const estimate::ClassicTobitFit& fit,
                                  const equalities::Partition& p, equalities::Scale scale,
                                  bool estimation_effect = true);
MomentPanel build_moments_iv(const data::Sample& s, const equalities::IvIndex& idx, const equalities::Partition& p,
                             bool use_covariates);
MomentPanel build_moments_iv(const data::Sample& s, const estimate::IvTobitFit& fit, const equalities::Partition& p,
                             bool estimation_effect = true);

// Evaluation points per equality, shared by its two signed columns.
struct Grid {
    std::vector<Eigen::VectorXd> points;
    Eigen::Index size() const;
};

// points_per_cell equally spaced points between the 1st and 99th percentile
// of the conditioning variable among observations in the cell (the whole
// sample when the cell holds fewer than 30 observations or the panel has no
// model probabilities). With model probabilities, points where the
// kernel-weighted expected count of cell members or non-members falls below
// min_local_count are dropped; an equality may end up with no points.
// A conditioning variable with at most 20 distinct values is discrete: the
// grid is its support and the estimates are cell means (bandwidth 0).
Grid make_grid(const MomentPanel& panel, int points_per_cell = 30, double min_local_count = 10.0);

// Sorted distinct values when there are at most 20 of them, else empty.
std::vector<double> discrete_support(const Eigen::VectorXd& v);

// Rule-of-thumb local linear bandwidth with n^(1/5 - 2/7) undersmoothing.
// Panels with model probabilities use the cell indicator as the pilot target.
// Zero for a discrete conditioning variable.
double default_bandwidth(const MomentPanel& panel, Eigen::Index column);

// Source of the estimates' covariance: the model-implied null covariance of
// the cell indicators (panels with model probabilities), or the empirical
// local residuals.
enum class VarianceSource { model, empirical };

struct Curve {
    Eigen::VectorXd theta;
    Eigen::VectorXd se;
    double bandwidth = 0.0;
};

// Local linear estimate of E[W_column | conditioning = v] with pointwise
// standard errors. bandwidth <= 0 selects default_bandwidth; a zero
// bandwidth gives cell means at points of a discrete support.
Curve conditional_mean_curve(const MomentPanel& panel, Eigen::Index column, const Eigen::VectorXd& grid,
                             double bandwidth = 0.0, VarianceSource source = VarianceSource::model);

// Null process behind the critical value, for panels whose model
// probabilities tile the outcome space. multinomial redraws every
// observation's cell from its model probabilities and passes the draws
// through the same local estimators, keeping the skewness of small local
// counts; the estimation effect enters through the conditional score given
// the cell plus an independent Gaussian remainder. gaussian uses a Gaussian
// process with the same covariance. Other panels always use the Gaussian
// form.
enum class NullProcess { multinomial, gaussian };

struct SimulationOptions {
    int draws = 1000;
    std::uint64_t seed = 20221201;
    int threads = 1;
    bool adaptive_selection = true;
    VarianceSource variance = VarianceSource::model;
    NullProcess process = NullProcess::multinomial;
};

double critical_value(const MomentPanel& panel, const Grid& grid, double alpha, const SimulationOptions& sim);

// Studentized draws of the null process, one row per (equality, grid point)
// in grid order and one column per draw.
Eigen::MatrixXd null_draws(const MomentPanel& panel, const Grid& grid, const SimulationOptions& sim);

struct CellPoint {
    Eigen::Index column = 0;
    std::string label;
    double v = 0.0;
    double theta = 0.0;
    double se = 0.0;
    double studentized = 0.0;
    bool selected = false;
};

struct TestResult {
    double statistic = 0.0;
    double kappa = 0.0;
    double alpha = 0.05;
    bool reject = false;
    double selection_k = 0.0;
    int draws = 0;
    std::uint64_t seed = 0;
    std::vector<double> bandwidths;  // per equality
    std::vector<CellPoint> per_cell;

    // max over per_cell of theta - kappa * se
    double recompute_statistic() const;
};

TestResult run_panel_test(const MomentPanel& panel, const Grid& grid, double alpha, const SimulationOptions& sim);
// One result per level; the simulated process is shared across levels.
std::vector<TestResult> run_panel_test_multi(const MomentPanel& panel, const Grid& grid,
                                             const std::vector<double>& alphas, const SimulationOptions& sim);

enum class Model { classic, iv };

struct TestOptions {
    int K = 4;
    int Q = 4;
    std::vector<double> alphas{0.05};
    int draws = 1000;
    int grid_points = 30;
    double min_local_count = 10.0;
    std::uint64_t seed = 20221201;
    bool use_covariates = false;
    equalities::Scale scale = equalities::Scale::unit;
    int threads = 1;
    bool adaptive_selection = true;
    // Account for the sampling error of the plugged-in MLE in the simulated
    // process and the standard errors.
    bool estimation_effect = true;
    NullProcess process = NullProcess::multinomial;
    estimate::FitOptions fit;
};

struct TestRun {
    Model model = Model::classic;
    std::vector<TestResult> results;  // one per requested alpha
    equalities::Partition partition;
    std::optional<estimate::ClassicTobitFit> classic_fit;
    std::optional<estimate::IvTobitFit> iv_fit;
    std::vector<std::string> warnings;
};

// Fits the model by maximum likelihood, builds the partition and moments, and
// runs the test at every requested level. Errors carry the failing stage.
TestRun run_test(const data::Sample& s, Model model, const TestOptions& opt);

}  // namespace tobit::momtest
