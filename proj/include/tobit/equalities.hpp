#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tobit/data.hpp"
#include "tobit/estimate.hpp"

namespace tobit::equalities {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Outcome part of a cell. Intervals are half-open (lo, hi].
struct YRange {
    enum class Kind { zero, interval, upper_tail, lower_tail, missing };
    Kind kind = Kind::zero;
    double lo = 0.0;
    double hi = 0.0;

    static YRange zero() { return {Kind::zero, 0.0, 0.0}; }
    static YRange interval(double lo, double hi) { return {Kind::interval, lo, hi}; }
    static YRange upper_tail(double lo) { return {Kind::upper_tail, lo, kInf}; }
    static YRange lower_tail(double hi) { return {Kind::lower_tail, -kInf, hi}; }
    static YRange missing() { return {Kind::missing, 0.0, 0.0}; }
    bool contains(double y) const;
};

// Treatment part of a cell: (lo, hi] with infinite ends for the tails.
struct DRange {
    double lo = -kInf;
    double hi = kInf;
    bool is_all() const { return lo == -kInf && hi == kInf; }
    bool contains(double d) const { return d > lo && d <= hi; }
};

struct Cell {
    YRange y;
    DRange d;
    int k = 0;  // outcome cell index
    int q = 0;  // treatment cell index
    std::string label() const;
};

// Cuts over the outcome and treatment supports. Outcome cells are {Y=0},
// (0, c_1], ..., (c_last, inf); treatment cells are (-inf, d_1], ...,
// (d_last, inf), or a single cell when d_cuts is empty.
struct Partition {
    std::vector<double> y_cuts;
    std::vector<double> d_cuts;
    std::vector<std::string> warnings;

    int y_cells() const { return static_cast<int>(y_cuts.size()) + 2; }
    int d_cells() const { return static_cast<int>(d_cuts.size()) + 1; }
    int cell_count() const { return y_cells() * d_cells(); }
    int y_cell(double y) const;
    int d_cell(double d) const;
    YRange y_range(int k) const;
    DRange d_range(int q) const;
    Cell cell(int k, int q) const;
    std::vector<Cell> cells() const;  // k-major order
};

// Validates cut ordering.
Partition make_partition(std::vector<double> y_cuts, std::vector<double> d_cuts);

// K outcome cells above zero at the k/K quantiles of positive Y; Q+1
// treatment cells at the q/(Q+1) quantiles of the treatment (Q = 0: none).
// Every marginal cell must hold at least min_count observations.
Partition build_partition(const data::Sample& s, int K, int Q, int min_count = 30);

// Normalized linear indexes consumed by the evaluators.
struct ClassicIndex {
    double alpha0 = 0.0;
    double alpha1 = 0.0;
    Eigen::VectorXd alpha_x;
    double sigma = 1.0;
};

struct IvIndex {
    double beta0 = 0.0, beta1 = 0.0;
    Eigen::VectorXd beta_x;
    double gamma0 = 0.0, gamma1 = 0.0;
    Eigen::VectorXd gamma_x;
    double sigma_w = 1.0, sigma_v = 1.0;
    double rho = 0.0;
};

struct Type2Params {
    double alpha0 = 0.0, alpha1 = 0.0;
    double gamma0 = 0.0, gamma1 = 0.0;
    double sigma_u = 1.0, sigma_v = 1.0;
    double rho_uv = 0.0;
};

// Scale used for the classic evaluator: unit imposes sigma = 1 in outcome
// units, estimated plugs in the MLE sigma.
enum class Scale { unit, estimated };

ClassicIndex classic_index(const estimate::ClassicTobitFit& fit, Scale scale);
IvIndex iv_index(const estimate::IvTobitFit& fit);

// P(Y in cell.y | D = d[, X = x]) under the classic Tobit model.
double classic_implied_prob(const ClassicIndex& idx, double d, const Cell& cell);
double classic_implied_prob(const ClassicIndex& idx, double d, const Eigen::VectorXd& x, const Cell& cell);
// Same, from the linear index mu = alpha0 + alpha1 d + alpha_x' x.
double classic_cell_prob(double mu, double sigma, const YRange& y);

// P(Y in cell.y, D in cell.d | Z = z[, X = x]) under the IV Tobit model.
double iv_implied_prob(const IvIndex& idx, double z, const Cell& cell);
double iv_implied_prob(const IvIndex& idx, double z, const Eigen::VectorXd& x, const Cell& cell);
double iv_cell_prob(double mu_y, double mu_d, double sigma_w, double sigma_v, double rho, const Cell& cell);

// Partial derivatives of classic_cell_prob in (mu, sigma) and of iv_cell_prob
// in (mu_y, mu_d, sigma_w, sigma_v, rho).
std::array<double, 2> classic_cell_prob_gradient(double mu, double sigma, const YRange& y);
std::array<double, 5> iv_cell_prob_gradient(double mu_y, double mu_d, double sigma_w, double sigma_v, double rho,
                                            const Cell& cell);

// Selection model: Y observed iff gamma0 + gamma1 z + V >= 0. The outcome
// range is missing, or an interval/tail of the latent outcome when observed.
double type2_implied_prob(const Type2Params& p, double d, double z, const YRange& y);

// Draw a sample from the model at the given exogenous values.
data::Sample simulate_from_model(const ClassicIndex& idx, const Eigen::VectorXd& d, std::uint64_t seed,
                                 const Eigen::MatrixXd& x = Eigen::MatrixXd());
data::Sample simulate_from_model(const IvIndex& idx, const Eigen::VectorXd& z, std::uint64_t seed,
                                 const Eigen::MatrixXd& x = Eigen::MatrixXd());

}  // namespace tobit::equalities
