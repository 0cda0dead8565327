#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tobit/data.hpp"

namespace tobit::estimate {

struct FitOptions {
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;
    bool throw_on_failure = true;  // NumericalError when not converged
};

// Classic Tobit: y* = alpha0 + alpha1 d + alpha_x' x + sigma e, y = max(0, y*).
struct ClassicTobitFit {
    std::vector<std::string> names;  // alpha0, alpha1, covariates..., sigma
    Eigen::VectorXd coef;            // alpha0, alpha1, alpha_x
    double sigma = 1.0;
    Eigen::MatrixXd vcov;            // over (coef, sigma)
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    Eigen::Index n = 0;

    double alpha0() const { return coef[0]; }
    double alpha1() const { return coef[1]; }
    Eigen::VectorXd alpha_x() const { return coef.tail(coef.size() - 2); }
    double se(Eigen::Index j) const { return std::sqrt(vcov(j, j)); }
};

// IV Tobit in reduced form:
//   y* = beta0 + beta1 z + beta_x' x + w,   d = gamma0 + gamma1 z + gamma_x' x + v,
// (w, v) bivariate normal with sds sigma_w, sigma_v and correlation rho.
// Structural alpha solves beta = alpha0 + alpha1 gamma (alpha_x likewise).
struct IvTobitFit {
    std::vector<std::string> names;  // beta..., gamma..., sigma_w, sigma_v, rho
    Eigen::VectorXd beta;            // beta0, beta1, beta_x
    Eigen::VectorXd gamma;           // gamma0, gamma1, gamma_x
    double sigma_w = 1.0;
    double sigma_v = 1.0;
    double rho = 0.0;
    Eigen::MatrixXd vcov;            // over (beta, gamma, sigma_w, sigma_v, rho)

    std::vector<std::string> structural_names;  // alpha0, alpha1, covariates...
    Eigen::VectorXd alpha;
    Eigen::MatrixXd alpha_vcov;
    // Structural error u = w - alpha1 v: its SD and its correlation with v.
    double sigma_u = 1.0;
    double rho_uv = 0.0;
    double sigma_u_se = 0.0;
    double rho_uv_se = 0.0;

    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool rho_fixed = false;
    bool weak_first_stage = false;  // |t(gamma1)| < 2
    bool boundary = false;          // |rho| > 0.999
    Eigen::Index n = 0;

    double alpha0() const { return alpha[0]; }
    double alpha1() const { return alpha[1]; }
    double gamma1_t() const;
};

ClassicTobitFit fit_classic_tobit(const data::Sample& s, bool include_covariates, const FitOptions& opt = {});

struct IvFitOptions : FitOptions {
    bool fix_rho_zero = false;
};
IvTobitFit fit_iv_tobit(const data::Sample& s, bool include_covariates, const IvFitOptions& opt = {});

// Per-observation scores of the log-likelihood at the fitted parameters, one
// row per observation, in the parameter order of the fit's vcov. Covariates
// are used when the fit has them.
Eigen::MatrixXd classic_scores(const data::Sample& s, const ClassicTobitFit& fit);
Eigen::MatrixXd iv_scores(const data::Sample& s, const IvTobitFit& fit);

// Closed-form identification. The classic procedure bins D into equal-count
// bins, inverts 1 - P(Y=0 | bin) through the normal quantile and regresses on
// the within-bin mean of D; the result is (alpha0, alpha1) / sigma.
struct ScaledCoefficients {
    double alpha0_scaled = 0.0;
    double alpha1_scaled = 0.0;
    Eigen::Matrix2d vcov = Eigen::Matrix2d::Zero();
    int bins = 0;
};
ScaledCoefficients moment_identify_classic(const data::Sample& s, int bins = 20);

struct FirstStage {
    double gamma0 = 0.0;
    double gamma1 = 0.0;
};
FirstStage moment_identify_iv_firststage(const data::Sample& s);

// Regresses Y on (1, D, lambda(a0 + a1 D)) over Y > 0, where (a0, a1) are
// the scaled coefficients. Returns outcome-unit (alpha0, alpha1, sigma).
struct SigmaRecovery {
    double alpha0 = 0.0;
    double alpha1 = 0.0;
    double sigma = 0.0;
    // HC0 regression covariance plus the propagated covariance of the scaled inputs.
    Eigen::Matrix3d vcov = Eigen::Matrix3d::Zero();
};
SigmaRecovery recover_sigma_system(const data::Sample& s, const ScaledCoefficients& scaled);

namespace detail {

// Negative log-likelihoods in the unconstrained parameterization.
// Classic: theta = (b, log sigma). IV: theta = (beta, gamma, log sigma_w,
// log sigma_v[, atanh rho]).
double classic_negloglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const Eigen::VectorXd& theta,
                         Eigen::VectorXd& grad);
double iv_negloglik(const Eigen::VectorXd& y, const Eigen::VectorXd& d, const Eigen::MatrixXd& X,
                    const Eigen::VectorXd& theta, Eigen::VectorXd& grad, bool fix_rho_zero);

ClassicTobitFit fit_tobit_design(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, std::vector<std::string> names,
                                 const FitOptions& opt);

Eigen::MatrixXd design(const Eigen::VectorXd& regressor, const Eigen::MatrixXd& x);

}  // namespace detail

}  // namespace tobit::estimate
