#include "tobit/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "tobit/errors.hpp"
#include "tobit/numcore.hpp"
#include "tobit/optimize.hpp"

namespace tobit::estimate {
namespace {

using numcore::inverse_mills;
using numcore::log_normal_cdf;

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void require_full_rank(const Eigen::MatrixXd& X, const char* what) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols()) throw InputError(std::string(what) + ": design matrix is rank deficient");
}

Eigen::VectorXd ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) { return X.colPivHouseholderQr().solve(y); }

Eigen::MatrixXd invert_information(const Eigen::MatrixXd& h, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) {
        throw NumericalError(std::string(what) + ": observed information is not positive definite");
    }
    const Eigen::MatrixXd v = llt.solve(Eigen::MatrixXd::Identity(h.rows(), h.cols()));
    return 0.5 * (v + v.transpose());
}

std::vector<Eigen::Index> positive_rows(const Eigen::VectorXd& y) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y[i] > 0.0) rows.push_back(i);
    }
    return rows;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = X.row(rows[k]);
    return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[rows[k]];
    return out;
}

// OLS start on the positive subsample: slopes and residual SD.
std::pair<Eigen::VectorXd, double> truncated_ols_start(const Eigen::VectorXd& y, const Eigen::MatrixXd& X) {
    const auto rows = positive_rows(y);
    Eigen::VectorXd b;
    double sd = 0.0;
    if (static_cast<Eigen::Index>(rows.size()) > X.cols() + 1) {
        const Eigen::MatrixXd Xp = take_rows(X, rows);
        const Eigen::VectorXd yp = take(y, rows);
        b = ols(Xp, yp);
        const Eigen::VectorXd e = yp - Xp * b;
        sd = std::sqrt(e.squaredNorm() / static_cast<double>(rows.size() - 1));
    }
    if (b.size() != X.cols() || !b.allFinite() || !(sd > 0.0)) {
        b = ols(X, y);
        sd = std::sqrt((y - X * b).squaredNorm() / static_cast<double>(y.size()));
    }
    if (!(sd > 0.0)) sd = 1.0;
    return {b, sd};
}

void require_not_all_same(const Eigen::VectorXd& y) {
    const auto zeros = (y.array() == 0.0).count();
    if (zeros == 0) throw InputError("no censored observations (y == 0); the Tobit model is degenerate");
    if (zeros == y.size()) throw InputError("every observation is censored (y == 0)");
}

}  // namespace

namespace detail {

Eigen::MatrixXd design(const Eigen::VectorXd& regressor, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd X(regressor.size(), 2 + x.cols());
    X.col(0).setOnes();
    X.col(1) = regressor;
    if (x.cols() > 0) X.rightCols(x.cols()) = x;
    return X;
}

double classic_negloglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const Eigen::VectorXd& theta,
                         Eigen::VectorXd& grad) {
    const Eigen::Index k = X.cols();
    const Eigen::VectorXd b = theta.head(k);
    const double log_sigma = theta[k];
    const double sigma = std::exp(log_sigma);
    grad.setZero(k + 1);
    if (!std::isfinite(sigma) || sigma <= 0.0) return std::numeric_limits<double>::infinity();
    const Eigen::VectorXd xb = X * b;
    double ll = 0.0;
    Eigen::VectorXd wb = Eigen::VectorXd::Zero(y.size());
    double g_log_sigma = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) {
            const double t = -xb[i] / sigma;
            const double lam = inverse_mills(t);
            ll += log_normal_cdf(t);
            wb[i] = -lam / sigma;
            g_log_sigma += -lam * t;
        } else {
            const double r = (y[i] - xb[i]) / sigma;
            ll += -0.5 * r * r - kHalfLog2Pi - log_sigma;
            wb[i] = r / sigma;
            g_log_sigma += r * r - 1.0;
        }
    }
    grad.head(k) = -(X.transpose() * wb);
    grad[k] = -g_log_sigma;
    return -ll;
}

double iv_negloglik(const Eigen::VectorXd& y, const Eigen::VectorXd& d, const Eigen::MatrixXd& X,
                    const Eigen::VectorXd& theta, Eigen::VectorXd& grad, bool fix_rho_zero) {
    const Eigen::Index k = X.cols();
    const Eigen::VectorXd beta = theta.segment(0, k);
    const Eigen::VectorXd gamma = theta.segment(k, k);
    const double sw = std::exp(theta[2 * k]);
    const double sv = std::exp(theta[2 * k + 1]);
    const double rho = fix_rho_zero ? 0.0 : std::tanh(theta[2 * k + 2]);
    const Eigen::Index np = theta.size();
    grad.setZero(np);
    if (!(sw > 0.0) || !(sv > 0.0) || !std::isfinite(sw) || !std::isfinite(sv) || std::abs(rho) >= 1.0) {
        return std::numeric_limits<double>::infinity();
    }
    const double cr = std::sqrt((1.0 - rho) * (1.0 + rho));
    const double sc = sw * cr;
    const Eigen::VectorXd xb = X * beta;
    const Eigen::VectorXd xg = X * gamma;

    // Per-observation weights on X for the beta and gamma blocks.
    Eigen::VectorXd wb(y.size()), wg(y.size());
    double g_lsw = 0.0, g_lsv = 0.0, g_tau = 0.0;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double a = (d[i] - xg[i]) / sv;
        ll += -0.5 * a * a - std::log(sv) - kHalfLog2Pi;
        double gw_mu = 0.0, gw_sc = 0.0;  // d loglik / d mu_c and / d s_c
        const double mu = xb[i] + rho * sw * a;
        if (y[i] == 0.0) {
            const double t = -mu / sc;
            const double lam = inverse_mills(t);
            ll += log_normal_cdf(t);
            gw_mu = -lam / sc;
            gw_sc = -lam * t / sc;
        } else {
            const double r = (y[i] - mu) / sc;
            ll += -0.5 * r * r - std::log(sc) - kHalfLog2Pi;
            gw_mu = r / sc;
            gw_sc = (r * r - 1.0) / sc;
        }
        wb[i] = gw_mu;
        // mu depends on gamma through a; the marginal term through a as well.
        wg[i] = gw_mu * (-rho * sw / sv) + a / sv;
        g_lsw += gw_mu * rho * sw * a + gw_sc * sc;
        g_lsv += gw_mu * (-rho * sw * a) + (a * a - 1.0);
        g_tau += gw_mu * sw * a * (1.0 - rho * rho) + gw_sc * (-sw * rho * cr);
    }
    grad.segment(0, k) = -(X.transpose() * wb);
    grad.segment(k, k) = -(X.transpose() * wg);
    grad[2 * k] = -g_lsw;
    grad[2 * k + 1] = -g_lsv;
    if (!fix_rho_zero) grad[2 * k + 2] = -g_tau;
    return -ll;
}

ClassicTobitFit fit_tobit_design(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, std::vector<std::string> names,
                                 const FitOptions& opt) {
    require_not_all_same(y);
    require_full_rank(X, "classic Tobit");
    const Eigen::Index k = X.cols();
    auto [b0, sd0] = truncated_ols_start(y, X);
    Eigen::VectorXd theta0(k + 1);
    theta0.head(k) = b0;
    theta0[k] = std::log(sd0);

    optimize::Objective f = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
        return classic_negloglik(y, X, th, g);
    };
    optimize::Options oo;
    oo.max_iterations = opt.max_iterations;
    oo.gradient_tolerance = opt.gradient_tolerance;
    const auto res = optimize::minimize_bfgs(f, theta0, oo);
    if (!res.converged && opt.throw_on_failure) {
        throw NumericalError("classic Tobit MLE did not converge: " + res.message);
    }

    ClassicTobitFit fit;
    fit.names = std::move(names);
    fit.names.push_back("sigma");
    fit.coef = res.x.head(k);
    fit.sigma = std::exp(res.x[k]);
    fit.loglik = -res.value;
    fit.converged = res.converged;
    fit.iterations = res.iterations;
    fit.gradient_norm = res.gradient.lpNorm<Eigen::Infinity>();
    fit.n = y.size();
    const Eigen::MatrixXd vint = invert_information(optimize::numeric_hessian(f, res.x), "classic Tobit");
    Eigen::VectorXd jac = Eigen::VectorXd::Ones(k + 1);
    jac[k] = fit.sigma;
    fit.vcov = jac.asDiagonal() * vint * jac.asDiagonal();
    return fit;
}

}  // namespace detail

double IvTobitFit::gamma1_t() const {
    const Eigen::Index k = beta.size();
    return gamma[1] / std::sqrt(vcov(k + 1, k + 1));
}

ClassicTobitFit fit_classic_tobit(const data::Sample& s, bool include_covariates, const FitOptions& opt) {
    const Eigen::MatrixXd x = include_covariates ? s.x() : Eigen::MatrixXd(s.n(), 0);
    std::vector<std::string> names{"alpha0", "alpha1"};
    if (include_covariates) names.insert(names.end(), s.x_names().begin(), s.x_names().end());
    return detail::fit_tobit_design(s.y(), detail::design(s.d(), x), std::move(names), opt);
}

IvTobitFit fit_iv_tobit(const data::Sample& s, bool include_covariates, const IvFitOptions& opt) {
    if (!s.has_z()) throw InputError("IV Tobit needs an instrument column");
    require_not_all_same(s.y());
    const Eigen::MatrixXd x = include_covariates ? s.x() : Eigen::MatrixXd(s.n(), 0);
    const Eigen::MatrixXd X = detail::design(s.z(), x);
    require_full_rank(X, "IV Tobit");
    const Eigen::Index k = X.cols();
    const Eigen::VectorXd& y = s.y();
    const Eigen::VectorXd& d = s.d();

    const Eigen::VectorXd g0 = ols(X, d);
    const double sv0 = std::sqrt((d - X * g0).squaredNorm() / static_cast<double>(s.n()));
    if (!(sv0 > 0.0)) throw InputError("IV Tobit: treatment is an exact linear function of the instrument");
    auto [b0, sw0] = truncated_ols_start(y, X);

    const bool fix = opt.fix_rho_zero;
    const Eigen::Index np = 2 * k + (fix ? 2 : 3);
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(np);
    theta0.segment(0, k) = b0;
    theta0.segment(k, k) = g0;
    theta0[2 * k] = std::log(sw0);
    theta0[2 * k + 1] = std::log(sv0);

    optimize::Objective f = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
        return detail::iv_negloglik(y, d, X, th, g, fix);
    };
    optimize::Options oo;
    oo.max_iterations = opt.max_iterations;
    oo.gradient_tolerance = opt.gradient_tolerance;
    const auto res = optimize::minimize_bfgs(f, theta0, oo);
    if (!res.converged && opt.throw_on_failure) {
        throw NumericalError("IV Tobit MLE did not converge: " + res.message);
    }

    IvTobitFit fit;
    const std::string zn = s.z_name;
    auto block_names = [&](const std::string& prefix) {
        std::vector<std::string> out{prefix + "0", prefix + "1"};
        if (include_covariates) {
            for (const auto& nm : s.x_names()) out.push_back(prefix + ":" + nm);
        }
        return out;
    };
    fit.names = block_names("beta");
    const auto gnames = block_names("gamma");
    fit.names.insert(fit.names.end(), gnames.begin(), gnames.end());
    fit.names.insert(fit.names.end(), {"sigma_w", "sigma_v", "rho"});
    fit.beta = res.x.segment(0, k);
    fit.gamma = res.x.segment(k, k);
    fit.sigma_w = std::exp(res.x[2 * k]);
    fit.sigma_v = std::exp(res.x[2 * k + 1]);
    fit.rho = fix ? 0.0 : std::tanh(res.x[2 * k + 2]);
    fit.rho_fixed = fix;
    fit.loglik = -res.value;
    fit.converged = res.converged;
    fit.iterations = res.iterations;
    fit.gradient_norm = res.gradient.lpNorm<Eigen::Infinity>();
    fit.n = s.n();

    const Eigen::MatrixXd vint = invert_information(optimize::numeric_hessian(f, res.x), "IV Tobit");
    const Eigen::Index nn = 2 * k + 3;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(nn, np);
    jac.topLeftCorner(2 * k, 2 * k).setIdentity();
    jac(2 * k, 2 * k) = fit.sigma_w;
    jac(2 * k + 1, 2 * k + 1) = fit.sigma_v;
    if (!fix) jac(2 * k + 2, 2 * k + 2) = 1.0 - fit.rho * fit.rho;
    fit.vcov = jac * vint * jac.transpose();

    // Structural coefficients and their delta-method covariance.
    const double g1 = fit.gamma[1];
    if (g1 == 0.0) throw NumericalError("IV Tobit: first-stage instrument coefficient is exactly zero");
    const double a1 = fit.beta[1] / g1;
    fit.alpha.resize(k);
    fit.alpha[0] = fit.beta[0] - a1 * fit.gamma[0];
    fit.alpha[1] = a1;
    for (Eigen::Index j = 2; j < k; ++j) fit.alpha[j] = fit.beta[j] - a1 * fit.gamma[j];
    Eigen::MatrixXd ja = Eigen::MatrixXd::Zero(k, nn);
    Eigen::RowVectorXd da1 = Eigen::RowVectorXd::Zero(nn);
    da1[1] = 1.0 / g1;
    da1[k + 1] = -fit.beta[1] / (g1 * g1);
    ja.row(1) = da1;
    ja.row(0) = -fit.gamma[0] * da1;
    ja(0, 0) += 1.0;
    ja(0, k) += -a1;
    for (Eigen::Index j = 2; j < k; ++j) {
        ja.row(j) = -fit.gamma[j] * da1;
        ja(j, j) += 1.0;
        ja(j, k + j) += -a1;
    }
    fit.alpha_vcov = ja * fit.vcov * ja.transpose();
    fit.structural_names = {"alpha0", "alpha1"};
    if (include_covariates) {
        fit.structural_names.insert(fit.structural_names.end(), s.x_names().begin(), s.x_names().end());
    }
    // sigma_u and corr(u, v) by delta method with a numerical Jacobian.
    auto structural_error = [k](const Eigen::VectorXd& nat) {
        const double a = nat[1] / nat[k + 1];
        const double sw = nat[2 * k], sv = nat[2 * k + 1], r = nat[2 * k + 2];
        const double su = std::sqrt(std::max(sw * sw - 2.0 * a * r * sw * sv + a * a * sv * sv, 0.0));
        return Eigen::Vector2d(su, (r * sw - a * sv) / su);
    };
    Eigen::VectorXd nat(nn);
    nat << fit.beta, fit.gamma, fit.sigma_w, fit.sigma_v, fit.rho;
    const Eigen::Vector2d se = structural_error(nat);
    fit.sigma_u = se[0];
    fit.rho_uv = se[1];
    Eigen::MatrixXd js(2, nn);
    for (Eigen::Index j = 0; j < nn; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(nat[j]));
        Eigen::VectorXd up = nat, dn = nat;
        up[j] += h;
        dn[j] -= h;
        js.col(j) = (structural_error(up) - structural_error(dn)) / (2.0 * h);
    }
    const Eigen::Matrix2d sv = js * fit.vcov * js.transpose();
    fit.sigma_u_se = std::sqrt(std::max(sv(0, 0), 0.0));
    fit.rho_uv_se = std::sqrt(std::max(sv(1, 1), 0.0));
    fit.weak_first_stage = std::abs(fit.gamma1_t()) < 2.0;
    fit.boundary = std::abs(fit.rho) > 0.999;
    return fit;
}

ScaledCoefficients moment_identify_classic(const data::Sample& s, int bins) {
    if (bins < 2) throw InputError("moment identification needs at least 2 bins");
    const Eigen::Index n = s.n();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.d()[a] < s.d()[b]; });

    Eigen::VectorXd t(bins), m(bins), var(bins);
    Eigen::Index start = 0;
    for (int b = 0; b < bins; ++b) {
        const Eigen::Index end = (n * (b + 1)) / bins;
        const Eigen::Index cnt = end - start;
        if (cnt < 30) throw InputError("bin " + std::to_string(b + 1) + " has fewer than 30 observations");
        Eigen::Index zeros = 0;
        double sum_d = 0.0;
        for (Eigen::Index k = start; k < end; ++k) {
            const Eigen::Index i = order[static_cast<std::size_t>(k)];
            zeros += s.y()[i] == 0.0 ? 1 : 0;
            sum_d += s.d()[i];
        }
        const double p = static_cast<double>(zeros) / static_cast<double>(cnt);
        if (p <= 0.0 || p >= 1.0) {
            throw InputError("bin " + std::to_string(b + 1) + " has an estimated P(Y=0) of " + std::to_string(p));
        }
        t[b] = numcore::std_normal_quantile(1.0 - p);
        m[b] = sum_d / static_cast<double>(cnt);
        const double dens = numcore::std_normal_pdf(t[b]);
        var[b] = p * (1.0 - p) / (static_cast<double>(cnt) * dens * dens);
        start = end;
    }
    const double mbar = m.mean();
    const double sxx = (m.array() - mbar).square().sum();
    if (!(sxx > 1e-14 * std::max(1.0, mbar * mbar) * bins)) {
        throw InputError("treatment has no variation across bins (Var(D) = 0)");
    }
    Eigen::MatrixXd X(bins, 2);
    X.col(0).setOnes();
    X.col(1) = m;
    const Eigen::Matrix2d xtx_inv = (X.transpose() * X).inverse();
    const Eigen::Vector2d coef = xtx_inv * X.transpose() * t;
    ScaledCoefficients out;
    out.alpha0_scaled = coef[0];
    out.alpha1_scaled = coef[1];
    out.vcov = xtx_inv * X.transpose() * var.asDiagonal() * X * xtx_inv;
    out.bins = bins;
    return out;
}

FirstStage moment_identify_iv_firststage(const data::Sample& s) {
    const Eigen::VectorXd& z = s.z();
    const Eigen::VectorXd& d = s.d();
    const double zbar = z.mean(), dbar = d.mean();
    const double vz = (z.array() - zbar).square().sum();
    if (!(vz > 0.0)) throw InputError("instrument is constant (Var(Z) = 0)");
    FirstStage fs;
    fs.gamma1 = ((z.array() - zbar) * (d.array() - dbar)).sum() / vz;
    fs.gamma0 = dbar - fs.gamma1 * zbar;
    return fs;
}

SigmaRecovery recover_sigma_system(const data::Sample& s, const ScaledCoefficients& scaled) {
    const auto rows = positive_rows(s.y());
    if (rows.size() < 3) throw InputError("recover_sigma_system needs at least 3 positive outcomes");
    const auto m = static_cast<Eigen::Index>(rows.size());
    const Eigen::VectorXd y = take(s.y(), rows);
    const Eigen::VectorXd d = take(s.d(), rows);
    auto regressors = [&](double a0, double a1) {
        Eigen::MatrixXd X(m, 3);
        for (Eigen::Index k = 0; k < m; ++k) X.row(k) << 1.0, d[k], inverse_mills(a0 + a1 * d[k]);
        return X;
    };
    // Normal equations of the three moments E(.), Cov(., D), Cov(., lambda).
    auto solve = [&](const Eigen::MatrixXd& X) -> Eigen::Vector3d {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        qr.setThreshold(1e-9);
        if (qr.rank() < 3) throw NumericalError("recover_sigma_system: singular 3x3 moment system");
        return qr.solve(y);
    };
    const Eigen::MatrixXd X = regressors(scaled.alpha0_scaled, scaled.alpha1_scaled);
    const Eigen::Vector3d c = solve(X);

    const Eigen::VectorXd e = y - X * c;
    const Eigen::Matrix3d bread = (X.transpose() * X).inverse();
    const Eigen::Matrix3d meat = X.transpose() * e.array().square().matrix().asDiagonal() * X;
    Eigen::Matrix3d v = bread * meat * bread;
    Eigen::Matrix<double, 3, 2> jac;
    for (int j = 0; j < 2; ++j) {
        const double h = 1e-6;
        double up0 = scaled.alpha0_scaled, up1 = scaled.alpha1_scaled;
        double dn0 = up0, dn1 = up1;
        (j == 0 ? up0 : up1) += h;
        (j == 0 ? dn0 : dn1) -= h;
        jac.col(j) = (solve(regressors(up0, up1)) - solve(regressors(dn0, dn1))) / (2.0 * h);
    }
    v += jac * scaled.vcov * jac.transpose();
    return {c[0], c[1], c[2], v};
}

Eigen::MatrixXd classic_scores(const data::Sample& s, const ClassicTobitFit& fit) {
    const Eigen::Index k = fit.coef.size();
    const Eigen::MatrixXd x = k > 2 ? s.x() : Eigen::MatrixXd(s.n(), 0);
    if (x.cols() != k - 2) throw InputError("classic_scores: fit and sample covariates differ");
    const Eigen::MatrixXd X = detail::design(s.d(), x);
    Eigen::VectorXd theta(k + 1);
    theta.head(k) = fit.coef;
    theta[k] = std::log(fit.sigma);
    Eigen::MatrixXd out(s.n(), k + 1);
    Eigen::VectorXd grad;
    for (Eigen::Index i = 0; i < s.n(); ++i) {
        detail::classic_negloglik(s.y().segment(i, 1), X.row(i), theta, grad);
        out.row(i) = -grad.transpose();
        out(i, k) /= fit.sigma;
    }
    return out;
}

Eigen::MatrixXd iv_scores(const data::Sample& s, const IvTobitFit& fit) {
    const Eigen::Index k = fit.beta.size();
    const Eigen::MatrixXd x = k > 2 ? s.x() : Eigen::MatrixXd(s.n(), 0);
    if (x.cols() != k - 2) throw InputError("iv_scores: fit and sample covariates differ");
    const Eigen::MatrixXd X = detail::design(s.z(), x);
    const Eigen::Index np = 2 * k + (fit.rho_fixed ? 2 : 3);
    Eigen::VectorXd theta(np);
    theta.segment(0, k) = fit.beta;
    theta.segment(k, k) = fit.gamma;
    theta[2 * k] = std::log(fit.sigma_w);
    theta[2 * k + 1] = std::log(fit.sigma_v);
    if (!fit.rho_fixed) theta[2 * k + 2] = std::atanh(fit.rho);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(s.n(), 2 * k + 3);
    Eigen::VectorXd grad;
    for (Eigen::Index i = 0; i < s.n(); ++i) {
        detail::iv_negloglik(s.y().segment(i, 1), s.d().segment(i, 1), X.row(i), theta, grad, fit.rho_fixed);
        out.row(i).head(np) = -grad.transpose();
        out(i, 2 * k) /= fit.sigma_w;
        out(i, 2 * k + 1) /= fit.sigma_v;
        if (!fit.rho_fixed) out(i, 2 * k + 2) /= (1.0 - fit.rho * fit.rho);
    }
    return out;
}

}  // namespace tobit::estimate
