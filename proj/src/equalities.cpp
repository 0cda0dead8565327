#include "tobit/equalities.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tobit/errors.hpp"
#include "tobit/numcore.hpp"
#include "tobit/rng.hpp"

namespace tobit::equalities {
namespace {

using numcore::Correlation;
using numcore::std_normal_cdf;
using numcore::std_normal_pdf;

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

// Latent-error interval (lo, hi] implied by an outcome range given the index.
std::pair<double, double> latent_interval(const YRange& y, double mu) {
    switch (y.kind) {
        case YRange::Kind::zero: return {-kInf, -mu};
        case YRange::Kind::interval: return {y.lo - mu, y.hi - mu};
        case YRange::Kind::upper_tail: return {y.lo - mu, kInf};
        case YRange::Kind::lower_tail: return {-kInf, y.hi - mu};
        case YRange::Kind::missing: break;
    }
    throw InputError("outcome range 'missing' is only valid for the selection model");
}

double dot_or_zero(const Eigen::VectorXd& coef, const Eigen::VectorXd& x) {
    if (coef.size() == 0 && x.size() == 0) return 0.0;
    if (coef.size() != x.size()) throw InputError("covariate row length does not match the coefficient vector");
    return coef.dot(x);
}

void check_cuts(const std::vector<double>& cuts, const char* what) {
    for (double c : cuts) {
        if (!std::isfinite(c)) throw InputError(std::string(what) + " cuts must be finite");
    }
    for (std::size_t i = 1; i < cuts.size(); ++i) {
        if (!(cuts[i] > cuts[i - 1])) throw InputError(std::string(what) + " cuts must be strictly increasing");
    }
}

// Quantile cuts with duplicates collapsed.
std::vector<double> quantile_cuts(std::vector<double> sorted, const std::vector<double>& levels, bool& collapsed) {
    std::vector<double> cuts;
    for (double lv : levels) {
        const double c = data::quantile_sorted(sorted, lv);
        if (!cuts.empty() && !(c > cuts.back())) {
            collapsed = true;
            continue;
        }
        cuts.push_back(c);
    }
    return cuts;
}

}  // namespace

bool YRange::contains(double y) const {
    switch (kind) {
        case Kind::zero: return y == 0.0;
        case Kind::interval: return y > lo && y <= hi;
        case Kind::upper_tail: return y > lo;
        case Kind::lower_tail: return y <= hi;
        case Kind::missing: return false;
    }
    return false;
}

std::string Cell::label() const {
    std::string s;
    switch (y.kind) {
        case YRange::Kind::zero: s = "Y=0"; break;
        case YRange::Kind::interval: s = "Y in (" + fmt(y.lo) + "," + fmt(y.hi) + "]"; break;
        case YRange::Kind::upper_tail: s = "Y>" + fmt(y.lo); break;
        case YRange::Kind::lower_tail: s = "Y<=" + fmt(y.hi); break;
        case YRange::Kind::missing: s = "Y missing"; break;
    }
    if (d.is_all()) return s;
    if (d.lo == -kInf) return s + " & D<=" + fmt(d.hi);
    if (d.hi == kInf) return s + " & D>" + fmt(d.lo);
    return s + " & D in (" + fmt(d.lo) + "," + fmt(d.hi) + "]";
}

int Partition::y_cell(double y) const {
    if (y == 0.0) return 0;
    const auto it = std::lower_bound(y_cuts.begin(), y_cuts.end(), y);
    return 1 + static_cast<int>(it - y_cuts.begin());
}

int Partition::d_cell(double d) const {
    const auto it = std::lower_bound(d_cuts.begin(), d_cuts.end(), d);
    return static_cast<int>(it - d_cuts.begin());
}

YRange Partition::y_range(int k) const {
    if (k < 0 || k >= y_cells()) throw InputError("outcome cell index out of range");
    if (k == 0) return YRange::zero();
    const double lo = k == 1 ? 0.0 : y_cuts[static_cast<std::size_t>(k - 2)];
    if (k == y_cells() - 1) return YRange::upper_tail(lo);
    return YRange::interval(lo, y_cuts[static_cast<std::size_t>(k - 1)]);
}

DRange Partition::d_range(int q) const {
    if (q < 0 || q >= d_cells()) throw InputError("treatment cell index out of range");
    DRange r;
    if (q > 0) r.lo = d_cuts[static_cast<std::size_t>(q - 1)];
    if (q < d_cells() - 1) r.hi = d_cuts[static_cast<std::size_t>(q)];
    return r;
}

Cell Partition::cell(int k, int q) const { return Cell{y_range(k), d_range(q), k, q}; }

std::vector<Cell> Partition::cells() const {
    std::vector<Cell> out;
    for (int k = 0; k < y_cells(); ++k) {
        for (int q = 0; q < d_cells(); ++q) out.push_back(cell(k, q));
    }
    return out;
}

Partition make_partition(std::vector<double> y_cuts, std::vector<double> d_cuts) {
    check_cuts(y_cuts, "outcome");
    check_cuts(d_cuts, "treatment");
    if (!y_cuts.empty() && !(y_cuts.front() > 0.0)) throw InputError("outcome cuts must be positive");
    Partition p;
    p.y_cuts = std::move(y_cuts);
    p.d_cuts = std::move(d_cuts);
    return p;
}

Partition build_partition(const data::Sample& s, int K, int Q, int min_count) {
    if (K < 1) throw InputError("K must be at least 1");
    if (Q < 0) throw InputError("Q must be non-negative");
    std::vector<double> pos;
    for (Eigen::Index i = 0; i < s.n(); ++i) {
        if (s.y()[i] > 0.0) pos.push_back(s.y()[i]);
    }
    if (static_cast<long>(pos.size()) < static_cast<long>(K) * min_count) {
        throw InputError("need at least " + std::to_string(K * min_count) + " positive outcomes for K=" +
                         std::to_string(K) + ", found " + std::to_string(pos.size()));
    }
    std::sort(pos.begin(), pos.end());
    Partition p;
    bool collapsed = false;
    std::vector<double> ylev;
    for (int k = 1; k < K; ++k) ylev.push_back(static_cast<double>(k) / K);
    p.y_cuts = quantile_cuts(pos, ylev, collapsed);
    if (collapsed) {
        p.warnings.push_back("tied outcome quantiles collapsed; using " + std::to_string(p.y_cuts.size() + 1) +
                             " positive outcome cells instead of " + std::to_string(K));
    }
    if (Q > 0) {
        std::vector<double> d(s.d().data(), s.d().data() + s.n());
        std::sort(d.begin(), d.end());
        std::vector<double> dlev;
        for (int q = 1; q <= Q; ++q) dlev.push_back(static_cast<double>(q) / (Q + 1));
        bool dcollapsed = false;
        p.d_cuts = quantile_cuts(d, dlev, dcollapsed);
        if (dcollapsed) {
            p.warnings.push_back("tied treatment quantiles collapsed; using " + std::to_string(p.d_cuts.size() + 1) +
                                 " treatment cells instead of " + std::to_string(Q + 1));
        }
    }

    std::vector<long> ycount(static_cast<std::size_t>(p.y_cells()), 0), dcount(static_cast<std::size_t>(p.d_cells()), 0);
    for (Eigen::Index i = 0; i < s.n(); ++i) {
        ++ycount[static_cast<std::size_t>(p.y_cell(s.y()[i]))];
        ++dcount[static_cast<std::size_t>(p.d_cell(s.d()[i]))];
    }
    for (int k = 0; k < p.y_cells(); ++k) {
        const long c = ycount[static_cast<std::size_t>(k)];
        if (c < min_count) {
            throw InputError("outcome cell " + p.cell(k, 0).label() + " has " + std::to_string(c) +
                             " observations; at least " + std::to_string(min_count) + " required");
        }
    }
    for (int q = 0; q < p.d_cells(); ++q) {
        const long c = dcount[static_cast<std::size_t>(q)];
        if (c < min_count) {
            throw InputError("treatment cell " + std::to_string(q) + " has " + std::to_string(c) +
                             " observations; at least " + std::to_string(min_count) + " required");
        }
    }
    return p;
}

ClassicIndex classic_index(const estimate::ClassicTobitFit& fit, Scale scale) {
    ClassicIndex idx;
    idx.alpha0 = fit.alpha0();
    idx.alpha1 = fit.alpha1();
    idx.alpha_x = fit.alpha_x();
    idx.sigma = scale == Scale::unit ? 1.0 : fit.sigma;
    return idx;
}

IvIndex iv_index(const estimate::IvTobitFit& fit) {
    IvIndex idx;
    const Eigen::Index k = fit.beta.size();
    idx.beta0 = fit.beta[0];
    idx.beta1 = fit.beta[1];
    idx.beta_x = fit.beta.tail(k - 2);
    idx.gamma0 = fit.gamma[0];
    idx.gamma1 = fit.gamma[1];
    idx.gamma_x = fit.gamma.tail(k - 2);
    idx.sigma_w = fit.sigma_w;
    idx.sigma_v = fit.sigma_v;
    idx.rho = fit.rho;
    return idx;
}

double classic_cell_prob(double mu, double sigma, const YRange& y) {
    if (!(sigma > 0.0)) throw InputError("sigma must be positive");
    const auto [lo, hi] = latent_interval(y, mu);
    const double a = lo / sigma, b = hi / sigma;
    if (!(a < b)) return 0.0;
    // Difference taken in whichever tail keeps both terms small.
    if (a + b > 0.0) return std::clamp(std_normal_cdf(-a) - std_normal_cdf(-b), 0.0, 1.0);
    return std::clamp(std_normal_cdf(b) - std_normal_cdf(a), 0.0, 1.0);
}

double classic_implied_prob(const ClassicIndex& idx, double d, const Cell& cell) {
    return classic_implied_prob(idx, d, Eigen::VectorXd(), cell);
}

double classic_implied_prob(const ClassicIndex& idx, double d, const Eigen::VectorXd& x, const Cell& cell) {
    if (!cell.d.is_all()) throw InputError("classic cells must not restrict the treatment");
    const double mu = idx.alpha0 + idx.alpha1 * d + dot_or_zero(idx.alpha_x, x);
    return classic_cell_prob(mu, idx.sigma, cell.y);
}

double iv_cell_prob(double mu_y, double mu_d, double sigma_w, double sigma_v, double rho, const Cell& cell) {
    if (!(sigma_w > 0.0) || !(sigma_v > 0.0)) throw InputError("error scales must be positive");
    const auto [wlo, whi] = latent_interval(cell.y, mu_y);
    return numcore::bivnorm_rect(wlo / sigma_w, whi / sigma_w, (cell.d.lo - mu_d) / sigma_v,
                                 (cell.d.hi - mu_d) / sigma_v, Correlation(rho));
}

namespace {

// x * phi(x), zero at the infinite ends.
double x_phi(double x) { return std::isinf(x) ? 0.0 : x * std_normal_pdf(x); }
double phi_or_zero(double x) { return std::isinf(x) ? 0.0 : std_normal_pdf(x); }

}  // namespace

std::array<double, 2> classic_cell_prob_gradient(double mu, double sigma, const YRange& y) {
    if (!(sigma > 0.0)) throw InputError("sigma must be positive");
    const auto [lo, hi] = latent_interval(y, mu);
    const double a = lo / sigma, b = hi / sigma;
    if (!(a < b)) return {0.0, 0.0};
    return {-(phi_or_zero(b) - phi_or_zero(a)) / sigma, -(x_phi(b) - x_phi(a)) / sigma};
}

std::array<double, 5> iv_cell_prob_gradient(double mu_y, double mu_d, double sigma_w, double sigma_v, double rho,
                                            const Cell& cell) {
    if (!(sigma_w > 0.0) || !(sigma_v > 0.0)) throw InputError("error scales must be positive");
    const Correlation corr(rho);
    const auto [wlo, whi] = latent_interval(cell.y, mu_y);
    const double alo = wlo / sigma_w, ahi = whi / sigma_w;
    const double blo = (cell.d.lo - mu_d) / sigma_v, bhi = (cell.d.hi - mu_d) / sigma_v;
    std::array<double, 5> g{0.0, 0.0, 0.0, 0.0, 0.0};
    if (!(alo < ahi) || !(blo < bhi)) return g;
    const double cr = std::sqrt((1.0 - rho) * (1.0 + rho));
    // Corner (A, B) of the rectangle enters with the given sign.
    auto corner = [&](double A, double B, double sign) {
        if (A == -kInf || B == -kInf) return;
        const double dA = std::isinf(A) ? 0.0 : std_normal_pdf(A) * (std::isinf(B) ? 1.0 : std_normal_cdf((B - rho * A) / cr));
        const double dB = std::isinf(B) ? 0.0 : std_normal_pdf(B) * (std::isinf(A) ? 1.0 : std_normal_cdf((A - rho * B) / cr));
        const double dR = (std::isinf(A) || std::isinf(B)) ? 0.0 : numcore::bivnorm_pdf(A, B, corr);
        g[0] += sign * dA * (-1.0 / sigma_w);
        g[1] += sign * dB * (-1.0 / sigma_v);
        g[2] += sign * (std::isinf(A) ? 0.0 : dA * (-A / sigma_w));
        g[3] += sign * (std::isinf(B) ? 0.0 : dB * (-B / sigma_v));
        g[4] += sign * dR;
    };
    corner(ahi, bhi, 1.0);
    corner(alo, bhi, -1.0);
    corner(ahi, blo, -1.0);
    corner(alo, blo, 1.0);
    return g;
}

double iv_implied_prob(const IvIndex& idx, double z, const Cell& cell) {
    return iv_implied_prob(idx, z, Eigen::VectorXd(), cell);
}

double iv_implied_prob(const IvIndex& idx, double z, const Eigen::VectorXd& x, const Cell& cell) {
    const double mu_y = idx.beta0 + idx.beta1 * z + dot_or_zero(idx.beta_x, x);
    const double mu_d = idx.gamma0 + idx.gamma1 * z + dot_or_zero(idx.gamma_x, x);
    return iv_cell_prob(mu_y, mu_d, idx.sigma_w, idx.sigma_v, idx.rho, cell);
}

double type2_implied_prob(const Type2Params& p, double d, double z, const YRange& y) {
    if (!(p.sigma_u > 0.0) || !(p.sigma_v > 0.0)) throw InputError("error scales must be positive");
    const double t = -p.gamma0 - p.gamma1 * z;
    if (y.kind == YRange::Kind::missing) return std_normal_cdf(t / p.sigma_v);
    if (y.kind == YRange::Kind::zero) throw InputError("the selection model has no mass point at zero");
    const double m = p.alpha0 + p.alpha1 * d;
    const auto [lo, hi] = latent_interval(y, m);
    return numcore::bivnorm_rect(lo / p.sigma_u, hi / p.sigma_u, t / p.sigma_v, kInf, Correlation(p.rho_uv));
}

data::Sample simulate_from_model(const ClassicIndex& idx, const Eigen::VectorXd& d, std::uint64_t seed,
                                 const Eigen::MatrixXd& x) {
    const Eigen::Index n = d.size();
    if (n == 0) throw InputError("simulate_from_model needs at least one exogenous value");
    const bool has_x = x.size() > 0;
    if (has_x && (x.rows() != n || x.cols() != idx.alpha_x.size())) {
        throw InputError("covariate matrix does not match the index");
    }
    auto eng = rng::make_stream(seed, {rng::tag(rng::Purpose::simulate), 0});
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mu = idx.alpha0 + idx.alpha1 * d[i];
        if (has_x) mu += x.row(i).dot(idx.alpha_x);
        y[i] = std::max(0.0, mu + idx.sigma * rng::standard_normal(eng));
    }
    return data::Sample(std::move(y), d, std::nullopt, has_x ? x : Eigen::MatrixXd());
}

data::Sample simulate_from_model(const IvIndex& idx, const Eigen::VectorXd& z, std::uint64_t seed,
                                 const Eigen::MatrixXd& x) {
    const Eigen::Index n = z.size();
    if (n == 0) throw InputError("simulate_from_model needs at least one exogenous value");
    const bool has_x = x.size() > 0;
    if (has_x && (x.rows() != n || x.cols() != idx.beta_x.size() || x.cols() != idx.gamma_x.size())) {
        throw InputError("covariate matrix does not match the index");
    }
    const Correlation rho(idx.rho);
    const double c = std::sqrt((1.0 - rho.value()) * (1.0 + rho.value()));
    auto eng = rng::make_stream(seed, {rng::tag(rng::Purpose::simulate), 1});
    Eigen::VectorXd y(n), d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        // V first, then W | V: the conditional factorization of the pair.
        const double e1 = rng::standard_normal(eng);
        const double e2 = rng::standard_normal(eng);
        const double v = idx.sigma_v * e1;
        const double w = idx.sigma_w * (rho.value() * e1 + c * e2);
        double my = idx.beta0 + idx.beta1 * z[i];
        double md = idx.gamma0 + idx.gamma1 * z[i];
        if (has_x) {
            my += x.row(i).dot(idx.beta_x);
            md += x.row(i).dot(idx.gamma_x);
        }
        d[i] = md + v;
        y[i] = std::max(0.0, my + w);
    }
    return data::Sample(std::move(y), std::move(d), z, has_x ? x : Eigen::MatrixXd());
}

}  // namespace tobit::equalities
