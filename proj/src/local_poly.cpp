#include "tobit/local_poly.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tobit/data.hpp"
#include "tobit/errors.hpp"

namespace tobit::local_poly {
namespace {

// Beyond this many bandwidths the Gaussian weight is below 1e-14.
constexpr double kMaxDistance = 8.0;

double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

// Gaussian moments E[u^k].
double gauss_moment(int k) {
    if (k % 2 == 1) return 0.0;
    double m = 1.0;
    for (int i = k - 1; i > 0; i -= 2) m *= i;
    return m;
}

}  // namespace

Eigen::MatrixXd equivalent_kernel(const Eigen::VectorXd& x, double v, double h, int degree) {
    if (!(h > 0.0) || !std::isfinite(h)) throw InputError("local_poly: bandwidth must be positive");
    if (degree < 0) throw InputError("local_poly: degree must be nonnegative");
    const Eigen::Index n = x.size();
    const int p = degree + 1;
    Eigen::ArrayXd u = (x.array() - v) / h;
    const double nearest = u.square().minCoeff();
    // Weights relative to the nearest observation.
    Eigen::ArrayXd w = (-0.5 * (u.square() - nearest)).exp();
    if (!(nearest <= kMaxDistance * kMaxDistance) || w.sum() < degree + 1.0) {
        throw NumericalError("local_poly: no local data near " + std::to_string(v) + " at bandwidth " +
                             std::to_string(h));
    }
    // Powers of the scaled distance keep the moment matrix well conditioned.
    Eigen::MatrixXd powers(p, n);
    powers.row(0).setOnes();
    for (int j = 1; j < p; ++j) powers.row(j) = powers.row(j - 1).array() * u.transpose();
    const Eigen::MatrixXd weighted = powers * w.matrix().asDiagonal();
    const Eigen::MatrixXd moments = weighted * powers.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(moments);
    if (lu.rank() < p) throw NumericalError("local_poly: singular local design near " + std::to_string(v));
    Eigen::MatrixXd kernel = lu.solve(weighted);
    for (int j = 1; j < p; ++j) kernel.row(j) /= std::pow(h, j);
    return kernel;
}

LocalFit local_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double v, double h, int degree) {
    if (x.size() != y.size()) throw InputError("local_poly: x and y differ in length");
    LocalFit fit;
    fit.weights = equivalent_kernel(x, v, h, degree);
    fit.coef = fit.weights * y;
    return fit;
}

double rot_constant(int degree, int deriv) {
    if (deriv < 0 || deriv > degree) throw InputError("local_poly: derivative order exceeds degree");
    if ((degree - deriv) % 2 == 0) throw InputError("local_poly: rule of thumb needs degree - deriv odd");
    const int p = degree + 1;
    Eigen::MatrixXd S(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) S(i, j) = gauss_moment(i + j);
    const Eigen::VectorXd e = S.inverse().row(deriv).transpose();
    // K*(u) = sum_j e_j u^j K(u). Integrals against K^2 use moments of N(0, 1/2).
    double int_k2 = 0.0;
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            const int k = i + j;
            const double m_half = gauss_moment(k) * std::pow(0.5, k / 2.0);
            int_k2 += e[i] * e[j] * m_half / (2.0 * std::sqrt(M_PI));
        }
    double int_up = 0.0;
    for (int j = 0; j < p; ++j) int_up += e[j] * gauss_moment(p + j);
    const double num = factorial(p) * factorial(p) * (2 * deriv + 1) * int_k2;
    const double den = 2.0 * (p - deriv) * int_up * int_up;
    return std::pow(num / den, 1.0 / (2 * degree + 3));
}

double rot_bandwidth(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int degree, int deriv) {
    const Eigen::Index n = x.size();
    const int g = degree + 3;
    if (y.size() != n) throw InputError("local_poly: x and y differ in length");
    if (n <= g + 1) throw InputError("local_poly: too few observations for a bandwidth");
    const double lo = data::quantile(x, 0.01);
    const double hi = data::quantile(x, 0.99);
    const double span = hi - lo;
    if (!(span > 0.0)) throw InputError("local_poly: conditioning variable has no spread");

    const double centre = 0.5 * (lo + hi);
    const double scale = 0.5 * span;
    Eigen::MatrixXd X(n, g + 1);
    const Eigen::ArrayXd t = (x.array() - centre) / scale;
    X.col(0).setOnes();
    for (int j = 1; j <= g; ++j) X.col(j) = X.col(j - 1).array() * t;
    const Eigen::VectorXd b = X.colPivHouseholderQr().solve(y);
    const double sigma2 = (y - X * b).squaredNorm() / static_cast<double>(n - g - 1);

    // (degree + 1)-th derivative of the global fit, back in x units.
    const int r = degree + 1;
    double curvature = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (x[i] < lo || x[i] > hi) continue;
        double m = 0.0;
        for (int j = r; j <= g; ++j) m += b[j] * factorial(j) / factorial(j - r) * std::pow(t[i], j - r);
        m /= std::pow(scale, r);
        curvature += m * m;
    }
    // Curvature on the standardized scale that is rounding noise relative to y.
    const double noise = 1e-20 * y.squaredNorm();
    if (!(curvature * std::pow(scale, 2 * r) > noise) || !(sigma2 * static_cast<double>(n) > noise)) return span;
    const double h = rot_constant(degree, deriv) * std::pow(sigma2 * span / curvature, 1.0 / (2 * degree + 3));
    return std::min(h, span);
}

}  // namespace tobit::local_poly
