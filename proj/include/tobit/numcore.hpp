#pragma once

// Univariate and bivariate standard normal primitives.
//
// Every function here is pure and reentrant. NaN arguments raise
// tobit::InputError; infinite arguments are handled as limits.

namespace tobit::numcore {

// Correlation coefficient restricted to the open interval (-1, 1).
class Correlation {
public:
    explicit Correlation(double rho);
    double value() const noexcept { return rho_; }

private:
    double rho_;
};

double std_normal_pdf(double x);
double std_normal_cdf(double x);

// Inverse of std_normal_cdf (Wichura's AS 241). p must lie in (0, 1).
double std_normal_quantile(double p);

// log Phi(x), accurate in both tails.
double log_normal_cdf(double x);

// phi(t) / Phi(t). Stable for very negative t, where it behaves like -t.
double inverse_mills(double t);

// P(X <= x, Y <= y) for a standard bivariate normal with correlation rho.
// Gauss-Legendre quadrature over the arcsine form of the correlation
// integral, with the variable change of Drezner-Wesolowsky/Genz for |rho| >= 0.925.
double bivnorm_cdf(double x, double y, Correlation rho);

double bivnorm_pdf(double x, double y, Correlation rho);

// P(xlo < X <= xhi, ylo < Y <= yhi). Bounds may be infinite. The rectangle is
// reflected toward the lower-left orthant before inclusion-exclusion so the
// cancellation error stays small; the result is clamped to [0, 1].
double bivnorm_rect(double xlo, double xhi, double ylo, double yhi, Correlation rho);

// Limits of bivnorm_cdf as rho -> +1 and rho -> -1.
double bivnorm_cdf_upper_limit(double x, double y);
double bivnorm_cdf_lower_limit(double x, double y);

}  // namespace tobit::numcore
