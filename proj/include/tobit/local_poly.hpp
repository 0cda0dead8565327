#pragma once

// Kernel-weighted local polynomial regression with a Gaussian kernel.

#include <Eigen/Dense>

namespace tobit::local_poly {

struct LocalFit {
    // Coefficients of the local polynomial in powers of (x - v), so
    // coef[j] estimates m^(j)(v) / j!.
    Eigen::VectorXd coef;
    // Equivalent kernel: coef = weights * y, one row per coefficient.
    Eigen::MatrixXd weights;
};

// Throws NumericalError when fewer than degree + 1 observations carry
// meaningful kernel weight at v or the nearest lies beyond eight bandwidths.
LocalFit local_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double v, double h, int degree);

// Same fit but only the equivalent kernel (no response needed).
Eigen::MatrixXd equivalent_kernel(const Eigen::VectorXd& x, double v, double h, int degree);

// Fan-Gijbels rule-of-thumb bandwidth for estimating the deriv-th derivative
// with a local polynomial of the given degree, from a global polynomial of
// degree + 3. The integral of the weight function is the 1st-99th percentile
// span of x, and the result is capped at that span.
double rot_bandwidth(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int degree, int deriv);

// Constant C_{deriv,degree}(K) of the rule of thumb for the Gaussian kernel;
// degree - deriv must be odd.
double rot_constant(int degree, int deriv);

}  // namespace tobit::local_poly
