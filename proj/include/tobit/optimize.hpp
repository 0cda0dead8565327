#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace tobit::optimize {

// Returns f(x) and writes the gradient into grad.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct Options {
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;  // on the infinity norm
    int newton_polish_steps = 5;
};

struct Result {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd gradient;
    int iterations = 0;
    bool converged = false;
    std::string message;
};

// BFGS with a strong-Wolfe line search. The initial inverse Hessian comes
// from a finite-difference Hessian at x0 when that is positive definite. A
// few damped Newton steps on the finite-difference Hessian polish the end point.
Result minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0, const Options& opt = {});

// Central-difference Jacobian of the analytic gradient, symmetrized.
Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x);

}  // namespace tobit::optimize
