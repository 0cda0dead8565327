#include "tobit/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tobit::optimize {
namespace {

struct Probe {
    double value;
    double slope;
    Eigen::VectorXd x;
    Eigen::VectorXd grad;
};

Probe probe(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& dir, double step) {
    Probe p;
    p.x = x + step * dir;
    p.grad.resize(x.size());
    p.value = f(p.x, p.grad);
    p.slope = std::isfinite(p.value) ? p.grad.dot(dir) : std::numeric_limits<double>::quiet_NaN();
    return p;
}

// Minimizer of the cubic through (a, fa, ga) and (b, fb, gb), kept inside
// the bracket; falls back to bisection.
double cubic_step(double a, double fa, double ga, double b, double fb, double gb) {
    const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - ga * gb;
    if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), b - a);
        const double t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
        const double lo = std::min(a, b), hi = std::max(a, b);
        const double margin = 0.1 * (hi - lo);
        if (std::isfinite(t) && t > lo + margin && t < hi - margin) return t;
    }
    return 0.5 * (a + b);
}

// Nocedal & Wright, algorithms 3.5 and 3.6.
bool wolfe_search(const Objective& f, const Eigen::VectorXd& x, double f0, double g0, const Eigen::VectorXd& dir,
                  double step0, Probe& out) {
    constexpr double c1 = 1e-4, c2 = 0.9;
    double prev_step = 0.0, prev_value = f0, prev_slope = g0;
    double step = step0;
    auto zoom = [&](double lo, double flo, double glo, double hi, double fhi, double ghi) {
        for (int k = 0; k < 40; ++k) {
            const double t = cubic_step(lo, flo, glo, hi, fhi, ghi);
            Probe p = probe(f, x, dir, t);
            if (!std::isfinite(p.value) || p.value > f0 + c1 * t * g0 || p.value >= flo) {
                hi = t;
                fhi = std::isfinite(p.value) ? p.value : std::numeric_limits<double>::max();
                ghi = std::isfinite(p.slope) ? p.slope : 0.0;
            } else {
                if (std::abs(p.slope) <= -c2 * g0) {
                    out = std::move(p);
                    return true;
                }
                if (p.slope * (hi - lo) >= 0.0) {
                    hi = lo;
                    fhi = flo;
                    ghi = glo;
                }
                lo = t;
                flo = p.value;
                glo = p.slope;
                out = std::move(p);
            }
            if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
        }
        return out.value < f0;
    };
    for (int i = 0; i < 30; ++i) {
        Probe p = probe(f, x, dir, step);
        if (!std::isfinite(p.value)) {
            // Stepped outside the domain; shrink.
            step = 0.5 * (prev_step + step);
            continue;
        }
        if (p.value > f0 + c1 * step * g0 || (i > 0 && p.value >= prev_value)) {
            out = p;
            return zoom(prev_step, prev_value, prev_slope, step, p.value, p.slope);
        }
        if (std::abs(p.slope) <= -c2 * g0) {
            out = std::move(p);
            return true;
        }
        if (p.slope >= 0.0) {
            out = p;
            return zoom(step, p.value, p.slope, prev_step, prev_value, prev_slope);
        }
        prev_step = step;
        prev_value = p.value;
        prev_slope = p.slope;
        out = std::move(p);
        step *= 2.0;
    }
    return out.value < f0;
}

bool cholesky_ok(const Eigen::MatrixXd& h, Eigen::LLT<Eigen::MatrixXd>& llt) {
    if (!h.allFinite()) return false;
    llt.compute(h);
    return llt.info() == Eigen::Success;
}

}  // namespace

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x) {
    const Eigen::Index k = x.size();
    Eigen::MatrixXd h(k, k);
    Eigen::VectorXd gp(k), gm(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double step = 1e-5 * std::max(1.0, std::abs(x[j]));
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += step;
        xm[j] -= step;
        f(xp, gp);
        f(xm, gm);
        h.col(j) = (gp - gm) / (xp[j] - xm[j]);
    }
    return 0.5 * (h + h.transpose());
}

Result minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0, const Options& opt) {
    const Eigen::Index k = x0.size();
    Result r;
    r.x = x0;
    r.gradient.resize(k);
    r.value = f(r.x, r.gradient);
    if (!std::isfinite(r.value) || !r.gradient.allFinite()) {
        r.message = "objective is not finite at the starting point";
        return r;
    }

    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(k, k);
    {
        Eigen::LLT<Eigen::MatrixXd> llt;
        const Eigen::MatrixXd h = numeric_hessian(f, r.x);
        if (cholesky_ok(h, llt)) hinv = llt.solve(Eigen::MatrixXd::Identity(k, k));
        else hinv /= std::max(1.0, r.gradient.lpNorm<Eigen::Infinity>());
    }

    int stall = 0;
    for (r.iterations = 0; r.iterations < opt.max_iterations; ++r.iterations) {
        if (r.gradient.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) break;
        Eigen::VectorXd dir = -hinv * r.gradient;
        double g0 = r.gradient.dot(dir);
        if (!(g0 < 0.0)) {
            hinv = Eigen::MatrixXd::Identity(k, k) / std::max(1.0, r.gradient.norm());
            dir = -hinv * r.gradient;
            g0 = r.gradient.dot(dir);
        }
        Probe next{r.value, g0, r.x, r.gradient};
        if (!wolfe_search(f, r.x, r.value, g0, dir, 1.0, next)) {
            if (++stall >= 2) break;
            hinv = Eigen::MatrixXd::Identity(k, k) / std::max(1.0, r.gradient.norm());
            continue;
        }
        stall = 0;
        const Eigen::VectorXd s = next.x - r.x;
        const Eigen::VectorXd y = next.grad - r.gradient;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const Eigen::VectorXd hy = hinv * y;
            hinv += (rho * rho * y.dot(hy) + rho) * s * s.transpose() - rho * (hy * s.transpose() + s * hy.transpose());
        }
        r.x = std::move(next.x);
        r.value = next.value;
        r.gradient = std::move(next.grad);
    }

    // Newton polish: finite-difference Hessian of the analytic gradient.
    for (int step = 0; step < opt.newton_polish_steps; ++step) {
        if (r.gradient.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) break;
        Eigen::LLT<Eigen::MatrixXd> llt;
        if (!cholesky_ok(numeric_hessian(f, r.x), llt)) break;
        const Eigen::VectorXd dir = -llt.solve(r.gradient);
        bool improved = false;
        for (double t = 1.0; t > 1e-4; t *= 0.5) {
            Eigen::VectorXd g(k);
            const Eigen::VectorXd x = r.x + t * dir;
            const double v = f(x, g);
            if (std::isfinite(v) && v <= r.value + 1e-12 * std::abs(r.value) &&
                g.lpNorm<Eigen::Infinity>() < r.gradient.lpNorm<Eigen::Infinity>()) {
                r.x = x;
                r.value = v;
                r.gradient = g;
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }

    r.converged = r.gradient.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance;
    if (r.converged) r.message = "converged";
    else if (r.iterations >= opt.max_iterations) r.message = "iteration limit reached";
    else r.message = "line search failed to make progress";
    return r;
}

}  // namespace tobit::optimize
