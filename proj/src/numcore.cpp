#include "tobit/numcore.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <tuple>
#include <utility>

#include "tobit/errors.hpp"

namespace tobit::numcore {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_not_nan(double v, const char* name) {
    if (std::isnan(v)) {
        throw InputError(std::string("numcore: NaN argument '") + name + "'");
    }
}

// Gauss-Legendre abscissae (negative half) and weights for 6, 12 and 20 points.
struct GaussLegendre {
    int count;
    std::array<double, 10> x;
    std::array<double, 10> w;
};

constexpr std::array<GaussLegendre, 3> kRules{{
    {3,
     {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970},
     {0.1713244923791705, 0.3607615730481384, 0.4679139345726904}},
    {6,
     {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050, -0.5873179542866171,
      -0.3678314989981802, -0.1252334085114692},
     {0.4717533638651177e-1, 0.1069393259953183, 0.1600783285433464, 0.2031674267230659,
      0.2334925365383547, 0.2491470458134029}},
    {10,
     {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259, -0.8391169718222188,
      -0.7463319064601508, -0.6360536807265150, -0.5108670019508271, -0.3737060887154196,
      -0.2277858511416451, -0.7652652113349733e-1},
     {0.1761400713915212e-1, 0.4060142980038694e-1, 0.6267204833410906e-1,
      0.8327674157670475e-1, 0.1019301198172404, 0.1181945319615184, 0.1316886384491766,
      0.1420961093183821, 0.1491729864726037, 0.1527533871307259}},
}};

double phi_upper(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

// P(X > h, Y > k) for finite h, k.
double bvn_upper(double h, double k, double r) {
    const GaussLegendre& rule = std::abs(r) < 0.3 ? kRules[0] : std::abs(r) < 0.75 ? kRules[1] : kRules[2];
    double hk = h * k;
    double bvn = 0.0;

    if (std::abs(r) < 0.925) {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(r);
        for (int i = 0; i < rule.count; ++i) {
            double sn = std::sin(asr * (rule.x[i] + 1.0) / 2.0);
            bvn += rule.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            sn = std::sin(asr * (-rule.x[i] + 1.0) / 2.0);
            bvn += rule.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
        }
        return bvn * asr / (2.0 * kTwoPi) + phi_upper(h) * phi_upper(k);
    }

    if (r < 0.0) {
        k = -k;
        hk = -hk;
    }
    if (std::abs(r) < 1.0) {
        const double as = (1.0 - r) * (1.0 + r);
        double a = std::sqrt(as);
        const double bs = (h - k) * (h - k);
        const double c = (4.0 - hk) / 8.0;
        const double d = (12.0 - hk) / 16.0;
        bvn = a * std::exp(-(bs / as + hk) / 2.0) *
              (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
        if (hk > -160.0) {
            const double b = std::sqrt(bs);
            bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * phi_upper(b / a) * b *
                   (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (int i = 0; i < rule.count; ++i) {
            double xs = a * (rule.x[i] + 1.0);
            xs *= xs;
            double rs = std::sqrt(1.0 - xs);
            bvn += a * rule.w[i] *
                   (std::exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs -
                    std::exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs)));
            xs = as * (-rule.x[i] + 1.0) * (-rule.x[i] + 1.0) / 4.0;
            rs = std::sqrt(1.0 - xs);
            bvn += a * rule.w[i] * std::exp(-(bs / xs + hk) / 2.0) *
                   (std::exp(-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))) / rs -
                    (1.0 + c * xs * (1.0 + d * xs)));
        }
        bvn = -bvn / kTwoPi;
    }
    if (r > 0.0) {
        return bvn + phi_upper(std::max(h, k));
    }
    bvn = -bvn;
    if (k > h) {
        if (h < 0.0) {
            bvn += std::erfc(-k * kInvSqrt2) / 2.0 - std::erfc(-h * kInvSqrt2) / 2.0;
        } else {
            bvn += phi_upper(h) - phi_upper(k);
        }
    }
    return bvn;
}

// Mills ratio Phi(-x) / phi(x) for large positive x, by backward evaluation
// of its continued fraction x + 1/(x + 2/(x + 3/(x + ...))).
double mills_ratio_cf(double x) {
    double tail = x;
    for (int k = 80; k >= 1; --k) {
        tail = x + k / tail;
    }
    return 1.0 / tail;
}

}  // namespace

Correlation::Correlation(double rho) : rho_(rho) {
    if (std::isnan(rho) || !(rho > -1.0 && rho < 1.0)) {
        throw InputError("Correlation must lie strictly inside (-1, 1)");
    }
}

double std_normal_pdf(double x) {
    require_not_nan(x, "x");
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double std_normal_cdf(double x) {
    require_not_nan(x, "x");
    return 0.5 * std::erfc(-x * kInvSqrt2);
}

double std_normal_quantile(double p) {
    require_not_nan(p, "p");
    if (!(p > 0.0 && p < 1.0)) {
        throw InputError("std_normal_quantile: p must lie in (0, 1)");
    }
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r +
                     67265.770927008700853) * r + 45921.953931549871457) * r +
                   13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((r * 5226.495278852854561 + 28729.085735721942674) * r +
                     39307.89580009271061) * r + 21213.794301586595867) * r +
                   5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((r * 7.7454501427834140764e-4 + .0227238449892691845833) * r +
                    .24178072517745061177) * r + 1.27045825245236838258) * r +
                  3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r +
                    .0151986665636164571966) * r + .14810397642748007459) * r +
                  .68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r +
                    .0012426609473880784386) * r + .026532189526576123093) * r +
                  .29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r +
                    1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
                  .0148753612908506148525) * r + .13692988092273580531) * r +
                .59983220655588793769) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

double log_normal_cdf(double x) {
    require_not_nan(x, "x");
    if (x == -std::numeric_limits<double>::infinity()) return -std::numeric_limits<double>::infinity();
    if (x < -5.0) {
        return -0.5 * x * x - 0.5 * std::log(kTwoPi) - std::log(inverse_mills(x));
    }
    if (x > 0.0) return std::log1p(-phi_upper(x));
    return std::log(std_normal_cdf(x));
}

double inverse_mills(double t) {
    require_not_nan(t, "t");
    if (t == std::numeric_limits<double>::infinity()) return 0.0;
    if (t == -std::numeric_limits<double>::infinity()) return std::numeric_limits<double>::infinity();
    if (t < -10.0) {
        return 1.0 / mills_ratio_cf(-t);
    }
    return std_normal_pdf(t) / std_normal_cdf(t);
}

double bivnorm_cdf(double x, double y, Correlation rho) {
    require_not_nan(x, "x");
    require_not_nan(y, "y");
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (x == -inf || y == -inf) return 0.0;
    if (x == inf) return std_normal_cdf(y);
    if (y == inf) return std_normal_cdf(x);
    const double p = bvn_upper(-x, -y, rho.value());
    return std::clamp(p, 0.0, 1.0);
}

double bivnorm_pdf(double x, double y, Correlation rho) {
    require_not_nan(x, "x");
    require_not_nan(y, "y");
    const double r = rho.value();
    const double c = (1.0 - r) * (1.0 + r);
    return std::exp(-(x * x - 2.0 * r * x * y + y * y) / (2.0 * c)) / (kTwoPi * std::sqrt(c));
}

double bivnorm_rect(double xlo, double xhi, double ylo, double yhi, Correlation rho) {
    for (double v : {xlo, xhi, ylo, yhi}) require_not_nan(v, "bound");
    if (!(xlo < xhi) || !(ylo < yhi)) return 0.0;
    double r = rho.value();
    auto centre_positive = [](double lo, double hi) {
        if (std::isinf(lo) && std::isinf(hi)) return false;
        if (std::isinf(hi)) return true;
        if (std::isinf(lo)) return false;
        return lo + hi > 0.0;
    };
    if (centre_positive(xlo, xhi)) {
        std::tie(xlo, xhi) = std::pair{-xhi, -xlo};
        r = -r;
    }
    if (centre_positive(ylo, yhi)) {
        std::tie(ylo, yhi) = std::pair{-yhi, -ylo};
        r = -r;
    }
    const Correlation c(r);
    const double p = bivnorm_cdf(xhi, yhi, c) - bivnorm_cdf(xlo, yhi, c) - bivnorm_cdf(xhi, ylo, c) +
                     bivnorm_cdf(xlo, ylo, c);
    return std::clamp(p, 0.0, 1.0);
}

double bivnorm_cdf_upper_limit(double x, double y) {
    return std::min(std_normal_cdf(x), std_normal_cdf(y));
}

double bivnorm_cdf_lower_limit(double x, double y) {
    return std::max(0.0, std_normal_cdf(x) + std_normal_cdf(y) - 1.0);
}

}  // namespace tobit::numcore
