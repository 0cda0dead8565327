#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "test_support.hpp"
#include "tobit/errors.hpp"
#include "tobit/numcore.hpp"

using namespace tobit::numcore;
using tobit::InputError;
using tobit::testing::RefRng;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
const double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

TEST(Correlation, RejectsValuesOutsideOpenInterval) {
    EXPECT_NO_THROW(Correlation(0.999999));
    EXPECT_THROW(Correlation(1.0), InputError);
    EXPECT_THROW(Correlation(-1.0), InputError);
    EXPECT_THROW(Correlation(3.0), InputError);
    EXPECT_THROW((void)Correlation(kNaN), InputError);
}

TEST(NormalCdf, KnownValues) {
    EXPECT_EQ(std_normal_cdf(0.0), 0.5);
    EXPECT_EQ(std_normal_cdf(kInf), 1.0);
    EXPECT_EQ(std_normal_cdf(-kInf), 0.0);
    // 50-digit reference: 0.84134474606854294858523254563203792...
    EXPECT_NEAR(std_normal_cdf(1.0), 0.8413447460685429485852, 1e-15);
    EXPECT_THROW(std_normal_cdf(kNaN), InputError);
}

TEST(NormalCdf, MatchesExtendedPrecisionReference) {
    for (double x = -38.0; x <= 9.0; x += 0.0137) {
        const double ref = static_cast<double>(tobit::testing::ref_normal_cdf(x));
        EXPECT_NEAR(std_normal_cdf(x), ref, 1e-15) << x;
    }
}

TEST(NormalCdf, SymmetryAndMonotonicity) {
    double prev = 0.0;
    for (double x = -10.0; x <= 10.0; x += 0.01) {
        EXPECT_NEAR(std_normal_cdf(x) + std_normal_cdf(-x), 1.0, 1e-15) << x;
        const double v = std_normal_cdf(x);
        EXPECT_GE(v, prev);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        prev = v;
    }
}

TEST(NormalQuantile, KnownValuesAndRoundTrip) {
    EXPECT_EQ(std_normal_quantile(0.5), 0.0);
    EXPECT_NEAR(std_normal_quantile(0.841344746), 1.0, 1e-9);
    for (double p : {1e-300, 1e-20, 1e-12, 1e-6, 0.001, 0.02, 0.07, 0.075, 0.2, 0.4999, 0.6, 0.9,
                     0.93, 0.99, 0.999999}) {
        const double q = std_normal_quantile(p);
        EXPECT_NEAR(std_normal_cdf(q), p, 1e-12) << p;
        // 1 - p is only exact enough to compare tails away from the extremes.
        if (p >= 1e-3 && p <= 0.999) {
            EXPECT_NEAR(q + std_normal_quantile(1.0 - p), 0.0, 1e-12 * std::max(1.0, std::abs(q))) << p;
        }
    }
}

TEST(NormalQuantile, SymmetricPairsSumToZero) {
    for (double p = 0.001; p < 0.5; p += 0.00731) {
        EXPECT_NEAR(std_normal_quantile(p) + std_normal_quantile(1.0 - p), 0.0, 1e-12) << p;
    }
}

TEST(NormalQuantile, DomainErrors) {
    EXPECT_THROW(std_normal_quantile(0.0), InputError);
    EXPECT_THROW(std_normal_quantile(1.0), InputError);
    EXPECT_THROW(std_normal_quantile(-0.2), InputError);
    EXPECT_THROW(std_normal_quantile(kNaN), InputError);
}

TEST(InverseMills, KnownValues) {
    EXPECT_NEAR(inverse_mills(0.0), std::sqrt(2.0 / std::numbers::pi), 1e-15);
    // mpmath at 40 digits: 30.03325966743367703707...
    EXPECT_NEAR(inverse_mills(-30.0), 30.033259667433677037, 1e-11);
    EXPECT_TRUE(std::isfinite(inverse_mills(-1e6)));
    EXPECT_NEAR(inverse_mills(-1e6), 1e6, 1e-3);
    EXPECT_LT(inverse_mills(12.0), 1e-30);
    EXPECT_EQ(inverse_mills(kInf), 0.0);
    EXPECT_THROW(inverse_mills(kNaN), InputError);
}

TEST(InverseMills, AsymptoteNearBranchPoint) {
    // Both branches must agree where they meet.
    const double left = inverse_mills(std::nextafter(-10.0, -11.0));
    const double right = inverse_mills(-10.0);
    EXPECT_NEAR(left, right, 1e-12);
    // -t + 1/|t| - 2/|t|^3 leading terms.
    for (double t : {-15.0, -30.0, -100.0}) {
        const double a = -t;
        EXPECT_NEAR(inverse_mills(t), a + 1.0 / a - 2.0 / (a * a * a), 10.0 / std::pow(a, 5)) << t;
    }
}

TEST(InverseMills, StrictlyDecreasingAndPositive) {
    double prev = kInf;
    for (double t = -40.0; t <= 8.0; t += 0.013) {
        const double v = inverse_mills(t);
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, prev) << t;
        prev = v;
    }
}

TEST(BivnormCdf, SpecialValues) {
    EXPECT_NEAR(bivnorm_cdf(0.0, 0.0, Correlation(0.0)), 0.25, 1e-16);
    for (double rho : {-0.9, -0.3, 0.0, 0.5, 0.97}) {
        for (double x : {-2.0, -0.4, 0.0, 1.3}) {
            EXPECT_EQ(bivnorm_cdf(x, kInf, Correlation(rho)), std_normal_cdf(x));
            EXPECT_EQ(bivnorm_cdf(kInf, x, Correlation(rho)), std_normal_cdf(x));
            EXPECT_EQ(bivnorm_cdf(x, -kInf, Correlation(rho)), 0.0);
        }
    }
    EXPECT_THROW(bivnorm_cdf(kNaN, 0.0, Correlation(0.1)), InputError);
}

TEST(BivnormCdf, OrthantClosedFormAndDensityOracle) {
    // Orthant probability 1/4 + asin(rho)/(2 pi); at rho = 0.5 this is 1/3.
    EXPECT_NEAR(bivnorm_cdf(0.0, 0.0, Correlation(0.5)), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(tobit::testing::ref_bivnorm_cdf_density(0.0, 0.0, 0.5), 1.0 / 3.0, 1e-12);
    for (double rho = -0.99; rho < 0.995; rho += 0.0331) {
        const double closed = 0.25 + std::asin(rho) / (2.0 * std::numbers::pi);
        EXPECT_NEAR(bivnorm_cdf(0.0, 0.0, Correlation(rho)), closed, 1e-15) << rho;
    }
}

TEST(BivnormCdf, AgreesWithQuadratureOracleOnRandomPoints) {
    RefRng rng(20221201);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double x = 2.5 * rng.normal();
        const double y = 2.5 * rng.normal();
        const double rho = -0.999 + 1.998 * rng.uniform();
        const double ref = static_cast<double>(tobit::testing::ref_bivnorm_cdf(x, y, rho));
        const double got = bivnorm_cdf(x, y, Correlation(rho));
        worst = std::max(worst, std::abs(got - ref));
        ASSERT_NEAR(got, ref, 1e-14) << x << " " << y << " " << rho;
    }
    RecordProperty("max_abs_error", std::to_string(worst));
}

TEST(BivnormCdf, SymmetricInArguments) {
    RefRng rng(7);
    for (int i = 0; i < 2000; ++i) {
        const double x = 3.0 * rng.normal();
        const double y = 3.0 * rng.normal();
        const Correlation rho(-0.999 + 1.998 * rng.uniform());
        EXPECT_NEAR(bivnorm_cdf(x, y, rho), bivnorm_cdf(y, x, rho), 1e-14);
    }
}

TEST(BivnormCdf, StrictlyIncreasingInRho) {
    for (double x : {-1.5, -0.3, 0.0, 0.8, 2.0}) {
        for (double y : {-1.0, 0.0, 0.7, 1.9}) {
            double prev = -1.0;
            for (double rho = -0.95; rho <= 0.951; rho += 0.05) {
                const double v = bivnorm_cdf(x, y, Correlation(rho));
                // Strict ordering wherever the increment is representable.
                if (bivnorm_pdf(x, y, Correlation(rho)) * 0.05 > 1e-13) {
                    EXPECT_GT(v, prev) << x << " " << y << " " << rho;
                } else {
                    EXPECT_GE(v, prev) << x << " " << y << " " << rho;
                }
                prev = v;
            }
        }
    }
}

TEST(BivnormCdf, CoordinatewiseMonotone) {
    for (double rho : {-0.8, 0.0, 0.6, 0.95}) {
        for (double y : {-1.0, 0.5}) {
            double prev = 0.0;
            for (double x = -6.0; x <= 6.0; x += 0.05) {
                const double v = bivnorm_cdf(x, y, Correlation(rho));
                EXPECT_GE(v, prev - 1e-16);
                prev = v;
            }
        }
    }
}

TEST(BivnormCdf, DegenerateCorrelationLimits) {
    const double near_one = 1.0 - 1e-12;
    for (double x : {-2.0, -0.5, 0.3, 1.7}) {
        for (double y : {-1.2, 0.0, 0.4, 2.2}) {
            EXPECT_NEAR(bivnorm_cdf(x, y, Correlation(near_one)), bivnorm_cdf_upper_limit(x, y), 1e-10);
            EXPECT_NEAR(bivnorm_cdf(x, y, Correlation(-near_one)), bivnorm_cdf_lower_limit(x, y), 1e-10);
        }
    }
}

TEST(BivnormCdf, DiagonalApproachesLimitAtSquareRootRate) {
    // On x = y the gap to the limit is phi(x)^2-weighted and shrinks like sqrt(1 - rho).
    const double eps = 1e-12;
    for (double x : {-1.0, 0.0, 0.8}) {
        const double ref = static_cast<double>(tobit::testing::ref_bivnorm_cdf(x, x, 1.0 - eps));
        EXPECT_NEAR(bivnorm_cdf(x, x, Correlation(1.0 - eps)), ref, 1e-12) << x;
        EXPECT_LT(bivnorm_cdf_upper_limit(x, x) - ref, std::sqrt(eps)) << x;
    }
    EXPECT_NEAR(bivnorm_cdf(0.0, 0.0, Correlation(1.0 - eps)),
                0.25 + std::asin(1.0 - eps) / (2.0 * std::numbers::pi), 1e-15);
}

TEST(BivnormRect, InclusionExclusionNeverNegative) {
    RefRng rng(99);
    for (int i = 0; i < 10000; ++i) {
        double a = 4.0 * rng.normal();
        double b = a + 3.0 * rng.uniform();
        double c = 4.0 * rng.normal();
        double d = c + 3.0 * rng.uniform();
        if (rng.uniform() < 0.1) a = -kInf;
        if (rng.uniform() < 0.1) d = kInf;
        const Correlation rho(-0.999 + 1.998 * rng.uniform());
        const double p = bivnorm_rect(a, b, c, d, rho);
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
    }
}

TEST(BivnormRect, MatchesCdfDifferences) {
    const Correlation rho(0.35);
    const double direct = bivnorm_cdf(1.0, 0.5, rho) - bivnorm_cdf(-0.2, 0.5, rho) -
                          bivnorm_cdf(1.0, -1.0, rho) + bivnorm_cdf(-0.2, -1.0, rho);
    EXPECT_NEAR(bivnorm_rect(-0.2, 1.0, -1.0, 0.5, rho), direct, 1e-15);
    EXPECT_NEAR(bivnorm_rect(-kInf, kInf, -kInf, kInf, rho), 1.0, 1e-15);
}

TEST(BivnormPdf, KnownValuesAndFactorization) {
    EXPECT_NEAR(bivnorm_pdf(0.0, 0.0, Correlation(0.0)), 1.0 / (2.0 * std::numbers::pi), 1e-16);
    for (double x : {-2.0, 0.1, 1.4}) {
        for (double y : {-0.7, 0.0, 2.5}) {
            EXPECT_NEAR(bivnorm_pdf(x, y, Correlation(0.0)), std_normal_pdf(x) * std_normal_pdf(y), 1e-16);
            EXPECT_GT(bivnorm_pdf(x, y, Correlation(0.9)), 0.0);
        }
    }
}

TEST(BivnormPdf, IntegratesToOne) {
    using boost::math::quadrature::gauss_kronrod;
    for (double rho : {-0.7, 0.0, 0.4, 0.9}) {
        const Correlation r(rho);
        auto outer = [&](double x) {
            auto inner = [&](double y) { return bivnorm_pdf(x, y, r); };
            return gauss_kronrod<double, 31>::integrate(inner, -12.0, 12.0, 12, 1e-13);
        };
        const double total = gauss_kronrod<double, 31>::integrate(outer, -12.0, 12.0, 12, 1e-12);
        EXPECT_NEAR(total, 1.0, 1e-9) << rho;
    }
}

TEST(BivnormPdf, IsTheRhoDerivativeOfTheCdf) {
    const double h = 1e-5;
    auto fd = [&](double x, double y, double rho) {
        return (bivnorm_cdf(x, y, Correlation(rho + h)) - bivnorm_cdf(x, y, Correlation(rho - h))) / (2.0 * h);
    };
    EXPECT_NEAR(fd(0.3, -0.2, 0.4), bivnorm_pdf(0.3, -0.2, Correlation(0.4)), 1e-6);
    RefRng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double x = 1.5 * rng.normal();
        const double y = 1.5 * rng.normal();
        const double rho = -0.9 + 1.8 * rng.uniform();
        EXPECT_NEAR(fd(x, y, rho), bivnorm_pdf(x, y, Correlation(rho)), 1e-6) << x << " " << y << " " << rho;
    }
}

TEST(LogNormalCdf, MatchesDirectLogAndTailExpansion) {
    for (double x = -4.9; x <= 8.0; x += 0.07) {
        const double ref = std::log(static_cast<double>(tobit::testing::ref_normal_cdf(x)));
        EXPECT_NEAR(log_normal_cdf(x), ref, 1e-14 * std::max(1.0, std::abs(ref))) << x;
    }
    for (double x : {-6.0, -20.0, -40.0, -300.0}) {
        const long double ref = std::log(tobit::testing::ref_normal_cdf(x));
        if (std::isfinite(static_cast<double>(ref)) && ref > -11000.0L) {
            EXPECT_NEAR(log_normal_cdf(x), static_cast<double>(ref), 1e-12 * std::abs(static_cast<double>(ref))) << x;
        }
        EXPECT_TRUE(std::isfinite(log_normal_cdf(x)));
    }
    // log Phi(-300) = -45000 - log(300) - 0.5 log(2 pi) - log(1 + ...) to leading order.
    EXPECT_NEAR(log_normal_cdf(-300.0), -45000.0 - std::log(300.0) - 0.5 * std::log(2.0 * std::numbers::pi), 1e-4);
}
