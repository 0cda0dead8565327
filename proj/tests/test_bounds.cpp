#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "tobit/bounds.hpp"
#include "tobit/errors.hpp"

using namespace tobit::bounds;
using tobit::data::Sample;
using tobit::testing::RefRng;

namespace {

// Binary treatment with positive outcomes centred at the given means and
// a block of zeros at each level.
Sample binary_sample(double mean1, double mean0) {
    std::vector<double> y, d;
    for (int level = 0; level < 2; ++level) {
        const double m = level == 1 ? mean1 : mean0;
        for (int i = 0; i < 40; ++i) {
            y.push_back(m + (i % 2 == 0 ? 1.0 : -1.0) * (0.1 + 0.01 * i));
            d.push_back(level);
        }
        for (int i = 0; i < 10; ++i) {
            y.push_back(0.0);
            d.push_back(level);
        }
    }
    return Sample(Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())),
                  Eigen::Map<Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size())));
}

// y = max(0, a0 + a1 d + sigma e) with d ~ N(0, 1).
Sample linear_sample(int n, double a0, double a1, double sigma, std::uint64_t seed, bool covariate = false,
                     double cov_effect = 0.0) {
    RefRng rng(seed);
    Eigen::VectorXd y(n), d(n);
    Eigen::MatrixXd x(n, covariate ? 1 : 0);
    for (int i = 0; i < n; ++i) {
        d[i] = rng.normal();
        double lin = a0 + a1 * d[i] + sigma * rng.normal();
        if (covariate) {
            x(i, 0) = rng.normal();
            lin += cov_effect * x(i, 0);
        }
        y[i] = std::max(0.0, lin);
    }
    if (covariate) return Sample(y, d, std::nullopt, x, {"x1"});
    return Sample(y, d);
}

DiscreteSpec binary_spec(Direction dir = Direction::decreasing) {
    DiscreteSpec spec;
    spec.pairs = {{exact_level(1.0), exact_level(0.0)}};
    spec.direction = dir;
    return spec;
}

}  // namespace

TEST(Discrete, BinaryTreatmentDifferenceOfMeans) {
    const auto b = mts_bound_discrete(binary_sample(5.0, 3.0), binary_spec());
    EXPECT_NEAR(b.bound, 2.0, 1e-12);
    EXPECT_TRUE(b.is_lower());
    ASSERT_EQ(b.evaluations.size(), 1u);
    EXPECT_EQ(b.evaluations[0].count_d, 40);
    EXPECT_GT(b.evaluations[0].se, 0.0);
}

TEST(Discrete, EqualMeansGiveZero) {
    EXPECT_NEAR(mts_bound_discrete(binary_sample(4.0, 4.0), binary_spec()).bound, 0.0, 1e-12);
}

TEST(Discrete, SparseLevelIsAnError) {
    auto spec = binary_spec();
    spec.min_count = 41;
    EXPECT_THROW(mts_bound_discrete(binary_sample(5.0, 3.0), spec), tobit::InputError);
    spec = binary_spec();
    spec.pairs = {{exact_level(2.0), exact_level(0.0)}};
    EXPECT_THROW(mts_bound_discrete(binary_sample(5.0, 3.0), spec), tobit::InputError);
    spec.pairs = {{exact_level(0.0), exact_level(1.0)}};
    EXPECT_THROW(mts_bound_discrete(binary_sample(5.0, 3.0), spec), tobit::InputError);
}

TEST(Discrete, QuantileLevelsTileThePositives) {
    const Sample s = linear_sample(3000, 0.0, 1.0, 1.0, 1);
    const auto levels = quantile_levels(s, 10);
    ASSERT_EQ(levels.size(), 10u);
    int positives = 0;
    for (Eigen::Index i = 0; i < s.n(); ++i) {
        if (s.y()[i] <= 0.0) continue;
        ++positives;
        int hits = 0;
        for (const auto& l : levels) hits += l.contains(s.d()[i]) ? 1 : 0;
        EXPECT_EQ(hits, 1);
    }
    for (std::size_t j = 1; j < levels.size(); ++j) EXPECT_GT(levels[j].value, levels[j - 1].value);
    EXPECT_EQ(adjacent_pairs(levels).size(), 9u);
    EXPECT_EQ(all_pairs(levels).size(), 45u);
}

TEST(Discrete, AddingPairsNeverLowersTheLowerBound) {
    const Sample s = linear_sample(4000, -0.5, 1.0, 1.0, 2);
    const auto levels = quantile_levels(s, 6);
    const auto pairs = all_pairs(levels);
    DiscreteSpec spec;
    double previous = -std::numeric_limits<double>::infinity();
    for (const auto& p : pairs) {
        spec.pairs.push_back(p);
        const double b = mts_bound_discrete(s, spec).bound;
        EXPECT_GE(b, previous);
        previous = b;
    }
}

TEST(Discrete, ReversedDirectionIsSignSymmetric) {
    const Sample s = linear_sample(4000, -0.5, 1.0, 1.0, 3);
    const Sample flipped(s.y(), -s.d());
    DiscreteSpec spec;
    spec.pairs = adjacent_pairs(quantile_levels(s, 5));
    DiscreteSpec mirror;
    mirror.direction = Direction::increasing;
    for (const auto& p : spec.pairs) {
        Level hi{-p.low.value, -p.low.hi, -p.low.lo, false};
        Level lo{-p.high.value, -p.high.hi, -p.high.lo, false};
        mirror.pairs.push_back({hi, lo});
    }
    // Closed ranges on both ends so the mirrored bins hold the same rows.
    for (auto* sp : {&spec, &mirror})
        for (auto& p : sp->pairs) p.high.lo_open = p.low.lo_open = false;
    const auto lower = mts_bound_discrete(s, spec);
    const auto upper = mts_bound_discrete(flipped, mirror);
    EXPECT_FALSE(upper.is_lower());
    EXPECT_NEAR(upper.bound, -lower.bound, 1e-12);
}

TEST(Discrete, TobitNullBoundBelowTrueSlope) {
    // Under the Tobit model the slopes of E(Y | D, Y > 0) lie below alpha1.
    int below = 0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        const Sample s = linear_sample(5000, -0.5, 1.0, 1.0, 1000 + static_cast<std::uint64_t>(r));
        DiscreteSpec spec;
        spec.pairs = adjacent_pairs(quantile_levels(s, 5));
        below += mts_bound_discrete(s, spec).bound <= 1.0 ? 1 : 0;
    }
    EXPECT_GE(below, static_cast<int>(0.95 * reps));
}

TEST(Continuous, LinearMeanRecoversSlope) {
    const Sample s = linear_sample(3000, 6.0, 1.0, 1.0, 4);
    const auto b = mts_bound_continuous(s, ContinuousSpec{});
    EXPECT_TRUE(b.continuous);
    EXPECT_GT(b.bandwidth, 0.0);
    ASSERT_EQ(b.evaluations.size(), 20u);
    const auto& e = b.evaluations[b.binding];
    EXPECT_LT(std::abs(b.bound - 1.0), 3.0 * e.se);
    for (const auto& ev : b.evaluations) {
        EXPECT_GT(ev.rbc_se, ev.se * 0.999);
        EXPECT_LT(std::abs(ev.rbc_estimate - 1.0), 4.0 * ev.rbc_se);
    }
}

TEST(Continuous, ConstantMeanGivesZero) {
    const Sample s = linear_sample(3000, 6.0, 0.0, 1.0, 5);
    const auto b = mts_bound_continuous(s, ContinuousSpec{});
    EXPECT_LT(std::abs(b.bound), 3.0 * b.evaluations[b.binding].se);
}

TEST(Continuous, ExactQuadraticSlopes) {
    // Noise-free quadratic mean: the local quadratic slope is exact.
    const int n = 800;
    RefRng rng(6);
    Eigen::VectorXd y(n), d(n);
    for (int i = 0; i < n; ++i) {
        d[i] = -3.0 + 6.0 * rng.uniform();
        y[i] = 5.0 + 0.5 * d[i] - 0.3 * d[i] * d[i];
    }
    const Sample s(y, d);
    ContinuousSpec spec;
    spec.grid = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
    const auto b = mts_bound_continuous(s, spec);
    for (const auto& e : b.evaluations) {
        EXPECT_NEAR(e.estimate, 0.5 - 0.6 * e.d, 1e-9);
        EXPECT_NEAR(e.rbc_estimate, 0.5 - 0.6 * e.d, 1e-9);
    }
    EXPECT_NEAR(b.bound, 0.5 + 0.6, 1e-9);
    spec.direction = Direction::increasing;
    EXPECT_NEAR(mts_bound_continuous(s, spec).bound, 0.5 - 0.6, 1e-9);
}

TEST(Continuous, ReversedDirectionIsSignSymmetric) {
    const Sample s = linear_sample(3000, 1.0, 1.0, 1.0, 7);
    const Sample flipped(s.y(), -s.d());
    ContinuousSpec spec;
    spec.grid = Eigen::VectorXd::LinSpaced(8, -0.8, 1.2);
    spec.bandwidth = 0.4;
    ContinuousSpec mirror = spec;
    mirror.grid = -spec.grid;
    mirror.direction = Direction::increasing;
    const auto lower = mts_bound_continuous(s, spec);
    const auto upper = mts_bound_continuous(flipped, mirror);
    EXPECT_NEAR(upper.bound, -lower.bound, 1e-10);
}

TEST(Continuous, ZeroCovariateEffectMatchesUnconditional) {
    const Sample s = linear_sample(4000, 6.0, 1.0, 1.0, 8, true, 0.0);
    ContinuousSpec plain;
    plain.grid = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
    ContinuousSpec cov = plain;
    cov.use_covariates = true;
    const auto a = mts_bound_continuous(s, plain);
    const auto b = mts_bound_continuous(s, cov);
    ASSERT_EQ(b.covariate_effect.size(), 1);
    EXPECT_LT(std::abs(b.covariate_effect[0]), 0.1);
    for (std::size_t i = 0; i < a.evaluations.size(); ++i) {
        EXPECT_LT(std::abs(a.evaluations[i].estimate - b.evaluations[i].estimate), 3.0 * a.evaluations[i].se);
    }
}

TEST(Continuous, CovariateEffectIsPartialledOut) {
    const Sample s = linear_sample(4000, 8.0, 1.0, 1.0, 9, true, 2.0);
    ContinuousSpec cov;
    cov.use_covariates = true;
    const auto b = mts_bound_continuous(s, cov);
    EXPECT_NEAR(b.covariate_effect[0], 2.0, 0.05);
    EXPECT_LT(std::abs(b.bound - 1.0), 3.0 * b.evaluations[b.binding].se);
}

TEST(Continuous, InputErrors) {
    EXPECT_THROW(mts_bound_continuous(linear_sample(600, -1.0, 1.0, 1.0, 10), ContinuousSpec{}), tobit::InputError);
    const Sample s = linear_sample(2000, 6.0, 1.0, 1.0, 11);
    ContinuousSpec spec;
    spec.grid = Eigen::VectorXd::Constant(1, 3.5);
    EXPECT_THROW(mts_bound_continuous(s, spec), tobit::InputError);
    spec = ContinuousSpec{};
    spec.use_covariates = true;
    EXPECT_THROW(mts_bound_continuous(s, spec), tobit::InputError);
}

TEST(Confidence, LimitBelowPointAndDeterministic) {
    const Sample s = linear_sample(2500, 0.5, 1.0, 1.0, 12);
    DiscreteSpec spec;
    spec.pairs = adjacent_pairs(quantile_levels(s, 5));
    BootstrapOptions boot;
    boot.reps = 300;
    boot.seed = 5;
    const auto a = bound_confidence(s, spec, boot);
    EXPECT_LE(a.ci_limit, a.bound);
    EXPECT_EQ(a.boot_reps, 300);
    EXPECT_EQ(a.boot_failures, 0);
    boot.threads = 8;
    const auto b = bound_confidence(s, spec, boot);
    EXPECT_EQ(a.ci_limit, b.ci_limit);
    boot.seed = 6;
    EXPECT_NE(bound_confidence(s, spec, boot).ci_limit, a.ci_limit);

    spec.direction = Direction::increasing;
    const auto up = bound_confidence(s, spec, boot);
    EXPECT_GE(up.ci_limit, up.bound);

    ContinuousSpec cs;
    cs.grid = Eigen::VectorXd::LinSpaced(6, -0.5, 1.0);
    const auto c = bound_confidence(s, cs, boot);
    EXPECT_LE(c.ci_limit, c.bound);
    EXPECT_GT(c.ci_critical, 0.0);
}

TEST(Confidence, InputValidation) {
    const Sample s = binary_sample(5.0, 3.0);
    BootstrapOptions boot;
    boot.reps = 199;
    EXPECT_THROW(bound_confidence(s, binary_spec(), boot), tobit::InputError);
    boot.reps = 200;
    boot.alpha = 0.0;
    EXPECT_THROW(bound_confidence(s, binary_spec(), boot), tobit::InputError);
}

TEST(Confidence, CoversTheTrueSlope) {
    // Linear design without censoring: the true maximal slope is 1.
    const int reps = 200;
    int covered = 0;
    ContinuousSpec spec;
    spec.grid = Eigen::VectorXd::LinSpaced(10, -1.2, 1.2);
    BootstrapOptions boot;
    boot.reps = 200;
    boot.threads = 8;
    for (int r = 0; r < reps; ++r) {
        const Sample s = linear_sample(1000, 6.0, 1.0, 1.0, 5000 + static_cast<std::uint64_t>(r));
        boot.seed = static_cast<std::uint64_t>(r);
        covered += bound_confidence(s, spec, boot).ci_limit <= 1.0 ? 1 : 0;
    }
    EXPECT_GE(covered, static_cast<int>(0.90 * reps));
}
