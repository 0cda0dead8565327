#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "tobit/equalities.hpp"
#include "tobit/errors.hpp"
#include "tobit/estimate.hpp"
#include "tobit/momtest.hpp"

using namespace tobit::momtest;
using tobit::data::Sample;
using tobit::equalities::ClassicIndex;
using tobit::equalities::IvIndex;
using tobit::equalities::make_partition;
using tobit::testing::RefRng;

namespace {

double phi_cdf(double x) { return static_cast<double>(tobit::testing::ref_normal_cdf(x)); }

Eigen::VectorXd normals(int n, std::uint64_t seed) {
    RefRng rng(seed);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
}

IvIndex null_iv_index() {
    IvIndex idx;
    idx.beta0 = 0.3;
    idx.beta1 = 1.0;
    idx.gamma0 = 0.0;
    idx.gamma1 = 1.0;
    idx.sigma_w = 1.2;
    idx.sigma_v = 1.0;
    idx.rho = 0.4;
    return idx;
}

// One equality per column of `noise_sd` noise around mean(v) = shift.
MomentPanel noise_panel(int n, int columns, std::uint64_t seed, double shift = 0.0, double noise_sd = 1.0) {
    RefRng rng(seed);
    Eigen::VectorXd v(n);
    Eigen::MatrixXd w(n, columns);
    for (int i = 0; i < n; ++i) {
        v[i] = rng.normal();
        for (int j = 0; j < columns; ++j) w(i, j) = shift + noise_sd * rng.normal();
    }
    std::vector<std::string> labels;
    for (int j = 0; j < columns; ++j) labels.push_back("m" + std::to_string(j));
    return make_panel(w, v, labels);
}

Grid single_point_grid(Eigen::Index equalities) {
    Grid g;
    for (Eigen::Index j = 0; j < equalities; ++j) g.points.push_back(Eigen::VectorXd::Zero(1));
    return g;
}

Grid uniform_grid(Eigen::Index equalities, int points, double lo, double hi) {
    Grid g;
    for (Eigen::Index j = 0; j < equalities; ++j) g.points.push_back(Eigen::VectorXd::LinSpaced(points, lo, hi));
    return g;
}

}  // namespace

TEST(Moments, ClassicKnownValues) {
    const Sample s(Eigen::Vector2d(0.0, 2.5), Eigen::Vector2d(0.0, 0.0));
    const auto p = make_partition({1.0, 2.0}, {});
    const auto panel = build_moments_classic(s, ClassicIndex{0.0, 1.0, {}, 1.0}, p, false);
    ASSERT_EQ(panel.columns(), 8);
    EXPECT_NEAR(panel.values(0, 0), 0.5, 1e-15);
    EXPECT_NEAR(panel.values(1, 6), phi_cdf(2.0), 1e-15);
    EXPECT_NEAR(panel.values(1, 6), 0.97725, 1e-5);
    EXPECT_EQ(panel.values(0, 1), -panel.values(0, 0));
}

TEST(Moments, IvKnownValue) {
    IvIndex idx;
    idx.beta1 = 1.0;
    idx.gamma1 = 1.0;
    const Sample s(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, -5.0), Eigen::VectorXd::Zero(1));
    const auto p = make_partition({1.0}, {0.0});
    const auto panel = build_moments_iv(s, idx, p, false);
    ASSERT_EQ(panel.columns(), 2 * 3 * 2);
    EXPECT_NEAR(panel.values(0, 0), 0.75, 1e-15);
}

TEST(Moments, SignPairsAndTiling) {
    const int n = 2000;
    const Eigen::VectorXd z = normals(n, 3);
    const auto s = simulate_from_model(null_iv_index(), z, 4);
    const auto p = make_partition({0.5, 1.5, 2.5}, {-1.0, 0.0, 1.0});
    const auto panel = build_moments_iv(s, null_iv_index(), p, false);
    ASSERT_EQ(panel.columns(), 2 * p.cell_count());
    for (Eigen::Index j = 0; j < panel.equalities(); ++j) {
        EXPECT_TRUE(panel.values.col(2 * j) == -panel.values.col(2 * j + 1));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        double indicators = 0.0, probs = 0.0;
        for (Eigen::Index j = 0; j < panel.equalities(); ++j) {
            indicators += panel.values(i, 2 * j) + panel.implied(i, j);
            probs += panel.implied(i, j);
        }
        EXPECT_NEAR(indicators, 1.0, 1e-12);
        EXPECT_NEAR(probs, 1.0, 1e-12);
    }
    EXPECT_TRUE((panel.values.array().abs() <= 1.0).all());
}

TEST(Moments, NullColumnMeansAtTrueParameters) {
    const int n = 40'000;
    const ClassicIndex ci{0.2, 1.0, {}, 1.0};
    const auto cs = simulate_from_model(ci, normals(n, 8), 9);
    const auto cpanel = build_moments_classic(cs, ci, make_partition({0.5, 1.0, 2.0}, {}), false);
    const auto zs = simulate_from_model(null_iv_index(), normals(n, 10), 11);
    const auto ipanel = build_moments_iv(zs, null_iv_index(), make_partition({0.5, 1.5}, {-0.5, 0.5}), false);
    for (const MomentPanel* panel : {&cpanel, &ipanel}) {
        for (Eigen::Index c = 0; c < panel->columns(); ++c) {
            const auto col = panel->values.col(c).array();
            const double mean = col.mean();
            const double se = std::sqrt((col - mean).square().sum() / (n - 1.0) / n);
            EXPECT_LT(std::abs(mean), 3.0 * se) << panel->cell_labels[static_cast<std::size_t>(c)];
        }
    }
}

TEST(Moments, PartitionMismatchIsRejected) {
    const Sample s(Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(0.0, 1.0));
    EXPECT_THROW(build_moments_classic(s, ClassicIndex{0.0, 1.0, {}, 1.0}, make_partition({}, {0.0}), false),
                 tobit::InputError);
    EXPECT_THROW(build_moments_iv(s, IvIndex{}, make_partition({}, {0.0}), false), tobit::InputError);
}

TEST(Curve, ConstantColumnIsReproduced) {
    const int n = 500;
    const Eigen::VectorXd v = normals(n, 1);
    const auto panel = make_panel(Eigen::MatrixXd::Constant(n, 1, 0.3), v, {"c"});
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(30, -2.0, 2.0);
    const Curve c = conditional_mean_curve(panel, 0, grid);
    for (Eigen::Index g = 0; g < grid.size(); ++g) EXPECT_NEAR(c.theta[g], 0.3, 1e-10);
    const Curve neg = conditional_mean_curve(panel, 1, grid);
    for (Eigen::Index g = 0; g < grid.size(); ++g) EXPECT_NEAR(neg.theta[g], -0.3, 1e-10);
}

TEST(Curve, LinearMeanWithinThreeStandardErrors) {
    const int n = 5000;
    RefRng rng(12);
    Eigen::VectorXd v(n), w(n);
    for (int i = 0; i < n; ++i) {
        v[i] = rng.normal();
        w[i] = v[i] + 0.5 * rng.normal();
    }
    const auto panel = make_panel(w, v, {"lin"});
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(30, -1.5, 1.5);
    const Curve c = conditional_mean_curve(panel, 0, grid);
    EXPECT_GT(c.bandwidth, 0.0);
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        EXPECT_GT(c.se[g], 0.0);
        EXPECT_LT(std::abs(c.theta[g] - grid[g]), 3.0 * c.se[g]) << "v = " << grid[g];
    }
}

TEST(Curve, StandardErrorRate) {
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(15, -1.0, 1.0);
    auto mean_se = [&](int n, double h) {
        const auto panel = noise_panel(n, 1, 77 + static_cast<std::uint64_t>(n));
        return conditional_mean_curve(panel, 0, grid, h).se.mean();
    };
    // Fixed bandwidth: quadrupling n halves the standard error.
    EXPECT_NEAR(mean_se(16'000, 0.3) / mean_se(4000, 0.3), 0.5, 0.5 * 0.25);
    // Default bandwidth shrinks as n^(-2/7)... scaled by n^(1/5) times the
    // rule of thumb, so doubling n scales the error by 2^(-5/14).
    EXPECT_NEAR(mean_se(16'000, 0.0) / mean_se(8000, 0.0), std::pow(2.0, -5.0 / 14.0),
                std::pow(2.0, -5.0 / 14.0) * 0.25);
}

TEST(Curve, NoLocalDataIsAnError) {
    Eigen::VectorXd v(40);
    for (int i = 0; i < 40; ++i) v[i] = i < 20 ? -10.0 - i : 10.0 + i;
    const auto panel = make_panel(Eigen::MatrixXd::Ones(40, 1), v, {"gap"});
    EXPECT_THROW(conditional_mean_curve(panel, 0, Eigen::VectorXd::Zero(1), 0.01), tobit::NumericalError);
}

TEST(CriticalValue, SinglePairMatchesNormalQuantiles) {
    // One equality gives the pair (+W, -W), whose sup is |xi|.
    const auto panel = noise_panel(2000, 1, 5);
    const Grid grid = single_point_grid(1);
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        SimulationOptions sim;
        sim.draws = 5000;
        sim.seed = seed;
        EXPECT_NEAR(critical_value(panel, grid, 0.10, sim), 1.6448536, 0.1) << seed;
        EXPECT_NEAR(critical_value(panel, grid, 0.05, sim), 1.9599640, 0.1) << seed;
    }
}

TEST(CriticalValue, MonotoneInLevel) {
    const auto panel = noise_panel(1500, 3, 6);
    const Grid grid = uniform_grid(3, 10, -1.5, 1.5);
    SimulationOptions sim;
    sim.seed = 99;
    EXPECT_LT(critical_value(panel, grid, 0.10, sim), critical_value(panel, grid, 0.01, sim));
    const auto multi = run_panel_test_multi(panel, grid, {0.10, 0.05, 0.01}, sim);
    EXPECT_LT(multi[0].kappa, multi[1].kappa);
    EXPECT_LT(multi[1].kappa, multi[2].kappa);
}

TEST(CriticalValue, NestedPanelsNeverDecrease) {
    SimulationOptions sim;
    sim.adaptive_selection = false;
    const auto big = noise_panel(1200, 4, 21);
    for (Eigen::Index keep = 1; keep < 4; ++keep) {
        MomentPanel small = big;
        small.values = big.values.leftCols(2 * keep);
        small.cell_labels.resize(static_cast<std::size_t>(2 * keep));
        for (std::uint64_t seed : {7u, 8u}) {
            sim.seed = seed;
            EXPECT_LE(critical_value(small, uniform_grid(keep, 8, -1.0, 1.0), 0.05, sim),
                      critical_value(big, uniform_grid(4, 8, -1.0, 1.0), 0.05, sim));
        }
    }
}

TEST(CriticalValue, InputValidation) {
    const auto panel = noise_panel(300, 1, 2);
    const Grid grid = single_point_grid(1);
    SimulationOptions sim;
    EXPECT_THROW(critical_value(panel, grid, 0.0, sim), tobit::InputError);
    EXPECT_THROW(critical_value(panel, grid, 0.6, sim), tobit::InputError);
    sim.draws = 199;
    EXPECT_THROW(critical_value(panel, grid, 0.05, sim), tobit::InputError);
    sim.draws = 1000;
    EXPECT_THROW(critical_value(panel, single_point_grid(2), 0.05, sim), tobit::InputError);
    const auto flat = make_panel(Eigen::MatrixXd::Zero(300, 1), panel.conditioning, {"zero"});
    EXPECT_THROW(critical_value(flat, grid, 0.05, sim), tobit::NumericalError);
}

TEST(PanelTest, SlackSidesStayBelowZero) {
    // W = -1 + tiny noise: every [+] inequality is slack, every [-] side is
    // violated by 1.
    const auto panel = noise_panel(1000, 3, 31, -1.0, 1e-3);
    const auto res = run_panel_test(panel, uniform_grid(3, 10, -1.5, 1.5), 0.05, SimulationOptions{});
    for (const auto& c : res.per_cell) {
        if (c.column % 2 == 0) {
            EXPECT_LT(c.theta - res.kappa * c.se, 0.0);
        } else {
            EXPECT_GT(c.theta - res.kappa * c.se, 0.9);
        }
    }
    EXPECT_TRUE(res.reject);
}

TEST(PanelTest, ViolatedEqualityRejects) {
    const auto panel = noise_panel(2000, 2, 32, 0.2);
    const auto res = run_panel_test(panel, uniform_grid(2, 10, -1.5, 1.5), 0.05, SimulationOptions{});
    EXPECT_TRUE(res.reject);
    EXPECT_GT(res.statistic, 0.0);
}

TEST(PanelTest, DecisionRecomputableFromResult) {
    for (double shift : {0.0, 0.05, 0.2}) {
        const auto panel = noise_panel(1500, 3, 40, shift);
        const auto res = run_panel_test(panel, uniform_grid(3, 12, -1.5, 1.5), 0.05, SimulationOptions{});
        ASSERT_EQ(res.per_cell.size(), 2u * 3u * 12u);
        EXPECT_EQ(res.recompute_statistic(), res.statistic);
        EXPECT_EQ(res.reject, res.recompute_statistic() > 0.0);
        for (const auto& c : res.per_cell) {
            EXPECT_GT(c.se, 0.0);
            EXPECT_DOUBLE_EQ(c.studentized, c.theta / c.se);
        }
    }
}

TEST(Grid, InsideCellPercentiles) {
    const int n = 3000;
    const ClassicIndex ci{0.2, 1.0, {}, 1.0};
    const auto s = simulate_from_model(ci, normals(n, 50), 51);
    const auto p = make_partition({0.5, 1.0, 2.0}, {});
    const auto panel = build_moments_classic(s, ci, p, false);
    const Grid grid = make_grid(panel, 30, 0.0);
    ASSERT_EQ(static_cast<Eigen::Index>(grid.points.size()), panel.equalities());
    const auto cells = p.cells();
    for (std::size_t j = 0; j < cells.size(); ++j) {
        std::vector<double> members;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (cells[j].y.contains(s.y()[i])) members.push_back(s.d()[i]);
        }
        ASSERT_GE(members.size(), 30u);
        const Eigen::VectorXd m = Eigen::Map<Eigen::VectorXd>(members.data(), static_cast<Eigen::Index>(members.size()));
        const auto& pts = grid.points[j];
        EXPECT_EQ(pts.size(), 30);
        EXPECT_NEAR(pts.minCoeff(), tobit::data::quantile(m, 0.01), 1e-12);
        EXPECT_NEAR(pts.maxCoeff(), tobit::data::quantile(m, 0.99), 1e-12);
    }
}

TEST(Grid, SparsePointsAreDropped) {
    const int n = 3000;
    const ClassicIndex ci{0.2, 1.0, {}, 1.0};
    const auto s = simulate_from_model(ci, normals(n, 52), 53);
    const auto panel = build_moments_classic(s, ci, make_partition({3.0}, {}), false);
    const Grid all = make_grid(panel, 30, 0.0);
    const Grid kept = make_grid(panel, 30, 10.0);
    // The top cell is rare at low d, so its lower grid points lack events.
    EXPECT_LT(kept.points[2].size(), all.points[2].size());
    EXPECT_GT(kept.points[2].size(), 0);
    const double h = default_bandwidth(panel, 4);
    for (Eigen::Index g = 0; g < kept.points[2].size(); ++g) {
        const Eigen::ArrayXd w = (-0.5 * ((s.d().array() - kept.points[2][g]) / h).square()).exp();
        EXPECT_GE((w * panel.implied.col(2).array()).sum(), 10.0);
    }
}

TEST(RunTest, ClassicDeterministicAcrossThreads) {
    const ClassicIndex ci{0.2, 1.0, {}, 1.0};
    const auto s = simulate_from_model(ci, normals(3000, 60), 61);
    TestOptions opt;
    opt.alphas = {0.10, 0.05};
    opt.threads = 1;
    const auto a = run_test(s, Model::classic, opt);
    opt.threads = 8;
    const auto b = run_test(s, Model::classic, opt);
    ASSERT_EQ(a.results.size(), 2u);
    for (std::size_t r = 0; r < a.results.size(); ++r) {
        EXPECT_EQ(a.results[r].statistic, b.results[r].statistic);
        EXPECT_EQ(a.results[r].kappa, b.results[r].kappa);
        ASSERT_EQ(a.results[r].per_cell.size(), b.results[r].per_cell.size());
        for (std::size_t c = 0; c < a.results[r].per_cell.size(); ++c) {
            EXPECT_EQ(a.results[r].per_cell[c].theta, b.results[r].per_cell[c].theta);
            EXPECT_EQ(a.results[r].per_cell[c].se, b.results[r].per_cell[c].se);
        }
        EXPECT_EQ(a.results[r].reject, a.results[r].recompute_statistic() > 0.0);
    }
    EXPECT_TRUE(a.classic_fit.has_value());
    EXPECT_EQ(a.partition.y_cells(), 5);
}

TEST(RunTest, IvDeterministicAcrossThreads) {
    const auto s = simulate_from_model(null_iv_index(), normals(2500, 62), 63);
    TestOptions opt;
    opt.K = 3;
    opt.Q = 2;
    opt.threads = 1;
    const auto a = run_test(s, Model::iv, opt);
    opt.threads = 4;
    const auto b = run_test(s, Model::iv, opt);
    EXPECT_EQ(a.results[0].statistic, b.results[0].statistic);
    EXPECT_EQ(a.results[0].kappa, b.results[0].kappa);
    EXPECT_TRUE(a.iv_fit.has_value());
    EXPECT_EQ(a.partition.cell_count(), 4 * 3);
}

TEST(Grid, DiscreteConditioningUsesCellMeans) {
    const int n = 900;
    Eigen::VectorXd v(n), w(n);
    RefRng rng(80);
    for (int i = 0; i < n; ++i) {
        v[i] = i % 3;
        w[i] = 0.1 * v[i] + rng.normal();
    }
    const auto panel = make_panel(w, v, {"w"});
    EXPECT_EQ(default_bandwidth(panel, 0), 0.0);
    const Grid grid = make_grid(panel);
    ASSERT_EQ(grid.points.size(), 1u);
    EXPECT_EQ(grid.points[0], Eigen::Vector3d(0.0, 1.0, 2.0));
    const Curve c = conditional_mean_curve(panel, 0, grid.points[0]);
    for (int g = 0; g < 3; ++g) {
        double sum = 0.0;
        for (int i = g; i < n; i += 3) sum += w[i];
        EXPECT_NEAR(c.theta[g], sum / (n / 3), 1e-12);
        EXPECT_GT(c.se[g], 0.0);
    }
}

TEST(RunTest, IvWithBinaryInstrument) {
    Eigen::VectorXd z(3000);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = static_cast<double>(i % 2);
    const auto s = simulate_from_model(null_iv_index(), z, 81);
    TestOptions opt;
    opt.K = 3;
    opt.Q = 2;
    opt.alphas = {0.10, 0.05};
    const auto run = run_test(s, Model::iv, opt);
    for (const auto& r : run.results) {
        for (double h : r.bandwidths) EXPECT_EQ(h, 0.0);
        ASSERT_FALSE(r.per_cell.empty());
        for (const auto& c : r.per_cell) EXPECT_TRUE(c.v == 0.0 || c.v == 1.0);
        EXPECT_DOUBLE_EQ(r.statistic, r.recompute_statistic());
    }
}

TEST(RunTest, EstimationEffectShrinksStandardErrorsWithEstimatedScale) {
    const ClassicIndex ci{0.2, 1.0, {}, 1.0};
    const auto s = simulate_from_model(ci, normals(4000, 64), 65);
    const auto fit = tobit::estimate::fit_classic_tobit(s, false);
    const auto p = make_partition({0.5, 1.0, 2.0}, {});
    const auto with = build_moments_classic(s, fit, p, tobit::equalities::Scale::estimated, true);
    const auto without = build_moments_classic(s, fit, p, tobit::equalities::Scale::estimated, false);
    ASSERT_TRUE(with.has_estimation_effect());
    EXPECT_FALSE(without.has_estimation_effect());
    EXPECT_EQ(with.values, without.values);
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(10, -1.0, 1.0);
    for (Eigen::Index c = 0; c < with.columns(); ++c) {
        const Curve a = conditional_mean_curve(with, c, grid);
        const Curve b = conditional_mean_curve(without, c, grid);
        EXPECT_EQ(a.theta, b.theta);
        for (Eigen::Index g = 0; g < grid.size(); ++g) EXPECT_LE(a.se[g], b.se[g] * (1.0 + 1e-12));
    }
}

// Fixed design, outcomes redrawn: the spread of theta-hat across replications
// is the oracle for the corrected standard error.
TEST(RunTest, UnitScaleStandardErrorsMatchReplicationSpread) {
    const ClassicIndex ci{0.0, 1.0, {}, 1.0};
    const Eigen::VectorXd d = normals(3000, 70);
    const auto p = make_partition({0.5, 1.5}, {});
    const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(3, -1.0, 1.0);
    constexpr int reps = 400;
    std::vector<Eigen::MatrixXd> theta(3, Eigen::MatrixXd(reps, grid.size()));
    std::vector<Eigen::VectorXd> se(3, Eigen::VectorXd::Zero(grid.size()));
    for (int r = 0; r < reps; ++r) {
        const auto s = simulate_from_model(ci, d, 1000 + r);
        const auto fit = tobit::estimate::fit_classic_tobit(s, false);
        const auto panel = build_moments_classic(s, fit, p, tobit::equalities::Scale::unit, true);
        for (int j = 0; j < 3; ++j) {
            const Curve c = conditional_mean_curve(panel, 2 * j, grid, 0.4);
            theta[j].row(r) = c.theta.transpose();
            se[j] += c.se / reps;
        }
    }
    for (int j = 0; j < 3; ++j) {
        for (Eigen::Index g = 0; g < grid.size(); ++g) {
            const Eigen::ArrayXd col = theta[j].col(g).array();
            const double sd = std::sqrt((col - col.mean()).square().sum() / (reps - 1));
            EXPECT_NEAR(se[j][g] / sd, 1.0, 0.12) << "cell " << j << " point " << grid[g];
        }
    }
}

// Studentized multinomial draws: mean zero, unit variance, and close to the
// Gaussian process when every grid point has many local observations.
TEST(NullProcess, MultinomialDrawsAreStudentized) {
    const ClassicIndex ci{0.0, 1.0, {}, 1.0};
    const auto s = simulate_from_model(ci, normals(4000, 71), 72);
    const auto fit = tobit::estimate::fit_classic_tobit(s, false);
    const auto panel = build_moments_classic(s, fit, make_partition({0.5, 1.5}, {}), tobit::equalities::Scale::unit, true);
    Grid grid;
    for (Eigen::Index j = 0; j < panel.equalities(); ++j) grid.points.push_back(Eigen::VectorXd::LinSpaced(4, -1.0, 1.0));
    SimulationOptions sim;
    sim.draws = 4000;
    sim.adaptive_selection = false;
    const Eigen::MatrixXd x = null_draws(panel, grid, sim);
    ASSERT_EQ(x.cols(), sim.draws);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const Eigen::ArrayXd row = x.row(r).transpose().array();
        const double mean = row.mean();
        const double var = (row - mean).square().sum() / (row.size() - 1);
        EXPECT_NEAR(mean, 0.0, 0.08) << r;
        EXPECT_NEAR(var, 1.0, 0.1) << r;
    }
    SimulationOptions gauss = sim;
    gauss.process = NullProcess::gaussian;
    EXPECT_NEAR(critical_value(panel, grid, 0.05, sim), critical_value(panel, grid, 0.05, gauss), 0.15);
}

TEST(NullProcess, PanelsWithoutModelProbabilitiesUseGaussianDraws) {
    const auto panel = noise_panel(500, 2, 73);
    const Grid grid = uniform_grid(2, 5, -1.0, 1.0);
    SimulationOptions a, b;
    a.draws = b.draws = 300;
    b.process = NullProcess::gaussian;
    EXPECT_EQ(null_draws(panel, grid, a), null_draws(panel, grid, b));
}

TEST(RunTest, ErrorsCarryTheStage) {
    const ClassicIndex ci{0.2, 1.0, {}, 1.0};
    const auto s = simulate_from_model(ci, normals(200, 66), 67);
    TestOptions opt;
    opt.K = 50;
    try {
        run_test(s, Model::classic, opt);
        FAIL() << "expected a partition error";
    } catch (const tobit::InputError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("partition:", 0), 0u) << e.what();
    }
    EXPECT_THROW(run_test(s, Model::iv, TestOptions{}), tobit::InputError);
    opt = TestOptions{};
    opt.alphas = {0.0};
    EXPECT_THROW(run_test(s, Model::classic, opt), tobit::InputError);
    opt.alphas = {};
    EXPECT_THROW(run_test(s, Model::classic, opt), tobit::InputError);
}
