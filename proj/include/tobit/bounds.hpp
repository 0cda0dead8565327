#pragma once

// One-sided bounds on the treatment coefficient of a latent linear index
// under monotone treatment selection, where Gamma(d) = E(U | D = d, Y > 0)
// is monotone in d. Decreasing Gamma bounds the coefficient from below by
// every slope of E(Y | D, Y > 0); increasing Gamma bounds it from above.

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <vector>

#include "tobit/data.hpp"

namespace tobit::bounds {

enum class Direction { decreasing, increasing };

// A treatment level: observations with D in the range count as D = value.
struct Level {
    double value = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool lo_open = false;

    bool contains(double d) const { return (lo_open ? d > lo : d >= lo) && d <= hi; }
};

Level exact_level(double d);

// Equal-count bins of D among the positive outcomes; each level's value is
// the mean of D over the positive outcomes in its bin.
std::vector<Level> quantile_levels(const data::Sample& s, int bins = 10);

struct LevelPair {
    Level high;  // d
    Level low;   // d*, with d > d*
};
std::vector<LevelPair> adjacent_pairs(const std::vector<Level>& levels);
std::vector<LevelPair> all_pairs(const std::vector<Level>& levels);

struct DiscreteSpec {
    std::vector<LevelPair> pairs;
    Direction direction = Direction::decreasing;
    int min_count = 30;  // positive outcomes required at each level
};

struct ContinuousSpec {
    Eigen::VectorXd grid;  // empty: default_grid
    Direction direction = Direction::decreasing;
    bool use_covariates = false;
    double bandwidth = 0.0;  // <= 0: rule of thumb
};

// `points` equally spaced points between the 5th and 95th percentile of D
// among the positive outcomes.
Eigen::VectorXd default_grid(const data::Sample& s, int points = 20);

struct Evaluation {
    double d = 0.0;
    double d_star = std::numeric_limits<double>::quiet_NaN();  // discrete only
    double estimate = 0.0;  // difference quotient or local quadratic slope
    double se = 0.0;
    // Continuous only: bias-corrected (local cubic) slope and its robust SE.
    double rbc_estimate = std::numeric_limits<double>::quiet_NaN();
    double rbc_se = std::numeric_limits<double>::quiet_NaN();
    int count_d = 0;
    int count_d_star = 0;
};

struct MtsBound {
    Direction direction = Direction::decreasing;
    bool continuous = false;
    double bound = 0.0;  // lower bound (decreasing) or upper bound (increasing)
    std::size_t binding = 0;  // index of the evaluation attaining the bound
    std::vector<Evaluation> evaluations;
    double bandwidth = 0.0;
    Eigen::VectorXd covariate_effect;  // partialled-out X coefficients

    double ci_limit = std::numeric_limits<double>::quiet_NaN();
    double ci_alpha = 0.0;
    double ci_critical = 0.0;
    int boot_reps = 0;
    int boot_failures = 0;
    std::uint64_t seed = 0;

    bool is_lower() const { return direction == Direction::decreasing; }
};

MtsBound mts_bound_discrete(const data::Sample& s, const DiscreteSpec& spec);
MtsBound mts_bound_continuous(const data::Sample& s, const ContinuousSpec& spec);

struct BootstrapOptions {
    int reps = 500;
    double alpha = 0.05;
    std::uint64_t seed = 20221201;
    int threads = 1;
};

// Point bound plus a one-sided (1 - alpha) confidence limit from a
// nonparametric bootstrap of the studentized estimates, simultaneous over
// the evaluation points. The limit is never beyond the point bound.
MtsBound bound_confidence(const data::Sample& s, const DiscreteSpec& spec, const BootstrapOptions& boot);
MtsBound bound_confidence(const data::Sample& s, const ContinuousSpec& spec, const BootstrapOptions& boot);

}  // namespace tobit::bounds
