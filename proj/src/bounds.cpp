#include "tobit/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tobit/errors.hpp"
#include "tobit/local_poly.hpp"
#include "tobit/parallel.hpp"
#include "tobit/rng.hpp"

namespace tobit::bounds {
namespace {

constexpr int kMinPositiveContinuous = 500;
constexpr int kSeriesDegree = 4;

double sign_of(Direction d) { return d == Direction::decreasing ? 1.0 : -1.0; }

struct Positives {
    Eigen::VectorXd d, y;
    Eigen::MatrixXd x;
};

Positives positives(const data::Sample& s, bool with_x) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < s.n(); ++i) {
        if (s.y()[i] > 0.0) rows.push_back(i);
    }
    Positives p;
    const auto m = static_cast<Eigen::Index>(rows.size());
    p.d.resize(m);
    p.y.resize(m);
    if (with_x) p.x.resize(m, s.p());
    for (Eigen::Index r = 0; r < m; ++r) {
        p.d[r] = s.d()[rows[r]];
        p.y[r] = s.y()[rows[r]];
        if (with_x) p.x.row(r) = s.x().row(rows[r]);
    }
    return p;
}

struct LevelMoments {
    int count = 0;
    double mean = 0.0;
    double var = 0.0;
};

LevelMoments level_moments(const Positives& p, const Level& level) {
    LevelMoments m;
    double sum = 0.0, sum2 = 0.0;
    for (Eigen::Index i = 0; i < p.d.size(); ++i) {
        if (!level.contains(p.d[i])) continue;
        ++m.count;
        sum += p.y[i];
    }
    if (m.count == 0) return m;
    m.mean = sum / m.count;
    for (Eigen::Index i = 0; i < p.d.size(); ++i) {
        if (level.contains(p.d[i])) sum2 += (p.y[i] - m.mean) * (p.y[i] - m.mean);
    }
    m.var = m.count > 1 ? sum2 / (m.count - 1) : 0.0;
    return m;
}

std::vector<Evaluation> discrete_evaluations(const data::Sample& s, const DiscreteSpec& spec) {
    const Positives p = positives(s, false);
    std::vector<Evaluation> out;
    for (const LevelPair& pair : spec.pairs) {
        const LevelMoments hi = level_moments(p, pair.high);
        const LevelMoments lo = level_moments(p, pair.low);
        for (const auto& [m, lev] : {std::pair{hi, pair.high}, std::pair{lo, pair.low}}) {
            if (m.count < spec.min_count) {
                throw InputError("treatment level " + std::to_string(lev.value) + " has " + std::to_string(m.count) +
                                 " positive outcomes, fewer than " + std::to_string(spec.min_count));
            }
        }
        const double gap = pair.high.value - pair.low.value;
        Evaluation e;
        e.d = pair.high.value;
        e.d_star = pair.low.value;
        e.estimate = (hi.mean - lo.mean) / gap;
        e.se = std::sqrt(hi.var / hi.count + lo.var / lo.count) / gap;
        e.count_d = hi.count;
        e.count_d_star = lo.count;
        out.push_back(e);
    }
    return out;
}

// Coefficients of X in E(Y | D, X, Y > 0) = g(D) + X' delta, with g a
// quartic in standardized D.
Eigen::VectorXd covariate_effect(const Positives& p) {
    const Eigen::Index n = p.d.size(), k = p.x.cols();
    const double centre = p.d.mean();
    const double scale = std::sqrt((p.d.array() - centre).square().mean());
    if (!(scale > 0.0)) throw InputError("treatment has no spread among positive outcomes");
    Eigen::MatrixXd design(n, kSeriesDegree + 1 + k);
    const Eigen::ArrayXd t = (p.d.array() - centre) / scale;
    design.col(0).setOnes();
    for (int j = 1; j <= kSeriesDegree; ++j) design.col(j) = design.col(j - 1).array() * t;
    design.rightCols(k) = p.x;
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < design.cols()) throw InputError("covariates are collinear with the treatment series");
    return qr.solve(p.y).tail(k);
}

struct SlopeFit {
    double slope = 0.0;
    double se = 0.0;
};

// Slope of the local polynomial at v with a heteroskedasticity-robust SE
// from the local residuals.
SlopeFit local_slope(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double v, double h, int degree) {
    const Eigen::MatrixXd k = local_poly::equivalent_kernel(x, v, h, degree);
    const Eigen::VectorXd coef = k * y;
    const Eigen::ArrayXd u = x.array() - v;
    Eigen::ArrayXd fitted = Eigen::ArrayXd::Constant(x.size(), coef[degree]);
    for (int j = degree - 1; j >= 0; --j) fitted = fitted * u + coef[j];
    const Eigen::ArrayXd resid = y.array() - fitted;
    return {coef[1], std::sqrt((k.row(1).transpose().array().square() * resid.square()).sum())};
}

std::vector<Evaluation> continuous_evaluations(const data::Sample& s, const ContinuousSpec& spec,
                                               const Eigen::VectorXd& grid, double h, Eigen::VectorXd* effect) {
    Positives p = positives(s, spec.use_covariates);
    if (spec.use_covariates) {
        const Eigen::VectorXd delta = covariate_effect(p);
        p.y -= p.x * delta;
        if (effect) *effect = delta;
    }
    std::vector<Evaluation> out;
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        const SlopeFit quad = local_slope(p.d, p.y, grid[g], h, 2);
        const SlopeFit cubic = local_slope(p.d, p.y, grid[g], h, 3);
        Evaluation e;
        e.d = grid[g];
        e.estimate = quad.slope;
        e.se = quad.se;
        e.rbc_estimate = cubic.slope;
        e.rbc_se = cubic.se;
        e.count_d = static_cast<int>(p.d.size());
        out.push_back(e);
    }
    return out;
}

void set_bound(MtsBound& b) {
    if (b.evaluations.empty()) throw InputError("no evaluation points");
    const double sg = sign_of(b.direction);
    b.binding = 0;
    for (std::size_t i = 1; i < b.evaluations.size(); ++i) {
        if (sg * b.evaluations[i].estimate > sg * b.evaluations[b.binding].estimate) b.binding = i;
    }
    b.bound = b.evaluations[b.binding].estimate;
}

void require_boot(const BootstrapOptions& boot) {
    if (boot.reps < 200) throw InputError("at least 200 bootstrap replications are required");
    if (!(boot.alpha > 0.0 && boot.alpha <= 0.5)) throw InputError("alpha must lie in (0, 0.5]");
}

// theta/se are the centring estimates and their SEs; replicate(rows) returns
// the bootstrap estimates at the same evaluation points.
template <class Replicate>
void attach_confidence(MtsBound& b, const data::Sample& s, const Eigen::VectorXd& theta, const Eigen::VectorXd& se,
                       const BootstrapOptions& boot, Replicate&& replicate) {
    if ((se.array() <= 0.0).any() || !se.allFinite()) {
        throw NumericalError("bootstrap: an evaluation point has zero standard error");
    }
    const double sg = sign_of(b.direction);
    std::vector<double> sup(static_cast<std::size_t>(boot.reps), std::numeric_limits<double>::quiet_NaN());
    parallel::for_each(static_cast<std::size_t>(boot.reps), boot.threads, [&](std::size_t r) {
        auto eng = rng::make_stream(boot.seed, {rng::tag(rng::Purpose::bootstrap), static_cast<std::uint64_t>(r)});
        std::uniform_int_distribution<Eigen::Index> pick(0, s.n() - 1);
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(s.n()));
        for (auto& i : rows) i = pick(eng);
        try {
            const Eigen::VectorXd star = replicate(s.subset(rows));
            sup[r] = (sg * (star - theta).array() / se.array()).maxCoeff();
        } catch (const InputError&) {
        } catch (const NumericalError&) {
        }
    });
    std::vector<double> ok;
    for (double v : sup) {
        if (std::isfinite(v)) ok.push_back(v);
    }
    b.boot_reps = boot.reps;
    b.boot_failures = boot.reps - static_cast<int>(ok.size());
    if (b.boot_failures * 10 > boot.reps) {
        throw NumericalError("bootstrap: " + std::to_string(b.boot_failures) + " of " + std::to_string(boot.reps) +
                             " replications failed");
    }
    std::sort(ok.begin(), ok.end());
    if (ok.front() == ok.back()) throw NumericalError("bootstrap: degenerate replicate distribution");
    b.ci_critical = std::max(0.0, data::quantile_sorted(ok, 1.0 - boot.alpha));
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index g = 0; g < theta.size(); ++g) best = std::max(best, sg * theta[g] - b.ci_critical * se[g]);
    b.ci_limit = sg * std::min(best, sg * b.bound);
    b.ci_alpha = boot.alpha;
    b.seed = boot.seed;
}

Eigen::VectorXd estimates_of(const std::vector<Evaluation>& ev, bool rbc) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(ev.size()));
    for (std::size_t i = 0; i < ev.size(); ++i) out[static_cast<Eigen::Index>(i)] = rbc ? ev[i].rbc_estimate : ev[i].estimate;
    return out;
}

Eigen::VectorXd ses_of(const std::vector<Evaluation>& ev, bool rbc) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(ev.size()));
    for (std::size_t i = 0; i < ev.size(); ++i) out[static_cast<Eigen::Index>(i)] = rbc ? ev[i].rbc_se : ev[i].se;
    return out;
}

}  // namespace

Level exact_level(double d) { return Level{d, d, d, false}; }

std::vector<Level> quantile_levels(const data::Sample& s, int bins) {
    if (bins < 2) throw InputError("at least two treatment bins are required");
    const Positives p = positives(s, false);
    if (p.d.size() < bins) throw InputError("fewer positive outcomes than treatment bins");
    std::vector<double> cuts;
    for (int b = 1; b < bins; ++b) {
        const double c = data::quantile(p.d, static_cast<double>(b) / bins);
        if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
    }
    std::vector<Level> levels;
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b <= cuts.size(); ++b) {
        Level l;
        l.lo = b == 0 ? -inf : cuts[b - 1];
        l.hi = b == cuts.size() ? inf : cuts[b];
        l.lo_open = b > 0;
        double sum = 0.0;
        int count = 0;
        for (Eigen::Index i = 0; i < p.d.size(); ++i) {
            if (l.contains(p.d[i])) sum += p.d[i], ++count;
        }
        if (count == 0) continue;
        l.value = sum / count;
        levels.push_back(l);
    }
    return levels;
}

std::vector<LevelPair> adjacent_pairs(const std::vector<Level>& levels) {
    std::vector<Level> sorted(levels);
    std::sort(sorted.begin(), sorted.end(), [](const Level& a, const Level& b) { return a.value < b.value; });
    std::vector<LevelPair> out;
    for (std::size_t i = 1; i < sorted.size(); ++i) out.push_back({sorted[i], sorted[i - 1]});
    return out;
}

std::vector<LevelPair> all_pairs(const std::vector<Level>& levels) {
    std::vector<Level> sorted(levels);
    std::sort(sorted.begin(), sorted.end(), [](const Level& a, const Level& b) { return a.value < b.value; });
    std::vector<LevelPair> out;
    for (std::size_t i = 0; i < sorted.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) out.push_back({sorted[i], sorted[j]});
    return out;
}

Eigen::VectorXd default_grid(const data::Sample& s, int points) {
    if (points < 1) throw InputError("grid needs at least one point");
    const Positives p = positives(s, false);
    if (p.d.size() < 2) throw InputError("too few positive outcomes for a grid");
    const double lo = data::quantile(p.d, 0.05), hi = data::quantile(p.d, 0.95);
    if (points == 1) return Eigen::VectorXd::Constant(1, 0.5 * (lo + hi));
    return Eigen::VectorXd::LinSpaced(points, lo, hi);
}

MtsBound mts_bound_discrete(const data::Sample& s, const DiscreteSpec& spec) {
    if (spec.pairs.empty()) throw InputError("no treatment pairs");
    for (const auto& pair : spec.pairs) {
        if (!(pair.high.value > pair.low.value)) throw InputError("each pair needs d > d*");
    }
    MtsBound b;
    b.direction = spec.direction;
    b.evaluations = discrete_evaluations(s, spec);
    set_bound(b);
    return b;
}

MtsBound mts_bound_continuous(const data::Sample& s, const ContinuousSpec& spec) {
    if (spec.use_covariates && s.p() == 0) throw InputError("covariates requested but the sample has none");
    const Positives p = positives(s, false);
    if (p.d.size() < kMinPositiveContinuous) {
        throw InputError("the continuous bound needs at least " + std::to_string(kMinPositiveContinuous) +
                         " positive outcomes, got " + std::to_string(p.d.size()));
    }
    const Eigen::VectorXd grid = spec.grid.size() > 0 ? spec.grid : default_grid(s);
    const double lo = data::quantile(p.d, 0.05), hi = data::quantile(p.d, 0.95);
    const double tol = 1e-12 * std::max(1.0, hi - lo);
    if (grid.minCoeff() < lo - tol || grid.maxCoeff() > hi + tol) {
        throw InputError("grid points must lie between the 5th and 95th percentile of the treatment");
    }
    MtsBound b;
    b.direction = spec.direction;
    b.continuous = true;
    if (spec.bandwidth > 0.0) {
        b.bandwidth = spec.bandwidth;
    } else {
        Positives q = positives(s, spec.use_covariates);
        if (spec.use_covariates) q.y -= q.x * covariate_effect(q);
        b.bandwidth = local_poly::rot_bandwidth(q.d, q.y, 2, 1);
    }
    b.evaluations = continuous_evaluations(s, spec, grid, b.bandwidth, &b.covariate_effect);
    set_bound(b);
    return b;
}

MtsBound bound_confidence(const data::Sample& s, const DiscreteSpec& spec, const BootstrapOptions& boot) {
    require_boot(boot);
    MtsBound b = mts_bound_discrete(s, spec);
    DiscreteSpec loose = spec;
    loose.min_count = 2;
    attach_confidence(b, s, estimates_of(b.evaluations, false), ses_of(b.evaluations, false), boot,
                      [&](const data::Sample& star) { return estimates_of(discrete_evaluations(star, loose), false); });
    return b;
}

MtsBound bound_confidence(const data::Sample& s, const ContinuousSpec& spec, const BootstrapOptions& boot) {
    require_boot(boot);
    MtsBound b = mts_bound_continuous(s, spec);
    Eigen::VectorXd grid(static_cast<Eigen::Index>(b.evaluations.size()));
    for (std::size_t i = 0; i < b.evaluations.size(); ++i) grid[static_cast<Eigen::Index>(i)] = b.evaluations[i].d;
    attach_confidence(b, s, estimates_of(b.evaluations, true), ses_of(b.evaluations, true), boot,
                      [&](const data::Sample& star) {
                          return estimates_of(continuous_evaluations(star, spec, grid, b.bandwidth, nullptr), true);
                      });
    return b;
}

}  // namespace tobit::bounds
