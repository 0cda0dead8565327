#include "tobit/momtest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "tobit/errors.hpp"
#include "tobit/local_poly.hpp"
#include "tobit/parallel.hpp"
#include "tobit/rng.hpp"

namespace tobit::momtest {
namespace {

using equalities::Cell;
using equalities::Partition;

constexpr int kChunk = 64;
constexpr int kMinCellForGrid = 30;
constexpr std::size_t kMaxDiscreteSupport = 20;

void require_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha <= 0.5)) throw InputError("alpha must lie in (0, 0.5]");
}

void require_draws(int draws) {
    if (draws < 200) throw InputError("at least 200 simulation draws are required");
}

void require_grid(const MomentPanel& panel, const Grid& grid) {
    if (static_cast<Eigen::Index>(grid.points.size()) != panel.equalities()) {
        throw InputError("grid does not match the moment panel");
    }
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Inputs of the multinomial null process.
struct CellDraws {
    std::vector<Eigen::Index> offset;  // first row of each equality, plus the end
    RowMatrix kernel_t;                // n x rows equivalent kernel weights
    Eigen::VectorXd centre;            // per row, sum_i l_i p_i
    Eigen::VectorXd scale;             // per row, standard deviation of the draws
    RowMatrix cumulative;              // n x J running cell probabilities
    // Estimation effect: theta* -= grads * vcov * (sum_i c_i,k / p_i,k + remainder * xi).
    Eigen::MatrixXd grads, vcov, remainder;
    std::vector<const Eigen::MatrixXd*> score_cov;
};

// Estimates, standard errors and a factor of the correlation of the
// estimates across every (equality, grid point), computed once per panel.
struct Prepared {
    Eigen::Index n = 0;
    std::vector<Eigen::Index> equality;  // per row
    Eigen::VectorXd v, theta, se;
    Eigen::MatrixXd factor;  // rows x m; factor * xi has the estimates' correlation
    std::vector<double> bandwidths;
    std::optional<CellDraws> cells;
};

struct RowEstimate {
    double theta = 0.0;
    double var = 0.0;
};

bool use_model_variance(const MomentPanel& panel, VarianceSource source) {
    return source == VarianceSource::model && panel.implied.size() > 0;
}

// Local linear fit at v. Fills the equivalent kernel row, the score row
// l_i * eps_i (local residuals eps_i = W_i - a - b (V_i - v)) net of the
// estimation effect, and the derivative g of the estimate in the plugged-in
// parameters.
RowEstimate local_row(const MomentPanel& panel, Eigen::Index j, double v, double h, bool model_var,
                      Eigen::Ref<Eigen::RowVectorXd> kernel, Eigen::Ref<Eigen::RowVectorXd> score,
                      Eigen::Ref<Eigen::RowVectorXd> g, Eigen::Ref<Eigen::RowVectorXd> c) {
    const Eigen::VectorXd& x = panel.conditioning;
    const auto w = panel.values.col(2 * j);
    Eigen::MatrixXd kern;
    if (h > 0.0) {
        kern = local_poly::equivalent_kernel(x, v, h, 1);
    } else {
        // Discrete support: the cell mean among observations at v.
        kern = Eigen::MatrixXd::Zero(2, x.size());
        const Eigen::Index at = (x.array() == v).count();
        if (at == 0) throw NumericalError("no observations at the evaluation point");
        kern.row(0) = (x.array() == v).cast<double>().matrix().transpose() / static_cast<double>(at);
    }
    kernel = kern.row(0);
    const double a = kern.row(0).dot(w);
    const double b = kern.row(1).dot(w);
    double correction = 0.0;
    if (panel.has_estimation_effect()) {
        const auto jj = static_cast<std::size_t>(j);
        g = kern.row(0) * panel.prob_gradient[jj];
        c = panel.score_cov.empty() ? Eigen::RowVectorXd(g) : Eigen::RowVectorXd(kern.row(0) * panel.score_cov[jj]);
        // Var(A - g'(theta-hat - theta)) = Var(A) - 2 g'V c + g'V g.
        const Eigen::RowVectorXd gv = g * panel.param_vcov;
        correction = 2.0 * gv.dot(c) - gv.dot(g);
    }
    RowEstimate est{a, 0.0};
    if (model_var) {
        // Null variance p(1 - p) per observation, less the part absorbed by
        // the estimated parameters.
        const Eigen::ArrayXd p = panel.implied.col(j).array();
        est.var = (kern.row(0).array().square().transpose() * p * (1.0 - p)).sum() - correction;
    } else {
        const Eigen::ArrayXd eps = w.array() - a - b * (x.array() - v);
        score = (kern.row(0).array() * eps.transpose()).matrix();
        if (panel.has_estimation_effect()) score -= (panel.influence * g.transpose()).transpose();
        est.var = score.squaredNorm();
    }
    est.var = std::max(est.var, 0.0);
    return est;
}

// Model probabilities that cover every outcome exactly once.
bool tiles(const MomentPanel& panel) {
    if (panel.implied.size() == 0 || panel.equalities() < 2) return false;
    return ((panel.implied.rowwise().sum().array() - 1.0).abs() < 1e-8).all();
}

Prepared prepare(const MomentPanel& panel, const Grid& grid, const SimulationOptions& sim) {
    require_grid(panel, grid);
    Prepared pr;
    pr.n = panel.n();
    const Eigen::Index J = panel.equalities();
    pr.bandwidths.resize(static_cast<std::size_t>(J));
    parallel::for_each(static_cast<std::size_t>(J), sim.threads,
                       [&](std::size_t j) { pr.bandwidths[j] = default_bandwidth(panel, 2 * static_cast<Eigen::Index>(j)); });

    std::vector<Eigen::Index> offset(static_cast<std::size_t>(J) + 1, 0);
    for (Eigen::Index j = 0; j < J; ++j) offset[j + 1] = offset[j] + grid.points[j].size();
    const Eigen::Index rows = offset.back();
    pr.equality.resize(static_cast<std::size_t>(rows));
    pr.v.resize(rows);
    pr.theta.resize(rows);
    pr.se.resize(rows);
    for (Eigen::Index j = 0; j < J; ++j) {
        for (Eigen::Index g = 0; g < grid.points[j].size(); ++g) {
            pr.equality[offset[j] + g] = j;
            pr.v[offset[j] + g] = grid.points[j][g];
        }
    }

    const bool model_var = use_model_variance(panel, sim.variance);
    const Eigen::Index q = panel.has_estimation_effect() ? panel.param_vcov.rows() : 0;
    RowMatrix kernel(rows, pr.n), score(model_var ? 0 : rows, pr.n), grads(rows, q), covs(rows, q);
    Eigen::VectorXd var(rows);
    parallel::for_each(static_cast<std::size_t>(rows), sim.threads, [&](std::size_t r) {
        const Eigen::Index j = pr.equality[r];
        Eigen::RowVectorXd dummy(pr.n);
        auto srow = model_var ? Eigen::Ref<Eigen::RowVectorXd>(dummy) : Eigen::Ref<Eigen::RowVectorXd>(score.row(r));
        const RowEstimate est =
            local_row(panel, j, pr.v[r], pr.bandwidths[j], model_var, kernel.row(r), srow, grads.row(r), covs.row(r));
        pr.theta[r] = est.theta;
        var[r] = est.var;
    });

    if (!model_var) {
        // Multiplier process: one N(0, 1) weight per observation on the
        // studentized scores.
        for (Eigen::Index r = 0; r < rows; ++r) pr.se[r] = score.row(r).norm();
        pr.factor = score;
        for (Eigen::Index r = 0; r < rows; ++r) {
            if (pr.se[r] > 0.0) pr.factor.row(r) /= pr.se[r];
        }
        return pr;
    }

    if (sim.process == NullProcess::multinomial && tiles(panel)) {
        pr.se = var.cwiseSqrt();
        CellDraws cd;
        cd.offset = offset;
        cd.kernel_t = kernel.transpose();
        cd.centre.resize(rows);
        for (Eigen::Index r = 0; r < rows; ++r) cd.centre[r] = kernel.row(r).dot(panel.implied.col(pr.equality[r]));
        cd.cumulative.resize(pr.n, J);
        for (Eigen::Index i = 0; i < pr.n; ++i) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < J; ++j) cd.cumulative(i, j) = acc += panel.implied(i, j);
        }
        Eigen::MatrixXd spread;
        if (q > 0) {
            cd.grads = grads;
            cd.vcov = panel.param_vcov;
            for (Eigen::Index j = 0; j < J; ++j) {
                const auto jj = static_cast<std::size_t>(j);
                cd.score_cov.push_back(panel.score_cov.empty() ? &panel.prob_gradient[jj] : &panel.score_cov[jj]);
            }
            // Var(score) = V^-1 splits into the part explained by the cell,
            // sum_i sum_k c c' / p, and an independent remainder.
            Eigen::MatrixXd explained = Eigen::MatrixXd::Zero(q, q);
            for (Eigen::Index j = 0; j < J; ++j) {
                const Eigen::ArrayXd p = panel.implied.col(j).array();
                const Eigen::ArrayXd w = (p > 0.0).select(1.0 / p, 0.0);
                const Eigen::MatrixXd& c = *cd.score_cov[static_cast<std::size_t>(j)];
                explained += c.transpose() * w.matrix().asDiagonal() * c;
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ev(panel.param_vcov);
            const double tol = 1e-12 * ev.eigenvalues().cwiseAbs().maxCoeff();
            const Eigen::VectorXd inv = (ev.eigenvalues().array() > tol).select(ev.eigenvalues().cwiseInverse(), 0.0);
            const Eigen::MatrixXd info = ev.eigenvectors() * inv.asDiagonal() * ev.eigenvectors().transpose();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> er(info - explained);
            cd.remainder = er.eigenvectors() * er.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
            spread = explained + cd.remainder * cd.remainder.transpose();
        }
        // Exact variance of each row's draws. It equals the analytic variance
        // unless V^-1 - sum c c' / p is indefinite, as under a misspecified fit.
        cd.scale.resize(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const Eigen::ArrayXd p = panel.implied.col(pr.equality[r]).array();
            double v = (kernel.row(r).array().square().transpose() * p * (1.0 - p)).sum();
            if (q > 0) {
                const Eigen::RowVectorXd gv = grads.row(r) * cd.vcov;
                v += -2.0 * gv.dot(covs.row(r)) + gv * spread * gv.transpose();
            }
            cd.scale[r] = std::sqrt(std::max(v, 0.0));
        }
        pr.cells = std::move(cd);
        return pr;
    }

    // Model-implied covariance of the estimates across rows.
    RowMatrix scaled(rows, pr.n);
    for (Eigen::Index r = 0; r < rows; ++r) {
        scaled.row(r) = kernel.row(r).cwiseProduct(panel.implied.col(pr.equality[r]).transpose());
    }
    Eigen::MatrixXd cov = -(scaled * scaled.transpose());
    for (Eigen::Index j = 0; j < J; ++j) {
        const Eigen::Index r0 = offset[j], m = offset[j + 1] - offset[j];
        cov.block(r0, r0, m, m) += scaled.middleRows(r0, m) * kernel.middleRows(r0, m).transpose();
    }
    if (q > 0) {
        const Eigen::MatrixXd cross = grads * panel.param_vcov * covs.transpose();
        cov -= cross + cross.transpose() - grads * panel.param_vcov * grads.transpose();
    }

    std::vector<Eigen::Index> valid;
    for (Eigen::Index r = 0; r < rows; ++r) {
        pr.se[r] = std::sqrt(std::max(cov(r, r), 0.0));
        if (pr.se[r] > 0.0) valid.push_back(r);
    }
    const Eigen::Index m = static_cast<Eigen::Index>(valid.size());
    pr.factor = Eigen::MatrixXd::Zero(rows, m);
    if (m == 0) return pr;
    Eigen::MatrixXd corr(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = 0; b < m; ++b)
            corr(a, b) = cov(valid[a], valid[b]) / (pr.se[valid[a]] * pr.se[valid[b]]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
    if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of the estimate covariance failed");
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd f = eig.eigenvectors() * root.asDiagonal();
    for (Eigen::Index a = 0; a < m; ++a) pr.factor.row(valid[a]) = f.row(a);
    return pr;
}

// Gaussian process with the estimates' correlation, rows x draws. Draw chunks
// have their own keyed streams, so the result does not depend on the worker
// count.
// Multinomial draws of the null process, studentized, for one chunk.
void draw_cells(const Prepared& pr, int width, rng::Engine& eng, Eigen::Ref<Eigen::MatrixXd> out) {
    const CellDraws& cd = *pr.cells;
    const Eigen::Index rows = pr.theta.size(), J = cd.cumulative.cols();
    const Eigen::Index q = cd.grads.cols();
    Eigen::MatrixXd acc = (-cd.centre).replicate(1, width);
    Eigen::MatrixXd score = Eigen::MatrixXd::Zero(q, width);
    for (Eigen::Index i = 0; i < pr.n; ++i) {
        const auto cum = cd.cumulative.row(i);
        const auto kern = cd.kernel_t.row(i);
        for (int d = 0; d < width; ++d) {
            const double u = rng::uniform_open(eng) * cum[J - 1];
            Eigen::Index k = 0;
            while (k + 1 < J && cum[k] < u) ++k;
            const Eigen::Index r0 = cd.offset[k], m = cd.offset[k + 1] - r0;
            acc.col(d).segment(r0, m) += kern.segment(r0, m).transpose();
            if (q > 0) {
                const double p = k == 0 ? cum[0] : cum[k] - cum[k - 1];
                if (p > 0.0) score.col(d) += cd.score_cov[static_cast<std::size_t>(k)]->row(i).transpose() / p;
            }
        }
    }
    if (q > 0) {
        Eigen::MatrixXd xi(q, width);
        for (int d = 0; d < width; ++d)
            for (Eigen::Index a = 0; a < q; ++a) xi(a, d) = rng::standard_normal(eng);
        acc -= cd.grads * (cd.vcov * (score + cd.remainder * xi));
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (pr.se[r] > 0.0 && cd.scale[r] > 0.0) out.row(r) = acc.row(r) / cd.scale[r];
        else out.row(r).setZero();
    }
}

Eigen::MatrixXd simulate_process(const Prepared& pr, const SimulationOptions& sim) {
    require_draws(sim.draws);
    if (pr.cells) {
        Eigen::MatrixXd out(pr.theta.size(), sim.draws);
        const int chunks = (sim.draws + kChunk - 1) / kChunk;
        parallel::for_each(static_cast<std::size_t>(chunks), sim.threads, [&](std::size_t c) {
            const int first = static_cast<int>(c) * kChunk;
            const int width = std::min(kChunk, sim.draws - first);
            auto eng = rng::make_stream(sim.seed, {rng::tag(rng::Purpose::multiplier), static_cast<std::uint64_t>(c)});
            draw_cells(pr, width, eng, out.middleCols(first, width));
        });
        return out;
    }
    const Eigen::Index rows = pr.factor.rows(), m = pr.factor.cols();
    Eigen::MatrixXd out(rows, sim.draws);
    const int chunks = (sim.draws + kChunk - 1) / kChunk;
    parallel::for_each(static_cast<std::size_t>(chunks), sim.threads, [&](std::size_t c) {
        const int first = static_cast<int>(c) * kChunk;
        const int width = std::min(kChunk, sim.draws - first);
        auto eng = rng::make_stream(sim.seed, {rng::tag(rng::Purpose::multiplier), static_cast<std::uint64_t>(c)});
        Eigen::MatrixXd xi(m, width);
        for (int k = 0; k < width; ++k)
            for (Eigen::Index i = 0; i < m; ++i) xi(i, k) = rng::standard_normal(eng);
        out.middleCols(first, width).noalias() = pr.factor * xi;
    });
    return out;
}

double quantile_of(const std::vector<double>& values, double level) {
    std::vector<double> sorted(values);
    std::sort(sorted.begin(), sorted.end());
    return data::quantile_sorted(sorted, level);
}

// Signed row s = 2r (plus) or 2r + 1 (minus).
struct Selection {
    double k = 0.0;
    std::vector<char> selected;  // per signed row
};

Selection select_rows(const Prepared& pr, const Eigen::MatrixXd& process, bool adaptive) {
    const Eigen::Index rows = pr.theta.size();
    Selection sel;
    sel.selected.assign(static_cast<std::size_t>(2 * rows), 0);
    bool any_valid = false;
    for (Eigen::Index r = 0; r < rows; ++r) any_valid = any_valid || pr.se[r] > 0.0;
    if (!any_valid) throw NumericalError("all moment columns have zero variance");

    std::vector<double> sup_all(static_cast<std::size_t>(process.cols()), -std::numeric_limits<double>::infinity());
    for (Eigen::Index d = 0; d < process.cols(); ++d) {
        double m = -std::numeric_limits<double>::infinity();
        for (Eigen::Index r = 0; r < rows; ++r) {
            if (pr.se[r] > 0.0) m = std::max(m, std::abs(process(r, d)));
        }
        sup_all[static_cast<std::size_t>(d)] = m;
    }
    const double gamma_n = 1.0 - 0.1 / std::log(static_cast<double>(std::max<Eigen::Index>(pr.n, 3)));
    sel.k = quantile_of(sup_all, gamma_n);

    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (!(pr.se[r] > 0.0)) continue;
        best = std::max(best, pr.theta[r] - sel.k * pr.se[r]);
        best = std::max(best, -pr.theta[r] - sel.k * pr.se[r]);
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (!(pr.se[r] > 0.0)) continue;
        const double cut = best - 2.0 * sel.k * pr.se[r];
        sel.selected[2 * r] = !adaptive || pr.theta[r] >= cut;
        sel.selected[2 * r + 1] = !adaptive || -pr.theta[r] >= cut;
    }
    return sel;
}

double kappa_for(const Eigen::MatrixXd& process, const Selection& sel, double alpha) {
    const Eigen::Index rows = process.rows();
    std::vector<double> sup(static_cast<std::size_t>(process.cols()));
    bool any = false;
    for (Eigen::Index d = 0; d < process.cols(); ++d) {
        double m = -std::numeric_limits<double>::infinity();
        for (Eigen::Index r = 0; r < rows; ++r) {
            if (sel.selected[2 * r]) m = std::max(m, process(r, d)), any = true;
            if (sel.selected[2 * r + 1]) m = std::max(m, -process(r, d)), any = true;
        }
        sup[static_cast<std::size_t>(d)] = m;
    }
    if (!any) throw NumericalError("no moment inequality with positive variance survives selection");
    return quantile_of(sup, 1.0 - alpha);
}

TestResult assemble(const MomentPanel& panel, const Prepared& pr, const Selection& sel, double kappa, double alpha,
                    const SimulationOptions& sim) {
    TestResult res;
    res.alpha = alpha;
    res.kappa = kappa;
    res.selection_k = sel.k;
    res.draws = sim.draws;
    res.seed = sim.seed;
    res.bandwidths = pr.bandwidths;
    const Eigen::Index rows = pr.theta.size();
    res.per_cell.reserve(static_cast<std::size_t>(2 * rows));
    double stat = -std::numeric_limits<double>::infinity();
    for (int sign = 0; sign < 2; ++sign) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            CellPoint c;
            c.column = 2 * pr.equality[r] + sign;
            c.label = panel.cell_labels[static_cast<std::size_t>(c.column)];
            c.v = pr.v[r];
            c.theta = sign == 0 ? pr.theta[r] : -pr.theta[r];
            c.se = pr.se[r];
            c.studentized = c.se > 0.0 ? c.theta / c.se : 0.0;
            c.selected = sel.selected[2 * r + sign] != 0;
            stat = std::max(stat, c.theta - kappa * c.se);
            res.per_cell.push_back(std::move(c));
        }
    }
    std::stable_sort(res.per_cell.begin(), res.per_cell.end(),
                     [](const CellPoint& a, const CellPoint& b) { return a.column < b.column; });
    res.statistic = stat;
    res.reject = stat > 0.0;
    return res;
}

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const InputError& e) {
        throw InputError(std::string(stage) + ": " + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(stage) + ": " + e.what());
    }
}

std::vector<std::string> signed_labels(const std::vector<Cell>& cells) {
    std::vector<std::string> out;
    for (const Cell& c : cells) out.push_back(c.label());
    return out;
}

void check_partition_sample(const data::Sample& s, const Partition& p, bool needs_d_cuts) {
    if (s.n() == 0) throw InputError("empty sample");
    if (!needs_d_cuts && !p.d_cuts.empty()) throw InputError("classic moments take an outcome-only partition");
}

}  // namespace

Eigen::Index Grid::size() const {
    Eigen::Index total = 0;
    for (const auto& p : points) total += p.size();
    return total;
}

MomentPanel make_panel(const Eigen::MatrixXd& moments, const Eigen::VectorXd& conditioning,
                       const std::vector<std::string>& labels, Eigen::MatrixXd implied) {
    if (moments.rows() != conditioning.size()) throw InputError("moments and conditioning differ in length");
    if (static_cast<Eigen::Index>(labels.size()) != moments.cols()) throw InputError("one label per equality required");
    if (implied.size() > 0 && (implied.rows() != moments.rows() || implied.cols() != moments.cols())) {
        throw InputError("implied probabilities do not match the moments");
    }
    MomentPanel panel;
    const Eigen::Index J = moments.cols();
    panel.values.resize(moments.rows(), 2 * J);
    for (Eigen::Index j = 0; j < J; ++j) {
        panel.values.col(2 * j) = moments.col(j);
        panel.values.col(2 * j + 1) = -moments.col(j);
        panel.cell_labels.push_back(labels[static_cast<std::size_t>(j)] + " [+]");
        panel.cell_labels.push_back(labels[static_cast<std::size_t>(j)] + " [-]");
    }
    panel.conditioning = conditioning;
    panel.implied = std::move(implied);
    return panel;
}

MomentPanel build_moments_classic(const data::Sample& s, const equalities::ClassicIndex& idx, const Partition& p,
                                  bool use_covariates) {
    check_partition_sample(s, p, false);
    if (use_covariates && idx.alpha_x.size() != s.p()) throw InputError("covariate coefficients do not match the sample");
    const auto cells = p.cells();
    const Eigen::Index n = s.n();
    const Eigen::Index J = static_cast<Eigen::Index>(cells.size());
    Eigen::MatrixXd w(n, J), prob(n, J);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = s.d()[i];
        const double y = s.y()[i];
        const Eigen::VectorXd x = use_covariates ? Eigen::VectorXd(s.x().row(i).transpose()) : Eigen::VectorXd();
        for (Eigen::Index j = 0; j < J; ++j) {
            const Cell& c = cells[static_cast<std::size_t>(j)];
            const double pr = use_covariates ? equalities::classic_implied_prob(idx, d, x, c)
                                             : equalities::classic_implied_prob(idx, d, c);
            prob(i, j) = pr;
            w(i, j) = (c.y.contains(y) ? 1.0 : 0.0) - pr;
        }
    }
    return make_panel(w, s.d(), signed_labels(cells), std::move(prob));
}

MomentPanel build_moments_classic(const data::Sample& s, const estimate::ClassicTobitFit& fit, const Partition& p,
                                  equalities::Scale scale, bool estimation_effect) {
    const bool cov = fit.coef.size() > 2;
    const auto idx = equalities::classic_index(fit, scale);
    MomentPanel panel = build_moments_classic(s, idx, p, cov);
    if (!estimation_effect) return panel;
    const Eigen::Index k = fit.coef.size();
    const Eigen::MatrixXd X = estimate::detail::design(s.d(), cov ? s.x() : Eigen::MatrixXd(s.n(), 0));
    const Eigen::VectorXd mu = X * fit.coef;
    const auto cells = p.cells();
    for (const Cell& c : cells) {
        Eigen::MatrixXd grad(s.n(), k + 1);
        for (Eigen::Index i = 0; i < s.n(); ++i) {
            const auto g = equalities::classic_cell_prob_gradient(mu[i], idx.sigma, c.y);
            grad.row(i).head(k) = g[0] * X.row(i);
            grad(i, k) = g[1];
        }
        if (scale == equalities::Scale::unit) {
            panel.score_cov.push_back(grad);
            grad.col(k).setZero();
        }
        panel.prob_gradient.push_back(std::move(grad));
    }
    panel.param_vcov = fit.vcov;
    panel.influence = estimate::classic_scores(s, fit) * fit.vcov;
    return panel;
}

MomentPanel build_moments_iv(const data::Sample& s, const equalities::IvIndex& idx, const Partition& p,
                             bool use_covariates) {
    check_partition_sample(s, p, true);
    if (!s.has_z()) throw InputError("IV moments need an instrument");
    if (use_covariates && (idx.beta_x.size() != s.p() || idx.gamma_x.size() != s.p())) {
        throw InputError("covariate coefficients do not match the sample");
    }
    const auto cells = p.cells();
    const Eigen::Index n = s.n();
    const Eigen::Index J = static_cast<Eigen::Index>(cells.size());
    Eigen::MatrixXd w(n, J), prob(n, J);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double z = s.z()[i];
        const double y = s.y()[i];
        const double d = s.d()[i];
        const Eigen::VectorXd x = use_covariates ? Eigen::VectorXd(s.x().row(i).transpose()) : Eigen::VectorXd();
        for (Eigen::Index j = 0; j < J; ++j) {
            const Cell& c = cells[static_cast<std::size_t>(j)];
            const double pr = use_covariates ? equalities::iv_implied_prob(idx, z, x, c)
                                             : equalities::iv_implied_prob(idx, z, c);
            prob(i, j) = pr;
            w(i, j) = (c.y.contains(y) && c.d.contains(d) ? 1.0 : 0.0) - pr;
        }
    }
    return make_panel(w, s.z(), signed_labels(cells), std::move(prob));
}

MomentPanel build_moments_iv(const data::Sample& s, const estimate::IvTobitFit& fit, const Partition& p,
                             bool estimation_effect) {
    const bool cov = fit.beta.size() > 2;
    MomentPanel panel = build_moments_iv(s, equalities::iv_index(fit), p, cov);
    if (!estimation_effect) return panel;
    const Eigen::Index k = fit.beta.size();
    const Eigen::MatrixXd X = estimate::detail::design(s.z(), cov ? s.x() : Eigen::MatrixXd(s.n(), 0));
    const Eigen::VectorXd mu_y = X * fit.beta;
    const Eigen::VectorXd mu_d = X * fit.gamma;
    for (const Cell& c : p.cells()) {
        Eigen::MatrixXd grad(s.n(), 2 * k + 3);
        for (Eigen::Index i = 0; i < s.n(); ++i) {
            const auto g = equalities::iv_cell_prob_gradient(mu_y[i], mu_d[i], fit.sigma_w, fit.sigma_v, fit.rho, c);
            grad.row(i).segment(0, k) = g[0] * X.row(i);
            grad.row(i).segment(k, k) = g[1] * X.row(i);
            grad(i, 2 * k) = g[2];
            grad(i, 2 * k + 1) = g[3];
            grad(i, 2 * k + 2) = fit.rho_fixed ? 0.0 : g[4];
        }
        panel.prob_gradient.push_back(std::move(grad));
    }
    panel.param_vcov = fit.vcov;
    panel.influence = estimate::iv_scores(s, fit) * fit.vcov;
    return panel;
}

Grid make_grid(const MomentPanel& panel, int points_per_cell, double min_local_count) {
    if (points_per_cell < 1) throw InputError("grid needs at least one point per cell");
    Grid grid;
    const Eigen::VectorXd& v = panel.conditioning;
    const bool model = panel.implied.size() > 0;
    const std::vector<double> support = discrete_support(v);
    if (!support.empty()) {
        // Every support point, kept when the expected counts of members and
        // non-members there reach min_local_count.
        for (Eigen::Index j = 0; j < panel.equalities(); ++j) {
            std::vector<double> kept;
            for (double s : support) {
                const Eigen::ArrayXd at = (v.array() == s).cast<double>();
                if (at.sum() < 2.0) continue;
                if (model && min_local_count > 0.0) {
                    const Eigen::ArrayXd p = panel.implied.col(j).array();
                    if ((at * p).sum() < min_local_count || (at * (1.0 - p)).sum() < min_local_count) continue;
                }
                kept.push_back(s);
            }
            grid.points.push_back(Eigen::Map<Eigen::VectorXd>(kept.data(), static_cast<Eigen::Index>(kept.size())));
        }
        return grid;
    }
    for (Eigen::Index j = 0; j < panel.equalities(); ++j) {
        std::vector<double> members;
        if (model) {
            for (Eigen::Index i = 0; i < panel.n(); ++i) {
                if (panel.values(i, 2 * j) + panel.implied(i, j) > 0.5) members.push_back(v[i]);
            }
        }
        if (static_cast<int>(members.size()) < kMinCellForGrid) members.assign(v.data(), v.data() + v.size());
        std::sort(members.begin(), members.end());
        const double lo = data::quantile_sorted(members, 0.01);
        const double hi = data::quantile_sorted(members, 0.99);
        Eigen::VectorXd pts = points_per_cell == 1 ? Eigen::VectorXd::Constant(1, 0.5 * (lo + hi))
                                                   : Eigen::VectorXd(Eigen::VectorXd::LinSpaced(points_per_cell, lo, hi));
        if (model && min_local_count > 0.0) {
            // Keep points where the kernel-weighted expected number of cell
            // members and non-members both reach min_local_count.
            const double h = default_bandwidth(panel, 2 * j);
            const Eigen::ArrayXd p = panel.implied.col(j).array();
            std::vector<double> kept;
            for (Eigen::Index g = 0; g < pts.size(); ++g) {
                const Eigen::ArrayXd w = (-0.5 * ((v.array() - pts[g]) / h).square()).exp();
                if ((w * p).sum() >= min_local_count && (w * (1.0 - p)).sum() >= min_local_count) kept.push_back(pts[g]);
            }
            pts = Eigen::Map<Eigen::VectorXd>(kept.data(), static_cast<Eigen::Index>(kept.size()));
        }
        grid.points.push_back(std::move(pts));
    }
    return grid;
}

std::vector<double> discrete_support(const Eigen::VectorXd& v) {
    std::vector<double> values(v.data(), v.data() + v.size());
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    if (values.size() > kMaxDiscreteSupport) values.clear();
    return values;
}

double default_bandwidth(const MomentPanel& panel, Eigen::Index column) {
    if (!discrete_support(panel.conditioning).empty()) return 0.0;
    const double n = static_cast<double>(panel.n());
    // With model probabilities the pilot is fit to the cell indicator: the
    // moment itself has mean zero under the null, so its pilot curvature is
    // noise and the bandwidth would track the fluctuations being tested.
    const Eigen::VectorXd target = panel.implied.size() > 0
                                       ? Eigen::VectorXd(panel.values.col(2 * (column / 2)) + panel.implied.col(column / 2))
                                       : Eigen::VectorXd(panel.values.col(column));
    const double h = local_poly::rot_bandwidth(panel.conditioning, target, 1, 0);
    return h * std::pow(n, 1.0 / 5.0 - 2.0 / 7.0);
}

Curve conditional_mean_curve(const MomentPanel& panel, Eigen::Index column, const Eigen::VectorXd& grid,
                             double bandwidth, VarianceSource source) {
    if (column < 0 || column >= panel.columns()) throw InputError("moment column out of range");
    Curve c;
    c.bandwidth = bandwidth > 0.0 ? bandwidth : default_bandwidth(panel, column);
    c.theta.resize(grid.size());
    c.se.resize(grid.size());
    const double sign = column % 2 == 0 ? 1.0 : -1.0;
    const bool model_var = use_model_variance(panel, source);
    const Eigen::Index q = panel.has_estimation_effect() ? panel.param_vcov.rows() : 0;
    Eigen::RowVectorXd kernel(panel.n()), score(panel.n()), g(q), gc(q);
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const RowEstimate est = local_row(panel, column / 2, grid[i], c.bandwidth, model_var, kernel, score, g, gc);
        c.theta[i] = sign * est.theta;
        c.se[i] = std::sqrt(est.var);
    }
    return c;
}

double critical_value(const MomentPanel& panel, const Grid& grid, double alpha, const SimulationOptions& sim) {
    require_alpha(alpha);
    const Prepared pr = prepare(panel, grid, sim);
    const Eigen::MatrixXd process = simulate_process(pr, sim);
    return kappa_for(process, select_rows(pr, process, sim.adaptive_selection), alpha);
}

Eigen::MatrixXd null_draws(const MomentPanel& panel, const Grid& grid, const SimulationOptions& sim) {
    return simulate_process(prepare(panel, grid, sim), sim);
}

std::vector<TestResult> run_panel_test_multi(const MomentPanel& panel, const Grid& grid,
                                             const std::vector<double>& alphas, const SimulationOptions& sim) {
    if (alphas.empty()) throw InputError("at least one alpha is required");
    for (double a : alphas) require_alpha(a);
    require_draws(sim.draws);
    const Prepared pr = prepare(panel, grid, sim);
    const Eigen::MatrixXd process = simulate_process(pr, sim);
    const Selection sel = select_rows(pr, process, sim.adaptive_selection);
    std::vector<TestResult> out;
    for (double a : alphas) out.push_back(assemble(panel, pr, sel, kappa_for(process, sel, a), a, sim));
    return out;
}

TestResult run_panel_test(const MomentPanel& panel, const Grid& grid, double alpha, const SimulationOptions& sim) {
    return run_panel_test_multi(panel, grid, {alpha}, sim).front();
}

double TestResult::recompute_statistic() const {
    double stat = -std::numeric_limits<double>::infinity();
    for (const auto& c : per_cell) stat = std::max(stat, c.theta - kappa * c.se);
    return stat;
}

TestRun run_test(const data::Sample& s, Model model, const TestOptions& opt) {
    if (opt.alphas.empty()) throw InputError("at least one alpha is required");
    for (double a : opt.alphas) require_alpha(a);
    require_draws(opt.draws);
    if (opt.use_covariates && s.p() == 0) throw InputError("covariates requested but the sample has none");

    TestRun run;
    run.model = model;
    MomentPanel panel;
    if (model == Model::classic) {
        data::require_censoring(s);
        run.classic_fit = staged("estimation", [&] { return estimate::fit_classic_tobit(s, opt.use_covariates, opt.fit); });
        run.partition = staged("partition", [&] { return equalities::build_partition(s, opt.K, 0); });
        panel = staged("moments", [&] {
            return build_moments_classic(s, *run.classic_fit, run.partition, opt.scale, opt.estimation_effect);
        });
    } else {
        if (!s.has_z()) throw InputError("the IV model needs an instrument");
        data::require_censoring(s);
        estimate::IvFitOptions fo;
        static_cast<estimate::FitOptions&>(fo) = opt.fit;
        run.iv_fit = staged("estimation", [&] { return estimate::fit_iv_tobit(s, opt.use_covariates, fo); });
        if (run.iv_fit->weak_first_stage) run.warnings.push_back("weak first stage");
        if (run.iv_fit->boundary) run.warnings.push_back("correlation estimate at the boundary");
        run.partition = staged("partition", [&] { return equalities::build_partition(s, opt.K, opt.Q); });
        panel = staged("moments", [&] {
            return build_moments_iv(s, *run.iv_fit, run.partition, opt.estimation_effect);
        });
    }
    for (const auto& w : run.partition.warnings) run.warnings.push_back(w);

    const Grid grid = staged("grid", [&] { return make_grid(panel, opt.grid_points, opt.min_local_count); });
    if (grid.size() == 0) throw NumericalError("grid: no evaluation point has enough local data");
    SimulationOptions sim;
    sim.draws = opt.draws;
    sim.seed = opt.seed;
    sim.threads = opt.threads;
    sim.adaptive_selection = opt.adaptive_selection;
    sim.process = opt.process;
    run.results = staged("critical value", [&] { return run_panel_test_multi(panel, grid, opt.alphas, sim); });
    return run;
}

}  // namespace tobit::momtest
