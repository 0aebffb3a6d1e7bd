#include "fmo/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "fmo/errors.hpp"
#include "fmo/kernels.hpp"
#include "fmo/projection.hpp"

namespace fmo {

namespace {

constexpr double kFreePassDose = 1e6;  // sentinel marking voxels exempt this iteration

std::vector<std::int64_t> order_by_dose(std::span<const double> dose, bool ascending) {
    std::vector<std::int64_t> idx(dose.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
        const double da = dose[static_cast<std::size_t>(a)];
        const double db = dose[static_cast<std::size_t>(b)];
        if (da != db) return ascending ? da < db : da > db;
        return a < b;
    });
    return idx;
}

}  // namespace

SolveReport solve_penalty_iterative(const ProblemSpec& problem, const SolverConfig& scfg,
                                    const PenaltyIterOptions& options) {
    const auto t_start = std::chrono::steady_clock::now();
    const auto views = constraint_views(problem);
    const auto objs = objective_views(problem);
    const std::size_t m = static_cast<std::size_t>(problem.beamlet_count);

    // Step size from the full quadratic; the hinge Hessian is a principal
    // restriction of it, so 1/L is a valid step for every assignment.
    QuadraticObjective full(problem.beamlet_count, problem.lambda);
    for (const auto& ov : objs) {
        full.add_term(ov.objective->alpha / static_cast<double>(ov.n), ov.matrix,
                      ov.objective->d);
    }
    for (const auto& cv : views) {
        full.add_term(cv.constraint->alpha / static_cast<double>(cv.n), cv.matrix,
                      cv.constraint->d);
    }
    const double lips = lipschitz_upper_bound(full, scfg.seed);
    const double step = options.step_scale / lips;

    // PTV + ridge piece reused for values and gradients.
    QuadraticObjective ptv_only(problem.beamlet_count, problem.lambda);
    for (const auto& ov : objs) {
        ptv_only.add_term(ov.objective->alpha / static_cast<double>(ov.n), ov.matrix,
                          ov.objective->d);
    }

    SolveReport rep;
    rep.method = "penalty-iter";
    rep.epsilon = options.tol;
    for (const auto& v : views) rep.caps.push_back(v.max_violations);

    std::vector<double> x = initialize(problem, scfg).x;

    std::vector<std::vector<double>> assigned(views.size());
    std::vector<std::vector<double>> assigned_prev;
    std::vector<double> grad(m), gpart(m), dose, hinge;

    rep.status = SolveStatus::MaxItersExceeded;
    for (int iter = 0; iter < options.max_iters; ++iter) {
        // Reassign thresholds from the sorted doses.
        for (std::size_t j = 0; j < views.size(); ++j) {
            const auto& cv = views[j];
            dose.resize(static_cast<std::size_t>(cv.n));
            kernels::spmv(*cv.matrix, x, dose);
            const bool upper = cv.constraint->direction == ConstraintDirection::Upper;
            const auto order = order_by_dose(dose, /*ascending=*/!upper);
            assigned[j] = cv.constraint->d;
            // The cap highest (upper) or lowest (lower) doses get a free pass.
            for (std::int64_t r = cv.n - cv.max_violations; r < cv.n; ++r) {
                const auto v = static_cast<std::size_t>(order[static_cast<std::size_t>(r)]);
                assigned[j][v] = upper ? kFreePassDose : -kFreePassDose;
            }
        }

        // One projected gradient step of the hinge objective.
        double value = ptv_only.value_and_gradient(x, grad);
        for (std::size_t j = 0; j < views.size(); ++j) {
            const auto& cv = views[j];
            const double scale = cv.constraint->alpha / static_cast<double>(cv.n);
            dose.resize(static_cast<std::size_t>(cv.n));
            kernels::spmv(*cv.matrix, x, dose);
            hinge.assign(dose.size(), 0.0);
            double ss = 0.0;
            const bool upper = cv.constraint->direction == ConstraintDirection::Upper;
            for (std::size_t i = 0; i < dose.size(); ++i) {
                const double e = upper ? dose[i] - assigned[j][i] : assigned[j][i] - dose[i];
                if (e > 0.0) {
                    hinge[i] = upper ? e : -e;
                    ss += e * e;
                }
            }
            value += 0.5 * scale * ss;
            kernels::spmv_transpose(*cv.matrix, hinge, gpart);
            for (std::size_t i = 0; i < m; ++i) grad[i] += scale * gpart[i];
        }

        rep.g_history.push_back(value);
        rep.violation_history.push_back(dose_violations(problem, x));
        if (scfg.record_iterates) rep.w_history.push_back(assigned);

        double dx = 0.0, xnorm = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double xn = std::max(0.0, x[i] - step * grad[i]);
            const double e = xn - x[i];
            dx += e * e;
            xnorm += xn * xn;
            x[i] = xn;
        }
        rep.outer_iters = iter + 1;
        rep.final_err = std::sqrt(dx);

        const bool stable = iter > 0 && assigned == assigned_prev;
        assigned_prev = assigned;
        // fluence stability is judged relative to its own magnitude
        if (stable && rep.final_err <= options.tol * (1.0 + std::sqrt(xnorm))) {
            rep.status = SolveStatus::Converged;
            break;
        }
    }

    rep.x = std::move(x);
    rep.structure_dose = structure_doses(problem, rep.x);
    rep.final_violations = dose_violations(problem, rep.x);
    rep.termination = rep.status == SolveStatus::Converged
                          ? "assignment and fluence stabilized"
                          : "iteration limit reached";
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

namespace {

// One slack group: a structure's upper (or lower) constraints combined into a
// single dose-space term with slack, per eq-style stacking.
struct SlackGroup {
    std::size_t structure_index;
    const SparseMatrix* matrix;
    std::int64_t n;
    bool upper;
    double alpha;
    CombinedDoseSet set;
    std::vector<double> y0;       // per-voxel initial dose variable
    std::int64_t slack_offset;    // column offset of this group's slacks
    SparseMatrix stacked;         // [A | +/-I] in the stacked variable
};

SparseMatrix widen(const SparseMatrix& a, std::int64_t total_cols) {
    auto trips = a.to_triplets();
    return SparseMatrix::from_triplets(a.rows(), total_cols, std::move(trips));
}

SparseMatrix stack_with_identity(const SparseMatrix& a, std::int64_t total_cols,
                                 std::int64_t offset, double sign) {
    auto trips = a.to_triplets();
    for (std::int64_t i = 0; i < a.rows(); ++i) {
        trips.push_back({i, offset + i, sign});
    }
    return SparseMatrix::from_triplets(a.rows(), total_cols, std::move(trips));
}

// Exact projection of `target` onto {y feasible, y >= floor} for one upper
// dose-level constraint (mirrored for lower with a ceiling). Coordinates the
// floor already pushes past the level are forced violators; the remaining
// budget goes to the targets that gain the most, which freezes the violator
// set once the cap fills.
void monotone_level_update(std::span<const double> target, std::span<double> y, bool upper,
                           double level, std::int64_t cap) {
    const std::size_t n = target.size();
    std::int64_t forced = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool f = upper ? y[i] > level : y[i] < level;
        if (f) ++forced;
    }
    std::int64_t budget = std::max<std::int64_t>(0, cap - forced);

    std::vector<std::int64_t> candidates;
    for (std::size_t i = 0; i < n; ++i) {
        const bool f = upper ? y[i] > level : y[i] < level;
        const bool wants = upper ? target[i] > level : target[i] < level;
        if (!f && wants) candidates.push_back(static_cast<std::int64_t>(i));
    }
    std::sort(candidates.begin(), candidates.end(), [&](std::int64_t a, std::int64_t b) {
        const double ga = std::fabs(target[static_cast<std::size_t>(a)] - level);
        const double gb = std::fabs(target[static_cast<std::size_t>(b)] - level);
        return ga != gb ? ga > gb : a < b;
    });

    std::vector<bool> allowed(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        allowed[i] = upper ? y[i] > level : y[i] < level;  // forced violators stay
    }
    for (std::int64_t k = 0; k < budget && k < static_cast<std::int64_t>(candidates.size());
         ++k) {
        allowed[static_cast<std::size_t>(candidates[static_cast<std::size_t>(k)])] = true;
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (upper) {
            const double t = allowed[i] ? target[i] : std::min(target[i], level);
            y[i] = std::max(t, y[i]);  // monotone floor
        } else {
            const double t = allowed[i] ? target[i] : std::max(target[i], level);
            y[i] = std::min(t, y[i]);  // monotone ceiling
        }
    }
}

}  // namespace

SolveReport solve_slack_greedy(const ProblemSpec& problem, const SolverConfig& scfg,
                               const SlackGreedyOptions& options) {
    const auto t_start = std::chrono::steady_clock::now();
    const auto views = constraint_views(problem);
    const std::size_t m = static_cast<std::size_t>(problem.beamlet_count);

    // Group constraints per structure and direction.
    std::vector<SlackGroup> groups;
    for (std::size_t s = 0; s < structure_count(problem); ++s) {
        for (const bool upper : {true, false}) {
            SlackGroup g;
            g.structure_index = s;
            g.upper = upper;
            g.alpha = 0.0;
            for (const auto& cv : views) {
                if (cv.structure_index != s) continue;
                const bool cv_upper = cv.constraint->direction == ConstraintDirection::Upper;
                if (cv_upper != upper) continue;
                g.matrix = cv.matrix;
                g.n = cv.n;
                g.set.n = cv.n;
                g.set.constraints.push_back({cv.constraint->direction, cv.constraint->d.front(),
                                             cv.max_violations});
                g.alpha = std::max(g.alpha, cv.constraint->alpha);
                if (g.y0.empty()) {
                    g.y0 = cv.constraint->d;
                } else {
                    // several thresholds: start at the most binding one
                    for (std::size_t i = 0; i < g.y0.size(); ++i) {
                        g.y0[i] = upper ? std::min(g.y0[i], cv.constraint->d[i])
                                        : std::max(g.y0[i], cv.constraint->d[i]);
                    }
                }
            }
            if (!g.set.constraints.empty()) groups.push_back(std::move(g));
        }
    }

    std::int64_t total = problem.beamlet_count;
    for (auto& g : groups) {
        g.slack_offset = total;
        total += g.n;
    }

    // Stacked objective: PTV terms see only x, group terms tie x and s_j.
    QuadraticObjective stacked(total, problem.lambda, problem.beamlet_count);
    std::vector<SparseMatrix> owned;
    owned.reserve(objective_views(problem).size() + groups.size());
    for (const auto& ov : objective_views(problem)) {
        owned.push_back(widen(*ov.matrix, total));
    }
    for (const auto& g : groups) {
        owned.push_back(stack_with_identity(*g.matrix, total, g.slack_offset, g.upper ? 1.0 : -1.0));
    }
    std::size_t owned_idx = 0;
    for (const auto& ov : objective_views(problem)) {
        stacked.add_term(ov.objective->alpha / static_cast<double>(ov.n), &owned[owned_idx++],
                         ov.objective->d);
    }
    std::vector<std::size_t> group_terms;
    for (const auto& g : groups) {
        group_terms.push_back(stacked.add_term(g.alpha / static_cast<double>(g.n),
                                               &owned[owned_idx++], g.y0));
    }
    const double lips = lipschitz_upper_bound(stacked, scfg.seed);

    SolveReport rep;
    rep.method = "slack-greedy";
    rep.epsilon = options.y_tol;
    for (const auto& v : views) rep.caps.push_back(v.max_violations);

    std::vector<std::vector<double>> y;
    for (const auto& g : groups) y.push_back(g.y0);

    std::vector<double> v(static_cast<std::size_t>(total), 0.0);
    {
        auto x0 = initialize(problem, scfg).x;
        std::copy(x0.begin(), x0.end(), v.begin());
    }

    NnlsOptions nnls_opt;
    nnls_opt.tol = scfg.inner_tol;
    nnls_opt.max_iters =
        scfg.inner_max_iters > 0 ? scfg.inner_max_iters : static_cast<int>(50 * total);
    nnls_opt.lipschitz = lips;
    nnls_opt.seed = scfg.seed;

    std::vector<double> dose, target;
    rep.status = SolveStatus::MaxItersExceeded;
    for (int iter = 0; iter < options.max_iters; ++iter) {
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            stacked.set_target(group_terms[gi], y[gi]);
        }
        auto inner = solve_nnls(stacked, v, nnls_opt);
        v = std::move(inner.x);
        rep.g_history.push_back(inner.objective);

        std::span<const double> x(v.data(), m);
        rep.violation_history.push_back(dose_violations(problem, x));

        // Monotone y-update: projection onto the structure's dose set
        // intersected with {y >= y_prev} (or <= for lower groups). With a
        // single level per group this is exact and freezes the violator set
        // once the cap fills; several levels fall back to the sequential
        // clamp followed by the monotone bound.
        double dy = 0.0;
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            auto& g = groups[gi];
            dose.resize(static_cast<std::size_t>(g.n));
            kernels::spmv(*g.matrix, x, dose);
            target.resize(dose.size());
            const double* s = v.data() + g.slack_offset;
            for (std::size_t i = 0; i < dose.size(); ++i) {
                target[i] = g.upper ? dose[i] + s[i] : dose[i] - s[i];
            }
            auto y_new = y[gi];
            if (g.set.constraints.size() == 1) {
                monotone_level_update(target, y_new, g.upper, g.set.constraints[0].level,
                                      g.set.constraints[0].max_violations);
            } else {
                const auto proj = project_combined(target, g.set);
                for (std::size_t i = 0; i < proj.size(); ++i) {
                    y_new[i] = g.upper ? std::max(proj[i], y_new[i])
                                       : std::min(proj[i], y_new[i]);
                }
            }
            for (std::size_t i = 0; i < y_new.size(); ++i) {
                const double e = y_new[i] - y[gi][i];
                dy += e * e;
            }
            y[gi] = std::move(y_new);
        }
        if (scfg.record_iterates) rep.w_history.push_back(y);
        rep.outer_iters = iter + 1;
        rep.final_err = std::sqrt(dy);
        if (rep.final_err <= options.y_tol && inner.status == SolveStatus::Converged) {
            rep.status = SolveStatus::Converged;
            break;
        }
    }

    rep.x.assign(v.begin(), v.begin() + static_cast<std::int64_t>(m));
    rep.structure_dose = structure_doses(problem, rep.x);
    rep.final_violations = dose_violations(problem, rep.x);
    rep.final_w = std::move(y);
    rep.termination = rep.status == SolveStatus::Converged ? "dose variables stabilized"
                                                           : "iteration limit reached";
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

std::vector<std::vector<std::int64_t>> select_subvolumes(const ProblemSpec& problem,
                                                         std::span<const double> x) {
    const auto views = constraint_views(problem);
    std::vector<std::vector<std::int64_t>> out(views.size());
    std::vector<double> dose;
    for (std::size_t j = 0; j < views.size(); ++j) {
        const auto& cv = views[j];
        dose.resize(static_cast<std::size_t>(cv.n));
        kernels::spmv(*cv.matrix, x, dose);
        const bool upper = cv.constraint->direction == ConstraintDirection::Upper;
        // Upper constraints bound the lowest-dose voxels; lower constraints
        // bound the highest-dose ones.
        const auto order = order_by_dose(dose, /*ascending=*/upper);
        const std::int64_t bound_count = cv.n - cv.max_violations;
        out[j].assign(order.begin(), order.begin() + bound_count);
        std::sort(out[j].begin(), out[j].end());
    }
    return out;
}

PolishReport polish(const ProblemSpec& problem, std::span<const double> x_approx,
                    const PolishOptions& options) {
    const auto t_start = std::chrono::steady_clock::now();
    const auto views = constraint_views(problem);
    const auto selection = select_subvolumes(problem, x_approx);

    // Hard bounds, tightened by a hair beyond the QP tolerance so the strict
    // violation counts cannot flip on tolerance-level slack.
    std::vector<Triplet> rows;
    std::vector<double> upper_bounds;
    std::int64_t row = 0;
    for (std::size_t j = 0; j < views.size(); ++j) {
        const auto& cv = views[j];
        const bool upper = cv.constraint->direction == ConstraintDirection::Upper;
        const auto& rp = cv.matrix->row_ptr();
        const auto& ci = cv.matrix->col_idx();
        const auto& vals = cv.matrix->values();
        for (std::int64_t voxel : selection[j]) {
            const double d = cv.constraint->d[static_cast<std::size_t>(voxel)];
            const double margin = 10.0 * options.tol * (1.0 + std::fabs(d));
            const double sign = upper ? 1.0 : -1.0;
            for (std::int64_t k = rp[voxel]; k < rp[voxel + 1]; ++k) {
                rows.push_back({row, ci[static_cast<std::size_t>(k)],
                                sign * vals[static_cast<std::size_t>(k)]});
            }
            upper_bounds.push_back(upper ? d - margin : -(d + margin));
            ++row;
        }
    }

    BoxLinearConstraints cons;
    cons.rows = SparseMatrix::from_triplets(row, problem.beamlet_count, std::move(rows));
    cons.upper = std::move(upper_bounds);

    QuadraticObjective obj(problem.beamlet_count, problem.lambda);
    for (const auto& ov : objective_views(problem)) {
        obj.add_term(ov.objective->alpha / static_cast<double>(ov.n), ov.matrix,
                     ov.objective->d);
    }

    ConstrainedLsOptions ls_opt;
    ls_opt.tol = options.tol;
    ls_opt.max_iters = options.max_iters;

    auto ls = solve_constrained_ls(obj, cons, x_approx, ls_opt);

    PolishReport rep;
    rep.status = ls.status;
    rep.row_violations = std::move(ls.row_violations);
    rep.solve.method = "polish";
    rep.solve.status = ls.status;
    rep.solve.outer_iters = ls.iters;
    rep.solve.final_err = ls.primal_residual;
    rep.solve.x = std::move(ls.x);
    rep.solve.structure_dose = structure_doses(problem, rep.solve.x);
    rep.solve.final_violations = dose_violations(problem, rep.solve.x);
    for (const auto& v : views) rep.solve.caps.push_back(v.max_violations);
    rep.checks = check_original_constraints(problem, rep.solve.x);

    if (rep.status == SolveStatus::Converged) {
        const bool all = std::all_of(rep.checks.begin(), rep.checks.end(),
                                     [](const auto& c) { return c.satisfied; });
        if (!all) rep.status = SolveStatus::Infeasible;
    }
    rep.solve.termination = rep.status == SolveStatus::Converged
                                ? "polished under hard subvolume bounds"
                                : rep.status == SolveStatus::Infeasible
                                      ? "selected subvolumes admit no feasible fluence"
                                      : "iteration limit reached";
    rep.solve.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

double objective_p1(const ProblemSpec& problem, std::span<const double> x) {
    return ptv_ridge_objective(problem, x);
}

}  // namespace fmo
