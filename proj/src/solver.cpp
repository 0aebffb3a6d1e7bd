#include "fmo/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "fmo/dvh.hpp"
#include "fmo/errors.hpp"
#include "fmo/kernels.hpp"
#include "fmo/projection.hpp"

namespace fmo {

namespace {

void signed_residual(const ConstraintView& v, std::span<const double> dose,
                     std::span<double> out) {
    const auto& d = v.constraint->d;
    if (v.constraint->direction == ConstraintDirection::Upper) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = dose[i] - d[i];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] - dose[i];
    }
}

// Inner target b_j so that ||w_j - r_j(x)||^2 = ||A_j x - b_j||^2.
void inner_target(const ConstraintView& v, std::span<const double> w, std::span<double> out) {
    const auto& d = v.constraint->d;
    if (v.constraint->direction == ConstraintDirection::Upper) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] + w[i];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] - w[i];
    }
}

}  // namespace

ValueFunction::ValueFunction(const ProblemSpec& problem, SolverConfig config)
    : problem_(problem),
      config_(std::move(config)),
      views_(constraint_views(problem)),
      obj_(problem.beamlet_count, problem.lambda) {
    for (const auto& ov : objective_views(problem)) {
        obj_.add_term(ov.objective->alpha / static_cast<double>(ov.n), ov.matrix,
                      ov.objective->d);
    }
    for (const auto& cv : views_) {
        // placeholder target; swapped before every inner solve
        constraint_terms_.push_back(
            obj_.add_term(cv.constraint->alpha / static_cast<double>(cv.n), cv.matrix,
                          cv.constraint->d));
    }
    lipschitz_ = lipschitz_upper_bound(obj_, config_.seed);
    x_.assign(static_cast<std::size_t>(problem.beamlet_count), 0.0);
}

NnlsOptions ValueFunction::inner_options() const {
    NnlsOptions opt;
    opt.tol = config_.inner_tol;
    opt.max_iters = config_.inner_max_iters > 0
                        ? config_.inner_max_iters
                        : static_cast<int>(50 * problem_.beamlet_count);
    opt.lipschitz = lipschitz_;
    opt.seed = config_.seed;
    return opt;
}

std::vector<double> ValueFunction::solve_unconstrained() {
    QuadraticObjective ptv_only(problem_.beamlet_count, problem_.lambda);
    for (const auto& ov : objective_views(problem_)) {
        ptv_only.add_term(ov.objective->alpha / static_cast<double>(ov.n), ov.matrix,
                          ov.objective->d);
    }
    NnlsOptions opt = inner_options();
    opt.lipschitz = 0.0;  // different Hessian; estimate fresh
    std::vector<double> zero(static_cast<std::size_t>(problem_.beamlet_count), 0.0);
    auto res = solve_nnls(ptv_only, zero, opt);
    if (res.status == SolveStatus::MaxItersExceeded) ++inner_failures_;
    x_ = res.x;
    last_kkt_ = res.kkt_residual;
    return res.x;
}

double ValueFunction::eval(const std::vector<std::vector<double>>& w) {
    if (w.size() != views_.size()) {
        raise(ErrorCode::DimensionMismatch, "w must have one block per constraint");
    }
    std::vector<double> target;
    for (std::size_t j = 0; j < views_.size(); ++j) {
        if (static_cast<std::int64_t>(w[j].size()) != views_[j].n) {
            raise(ErrorCode::DimensionMismatch, "w block size != constraint voxel count");
        }
        target.resize(w[j].size());
        inner_target(views_[j], w[j], target);
        obj_.set_target(constraint_terms_[j], target);
    }
    auto res = solve_nnls(obj_, x_, inner_options());
    if (res.status == SolveStatus::MaxItersExceeded) ++inner_failures_;
    x_ = std::move(res.x);
    last_kkt_ = res.kkt_residual;
    return res.objective;
}

void ValueFunction::set_x(std::span<const double> x) {
    if (static_cast<std::int64_t>(x.size()) != problem_.beamlet_count) {
        raise(ErrorCode::DimensionMismatch, "x length != beamlet count");
    }
    x_.assign(x.begin(), x.end());
}

std::vector<std::vector<double>> ValueFunction::residuals(std::span<const double> x) const {
    std::vector<std::vector<double>> out(views_.size());
    std::vector<double> dose;
    for (std::size_t j = 0; j < views_.size(); ++j) {
        dose.resize(static_cast<std::size_t>(views_[j].n));
        kernels::spmv(*views_[j].matrix, x, dose);
        out[j].resize(dose.size());
        signed_residual(views_[j], dose, out[j]);
    }
    return out;
}

std::vector<std::vector<double>> ValueFunction::gradient(
    const std::vector<std::vector<double>>& w) const {
    auto r = residuals(x_);
    std::vector<std::vector<double>> g(views_.size());
    for (std::size_t j = 0; j < views_.size(); ++j) {
        const double scale = views_[j].constraint->alpha / static_cast<double>(views_[j].n);
        g[j].resize(r[j].size());
        for (std::size_t i = 0; i < r[j].size(); ++i) {
            g[j][i] = scale * (w[j][i] - r[j][i]);
        }
    }
    return g;
}

double ValueFunction::inner_kkt_at(const std::vector<std::vector<double>>& w,
                                   std::span<const double> x) const {
    auto& self = const_cast<ValueFunction&>(*this);
    std::vector<double> target;
    for (std::size_t j = 0; j < views_.size(); ++j) {
        target.resize(w[j].size());
        inner_target(views_[j], w[j], target);
        self.obj_.set_target(constraint_terms_[j], target);
    }
    std::vector<double> grad(x.size());
    obj_.gradient(x, grad);
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        m = std::max(m, std::fabs(std::min(x[i], grad[i])));
    }
    return m;
}

SolverState initialize(const ProblemSpec& problem, const SolverConfig& config) {
    ValueFunction vf(problem, config);
    SolverState s;
    s.x = vf.solve_unconstrained();
    auto r = vf.residuals(s.x);
    s.w.resize(r.size());
    const auto& views = vf.constraints();
    for (std::size_t j = 0; j < r.size(); ++j) {
        s.w[j] = project_upper(r[j], views[j].max_violations);
    }
    return s;
}

std::pair<double, std::vector<double>> eval_g(const ProblemSpec& problem,
                                              const std::vector<std::vector<double>>& w,
                                              const SolverConfig& config) {
    ValueFunction vf(problem, config);
    const double g = vf.eval(w);
    return {g, vf.x()};
}

std::vector<std::vector<double>> grad_g(const ProblemSpec& problem,
                                        const std::vector<std::vector<double>>& w,
                                        std::span<const double> x_of_w,
                                        const SolverConfig& config) {
    ValueFunction vf(problem, config);
    const double kkt = vf.inner_kkt_at(w, x_of_w);
    if (kkt > 10.0 * config.inner_tol) {
        raise(ErrorCode::StaleInnerSolution,
              "inner KKT residual " + std::to_string(kkt) + " exceeds 10 * inner_tol");
    }
    vf.set_x(x_of_w);
    return vf.gradient(w);
}

namespace {

SolveReport run_descent(const ProblemSpec& problem, const SolverConfig& config,
                        std::optional<std::vector<double>> x0, bool bcd) {
    const auto t_start = std::chrono::steady_clock::now();

    SolverConfig cfg = config;
    if (bcd) {
        cfg.step_fraction = 1.0;
        cfg.step_override.clear();
    }
    const auto steps = resolve_steps(problem, cfg);

    ValueFunction vf(problem, cfg);
    const auto& views = vf.constraints();

    SolveReport rep;
    rep.method = bcd ? "bcd" : "pgd";
    rep.epsilon = cfg.epsilon;
    rep.steps = steps;
    for (const auto& v : views) rep.caps.push_back(v.max_violations);

    // initialization: eq-style PTV-only solve unless an explicit start is given
    std::vector<double> x_init;
    if (x0.has_value()) {
        if (static_cast<std::int64_t>(x0->size()) != problem.beamlet_count) {
            raise(ErrorCode::DimensionMismatch, "x0 length != beamlet count");
        }
        x_init = std::move(*x0);
        for (double& v : x_init) v = std::max(0.0, v);
        vf.set_x(x_init);
    } else {
        x_init = vf.solve_unconstrained();
    }

    auto w = vf.residuals(x_init);
    for (std::size_t j = 0; j < w.size(); ++j) {
        project_cardinality_inplace(w[j], views[j].max_violations);
    }

    rep.status = SolveStatus::MaxItersExceeded;
    std::vector<double> wbar;
    for (int k = 0; k < cfg.max_outer_iters; ++k) {
        const double g = vf.eval(w);  // x^{k+1} = x(w^k)
        rep.g_history.push_back(g);
        rep.violation_history.push_back(dose_violations(problem, vf.x()));
        if (cfg.record_iterates) rep.w_history.push_back(w);

        const auto grad = vf.gradient(w);
        const auto residuals = bcd ? vf.residuals(vf.x()) : std::vector<std::vector<double>>{};
        double err = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (bcd) {
                // w-update is argmin_{w in Omega} f(x^{k+1}, w): project the
                // residual itself.
                wbar = residuals[j];
            } else {
                wbar.assign(w[j].size(), 0.0);
                for (std::size_t i = 0; i < w[j].size(); ++i) {
                    wbar[i] = w[j][i] - steps[j] * grad[j][i];
                }
            }
            project_cardinality_inplace(wbar, views[j].max_violations);
            double diff = 0.0;
            for (std::size_t i = 0; i < w[j].size(); ++i) {
                const double e = wbar[i] - w[j][i];
                diff += e * e;
            }
            err += std::sqrt(diff) / steps[j];
            w[j] = wbar;
        }
        rep.err_history.push_back(err);
        rep.final_err = err;
        rep.outer_iters = k + 1;
        if (err <= cfg.epsilon) {
            rep.status = SolveStatus::Converged;
            break;
        }
    }

    // final fluence: argmin_x f(x, w^final)
    const double g_final = vf.eval(w);
    rep.g_history.push_back(g_final);
    rep.x = vf.x();
    rep.final_w = std::move(w);
    rep.structure_dose = structure_doses(problem, rep.x);
    rep.final_violations = dose_violations(problem, rep.x);
    rep.inner_failures = vf.inner_failures();
    rep.termination = rep.status == SolveStatus::Converged
                          ? "err <= epsilon"
                          : "outer iteration limit reached";
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

}  // namespace

SolveReport run_pgd(const ProblemSpec& problem, const SolverConfig& config,
                    std::optional<std::vector<double>> x0) {
    return run_descent(problem, config, std::move(x0), /*bcd=*/false);
}

SolveReport run_bcd(const ProblemSpec& problem, const SolverConfig& config,
                    std::optional<std::vector<double>> x0) {
    return run_descent(problem, config, std::move(x0), /*bcd=*/true);
}

StationarityReport stationarity(const ProblemSpec& problem,
                                const std::vector<std::vector<double>>& w,
                                const SolverConfig& config) {
    const auto steps = resolve_steps(problem, config);
    ValueFunction vf(problem, config);
    vf.eval(w);
    const auto grad = vf.gradient(w);
    const auto& views = vf.constraints();

    StationarityReport rep;
    std::vector<double> wbar;
    for (std::size_t j = 0; j < w.size(); ++j) {
        wbar.assign(w[j].size(), 0.0);
        for (std::size_t i = 0; i < w[j].size(); ++i) {
            wbar[i] = w[j][i] - steps[j] * grad[j][i];
        }
        project_cardinality_inplace(wbar, views[j].max_violations);
        double diff = 0.0;
        for (std::size_t i = 0; i < w[j].size(); ++i) {
            const double e = w[j][i] - wbar[i];
            diff += e * e;
        }
        rep.per_constraint.push_back(diff / (steps[j] * steps[j]));
        rep.measure += rep.per_constraint.back();
    }
    rep.is_epsilon_accurate = rep.measure <= config.epsilon;
    return rep;
}

double ptv_ridge_objective(const ProblemSpec& problem, std::span<const double> x) {
    double v = 0.0;
    std::vector<double> dose;
    for (const auto& ov : objective_views(problem)) {
        dose.resize(static_cast<std::size_t>(ov.n));
        kernels::spmv(*ov.matrix, x, dose);
        double ss = 0.0;
        for (std::size_t i = 0; i < dose.size(); ++i) {
            const double r = dose[i] - ov.objective->d[i];
            ss += r * r;
        }
        v += 0.5 * ov.objective->alpha / static_cast<double>(ov.n) * ss;
    }
    return v + 0.5 * problem.lambda * kernels::norm2sq(x);
}

std::vector<std::vector<double>> structure_doses(const ProblemSpec& problem,
                                                 std::span<const double> x) {
    std::vector<std::vector<double>> out(structure_count(problem));
    for (std::size_t s = 0; s < out.size(); ++s) {
        const auto& m = matrix_at(problem, s);
        out[s].resize(static_cast<std::size_t>(m.rows()));
        kernels::spmv(m, x, out[s]);
    }
    return out;
}

std::vector<std::int64_t> dose_violations(const ProblemSpec& problem,
                                          std::span<const double> x) {
    std::vector<std::int64_t> out;
    std::vector<double> dose;
    for (const auto& cv : constraint_views(problem)) {
        dose.resize(static_cast<std::size_t>(cv.n));
        kernels::spmv(*cv.matrix, x, dose);
        std::int64_t count = 0;
        const auto& d = cv.constraint->d;
        if (cv.constraint->direction == ConstraintDirection::Upper) {
            for (std::size_t i = 0; i < dose.size(); ++i) {
                if (dose[i] > d[i]) ++count;
            }
        } else {
            for (std::size_t i = 0; i < dose.size(); ++i) {
                if (dose[i] < d[i]) ++count;
            }
        }
        out.push_back(count);
    }
    return out;
}

}  // namespace fmo
