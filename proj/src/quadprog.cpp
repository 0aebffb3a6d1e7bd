#include "fmo/quadprog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "fmo/errors.hpp"
#include "fmo/kernels.hpp"

namespace fmo {

QuadraticObjective::QuadraticObjective(std::int64_t dim, double ridge)
    : QuadraticObjective(dim, ridge, dim) {}

QuadraticObjective::QuadraticObjective(std::int64_t dim, double ridge, std::int64_t ridge_dim)
    : dim_(dim), ridge_(ridge), ridge_dim_(ridge_dim) {
    if (dim < 1) raise(ErrorCode::InvalidArgument, "objective dimension must be >= 1");
    if (ridge <= 0.0) raise(ErrorCode::NonPositiveWeight, "ridge must be > 0");
    if (ridge_dim < 0 || ridge_dim > dim) {
        raise(ErrorCode::InvalidArgument, "ridge_dim outside [0, dim]");
    }
}

std::size_t QuadraticObjective::add_term(double weight, const SparseMatrix* matrix,
                                         std::vector<double> target) {
    if (weight <= 0.0) raise(ErrorCode::NonPositiveWeight, "term weight must be > 0");
    if (matrix->cols() != dim_) {
        raise(ErrorCode::DimensionMismatch, "term matrix column count != objective dimension");
    }
    if (static_cast<std::int64_t>(target.size()) != matrix->rows()) {
        raise(ErrorCode::DimensionMismatch, "term target length != matrix rows");
    }
    terms_.push_back({weight, matrix, std::move(target)});
    scratch_.reserve(static_cast<std::size_t>(
        std::max<std::int64_t>(terms_.back().matrix->rows(), static_cast<std::int64_t>(scratch_.capacity()))));
    return terms_.size() - 1;
}

void QuadraticObjective::set_target(std::size_t term, std::span<const double> target) {
    auto& t = terms_.at(term);
    if (static_cast<std::int64_t>(target.size()) != t.matrix->rows()) {
        raise(ErrorCode::DimensionMismatch, "target length != matrix rows");
    }
    t.target.assign(target.begin(), target.end());
}

void QuadraticObjective::set_weight(std::size_t term, double weight) {
    if (weight <= 0.0) raise(ErrorCode::NonPositiveWeight, "term weight must be > 0");
    terms_.at(term).weight = weight;
}

double QuadraticObjective::value(std::span<const double> x) const {
    double v = 0.0;
    for (const auto& t : terms_) {
        const std::size_t rows = static_cast<std::size_t>(t.matrix->rows());
        scratch_.resize(rows);
        kernels::spmv(*t.matrix, x, scratch_);
        double ss = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            const double r = scratch_[i] - t.target[i];
            ss += r * r;
        }
        v += 0.5 * t.weight * ss;
    }
    double xr = 0.0;
    for (std::int64_t i = 0; i < ridge_dim_; ++i) {
        xr += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
    }
    return v + 0.5 * ridge_ * xr;
}

void QuadraticObjective::gradient(std::span<const double> x, std::span<double> grad) const {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> partial(static_cast<std::size_t>(dim_));
    for (const auto& t : terms_) {
        const std::size_t rows = static_cast<std::size_t>(t.matrix->rows());
        scratch_.resize(rows);
        kernels::spmv(*t.matrix, x, scratch_);
        for (std::size_t i = 0; i < rows; ++i) scratch_[i] -= t.target[i];
        kernels::spmv_transpose(*t.matrix, scratch_, partial);
        for (std::int64_t i = 0; i < dim_; ++i) {
            grad[static_cast<std::size_t>(i)] += t.weight * partial[static_cast<std::size_t>(i)];
        }
    }
    for (std::int64_t i = 0; i < ridge_dim_; ++i) {
        grad[static_cast<std::size_t>(i)] += ridge_ * x[static_cast<std::size_t>(i)];
    }
}

double QuadraticObjective::value_and_gradient(std::span<const double> x,
                                              std::span<double> grad) const {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> partial(static_cast<std::size_t>(dim_));
    double v = 0.0;
    for (const auto& t : terms_) {
        const std::size_t rows = static_cast<std::size_t>(t.matrix->rows());
        scratch_.resize(rows);
        kernels::spmv(*t.matrix, x, scratch_);
        double ss = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            scratch_[i] -= t.target[i];
            ss += scratch_[i] * scratch_[i];
        }
        v += 0.5 * t.weight * ss;
        kernels::spmv_transpose(*t.matrix, scratch_, partial);
        for (std::int64_t i = 0; i < dim_; ++i) {
            grad[static_cast<std::size_t>(i)] += t.weight * partial[static_cast<std::size_t>(i)];
        }
    }
    for (std::int64_t i = 0; i < ridge_dim_; ++i) {
        const double xi = x[static_cast<std::size_t>(i)];
        grad[static_cast<std::size_t>(i)] += ridge_ * xi;
        v += 0.5 * ridge_ * xi * xi;
    }
    return v;
}

void QuadraticObjective::hessian_apply(std::span<const double> x, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> partial(static_cast<std::size_t>(dim_));
    for (const auto& t : terms_) {
        const std::size_t rows = static_cast<std::size_t>(t.matrix->rows());
        scratch_.resize(rows);
        kernels::spmv(*t.matrix, x, scratch_);
        kernels::spmv_transpose(*t.matrix, scratch_, partial);
        for (std::int64_t i = 0; i < dim_; ++i) {
            out[static_cast<std::size_t>(i)] += t.weight * partial[static_cast<std::size_t>(i)];
        }
    }
    for (std::int64_t i = 0; i < ridge_dim_; ++i) {
        out[static_cast<std::size_t>(i)] += ridge_ * x[static_cast<std::size_t>(i)];
    }
}

std::vector<double> QuadraticObjective::dense_hessian() const {
    if (dim_ > 2048) raise(ErrorCode::DimensionTooLarge, "dense_hessian limited to dim <= 2048");
    const std::size_t d = static_cast<std::size_t>(dim_);
    std::vector<double> h(d * d, 0.0);
    std::vector<double> e(d, 0.0), col(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        e[j] = 1.0;
        hessian_apply(e, col);
        for (std::size_t i = 0; i < d; ++i) h[i * d + j] = col[i];
        e[j] = 0.0;
    }
    return h;
}

double lipschitz_upper_bound(const QuadraticObjective& obj, std::uint64_t seed) {
    const std::size_t d = static_cast<std::size_t>(obj.dim());
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> v(d), hv(d);
    for (double& x : v) x = gauss(rng);
    double nv = kernels::serial::norm2(v);
    if (nv == 0.0) {
        v[0] = 1.0;
        nv = 1.0;
    }
    for (double& x : v) x /= nv;

    double rayleigh = 0.0;
    for (int iter = 0; iter < 500; ++iter) {
        obj.hessian_apply(v, hv);
        const double r = kernels::serial::dot(v, hv);
        const double nhv = kernels::serial::norm2(hv);
        if (nhv == 0.0) {
            rayleigh = 0.0;
            break;
        }
        for (std::size_t i = 0; i < d; ++i) v[i] = hv[i] / nhv;
        if (iter > 0 && std::fabs(r - rayleigh) <= 1e-10 * std::max(1.0, std::fabs(r))) {
            rayleigh = r;
            break;
        }
        rayleigh = r;
    }
    return 1.05 * std::max(rayleigh, obj.ridge());
}

namespace {

double kkt_residual_inf(std::span<const double> x, std::span<const double> grad) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        m = std::max(m, std::fabs(std::min(x[i], grad[i])));
    }
    return m;
}

}  // namespace

NnlsResult solve_nnls(const QuadraticObjective& obj, std::span<const double> x0,
                      const NnlsOptions& options) {
    const std::size_t d = static_cast<std::size_t>(obj.dim());
    if (x0.size() != d) raise(ErrorCode::DimensionMismatch, "x0 length != objective dimension");
    for (double v : x0) {
        if (v < 0.0) raise(ErrorCode::InvalidArgument, "x0 must be non-negative");
    }
    if (options.tol <= 0.0) raise(ErrorCode::InvalidArgument, "tol must be > 0");

    const int max_iters =
        options.max_iters > 0 ? options.max_iters : static_cast<int>(50 * obj.dim());
    const double lips = options.lipschitz > 0.0 ? options.lipschitz
                                                : lipschitz_upper_bound(obj, options.seed);
    const double step = 1.0 / lips;

    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> y = x;
    std::vector<double> x_new(d), grad(d);

    double fx = obj.value(x);
    if (!std::isfinite(fx)) raise(ErrorCode::NonFiniteValue, "objective not finite at x0");
    double theta = 1.0;

    NnlsResult res;
    res.x = x;
    res.objective = fx;

    // KKT residual at the start; x0 may already be optimal.
    obj.gradient(x, grad);
    res.kkt_residual = kkt_residual_inf(x, grad);
    if (res.kkt_residual <= options.tol) {
        res.status = SolveStatus::Converged;
        return res;
    }

    for (int iter = 1; iter <= max_iters; ++iter) {
        obj.gradient(y, grad);
        for (std::size_t i = 0; i < d; ++i) x_new[i] = std::max(0.0, y[i] - step * grad[i]);
        double f_new = obj.value_and_gradient(x_new, grad);
        if (!std::isfinite(f_new)) raise(ErrorCode::NonFiniteValue, "objective diverged");

        // Function-value restart. The slack keeps rounding noise in phi from
        // masking real iterate progress near the optimum.
        const double noise = 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::fabs(fx));
        if (f_new > fx + noise) {
            // Acceleration overshot: restart the momentum and take a plain
            // projected-gradient step from x, which cannot increase phi.
            theta = 1.0;
            obj.gradient(x, grad);
            for (std::size_t i = 0; i < d; ++i) x_new[i] = std::max(0.0, x[i] - step * grad[i]);
            f_new = obj.value_and_gradient(x_new, grad);
            if (!std::isfinite(f_new)) raise(ErrorCode::NonFiniteValue, "objective diverged");
        }

        const double theta_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
        const double beta = (theta - 1.0) / theta_new;
        for (std::size_t i = 0; i < d; ++i) y[i] = x_new[i] + beta * (x_new[i] - x[i]);
        x.swap(x_new);
        fx = std::min(fx, f_new);
        theta = theta_new;

        res.kkt_residual = kkt_residual_inf(x, grad);
        res.iters = iter;
        if (res.kkt_residual <= options.tol) {
            res.x = x;
            res.objective = f_new;
            res.status = SolveStatus::Converged;
            return res;
        }
    }

    res.x = x;
    res.objective = obj.value(x);
    res.status = SolveStatus::MaxItersExceeded;
    return res;
}

ConstrainedLsResult solve_constrained_ls(const QuadraticObjective& obj,
                                         const BoxLinearConstraints& cons,
                                         std::span<const double> x0,
                                         const ConstrainedLsOptions& options) {
    const std::size_t d = static_cast<std::size_t>(obj.dim());
    const std::size_t r = static_cast<std::size_t>(cons.rows.rows());
    if (cons.rows.cols() != obj.dim()) {
        raise(ErrorCode::DimensionMismatch, "constraint columns != objective dimension");
    }
    if (cons.upper.size() != r) {
        raise(ErrorCode::DimensionMismatch, "bound count != constraint rows");
    }
    for (double u : cons.upper) {
        if (!std::isfinite(u)) raise(ErrorCode::InvalidArgument, "bounds must be finite");
    }

    ConstrainedLsResult res;
    if (r == 0) {
        auto nnls = solve_nnls(obj, x0, {options.inner_tol, 0, 0.0, options.seed});
        res.x = std::move(nnls.x);
        res.kkt_residual = nnls.kkt_residual;
        res.iters = nnls.iters;
        res.status = nnls.status;
        return res;
    }

    std::vector<double> x(x0.begin(), x0.end());
    for (double& v : x) v = std::max(0.0, v);

    std::vector<double> cx(r), z(r), dual(r, 0.0), z_old(r);
    kernels::spmv(cons.rows, x, cx);
    for (std::size_t i = 0; i < r; ++i) z[i] = std::min(cx[i], cons.upper[i]);

    // Lipschitz pieces: the augmented Hessian is H_phi + rho * C^T C, so
    // l_phi + rho * l_c bounds it for every rho without re-estimating.
    const double l_phi = lipschitz_upper_bound(obj, options.seed);
    QuadraticObjective norm_probe(obj.dim(), 1e-30, 0);
    norm_probe.add_term(1.0, &cons.rows, std::vector<double>(r, 0.0));
    const double l_c = lipschitz_upper_bound(norm_probe, options.seed);
    // start with the penalty curvature on the scale of the objective's
    double rho = std::max(1e-8, l_phi / std::max(l_c, 1e-30));

    // Proximal x-step: adding (tau/2)||x - x_k||^2 leaves the fixed points
    // untouched while capping the subproblem condition number, which the
    // near-singular ridge cannot do on its own.
    auto prox_weight = [&] { return 2e-3 * (l_phi + rho * l_c); };

    // The x-step runs FISTA on grad_phi + rho C^T (Cx - target) + tau (x - x_k);
    // the penalty target (z - dual) changes every outer iteration.
    std::vector<double> target(r), grad(d), gpen(d), pres(r), x_new(d), y(d), x_anchor(d);
    double tau = 0.0;

    auto aug_value_grad = [&](std::span<const double> xx, std::span<double> g) {
        double v = obj.value_and_gradient(xx, g);
        kernels::spmv(cons.rows, xx, pres);
        double ss = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            pres[i] -= target[i];
            ss += pres[i] * pres[i];
        }
        kernels::spmv_transpose(cons.rows, pres, gpen);
        double pp = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            g[i] += rho * gpen[i] + tau * (xx[i] - x_anchor[i]);
            const double e = xx[i] - x_anchor[i];
            pp += e * e;
        }
        return v + 0.5 * rho * ss + 0.5 * tau * pp;
    };

    auto fill_violations = [&] {
        res.row_violations.assign(r, 0.0);
        kernels::spmv(cons.rows, x, cx);
        for (std::size_t i = 0; i < r; ++i) {
            res.row_violations[i] = std::max(0.0, cx[i] - cons.upper[i]);
        }
    };

    double best_primal = std::numeric_limits<double>::infinity();
    int stall = 0;

    for (int iter = 1; iter <= options.max_iters; ++iter) {
        // x-step: FISTA on the augmented objective, warm-started.
        for (std::size_t i = 0; i < r; ++i) target[i] = z[i] - dual[i];
        tau = prox_weight();
        x_anchor = x;
        {
            const double step = 1.0 / (l_phi + rho * l_c + tau);
            y = x;
            double theta = 1.0;
            double fx = aug_value_grad(x, grad);
            const int inner_max = 4000;
            for (int in = 0; in < inner_max; ++in) {
                aug_value_grad(y, grad);
                for (std::size_t i = 0; i < d; ++i) {
                    x_new[i] = std::max(0.0, y[i] - step * grad[i]);
                }
                double f_new = aug_value_grad(x_new, grad);
                const double noise =
                    4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::fabs(fx));
                if (f_new > fx + noise) {
                    theta = 1.0;
                    aug_value_grad(x, grad);
                    for (std::size_t i = 0; i < d; ++i) {
                        x_new[i] = std::max(0.0, x[i] - step * grad[i]);
                    }
                    f_new = aug_value_grad(x_new, grad);
                }
                const double theta_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
                const double beta = (theta - 1.0) / theta_new;
                for (std::size_t i = 0; i < d; ++i) y[i] = x_new[i] + beta * (x_new[i] - x[i]);
                x.swap(x_new);
                fx = std::min(fx, f_new);
                theta = theta_new;
                if (kkt_residual_inf(x, grad) <= options.inner_tol) break;
            }
        }

        kernels::spmv(cons.rows, x, cx);
        z_old = z;
        for (std::size_t i = 0; i < r; ++i) {
            z[i] = std::min(cx[i] + dual[i], cons.upper[i]);
            dual[i] += cx[i] - z[i];
        }

        double rp = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            const double e = cx[i] - z[i];
            rp += e * e;
        }
        rp = std::sqrt(rp);
        for (std::size_t i = 0; i < r; ++i) pres[i] = z[i] - z_old[i];
        kernels::spmv_transpose(cons.rows, pres, gpen);
        const double rd_v = rho * kernels::serial::norm2(gpen);

        res.primal_residual = rp;
        res.dual_residual = rd_v;
        res.iters = iter;

        const double eps_pri =
            options.tol *
            std::max(1.0, std::max(kernels::serial::norm2(cx), kernels::serial::norm2(z)));

        if (rp <= eps_pri) {
            bool bounds_ok = true;
            for (std::size_t i = 0; i < r; ++i) {
                if (cx[i] > cons.upper[i] + options.tol * (1.0 + std::fabs(cons.upper[i]))) {
                    bounds_ok = false;
                    break;
                }
            }
            if (bounds_ok) {
                // Stationarity of the original problem with multiplier rho*dual.
                obj.gradient(x, grad);
                kernels::spmv_transpose(cons.rows, dual, gpen);
                for (std::size_t i = 0; i < d; ++i) grad[i] += rho * gpen[i];
                res.kkt_residual = kkt_residual_inf(x, grad);
                if (res.kkt_residual <= options.tol) {
                    res.x = x;
                    res.status = SolveStatus::Converged;
                    fill_violations();
                    return res;
                }
            }
        }

        // Infeasibility watch: the primal residual has stopped improving while
        // sitting far above the tolerance.
        if (rp < best_primal * (1.0 - 1e-4)) {
            best_primal = rp;
            stall = 0;
        } else if (++stall > 400 && rp > 100.0 * eps_pri) {
            res.x = x;
            res.status = SolveStatus::Infeasible;
            fill_violations();
            return res;
        }

        if (iter % 10 == 0) {
            if (rp > 10.0 * rd_v && rho < 1e10) {
                rho *= 2.0;
                for (double& v : dual) v *= 0.5;
            } else if (rd_v > 10.0 * rp && rho > 1e-10) {
                rho *= 0.5;
                for (double& v : dual) v *= 2.0;
            }
        }
    }

    res.x = x;
    res.status = SolveStatus::MaxItersExceeded;
    fill_violations();
    return res;
}

}  // namespace fmo
