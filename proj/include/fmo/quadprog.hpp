#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fmo/sparse.hpp"

namespace fmo {

/// Sum of weighted least-squares terms plus a ridge:
///   phi(x) = sum_k (w_k/2) ||B_k x - b_k||^2 + (ridge/2) ||x_[0:ridge_dim)||^2.
/// Matrices are referenced, not copied; they must outlive the objective.
/// Targets and weights can be swapped cheaply between solves, which keeps the
/// Lipschitz bound (a function of the matrices and weights only) reusable
/// across outer iterations.
class QuadraticObjective {
public:
    QuadraticObjective(std::int64_t dim, double ridge);
    QuadraticObjective(std::int64_t dim, double ridge, std::int64_t ridge_dim);

    std::size_t add_term(double weight, const SparseMatrix* matrix, std::vector<double> target);
    void set_target(std::size_t term, std::span<const double> target);
    void set_weight(std::size_t term, double weight);

    std::int64_t dim() const noexcept { return dim_; }
    double ridge() const noexcept { return ridge_; }
    std::size_t term_count() const noexcept { return terms_.size(); }
    double term_weight(std::size_t term) const { return terms_.at(term).weight; }

    double value(std::span<const double> x) const;
    void gradient(std::span<const double> x, std::span<double> grad) const;
    double value_and_gradient(std::span<const double> x, std::span<double> grad) const;
    /// out = H x where H is the Hessian (used by the power iteration).
    void hessian_apply(std::span<const double> x, std::span<double> out) const;
    /// Dense Hessian for small instances (tests); row-major dim x dim.
    std::vector<double> dense_hessian() const;

private:
    struct Term {
        double weight;
        const SparseMatrix* matrix;
        std::vector<double> target;
    };

    std::int64_t dim_;
    double ridge_;
    std::int64_t ridge_dim_;
    std::vector<Term> terms_;
    mutable std::vector<double> scratch_;  // residual buffer, per-instance
};

/// Upper bound on the largest Hessian eigenvalue: power iteration with a
/// 1.05 safety factor. Deterministic given the seed.
double lipschitz_upper_bound(const QuadraticObjective& obj, std::uint64_t seed = 0);

enum class SolveStatus { Converged, MaxItersExceeded, Infeasible };

struct NnlsOptions {
    double tol = 1e-8;
    int max_iters = 0;       // 0 = 50 * dim
    double lipschitz = 0.0;  // 0 = estimate via lipschitz_upper_bound
    std::uint64_t seed = 0;
};

struct NnlsResult {
    std::vector<double> x;
    double kkt_residual = 0.0;
    int iters = 0;
    SolveStatus status = SolveStatus::Converged;
    double objective = 0.0;
};

/// Minimizes a strongly convex quadratic over the non-negative orthant with
/// accelerated projected gradient, function-value restarts, and step 1/L.
/// Stops when ||min(x, grad phi(x))||_inf <= tol. The objective never
/// increases across iterations. Throws Error(NonFiniteValue) on NaN/Inf.
NnlsResult solve_nnls(const QuadraticObjective& obj, std::span<const double> x0,
                      const NnlsOptions& options = {});

/// Linear inequality rows a_r . x <= u_r on top of x >= 0.
struct BoxLinearConstraints {
    SparseMatrix rows;          // one constraint per row
    std::vector<double> upper;  // u_r, finite
};

struct ConstrainedLsOptions {
    double tol = 1e-8;
    int max_iters = 4000;
    double inner_tol = 1e-10;
    std::uint64_t seed = 0;
};

struct ConstrainedLsResult {
    std::vector<double> x;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double kkt_residual = 0.0;
    int iters = 0;
    SolveStatus status = SolveStatus::Converged;
    /// Per-row violation max(0, a_r . x - u_r), reported when infeasible.
    std::vector<double> row_violations;
};

/// Operator splitting on z = C x: alternating non-negative quadratic
/// minimization in x, per-row projection of z onto (-inf, u_r], and a scaled
/// dual update, with residual-balanced penalty. An infeasible problem is
/// reported (primal residual stalls above tolerance), never guessed around.
ConstrainedLsResult solve_constrained_ls(const QuadraticObjective& obj,
                                         const BoxLinearConstraints& cons,
                                         std::span<const double> x0,
                                         const ConstrainedLsOptions& options = {});

}  // namespace fmo
