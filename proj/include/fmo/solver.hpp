#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmo/model.hpp"
#include "fmo/quadprog.hpp"

namespace fmo {

/// Auxiliary-variable iterate of the partial-minimization solver.
struct SolverState {
    std::vector<double> x;                // fluence (MU), >= 0
    std::vector<std::vector<double>> w;   // one block per constraint, feasible
    int k = 0;
    double err = 0.0;                     // sum_j (1/t_j) ||w_j^{k+1} - w_j^k||_2
    std::vector<double> g_history;
};

struct StationarityReport {
    double measure = 0.0;                 // sum_j (1/t_j^2) ||w_j - wbar_j||_2^2
    std::vector<double> per_constraint;
    bool is_epsilon_accurate = false;
};

struct SolveReport {
    std::string method;
    SolveStatus status = SolveStatus::Converged;
    std::string termination;
    int outer_iters = 0;
    double final_err = 0.0;
    double epsilon = 0.0;
    std::vector<double> steps;            // resolved t_j
    std::vector<double> g_history;
    std::vector<double> err_history;
    // per outer iteration, per constraint: voxels strictly violating their
    // threshold under the current fluence
    std::vector<std::vector<std::int64_t>> violation_history;
    std::vector<double> x;
    std::vector<std::vector<double>> structure_dose;  // by global structure index
    std::vector<std::vector<double>> final_w;
    std::vector<std::int64_t> final_violations;
    std::vector<std::int64_t> caps;
    int inner_failures = 0;               // inner solves that hit their cap
    double wall_seconds = 0.0;
    // filled when SolverConfig::record_iterates is set
    std::vector<std::vector<std::vector<double>>> w_history;
};

/// The value function g(w) = min_{x>=0} f(x, w) and its machinery. Holds the
/// inner quadratic (targets swapped per evaluation), the cached Lipschitz
/// bound, and the warm-start iterate. One instance per solve; instances are
/// independent and may run concurrently.
class ValueFunction {
public:
    ValueFunction(const ProblemSpec& problem, SolverConfig config);

    const std::vector<ConstraintView>& constraints() const noexcept { return views_; }
    const SolverConfig& config() const noexcept { return config_; }

    /// Solves the PTV + ridge problem (no dose--volume terms) from x = 0.
    std::vector<double> solve_unconstrained();

    /// g(w): updates the inner targets, solves for x(w) warm-started from the
    /// previous solution, and returns the partial minimum.
    double eval(const std::vector<std::vector<double>>& w);

    const std::vector<double>& x() const noexcept { return x_; }
    void set_x(std::span<const double> x);
    double last_inner_kkt() const noexcept { return last_kkt_; }
    int inner_failures() const noexcept { return inner_failures_; }

    /// Signed residual blocks at x: A_j x - d_j for upper constraints,
    /// d_j - A_j x for lower ones.
    std::vector<std::vector<double>> residuals(std::span<const double> x) const;

    /// Gradient blocks (alpha_j/n_j) * (w_j - r_j(x)) for the given w and the
    /// current inner solution.
    std::vector<std::vector<double>> gradient(const std::vector<std::vector<double>>& w) const;

    /// KKT residual of the inner problem at an arbitrary x for the given w.
    double inner_kkt_at(const std::vector<std::vector<double>>& w,
                        std::span<const double> x) const;

private:
    const ProblemSpec& problem_;
    SolverConfig config_;
    std::vector<ConstraintView> views_;
    QuadraticObjective obj_;
    std::vector<std::size_t> constraint_terms_;  // term index per constraint
    double lipschitz_ = 0.0;
    std::vector<double> x_;
    double last_kkt_ = 0.0;
    int inner_failures_ = 0;
    NnlsOptions inner_options() const;
};

/// x0 = argmin_{x>=0} of the PTV terms + ridge, w0_j the projection of the
/// corresponding residual onto its cardinality set.
SolverState initialize(const ProblemSpec& problem, const SolverConfig& config = {});

/// Value-function evaluation; returns (g, x(w)).
std::pair<double, std::vector<double>> eval_g(const ProblemSpec& problem,
                                              const std::vector<std::vector<double>>& w,
                                              const SolverConfig& config = {});

/// Gradient blocks of g at w given an inner solution x_of_w. Throws
/// Error(StaleInnerSolution) when x_of_w's KKT residual exceeds
/// 10 * config.inner_tol.
std::vector<std::vector<double>> grad_g(const ProblemSpec& problem,
                                        const std::vector<std::vector<double>>& w,
                                        std::span<const double> x_of_w,
                                        const SolverConfig& config = {});

/// Projected gradient descent on g (steps t_j <= n_j/alpha_j).
SolveReport run_pgd(const ProblemSpec& problem, const SolverConfig& config = {},
                    std::optional<std::vector<double>> x0 = std::nullopt);

/// Block coordinate descent: the t_j = n_j/alpha_j special case where the
/// w-update is the plain projection of the residual.
SolveReport run_bcd(const ProblemSpec& problem, const SolverConfig& config = {},
                    std::optional<std::vector<double>> x0 = std::nullopt);

/// Weighted squared length of one projected-gradient step from w; zero
/// exactly at the fixed points (the local minimizers).
StationarityReport stationarity(const ProblemSpec& problem,
                                const std::vector<std::vector<double>>& w,
                                const SolverConfig& config = {});

/// sum_i (alpha_i/2n_i)||A_i x - d_i||^2 + (lambda/2)||x||^2, the idealized
/// objective used to rank methods.
double ptv_ridge_objective(const ProblemSpec& problem, std::span<const double> x);

/// Dose vectors A_s x for every structure, global index order.
std::vector<std::vector<double>> structure_doses(const ProblemSpec& problem,
                                                 std::span<const double> x);

/// Strict violation counts of the actual dose against each constraint.
std::vector<std::int64_t> dose_violations(const ProblemSpec& problem,
                                          std::span<const double> x);

}  // namespace fmo
