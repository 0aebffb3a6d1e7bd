#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fmo/model.hpp"
#include "fmo/quadprog.hpp"
#include "fmo/reweight.hpp"
#include "fmo/solver.hpp"

namespace fmo {

struct PenaltyIterOptions {
    // relative fluence stability: ||x^{k+1} - x^k||_2 <= tol * (1 + ||x||_2),
    // checked once the assignment is stable
    double tol = 1e-5;
    int max_iters = 20000;
    double step_scale = 1.0;  // gradient step = step_scale / L
};

/// Iterative dose-reassignment penalty: each iteration sorts the structure
/// doses, hands the highest p% of voxels the free-pass value 1e6 (lowest p%
/// and -1e6 for lower constraints), takes one gradient step of the hinge
/// penalty objective, and projects onto the non-negative orthant. With
/// SolverConfig::record_iterates the report's w_history holds the per-
/// iteration reassigned threshold vectors.
SolveReport solve_penalty_iterative(const ProblemSpec& problem, const SolverConfig& scfg = {},
                                    const PenaltyIterOptions& options = {});

struct SlackGreedyOptions {
    double y_tol = 1e-6;  // total ||y^{k+1} - y^k||_2 threshold
    int max_iters = 500;
};

/// Slack-variable greedy method: block coordinate descent where the x-update
/// jointly solves for the fluence and non-negative per-voxel slacks, and the
/// y-update projects onto the structure's combined dose set intersected with
/// {y >= y_prev} (elementwise max keeps the dose variables monotone). With
/// SolverConfig::record_iterates the report's w_history holds the y iterates.
SolveReport solve_slack_greedy(const ProblemSpec& problem, const SolverConfig& scfg = {},
                               const SlackGreedyOptions& options = {});

/// For each constraint, the voxel rows that receive hard dose bounds in the
/// polishing stage: the n - cap lowest-dose voxels for upper constraints, the
/// n - cap highest-dose for lower ones (ties broken by index), sorted.
std::vector<std::vector<std::int64_t>> select_subvolumes(const ProblemSpec& problem,
                                                         std::span<const double> x);

struct PolishOptions {
    // Bounds are tightened by 10 * tol * (1 + |d|) Gy so strict violation
    // counts cannot flip on residual-level slack; 1e-5 keeps that margin far
    // below clinical resolution.
    double tol = 1e-5;
    int max_iters = 20000;
};

struct PolishReport {
    SolveReport solve;
    SolveStatus status = SolveStatus::Converged;
    /// Per-row bound violations when the subvolumes admit no feasible x.
    std::vector<double> row_violations;
    std::vector<ConstraintCheck> checks;
};

/// Fixes the violating-voxel subsets implied by x_approx, then re-solves the
/// PTV + ridge objective under hard maximum/minimum-dose constraints on the
/// remaining voxels, warm-started at x_approx. On success the result
/// satisfies every original dose--volume constraint; otherwise Infeasible is
/// surfaced with the offending residuals.
PolishReport polish(const ProblemSpec& problem, std::span<const double> x_approx,
                    const PolishOptions& options = {});

/// The idealized objective: sum_i (alpha_i/2n_i)||A_i x - d_i||^2
/// + (lambda/2)||x||^2. Used to rank methods.
double objective_p1(const ProblemSpec& problem, std::span<const double> x);

}  // namespace fmo
