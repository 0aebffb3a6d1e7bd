#include "fmo/reweight.hpp"

#include <algorithm>
#include <cmath>

#include "fmo/dvh.hpp"
#include "fmo/errors.hpp"
#include "fmo/kernels.hpp"

namespace fmo {

std::vector<ConstraintCheck> check_original_constraints(const ProblemSpec& problem,
                                                        std::span<const double> x) {
    const auto views = constraint_views(problem);
    const auto counts = dose_violations(problem, x);
    std::vector<ConstraintCheck> out(views.size());
    for (std::size_t j = 0; j < views.size(); ++j) {
        out[j].violations = counts[j];
        out[j].max_violations = views[j].max_violations;
        out[j].satisfied = counts[j] <= views[j].max_violations;
    }
    return out;
}

namespace {

std::vector<double> ptv_d95(const ProblemSpec& problem, std::span<const double> x) {
    std::vector<double> out;
    std::vector<double> dose;
    for (const auto& p : problem.ptvs) {
        dose.resize(static_cast<std::size_t>(p.structure.voxel_count));
        kernels::spmv(p.matrix, x, dose);
        out.push_back(d_quantile(dose, 95.0));
    }
    return out;
}

// Mutable references to every constraint, flat in view order.
std::vector<DoseVolumeConstraint*> mutable_constraints(ProblemSpec& problem) {
    std::vector<DoseVolumeConstraint*> out;
    for (auto& p : problem.ptvs) {
        for (auto& c : p.constraints) out.push_back(&c);
    }
    for (auto& o : problem.oars) {
        for (auto& c : o.constraints) out.push_back(&c);
    }
    return out;
}

}  // namespace

ReweightReport run_reweight(const ProblemSpec& problem, const ReweightConfig& rcfg,
                            const SolverConfig& scfg) {
    if (rcfg.sigma <= 0.0) raise(ErrorCode::InvalidArgument, "sigma must be > 0");
    if (rcfg.gamma <= 0.0 || rcfg.gamma >= 1.0) {
        raise(ErrorCode::InvalidArgument, "gamma must lie in (0, 1)");
    }
    if (rcfg.stop == ReweightStop::D95Floor &&
        (rcfg.d95_fraction <= 0.0 || rcfg.d95_fraction >= 1.0)) {
        raise(ErrorCode::InvalidArgument, "d95 fraction must lie in (0, 1)");
    }
    if (rcfg.max_rounds < 0) raise(ErrorCode::InvalidArgument, "max_rounds must be >= 0");

    ReweightReport rep;

    // Working copy whose constraint parameters drift; checks always run
    // against the caller's original problem.
    ProblemSpec working = problem;
    auto params = mutable_constraints(working);

    SolverState init = initialize(problem, scfg);
    std::vector<double> x_warm = init.x;
    rep.initial_d95 = ptv_d95(problem, x_warm);

    double epsilon = scfg.epsilon;
    rep.status = SolveStatus::MaxItersExceeded;
    for (int round = 0;; ++round) {
        SolverConfig cfg = scfg;
        cfg.epsilon = epsilon;
        SolveReport solve = run_bcd(working, cfg, x_warm);
        x_warm = solve.x;

        const auto checks = check_original_constraints(problem, solve.x);

        ReweightRound rr;
        rr.round = round;
        rr.epsilon = epsilon;
        for (const auto* c : params) {
            rr.alpha.push_back(c->alpha);
            rr.d_level.push_back(c->d.front());
            rr.p.push_back(c->p);
        }
        for (const auto& c : checks) {
            rr.violations.push_back(c.violations);
            rr.satisfied.push_back(c.satisfied ? 1 : 0);
        }
        rr.ptv_d95 = ptv_d95(problem, solve.x);
        rr.g = solve.g_history.empty() ? 0.0 : solve.g_history.back();
        rr.bcd_iters = solve.outer_iters;
        rep.rounds.push_back(std::move(rr));

        rep.all_satisfied =
            std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.satisfied; });

        bool stop = false;
        switch (rcfg.stop) {
            case ReweightStop::AllConstraintsMet:
                stop = rep.all_satisfied;
                if (stop) rep.termination = "all original constraints satisfied";
                break;
            case ReweightStop::D95Floor:
                for (std::size_t i = 0; i < rep.initial_d95.size(); ++i) {
                    if (rep.rounds.back().ptv_d95[i] <
                        rcfg.d95_fraction * rep.initial_d95[i]) {
                        stop = true;
                    }
                }
                if (stop) rep.termination = "PTV D95 dropped below the floor";
                break;
            case ReweightStop::MaxOuterRounds:
                stop = round >= rcfg.max_rounds;
                if (stop) rep.termination = "requested round count reached";
                break;
        }
        if (stop) {
            rep.status = SolveStatus::Converged;
            rep.solve = std::move(solve);
            break;
        }
        if (round + 1 >= rcfg.max_rounds && rcfg.stop != ReweightStop::MaxOuterRounds) {
            rep.status = SolveStatus::MaxItersExceeded;
            rep.termination = "round backstop reached before the stop condition";
            rep.solve = std::move(solve);
            break;
        }

        // Parameter updates, only for constraints violated against their
        // original thresholds; satisfied constraints stay frozen this round.
        for (std::size_t j = 0; j < params.size(); ++j) {
            if (checks[j].satisfied) continue;
            auto* c = params[j];
            c->alpha *= 1.0 + rcfg.sigma;
            const double d_factor = c->direction == ConstraintDirection::Upper
                                        ? 1.0 - rcfg.sigma
                                        : 1.0 + rcfg.sigma;
            for (double& d : c->d) d *= d_factor;
            c->p *= 1.0 - rcfg.sigma;
        }
        epsilon *= rcfg.gamma;
    }

    // the user-facing report counts against the original constraints; the
    // round history carries the drifted parameters
    rep.solve.final_violations = dose_violations(problem, rep.solve.x);
    rep.solve.caps.clear();
    for (const auto& v : constraint_views(problem)) {
        rep.solve.caps.push_back(v.max_violations);
    }
    rep.solve.method = "reweight";
    return rep;
}

}  // namespace fmo
