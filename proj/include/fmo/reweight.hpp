#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fmo/model.hpp"
#include "fmo/solver.hpp"

namespace fmo {

enum class ReweightStop {
    AllConstraintsMet,  // stop once every original constraint is satisfied
    D95Floor,           // stop once a PTV D95 drops below fraction * initial
    MaxOuterRounds,     // run exactly max_rounds rounds
};

struct ReweightConfig {
    double sigma = 0.01;  // weight update parameter, > 0
    double gamma = 0.99;  // tolerance decay, in (0, 1)
    ReweightStop stop = ReweightStop::AllConstraintsMet;
    double d95_fraction = 0.98;  // D95Floor threshold, in (0, 1)
    int max_rounds = 500;        // stop target for MaxOuterRounds, backstop otherwise
};

struct ConstraintCheck {
    std::int64_t violations = 0;
    std::int64_t max_violations = 0;
    bool satisfied = false;
};

/// Strict violation counts of the dose under x against the problem's
/// (original) thresholds; satisfied means count <= cap(n, p).
std::vector<ConstraintCheck> check_original_constraints(const ProblemSpec& problem,
                                                        std::span<const double> x);

struct ReweightRound {
    int round = 0;
    double epsilon = 0.0;
    std::vector<double> alpha;    // per constraint, values used this round
    std::vector<double> d_level;  // first entry of each threshold vector
    std::vector<double> p;
    std::vector<std::int64_t> violations;  // against the original constraints
    std::vector<std::uint8_t> satisfied;
    std::vector<double> ptv_d95;
    double g = 0.0;
    int bcd_iters = 0;
};

struct ReweightReport {
    SolveReport solve;  // final round's solve
    std::vector<ReweightRound> rounds;
    bool all_satisfied = false;
    SolveStatus status = SolveStatus::Converged;
    std::string termination;
    std::vector<double> initial_d95;  // per PTV, at the warm-start fluence
};

/// Iterative re-weighting: repeated block coordinate descent solves with the
/// weights raised, thresholds tightened, and volume percentages shrunk on
/// every constraint still violated against its original parameters, and the
/// stopping tolerance decayed geometrically each round.
ReweightReport run_reweight(const ProblemSpec& problem, const ReweightConfig& rcfg,
                            const SolverConfig& scfg = {});

}  // namespace fmo
