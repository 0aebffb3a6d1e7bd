#include "fmo/model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "fmo/errors.hpp"

namespace fmo {

const char* to_string(StructureKind k) { return k == StructureKind::PTV ? "PTV" : "OAR"; }

const char* to_string(ConstraintDirection d) {
    return d == ConstraintDirection::Upper ? "upper" : "lower";
}

std::int64_t cap(std::int64_t n, double p) {
    if (n < 1) raise(ErrorCode::EmptyStructure, "cap: n must be >= 1");
    if (p < 0.0 || p > 100.0) raise(ErrorCode::InvalidArgument, "cap: p outside [0, 100]");
    return static_cast<std::int64_t>(std::floor(static_cast<double>(n) * p / 100.0));
}

namespace {

void check_structure(const StructureSpec& s) {
    if (s.voxel_count < 1) {
        raise(ErrorCode::EmptyStructure, "structure '" + s.name + "' has no voxels");
    }
    if (!s.voxel_ids.empty()) {
        if (static_cast<std::int64_t>(s.voxel_ids.size()) != s.voxel_count) {
            raise(ErrorCode::DimensionMismatch,
                  "structure '" + s.name + "': voxel_ids length != voxel_count");
        }
        std::unordered_set<std::int64_t> seen(s.voxel_ids.begin(), s.voxel_ids.end());
        if (static_cast<std::int64_t>(seen.size()) != s.voxel_count) {
            raise(ErrorCode::InvalidArgument,
                  "structure '" + s.name + "': duplicate voxel ids");
        }
    }
}

void check_matrix(const StructureSpec& s, const SparseMatrix& m, std::int64_t beamlets) {
    if (m.rows() != s.voxel_count) {
        raise(ErrorCode::DimensionMismatch,
              "structure '" + s.name + "': matrix has " + std::to_string(m.rows()) +
                  " rows for " + std::to_string(s.voxel_count) + " voxels");
    }
    if (m.cols() != beamlets) {
        raise(ErrorCode::DimensionMismatch,
              "structure '" + s.name + "': matrix has " + std::to_string(m.cols()) +
                  " columns, expected " + std::to_string(beamlets));
    }
    for (double v : m.values()) {
        if (v < 0.0) {
            raise(ErrorCode::NegativeMatrixEntry,
                  "structure '" + s.name + "': negative dose matrix entry");
        }
    }
}

std::vector<double> broadcast(const std::vector<double>& d, std::int64_t n, const char* what,
                              const std::string& name) {
    if (d.size() == 1) return std::vector<double>(static_cast<std::size_t>(n), d[0]);
    if (static_cast<std::int64_t>(d.size()) != n) {
        raise(ErrorCode::DimensionMismatch,
              "structure '" + name + "': " + what + " has length " + std::to_string(d.size()) +
                  ", expected 1 or " + std::to_string(n));
    }
    return d;
}

void check_constraint(DoseVolumeConstraint& c, const StructureSpec& s) {
    if (c.alpha <= 0.0) {
        raise(ErrorCode::NonPositiveWeight,
              "structure '" + s.name + "': constraint weight alpha must be > 0");
    }
    if (c.p < 0.0 || c.p > 100.0) {
        raise(ErrorCode::InvalidArgument,
              "structure '" + s.name + "': constraint percent outside [0, 100]");
    }
    if (c.d.empty()) {
        raise(ErrorCode::InvalidArgument,
              "structure '" + s.name + "': constraint threshold missing");
    }
    c.d = broadcast(c.d, s.voxel_count, "constraint threshold", s.name);
    for (double v : c.d) {
        if (v < 0.0) {
            raise(ErrorCode::InvalidArgument,
                  "structure '" + s.name + "': constraint threshold must be >= 0");
        }
    }
}

}  // namespace

ProblemSpec validate(ProblemSpec problem) {
    if (problem.lambda <= 0.0) {
        raise(ErrorCode::NonPositiveWeight, "regularization weight lambda must be > 0");
    }
    if (problem.ptvs.empty()) {
        raise(ErrorCode::InvalidArgument, "problem has no PTV");
    }

    std::int64_t beamlets = problem.beamlet_count;
    if (beamlets == 0) beamlets = problem.ptvs.front().matrix.cols();

    for (auto& p : problem.ptvs) {
        check_structure(p.structure);
        check_matrix(p.structure, p.matrix, beamlets);
        if (p.objective.alpha <= 0.0) {
            raise(ErrorCode::NonPositiveWeight,
                  "structure '" + p.structure.name + "': objective weight alpha must be > 0");
        }
        if (p.objective.d.empty()) {
            raise(ErrorCode::InvalidArgument,
                  "structure '" + p.structure.name + "': prescription missing");
        }
        p.objective.d =
            broadcast(p.objective.d, p.structure.voxel_count, "prescription", p.structure.name);
        for (double v : p.objective.d) {
            if (v <= 0.0) {
                raise(ErrorCode::InvalidArgument,
                      "structure '" + p.structure.name + "': prescription must be > 0");
            }
        }
        for (auto& c : p.constraints) check_constraint(c, p.structure);
    }

    for (auto& o : problem.oars) {
        check_structure(o.structure);
        check_matrix(o.structure, o.matrix, beamlets);
        if (o.constraints.empty()) {
            raise(ErrorCode::InvalidArgument,
                  "structure '" + o.structure.name + "': OAR carries no constraint");
        }
        for (auto& c : o.constraints) check_constraint(c, o.structure);
    }

    problem.beamlet_count = beamlets;
    return problem;
}

std::vector<ConstraintView> constraint_views(const ProblemSpec& problem) {
    std::vector<ConstraintView> out;
    std::size_t index = 0;
    for (const auto& p : problem.ptvs) {
        for (const auto& c : p.constraints) {
            out.push_back({index, &p.structure, &p.matrix, &c, p.structure.voxel_count,
                           cap(p.structure.voxel_count, c.p)});
        }
        ++index;
    }
    for (const auto& o : problem.oars) {
        for (const auto& c : o.constraints) {
            out.push_back({index, &o.structure, &o.matrix, &c, o.structure.voxel_count,
                           cap(o.structure.voxel_count, c.p)});
        }
        ++index;
    }
    return out;
}

std::vector<ObjectiveView> objective_views(const ProblemSpec& problem) {
    std::vector<ObjectiveView> out;
    std::size_t index = 0;
    for (const auto& p : problem.ptvs) {
        out.push_back({index, &p.structure, &p.matrix, &p.objective, p.structure.voxel_count});
        ++index;
    }
    return out;
}

std::size_t structure_count(const ProblemSpec& problem) {
    return problem.ptvs.size() + problem.oars.size();
}

const StructureSpec& structure_at(const ProblemSpec& problem, std::size_t index) {
    if (index < problem.ptvs.size()) return problem.ptvs[index].structure;
    return problem.oars.at(index - problem.ptvs.size()).structure;
}

const SparseMatrix& matrix_at(const ProblemSpec& problem, std::size_t index) {
    if (index < problem.ptvs.size()) return problem.ptvs[index].matrix;
    return problem.oars.at(index - problem.ptvs.size()).matrix;
}

std::vector<double> resolve_steps(const ProblemSpec& problem, const SolverConfig& config) {
    if (config.epsilon <= 0.0) {
        raise(ErrorCode::InvalidArgument, "stopping tolerance epsilon must be > 0");
    }
    const auto views = constraint_views(problem);
    std::vector<double> steps(views.size());
    if (!config.step_override.empty() && config.step_override.size() != views.size()) {
        raise(ErrorCode::DimensionMismatch, "step_override length != number of constraints");
    }
    for (std::size_t j = 0; j < views.size(); ++j) {
        const double limit =
            static_cast<double>(views[j].n) / views[j].constraint->alpha;
        const double t = config.step_override.empty()
                             ? config.step_fraction * limit
                             : config.step_override[j];
        if (!(t > 0.0) || t > limit * (1.0 + 1e-12)) {
            raise(ErrorCode::InvalidArgument,
                  "step t_j must satisfy 0 < t_j <= n_j/alpha_j");
        }
        steps[j] = std::min(t, limit);
    }
    return steps;
}

}  // namespace fmo
