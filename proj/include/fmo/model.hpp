#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmo/sparse.hpp"

namespace fmo {

enum class StructureKind { PTV, OAR };
enum class ConstraintDirection { Upper, Lower };

const char* to_string(StructureKind k);
const char* to_string(ConstraintDirection d);

/// Maximum number of voxels allowed to violate a dose--volume constraint on a
/// structure with n voxels and volume percentage p: floor(n*p/100).
std::int64_t cap(std::int64_t n, double p);

struct StructureSpec {
    std::string name;
    StructureKind kind = StructureKind::OAR;
    std::int64_t voxel_count = 0;
    // Indices into the patient grid; may be empty for ingested matrices where
    // only counts matter.
    std::vector<std::int64_t> voxel_ids;
};

struct TargetObjective {
    // Prescription dose per voxel (Gy). Scalars are stored as a length-1
    // vector and broadcast to voxel_count during validation.
    std::vector<double> d;
    double alpha = 1.0;
};

struct DoseVolumeConstraint {
    ConstraintDirection direction = ConstraintDirection::Upper;
    // Threshold dose (Gy), broadcast like TargetObjective::d.
    std::vector<double> d;
    // Percent of the volume allowed to violate, in [0, 100].
    double p = 0.0;
    double alpha = 1.0;
};

struct PtvEntry {
    StructureSpec structure;
    SparseMatrix matrix;
    TargetObjective objective;
    // Lower/upper dose--volume constraints on the PTV itself (optional).
    std::vector<DoseVolumeConstraint> constraints;
};

struct OarEntry {
    StructureSpec structure;
    SparseMatrix matrix;
    std::vector<DoseVolumeConstraint> constraints;  // at least one
};

/// A full problem instance: PTV least-squares objectives, dose--volume
/// constrained structures, and ridge regularization. Immutable after
/// validation and safe to share across concurrent solves.
struct ProblemSpec {
    std::vector<PtvEntry> ptvs;
    std::vector<OarEntry> oars;
    double lambda = 1e-8;
    std::int64_t beamlet_count = 0;
};

/// Checks every type invariant and dimension, broadcasts scalar prescriptions
/// to per-voxel vectors, and fills in beamlet_count when unset. Idempotent.
/// Throws Error with codes DimensionMismatch, NonPositiveWeight,
/// NegativeMatrixEntry, EmptyStructure, or InvalidArgument.
ProblemSpec validate(ProblemSpec problem);

/// Flat view of one dose--volume constraint, in the order PTV entries first
/// then OAR entries, each structure's constraints in declaration order. This
/// is the block order of the auxiliary variable w.
struct ConstraintView {
    std::size_t structure_index = 0;  // global: ptvs then oars
    const StructureSpec* structure = nullptr;
    const SparseMatrix* matrix = nullptr;
    const DoseVolumeConstraint* constraint = nullptr;
    std::int64_t n = 0;
    std::int64_t max_violations = 0;  // cap(n, p)
};

/// Flat view of one PTV least-squares objective term.
struct ObjectiveView {
    std::size_t structure_index = 0;
    const StructureSpec* structure = nullptr;
    const SparseMatrix* matrix = nullptr;
    const TargetObjective* objective = nullptr;
    std::int64_t n = 0;
};

std::vector<ConstraintView> constraint_views(const ProblemSpec& problem);
std::vector<ObjectiveView> objective_views(const ProblemSpec& problem);

std::size_t structure_count(const ProblemSpec& problem);
const StructureSpec& structure_at(const ProblemSpec& problem, std::size_t index);
const SparseMatrix& matrix_at(const ProblemSpec& problem, std::size_t index);

struct SolverConfig {
    double epsilon = 1e-3;
    // t_j = step_fraction * n_j / alpha_j; 1.0 is the block-coordinate
    // descent special case.
    double step_fraction = 1.0;
    // Optional explicit per-constraint steps (overrides step_fraction).
    std::vector<double> step_override;
    int max_outer_iters = 5000;
    double inner_tol = 1e-8;
    int inner_max_iters = 0;  // 0 = 50 * beamlet_count
    std::uint64_t seed = 0;
    // Keep every w iterate in the report (tests and iterate traces).
    bool record_iterates = false;
};

/// Resolves the per-constraint steps t_j and enforces 0 < t_j <= n_j/alpha_j.
std::vector<double> resolve_steps(const ProblemSpec& problem, const SolverConfig& config);

}  // namespace fmo
