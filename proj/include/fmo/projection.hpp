#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fmo/model.hpp"

namespace fmo {

/// The nonconvex cardinality set {w : ||(w)_+||_0 <= k}: at most k entries
/// may be positive.
struct CardinalitySet {
    std::int64_t n = 0;
    std::int64_t k = 0;
    ConstraintDirection direction = ConstraintDirection::Upper;
};

/// One member of a combined dose-space set: at most `max_violations` entries
/// may lie strictly above (Upper) or strictly below (Lower) `level`.
struct DoseLevelConstraint {
    ConstraintDirection direction = ConstraintDirection::Upper;
    double level = 0.0;
    std::int64_t max_violations = 0;
};

/// Intersection of dose-level constraints on one structure's dose vector.
struct CombinedDoseSet {
    std::int64_t n = 0;
    std::vector<DoseLevelConstraint> constraints;
};

/// Euclidean projection onto {w : ||(w)_+||_0 <= k}: the k largest entries
/// (ties broken by index) are kept, every other entry e becomes min(0, e).
std::vector<double> project_upper(std::span<const double> w, std::int64_t k);

/// Same rule; callers pass w = d - A x so a positive entry marks an
/// underdosed voxel.
std::vector<double> project_lower(std::span<const double> w, std::int64_t k);

/// In-place form used by the solver inner loop.
void project_cardinality_inplace(std::span<double> w, std::int64_t k);

/// Number of strictly positive entries.
std::int64_t positive_count(std::span<const double> w);

bool is_cardinality_feasible(std::span<const double> w, std::int64_t k);

/// Projection onto the intersection of dose-level constraints, computed
/// against the sorted ranks of the input: upper constraints in increasing
/// level order clamp the n-k lowest-ranked entries to min(level, y), lower
/// constraints in decreasing level order clamp the n-k highest-ranked entries
/// to max(level, y). Feasibility of the result is verified; a failure throws
/// Error(ConflictingConstraints).
std::vector<double> project_combined(std::span<const double> y, const CombinedDoseSet& set);

bool is_combined_feasible(std::span<const double> y, const CombinedDoseSet& set);

/// Exhaustive nearest-point search over every convex piece of the set (each
/// choice of allowed violators). Test oracle; requires n <= 12 and throws
/// Error(DimensionTooLarge) beyond that. Ties pick the lexicographically
/// smallest violator subset.
std::vector<double> project_oracle(std::span<const double> w, std::int64_t k);
std::vector<double> project_oracle(std::span<const double> y, const CombinedDoseSet& set);

}  // namespace fmo
