#include "fmo/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fmo/errors.hpp"

namespace fmo {

namespace {

// Indices of entries ordered by (value descending, index ascending). Only
// called with the positive entries, which are the ones a cap can affect.
void sort_desc_stable(std::vector<std::int64_t>& idx, std::span<const double> w) {
    std::sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
        const double wa = w[static_cast<std::size_t>(a)];
        const double wb = w[static_cast<std::size_t>(b)];
        return wa != wb ? wa > wb : a < b;
    });
}

}  // namespace

void project_cardinality_inplace(std::span<double> w, std::int64_t k) {
    if (k < 0) raise(ErrorCode::InvalidArgument, "projection cap must be >= 0");
    std::vector<std::int64_t> pos;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0) pos.push_back(static_cast<std::int64_t>(i));
    }
    if (static_cast<std::int64_t>(pos.size()) <= k) return;  // already feasible
    sort_desc_stable(pos, w);
    for (std::size_t r = static_cast<std::size_t>(k); r < pos.size(); ++r) {
        w[static_cast<std::size_t>(pos[r])] = 0.0;
    }
}

std::vector<double> project_upper(std::span<const double> w, std::int64_t k) {
    std::vector<double> out(w.begin(), w.end());
    project_cardinality_inplace(out, k);
    return out;
}

std::vector<double> project_lower(std::span<const double> w, std::int64_t k) {
    // Identical rule; the caller forms w = d - A x, so positive entries are
    // underdosed voxels.
    return project_upper(w, k);
}

std::int64_t positive_count(std::span<const double> w) {
    std::int64_t c = 0;
    for (double v : w) {
        if (v > 0.0) ++c;
    }
    return c;
}

bool is_cardinality_feasible(std::span<const double> w, std::int64_t k) {
    return positive_count(w) <= k;
}

bool is_combined_feasible(std::span<const double> y, const CombinedDoseSet& set) {
    for (const auto& c : set.constraints) {
        std::int64_t violations = 0;
        for (double v : y) {
            const bool violated =
                c.direction == ConstraintDirection::Upper ? v > c.level : v < c.level;
            if (violated) ++violations;
        }
        if (violations > c.max_violations) return false;
    }
    return true;
}

std::vector<double> project_combined(std::span<const double> y, const CombinedDoseSet& set) {
    const std::int64_t n = static_cast<std::int64_t>(y.size());
    if (set.constraints.empty()) raise(ErrorCode::InvalidArgument, "combined set has no constraints");
    for (const auto& c : set.constraints) {
        if (c.max_violations < 0 || c.max_violations > n) {
            raise(ErrorCode::InvalidArgument, "combined set cap outside [0, n]");
        }
    }

    // Ranks of the original vector, ascending, ties by index.
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        const double ya = y[static_cast<std::size_t>(a)];
        const double yb = y[static_cast<std::size_t>(b)];
        return ya != yb ? ya < yb : a < b;
    });

    std::vector<const DoseLevelConstraint*> uppers, lowers;
    for (const auto& c : set.constraints) {
        (c.direction == ConstraintDirection::Upper ? uppers : lowers).push_back(&c);
    }
    std::sort(uppers.begin(), uppers.end(),
              [](const auto* a, const auto* b) { return a->level < b->level; });
    std::sort(lowers.begin(), lowers.end(),
              [](const auto* a, const auto* b) { return a->level > b->level; });

    std::vector<double> out(y.begin(), y.end());
    for (const auto* c : uppers) {
        const std::int64_t clamped = n - c->max_violations;
        for (std::int64_t r = 0; r < clamped; ++r) {
            double& v = out[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
            v = std::min(c->level, v);
        }
    }
    for (const auto* c : lowers) {
        const std::int64_t clamped = n - c->max_violations;
        for (std::int64_t r = n - clamped; r < n; ++r) {
            double& v = out[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
            v = std::max(c->level, v);
        }
    }

    if (!is_combined_feasible(out, set)) {
        raise(ErrorCode::ConflictingConstraints,
              "combined projection left a constraint violated");
    }
    return out;
}

namespace {

constexpr std::int64_t kOracleMaxDim = 12;

// Next k-combination of {0..n-1} in lexicographic order; false when done.
bool next_combination(std::vector<std::int64_t>& c, std::int64_t n) {
    const std::int64_t k = static_cast<std::int64_t>(c.size());
    for (std::int64_t i = k - 1; i >= 0; --i) {
        if (c[static_cast<std::size_t>(i)] < n - (k - i)) {
            ++c[static_cast<std::size_t>(i)];
            for (std::int64_t j = i + 1; j < k; ++j) {
                c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
            }
            return true;
        }
    }
    return false;
}

std::vector<std::int64_t> first_combination(std::int64_t k) {
    std::vector<std::int64_t> c(static_cast<std::size_t>(k));
    std::iota(c.begin(), c.end(), 0);
    return c;
}

}  // namespace

std::vector<double> project_oracle(std::span<const double> w, std::int64_t k) {
    const std::int64_t n = static_cast<std::int64_t>(w.size());
    if (n > kOracleMaxDim) {
        raise(ErrorCode::DimensionTooLarge, "projection oracle limited to n <= 12");
    }
    k = std::min(k, n);

    std::vector<double> best;
    double best_dist = std::numeric_limits<double>::infinity();
    auto allowed = first_combination(k);
    bool more = true;
    while (more) {
        std::vector<double> cand(w.begin(), w.end());
        std::size_t a = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            if (a < allowed.size() && allowed[a] == i) {
                ++a;  // allowed positive, keep
            } else {
                cand[static_cast<std::size_t>(i)] = std::min(0.0, cand[static_cast<std::size_t>(i)]);
            }
        }
        double dist = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double d = cand[static_cast<std::size_t>(i)] - w[static_cast<std::size_t>(i)];
            dist += d * d;
        }
        if (dist < best_dist) {
            best_dist = dist;
            best = std::move(cand);
        }
        more = k > 0 && next_combination(allowed, n);
        if (k == 0) break;
    }
    return best;
}

std::vector<double> project_oracle(std::span<const double> y, const CombinedDoseSet& set) {
    const std::int64_t n = static_cast<std::int64_t>(y.size());
    if (n > kOracleMaxDim) {
        raise(ErrorCode::DimensionTooLarge, "projection oracle limited to n <= 12");
    }

    const std::size_t m = set.constraints.size();
    std::vector<std::vector<std::int64_t>> allowed(m);
    for (std::size_t c = 0; c < m; ++c) {
        allowed[c] = first_combination(std::min(set.constraints[c].max_violations, n));
    }

    std::vector<double> best;
    double best_dist = std::numeric_limits<double>::infinity();

    // Recursive product over each constraint's choice of allowed violators.
    auto evaluate = [&]() {
        std::vector<double> lo(static_cast<std::size_t>(n),
                               -std::numeric_limits<double>::infinity());
        std::vector<double> hi(static_cast<std::size_t>(n),
                               std::numeric_limits<double>::infinity());
        for (std::size_t c = 0; c < m; ++c) {
            const auto& con = set.constraints[c];
            std::size_t a = 0;
            for (std::int64_t i = 0; i < n; ++i) {
                const bool is_allowed = a < allowed[c].size() && allowed[c][a] == i;
                if (is_allowed) {
                    ++a;
                    continue;
                }
                if (con.direction == ConstraintDirection::Upper) {
                    hi[static_cast<std::size_t>(i)] =
                        std::min(hi[static_cast<std::size_t>(i)], con.level);
                } else {
                    lo[static_cast<std::size_t>(i)] =
                        std::max(lo[static_cast<std::size_t>(i)], con.level);
                }
            }
        }
        double dist = 0.0;
        std::vector<double> cand(y.begin(), y.end());
        for (std::int64_t i = 0; i < n; ++i) {
            const std::size_t u = static_cast<std::size_t>(i);
            if (lo[u] > hi[u]) return;  // empty piece
            cand[u] = std::clamp(cand[u], lo[u], hi[u]);
            const double d = cand[u] - y[u];
            dist += d * d;
        }
        if (dist < best_dist) {
            best_dist = dist;
            best = std::move(cand);
        }
    };

    auto recurse = [&](auto&& self, std::size_t c) -> void {
        if (c == m) {
            evaluate();
            return;
        }
        const std::int64_t k = std::min(set.constraints[c].max_violations, n);
        allowed[c] = first_combination(k);
        while (true) {
            self(self, c + 1);
            if (k == 0 || !next_combination(allowed[c], n)) break;
        }
    };
    recurse(recurse, 0);

    if (!std::isfinite(best_dist)) {
        raise(ErrorCode::ConflictingConstraints, "combined set is empty");
    }
    return best;
}

}  // namespace fmo
