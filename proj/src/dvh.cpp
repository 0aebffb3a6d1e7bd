#include "fmo/dvh.hpp"

#include <algorithm>
#include <cmath>

#include "fmo/errors.hpp"

namespace fmo {

namespace {

void require_nonempty(std::span<const double> dose) {
    if (dose.empty()) raise(ErrorCode::EmptyStructure, "empty dose vector");
}

}  // namespace

std::vector<std::pair<double, double>> dvh_curve(std::span<const double> dose,
                                                 std::span<const double> grid) {
    require_nonempty(dose);
    std::vector<double> sorted(dose.begin(), dose.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());

    std::vector<std::pair<double, double>> curve;
    curve.reserve(grid.size());
    for (double d : grid) {
        // number of voxels with dose >= d
        const auto it = std::lower_bound(sorted.begin(), sorted.end(), d);
        const double count = static_cast<double>(sorted.end() - it);
        curve.emplace_back(d, 100.0 * count / n);
    }
    return curve;
}

std::vector<double> default_dose_grid(std::span<const double> dose, std::size_t samples) {
    require_nonempty(dose);
    const double top = 1.1 * *std::max_element(dose.begin(), dose.end());
    std::vector<double> grid(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        grid[i] = top * static_cast<double>(i) / static_cast<double>(samples - 1);
    }
    return grid;
}

double d_quantile(std::span<const double> dose, double q) {
    require_nonempty(dose);
    if (q <= 0.0 || q > 100.0) raise(ErrorCode::InvalidArgument, "quantile q outside (0, 100]");
    const std::int64_t n = static_cast<std::int64_t>(dose.size());
    const std::int64_t rank =
        static_cast<std::int64_t>(std::ceil(q * static_cast<double>(n) / 100.0));
    std::vector<double> sorted(dose.begin(), dose.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    return sorted[static_cast<std::size_t>(rank - 1)];
}

double percent_above(std::span<const double> dose, double level) {
    require_nonempty(dose);
    std::int64_t count = 0;
    for (double v : dose) {
        if (v > level) ++count;
    }
    return 100.0 * static_cast<double>(count) / static_cast<double>(dose.size());
}

double percent_below(std::span<const double> dose, double level) {
    require_nonempty(dose);
    std::int64_t count = 0;
    for (double v : dose) {
        if (v < level) ++count;
    }
    return 100.0 * static_cast<double>(count) / static_cast<double>(dose.size());
}

}  // namespace fmo
