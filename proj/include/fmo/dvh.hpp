#pragma once

#include <span>
#include <utility>
#include <vector>

namespace fmo {

/// Cumulative dose--volume histogram: for each grid point d, the percent of
/// voxels receiving at least d Gy ('>=' semantics, the display convention).
/// The curve is nonincreasing and starts at 100 for d = 0.
std::vector<std::pair<double, double>> dvh_curve(std::span<const double> dose,
                                                 std::span<const double> grid);

/// Default sampling grid: 512 points from 0 to 1.1 * max(dose).
std::vector<double> default_dose_grid(std::span<const double> dose, std::size_t samples = 512);

/// Largest d such that at least q percent of voxels receive >= d, i.e. the
/// ceil(q*n/100)-th largest dose. D95 = d_quantile(dose, 95).
double d_quantile(std::span<const double> dose, double q);

/// Percent of voxels with dose strictly above `level` (the violation-count
/// semantics of the constraint checks).
double percent_above(std::span<const double> dose, double level);

/// Percent strictly below `level`, for lower dose--volume constraints.
double percent_below(std::span<const double> dose, double level);

}  // namespace fmo
