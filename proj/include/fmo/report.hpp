#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fmo/model.hpp"
#include "fmo/reweight.hpp"
#include "fmo/solver.hpp"

namespace fmo {

/// Per-structure metric table: D95, mean, max, and the percent of voxels
/// strictly above/below every constraint threshold.
nlohmann::json metrics_json(const ProblemSpec& problem,
                            const std::vector<std::vector<double>>& structure_dose);

/// Full report: configuration echo, termination, iterate history summary,
/// metrics, and the final fluence.
nlohmann::json solve_report_to_json(const SolveReport& report, const ProblemSpec& problem,
                                    const nlohmann::json& config_echo);

nlohmann::json reweight_report_to_json(const ReweightReport& report, const ProblemSpec& problem,
                                       const nlohmann::json& config_echo);

void write_json_file(const nlohmann::json& j, const std::string& path);

/// Iterate trace: k, g, err, then one strict-violation-count column per
/// constraint.
void write_trace_csv(const SolveReport& report, const std::string& path);

/// DVH curves for every structure: columns structure, dose_gy, percent_volume.
void write_dvh_csv(const ProblemSpec& problem,
                   const std::vector<std::vector<double>>& structure_dose,
                   const std::string& path, std::size_t samples = 512);

/// Round history: round, epsilon, then per-constraint alpha/d/p and violation
/// counts, PTV D95s, and the round objective.
void write_round_history_csv(const ReweightReport& report, const std::string& path);

/// Reads the final fluence back out of a written report (for polishing).
std::vector<double> fluence_from_report_file(const std::string& path);

}  // namespace fmo
