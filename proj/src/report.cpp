#include "fmo/report.hpp"

#include <algorithm>
#include <fstream>

#include "fmo/dvh.hpp"
#include "fmo/errors.hpp"

namespace fmo {

using nlohmann::json;

namespace {

const char* status_name(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "converged";
        case SolveStatus::MaxItersExceeded: return "max_iters_exceeded";
        case SolveStatus::Infeasible: return "infeasible";
    }
    return "unknown";
}

}  // namespace

json metrics_json(const ProblemSpec& problem,
                  const std::vector<std::vector<double>>& structure_dose) {
    json out = json::array();
    const auto views = constraint_views(problem);
    for (std::size_t s = 0; s < structure_count(problem); ++s) {
        const auto& spec = structure_at(problem, s);
        const auto& dose = structure_dose.at(s);
        json sj;
        sj["structure"] = spec.name;
        sj["kind"] = to_string(spec.kind);
        sj["voxels"] = spec.voxel_count;
        sj["d95_gy"] = d_quantile(dose, 95.0);
        sj["min_gy"] = *std::min_element(dose.begin(), dose.end());
        sj["max_gy"] = *std::max_element(dose.begin(), dose.end());
        double mean = 0.0;
        for (double v : dose) mean += v;
        sj["mean_gy"] = mean / static_cast<double>(dose.size());
        json cons = json::array();
        for (const auto& cv : views) {
            if (cv.structure_index != s) continue;
            const double level = cv.constraint->d.front();
            const bool upper = cv.constraint->direction == ConstraintDirection::Upper;
            json cj;
            cj["direction"] = to_string(cv.constraint->direction);
            cj["d_gy"] = level;
            cj["p_percent"] = cv.constraint->p;
            cj["max_violations"] = cv.max_violations;
            cj["percent_violating"] =
                upper ? percent_above(dose, level) : percent_below(dose, level);
            cons.push_back(std::move(cj));
        }
        sj["constraints"] = std::move(cons);
        out.push_back(std::move(sj));
    }
    return out;
}

json solve_report_to_json(const SolveReport& report, const ProblemSpec& problem,
                          const json& config_echo) {
    json j;
    j["method"] = report.method;
    j["status"] = status_name(report.status);
    j["termination"] = report.termination;
    j["outer_iters"] = report.outer_iters;
    j["final_err"] = report.final_err;
    j["epsilon"] = report.epsilon;
    j["steps"] = report.steps;
    j["g_history"] = report.g_history;
    j["err_history"] = report.err_history;
    j["final_violations"] = report.final_violations;
    j["caps"] = report.caps;
    j["inner_failures"] = report.inner_failures;
    j["wall_seconds"] = report.wall_seconds;
    j["config"] = config_echo;
    j["metrics"] = metrics_json(problem, report.structure_dose);
    j["fluence_mu"] = report.x;
    json doses;
    for (std::size_t s = 0; s < structure_count(problem); ++s) {
        doses[structure_at(problem, s).name] = report.structure_dose.at(s);
    }
    j["structure_dose_gy"] = std::move(doses);
    return j;
}

json reweight_report_to_json(const ReweightReport& report, const ProblemSpec& problem,
                             const json& config_echo) {
    json j = solve_report_to_json(report.solve, problem, config_echo);
    j["method"] = "reweight";
    j["status"] = status_name(report.status);
    j["termination"] = report.termination;
    j["all_constraints_satisfied"] = report.all_satisfied;
    j["rounds"] = report.rounds.size();
    j["initial_d95_gy"] = report.initial_d95;
    return j;
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(ErrorCode::IoError, "cannot write '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out) raise(ErrorCode::IoError, "write failed for '" + path + "'");
}

void write_trace_csv(const SolveReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(ErrorCode::IoError, "cannot write '" + path + "'");
    out << "k,g,err";
    for (std::size_t j = 0; j < report.caps.size(); ++j) out << ",violations_" << j;
    out << "\n";
    for (std::size_t k = 0; k < report.g_history.size(); ++k) {
        out << k << "," << report.g_history[k] << ",";
        if (k < report.err_history.size()) out << report.err_history[k];
        for (std::size_t j = 0; j < report.caps.size(); ++j) {
            out << ",";
            if (k < report.violation_history.size()) out << report.violation_history[k][j];
        }
        out << "\n";
    }
}

void write_dvh_csv(const ProblemSpec& problem,
                   const std::vector<std::vector<double>>& structure_dose,
                   const std::string& path, std::size_t samples) {
    std::ofstream out(path);
    if (!out) raise(ErrorCode::IoError, "cannot write '" + path + "'");
    out << "structure,dose_gy,percent_volume\n";
    for (std::size_t s = 0; s < structure_count(problem); ++s) {
        const auto& name = structure_at(problem, s).name;
        const auto grid = default_dose_grid(structure_dose.at(s), samples);
        for (const auto& [d, pct] : dvh_curve(structure_dose.at(s), grid)) {
            out << name << "," << d << "," << pct << "\n";
        }
    }
}

void write_round_history_csv(const ReweightReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(ErrorCode::IoError, "cannot write '" + path + "'");
    const std::size_t ncons = report.rounds.empty() ? 0 : report.rounds.front().alpha.size();
    const std::size_t nptv = report.initial_d95.size();
    out << "round,epsilon,bcd_iters,g";
    for (std::size_t j = 0; j < ncons; ++j) {
        out << ",alpha_" << j << ",d_" << j << ",p_" << j << ",violations_" << j
            << ",satisfied_" << j;
    }
    for (std::size_t i = 0; i < nptv; ++i) out << ",ptv" << i << "_d95";
    out << "\n";
    for (const auto& r : report.rounds) {
        out << r.round << "," << r.epsilon << "," << r.bcd_iters << "," << r.g;
        for (std::size_t j = 0; j < ncons; ++j) {
            out << "," << r.alpha[j] << "," << r.d_level[j] << "," << r.p[j] << ","
                << r.violations[j] << "," << static_cast<int>(r.satisfied[j]);
        }
        for (std::size_t i = 0; i < nptv; ++i) out << "," << r.ptv_d95[i];
        out << "\n";
    }
}

std::vector<double> fluence_from_report_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::IoError, "cannot open '" + path + "'");
    json j;
    try {
        in >> j;
        return j.at("fluence_mu").get<std::vector<double>>();
    } catch (const json::exception& e) {
        raise(ErrorCode::ParseError, std::string("invalid report file: ") + e.what());
    }
}

}  // namespace fmo
