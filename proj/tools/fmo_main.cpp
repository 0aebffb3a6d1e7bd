// Command-line front end: phantom generation, the partial-minimization
// solvers, re-weighting, polishing, and method comparison on problem
// directories.
//
// Exit codes: 0 success, 2 usage or validation error, 3 iteration limit
// reached, 4 infeasible polish.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "fmo/baselines.hpp"
#include "fmo/dosegen.hpp"
#include "fmo/dvh.hpp"
#include "fmo/errors.hpp"
#include "fmo/kernels.hpp"
#include "fmo/report.hpp"
#include "fmo/reweight.hpp"
#include "fmo/solver.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIterLimit = 3;
constexpr int kExitInfeasible = 4;

struct SolveArgs {
    std::string problem_dir;
    std::string method = "bcd";
    double epsilon = 1e-3;
    double lambda = 0.0;     // 0 = keep the problem's value
    double alpha = 0.0;      // 0 = keep; otherwise override every constraint weight
    double alpha_ptv = 0.0;  // 0 = keep; otherwise override every PTV weight
    double step_fraction = 1.0;
    int max_iters = 5000;
    double inner_tol = 1e-8;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
};

json config_echo(const fmo::SolverConfig& cfg, const SolveArgs& args) {
    json j;
    j["method"] = args.method;
    j["epsilon"] = cfg.epsilon;
    j["step_fraction"] = cfg.step_fraction;
    j["max_outer_iters"] = cfg.max_outer_iters;
    j["inner_tol"] = cfg.inner_tol;
    j["seed"] = cfg.seed;
    j["lambda_override"] = args.lambda;
    j["alpha_override"] = args.alpha;
    j["alpha_ptv_override"] = args.alpha_ptv;
    j["threads"] = fmo::kernels::threads();
    return j;
}

fmo::ProblemSpec load_with_overrides(const SolveArgs& args) {
    fmo::ProblemSpec problem = fmo::load_problem(args.problem_dir);
    if (args.lambda > 0.0) problem.lambda = args.lambda;
    if (args.alpha > 0.0) {
        for (auto& p : problem.ptvs) {
            for (auto& c : p.constraints) c.alpha = args.alpha;
        }
        for (auto& o : problem.oars) {
            for (auto& c : o.constraints) c.alpha = args.alpha;
        }
    }
    if (args.alpha_ptv > 0.0) {
        for (auto& p : problem.ptvs) p.objective.alpha = args.alpha_ptv;
    }
    return fmo::validate(std::move(problem));
}

fmo::SolverConfig solver_config(const SolveArgs& args) {
    fmo::SolverConfig cfg;
    cfg.epsilon = args.epsilon;
    cfg.step_fraction = args.step_fraction;
    cfg.max_outer_iters = args.max_iters;
    cfg.inner_tol = args.inner_tol;
    cfg.seed = args.seed;
    return cfg;
}

fmo::SolveReport dispatch_method(const fmo::ProblemSpec& problem, const SolveArgs& args) {
    const fmo::SolverConfig cfg = solver_config(args);
    if (args.method == "bcd") return fmo::run_bcd(problem, cfg);
    if (args.method == "pgd") return fmo::run_pgd(problem, cfg);
    if (args.method == "penalty-iter") return fmo::solve_penalty_iterative(problem, cfg);
    if (args.method == "slack-greedy") return fmo::solve_slack_greedy(problem, cfg);
    throw fmo::Error(fmo::ErrorCode::InvalidArgument,
                     "unknown method '" + args.method +
                         "' (expected bcd|pgd|penalty-iter|slack-greedy)");
}

void write_solve_outputs(const fmo::SolveReport& rep, const fmo::ProblemSpec& problem,
                         const json& echo, const std::string& out_dir) {
    fs::create_directories(out_dir);
    fmo::write_json_file(fmo::solve_report_to_json(rep, problem, echo),
                         (fs::path(out_dir) / "report.json").string());
    fmo::write_trace_csv(rep, (fs::path(out_dir) / "trace.csv").string());
    fmo::write_dvh_csv(problem, rep.structure_dose, (fs::path(out_dir) / "dvh.csv").string());
}

int status_to_exit(fmo::SolveStatus s) {
    switch (s) {
        case fmo::SolveStatus::Converged: return kExitOk;
        case fmo::SolveStatus::MaxItersExceeded: return kExitIterLimit;
        case fmo::SolveStatus::Infeasible: return kExitInfeasible;
    }
    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fluence map optimization with nonconvex dose-volume constraints"};
    app.require_subcommand(1);

    // ---- phantom ----------------------------------------------------------
    std::string phantom_spec_path, phantom_bundled = "prostate-like", phantom_out;
    auto* cmd_phantom = app.add_subcommand("phantom", "Generate a synthetic problem directory");
    auto* spec_opt = cmd_phantom->add_option("--spec", phantom_spec_path, "Phantom spec (JSON)");
    cmd_phantom->add_option("--bundled", phantom_bundled, "Bundled spec name (prostate-like)")
        ->excludes(spec_opt);
    cmd_phantom->add_option("--out", phantom_out, "Output problem directory")->required();

    // ---- solve ------------------------------------------------------------
    SolveArgs sa;
    auto* cmd_solve = app.add_subcommand("solve", "Run one solver on a problem directory");
    cmd_solve->add_option("problem", sa.problem_dir, "Problem directory")->required();
    cmd_solve->add_option("--method", sa.method, "bcd|pgd|penalty-iter|slack-greedy");
    cmd_solve->add_option("--epsilon", sa.epsilon, "Outer stopping tolerance")
        ->check(CLI::PositiveNumber);
    cmd_solve->add_option("--lambda", sa.lambda, "Override the regularization weight")
        ->check(CLI::PositiveNumber);
    cmd_solve->add_option("--alpha", sa.alpha, "Override every constraint weight")
        ->check(CLI::PositiveNumber);
    cmd_solve->add_option("--alpha-ptv", sa.alpha_ptv, "Override every PTV objective weight")
        ->check(CLI::PositiveNumber);
    cmd_solve->add_option("--step-fraction", sa.step_fraction,
                          "t_j = fraction * n_j/alpha_j (pgd)")
        ->check(CLI::Range(1e-12, 1.0));
    cmd_solve->add_option("--max-iters", sa.max_iters, "Outer iteration limit")
        ->check(CLI::PositiveNumber);
    cmd_solve->add_option("--inner-tol", sa.inner_tol, "Inner KKT tolerance")
        ->check(CLI::PositiveNumber);
    cmd_solve->add_option("--seed", sa.seed, "Seed for the deterministic estimators");
    cmd_solve->add_option("--out", sa.out_dir, "Output directory");

    // ---- reweight ---------------------------------------------------------
    SolveArgs ra;
    double sigma = 0.01, gamma = 0.99;
    std::string stop_rule = "met";
    auto* cmd_reweight = app.add_subcommand("reweight", "Iterative re-weighting around BCD");
    cmd_reweight->add_option("problem", ra.problem_dir, "Problem directory")->required();
    cmd_reweight->add_option("--sigma", sigma, "Weight update parameter")
        ->check(CLI::PositiveNumber);
    cmd_reweight->add_option("--gamma", gamma, "Tolerance decay in (0,1)")
        ->check(CLI::Range(1e-12, 1.0 - 1e-12));
    cmd_reweight->add_option("--stop", stop_rule, "met | d95:FRAC | rounds:N");
    cmd_reweight->add_option("--epsilon", ra.epsilon, "Initial stopping tolerance")
        ->check(CLI::PositiveNumber);
    cmd_reweight->add_option("--lambda", ra.lambda, "Override the regularization weight")
        ->check(CLI::PositiveNumber);
    cmd_reweight->add_option("--alpha", ra.alpha, "Override every constraint weight")
        ->check(CLI::PositiveNumber);
    cmd_reweight->add_option("--max-iters", ra.max_iters, "BCD outer iteration limit")
        ->check(CLI::PositiveNumber);
    cmd_reweight->add_option("--inner-tol", ra.inner_tol, "Inner KKT tolerance")
        ->check(CLI::PositiveNumber);
    cmd_reweight->add_option("--seed", ra.seed, "Seed");
    cmd_reweight->add_option("--out", ra.out_dir, "Output directory");

    // ---- polish -----------------------------------------------------------
    std::string polish_problem, polish_from, polish_out = "out";
    double polish_tol = 1e-8;
    auto* cmd_polish = app.add_subcommand("polish", "Re-solve with hard subvolume bounds");
    cmd_polish->add_option("problem", polish_problem, "Problem directory")->required();
    cmd_polish->add_option("--from", polish_from, "Report JSON holding the warm-start fluence")
        ->required();
    cmd_polish->add_option("--tol", polish_tol, "QP tolerance")->check(CLI::PositiveNumber);
    cmd_polish->add_option("--out", polish_out, "Output directory");

    // ---- compare ----------------------------------------------------------
    std::string compare_problem, compare_out = "out";
    std::vector<std::string> compare_methods;
    double compare_epsilon = 1e-3;
    std::uint64_t compare_seed = 0;
    auto* cmd_compare = app.add_subcommand("compare", "Run several methods and tabulate");
    cmd_compare->add_option("problem", compare_problem, "Problem directory")->required();
    cmd_compare
        ->add_option("--methods", compare_methods,
                     "Comma-separated subset of bcd,pgd,penalty-iter,slack-greedy")
        ->delimiter(',')
        ->required();
    cmd_compare->add_option("--epsilon", compare_epsilon, "Stopping tolerance")
        ->check(CLI::PositiveNumber);
    cmd_compare->add_option("--seed", compare_seed, "Seed");
    cmd_compare->add_option("--out", compare_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // help requests exit 0; every other parse problem is a usage error
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (cmd_phantom->parsed()) {
            fmo::PhantomSpec spec;
            if (!phantom_spec_path.empty()) {
                spec = fmo::phantom_spec_from_json_file(phantom_spec_path);
            } else if (phantom_bundled == "prostate-like") {
                spec = fmo::prostate_like_phantom();
            } else {
                std::cerr << "unknown bundled phantom '" << phantom_bundled << "'\n";
                return kExitUsage;
            }
            const auto problem = fmo::generate_phantom(spec);
            fmo::save_problem(problem, phantom_out);
            std::cout << "wrote problem directory " << phantom_out << " ("
                      << fmo::structure_count(problem) << " structures, "
                      << problem.beamlet_count << " beamlets)\n";
            return kExitOk;
        }

        if (cmd_solve->parsed()) {
            const auto problem = load_with_overrides(sa);
            const auto rep = dispatch_method(problem, sa);
            write_solve_outputs(rep, problem, config_echo(solver_config(sa), sa), sa.out_dir);
            std::cout << rep.method << ": " << rep.termination << " after " << rep.outer_iters
                      << " iterations (err " << rep.final_err << ")\n";
            return status_to_exit(rep.status);
        }

        if (cmd_reweight->parsed()) {
            fmo::ReweightConfig rcfg;
            rcfg.sigma = sigma;
            rcfg.gamma = gamma;
            if (stop_rule == "met") {
                rcfg.stop = fmo::ReweightStop::AllConstraintsMet;
            } else if (stop_rule.rfind("d95:", 0) == 0) {
                rcfg.stop = fmo::ReweightStop::D95Floor;
                rcfg.d95_fraction = std::stod(stop_rule.substr(4));
            } else if (stop_rule.rfind("rounds:", 0) == 0) {
                rcfg.stop = fmo::ReweightStop::MaxOuterRounds;
                rcfg.max_rounds = std::stoi(stop_rule.substr(7));
            } else {
                std::cerr << "unknown --stop rule '" << stop_rule << "'\n";
                return kExitUsage;
            }
            ra.method = "reweight";
            const auto problem = load_with_overrides(ra);
            const auto rep = fmo::run_reweight(problem, rcfg, solver_config(ra));

            fs::create_directories(ra.out_dir);
            json echo = config_echo(solver_config(ra), ra);
            echo["sigma"] = sigma;
            echo["gamma"] = gamma;
            echo["stop"] = stop_rule;
            fmo::write_json_file(fmo::reweight_report_to_json(rep, problem, echo),
                                 (fs::path(ra.out_dir) / "report.json").string());
            fmo::write_trace_csv(rep.solve, (fs::path(ra.out_dir) / "trace.csv").string());
            fmo::write_dvh_csv(problem, rep.solve.structure_dose,
                               (fs::path(ra.out_dir) / "dvh.csv").string());
            fmo::write_round_history_csv(rep, (fs::path(ra.out_dir) / "rounds.csv").string());
            std::cout << "reweight: " << rep.termination << " after " << rep.rounds.size()
                      << " rounds\n";
            return status_to_exit(rep.status);
        }

        if (cmd_polish->parsed()) {
            const auto problem = fmo::load_problem(polish_problem);
            const auto x = fmo::fluence_from_report_file(polish_from);
            fmo::PolishOptions opt;
            opt.tol = polish_tol;
            const auto rep = fmo::polish(problem, x, opt);

            fs::create_directories(polish_out);
            json echo;
            echo["method"] = "polish";
            echo["from"] = polish_from;
            echo["tol"] = polish_tol;
            json j = fmo::solve_report_to_json(rep.solve, problem, echo);
            j["objective_p1"] = fmo::objective_p1(problem, rep.solve.x);
            json checks = json::array();
            for (const auto& c : rep.checks) {
                checks.push_back({{"violations", c.violations},
                                  {"max_violations", c.max_violations},
                                  {"satisfied", c.satisfied}});
            }
            j["original_constraints"] = std::move(checks);
            if (!rep.row_violations.empty()) {
                double worst = 0.0;
                for (double v : rep.row_violations) worst = std::max(worst, v);
                j["worst_bound_violation_gy"] = worst;
            }
            fmo::write_json_file(j, (fs::path(polish_out) / "report.json").string());
            fmo::write_dvh_csv(problem, rep.solve.structure_dose,
                               (fs::path(polish_out) / "dvh.csv").string());
            std::cout << "polish: " << rep.solve.termination << "\n";
            return status_to_exit(rep.status);
        }

        if (cmd_compare->parsed()) {
            // de-duplicate, preserving order
            std::vector<std::string> methods;
            for (const auto& m : compare_methods) {
                if (std::find(methods.begin(), methods.end(), m) == methods.end()) {
                    methods.push_back(m);
                } else {
                    std::cerr << "warning: method '" << m << "' repeated, running once\n";
                }
            }
            const auto problem = fmo::load_problem(compare_problem);
            fs::create_directories(compare_out);

            json table = json::array();
            std::ofstream csv(fs::path(compare_out) / "compare.csv");
            csv << "method,objective_p1,wall_seconds,status";
            for (std::size_t s = 0; s < fmo::structure_count(problem); ++s) {
                csv << "," << fmo::structure_at(problem, s).name << "_d95";
            }
            const auto views = fmo::constraint_views(problem);
            for (std::size_t j = 0; j < views.size(); ++j) csv << ",violations_" << j;
            csv << "\n";

            int worst_exit = kExitOk;
            for (const auto& method : methods) {
                SolveArgs margs;
                margs.problem_dir = compare_problem;
                margs.method = method;
                margs.epsilon = compare_epsilon;
                margs.seed = compare_seed;
                const auto rep = dispatch_method(problem, margs);
                const auto mdir = fs::path(compare_out) / method;
                write_solve_outputs(rep, problem, config_echo(solver_config(margs), margs),
                                    mdir.string());

                json rowj;
                rowj["method"] = method;
                rowj["objective_p1"] = fmo::objective_p1(problem, rep.x);
                rowj["wall_seconds"] = rep.wall_seconds;
                rowj["iters"] = rep.outer_iters;
                rowj["converged"] = rep.status == fmo::SolveStatus::Converged;
                rowj["metrics"] = fmo::metrics_json(problem, rep.structure_dose);
                table.push_back(rowj);

                csv << method << "," << fmo::objective_p1(problem, rep.x) << ","
                    << rep.wall_seconds << ","
                    << (rep.status == fmo::SolveStatus::Converged ? "converged" : "limit");
                for (std::size_t s = 0; s < fmo::structure_count(problem); ++s) {
                    csv << "," << fmo::d_quantile(rep.structure_dose[s], 95.0);
                }
                for (const auto v : rep.final_violations) csv << "," << v;
                csv << "\n";
                worst_exit = std::max(worst_exit, status_to_exit(rep.status));
            }
            fmo::write_json_file(table, (fs::path(compare_out) / "compare.json").string());
            std::cout << "compared " << methods.size() << " methods into " << compare_out << "\n";
            return worst_exit;
        }
    } catch (const fmo::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
