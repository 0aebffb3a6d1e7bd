// Acceptance suite: runs every criterion at its stated tolerance and prints
// one PASS/FAIL line each. Exit code 0 only if all non-skipped criteria pass.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "../support/phantoms.hpp"
#include "fmo/baselines.hpp"
#include "fmo/dosegen.hpp"
#include "fmo/dvh.hpp"
#include "fmo/errors.hpp"
#include "fmo/kernels.hpp"
#include "fmo/projection.hpp"
#include "fmo/quadprog.hpp"
#include "fmo/reweight.hpp"
#include "fmo/solver.hpp"

using namespace fmo;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail = "") {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << "criterion " << number << ": " << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << std::endl;
    if (!pass) ++g_failures;
}

void report_skip(int number, const std::string& name, const std::string& why) {
    std::cout << "[SKIP] criterion " << number << ": " << name << " (" << why << ")"
              << std::endl;
}

double dist2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = a[i] - b[i];
        s += e * e;
    }
    return s;
}

double block_norm(const std::vector<std::vector<double>>& a,
                  const std::vector<std::vector<double>>& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += dist2(a[j], b[j]);
    return std::sqrt(s);
}

// ---- criterion 1 -----------------------------------------------------------

void criterion_projection_oracle() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> gauss(0.0, 3.0);
    bool ok = true;
    int vectors = 0;
    while (vectors < 1000 && ok) {
        const int n = 2 + static_cast<int>(rng() % 7);
        std::vector<double> w(n);
        for (double& v : w) v = gauss(rng);
        ++vectors;
        for (std::int64_t k = 0; k <= n && ok; ++k) {
            for (const bool lower : {false, true}) {
                const auto fast = lower ? project_lower(w, k) : project_upper(w, k);
                const auto oracle = project_oracle(w, k);
                const double d_fast = std::sqrt(dist2(w, fast));
                const double d_oracle = std::sqrt(dist2(w, oracle));
                if (std::fabs(d_fast - d_oracle) > 1e-12) ok = false;
                if (!is_cardinality_feasible(fast, k)) ok = false;
                const auto again = lower ? project_lower(fast, k) : project_upper(fast, k);
                if (again != fast) ok = false;
            }
        }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(1, "projection distance equals the exhaustive oracle", ok && secs < 10.0,
           std::to_string(vectors) + " vectors in " + std::to_string(secs) + " s");
}

// ---- criterion 2 -----------------------------------------------------------

ProblemSpec fd_phantom() {
    PhantomSpec spec;
    spec.nx = 36;
    spec.ny = 36;
    spec.beam_angles_deg = {0, 72, 144, 216, 288};
    spec.beamlets_per_beam = 10;  // m = 50
    spec.lambda = 1e-6;
    PhantomStructure ptv;
    ptv.name = "ptv";
    ptv.kind = StructureKind::PTV;
    ptv.regions = {{Region::Shape::Disk, 18.0, 19.5, 4.5, 0.0, 0.0}};
    ptv.prescription = 81.0;
    PhantomStructure oar;
    oar.name = "oar";
    oar.kind = StructureKind::OAR;
    oar.regions = {{Region::Shape::Disk, 18.0, 11.5, 2.2, 0.0, 0.0}};
    DoseVolumeConstraint c;
    c.direction = ConstraintDirection::Upper;
    c.d = {30.0};
    c.p = 30.0;
    oar.constraints.push_back(c);
    spec.structures = {ptv, oar};
    return generate_phantom(spec);
}

void criterion_gradient_fd() {
    const auto start = std::chrono::steady_clock::now();
    const auto p = fd_phantom();
    SolverConfig cfg;
    cfg.inner_tol = 1e-10;
    cfg.inner_max_iters = 100000;
    ValueFunction vf(p, cfg);
    const std::size_t n_w = static_cast<std::size_t>(vf.constraints()[0].n);

    std::mt19937_64 rng(7171);
    std::normal_distribution<double> gauss(0.0, 10.0);
    const double h = 1e-5;
    bool ok = true;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::vector<double>> w{std::vector<double>(n_w)};
        for (double& v : w[0]) v = gauss(rng);
        vf.eval(w);
        const auto grad = vf.gradient(w);

        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n_w; ++i) {
            auto wp = w, wm = w;
            wp[0][i] += h;
            wm[0][i] -= h;
            const double fd = (vf.eval(wp) - vf.eval(wm)) / (2.0 * h);
            num += (fd - grad[0][i]) * (fd - grad[0][i]);
            den += fd * fd;
        }
        const double rel = std::sqrt(num) / std::max(1.0, std::sqrt(den));
        worst = std::max(worst, rel);
        if (rel > 1e-4) ok = false;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(2, "gradient matches central finite differences", ok && secs < 60.0,
           "worst relative error " + std::to_string(worst) + ", " + std::to_string(secs) + " s");
}

// ---- criterion 3 -----------------------------------------------------------

void criterion_monotone_descent() {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 25 && ok; ++seed) {
        const auto p = testsupport::random_phantom(seed);
        for (double frac : {1.0, 0.5}) {
            SolverConfig cfg;
            cfg.epsilon = 1e-3;
            cfg.inner_tol = 1e-9;
            cfg.step_fraction = frac;
            const auto rep = run_pgd(p, cfg);
            for (std::size_t k = 1; k < rep.g_history.size(); ++k) {
                if (rep.g_history[k] >
                    rep.g_history[k - 1] + 1e-9 * (1.0 + std::fabs(rep.g_history[k - 1]))) {
                    ok = false;
                    detail = "seed " + std::to_string(seed) + " frac " + std::to_string(frac) +
                             " iteration " + std::to_string(k);
                }
            }
        }
    }
    report(3, "objective history is nonincreasing over 25 phantoms x 2 steps", ok, detail);
}

// ---- criterion 4 -----------------------------------------------------------

void criterion_lipschitz() {
    const auto p = testsupport::random_phantom(404, {.lambda = 1e-4});
    SolverConfig cfg;
    cfg.inner_tol = 1e-12;
    cfg.inner_max_iters = 200000;
    ValueFunction vf(p, cfg);
    const auto views = vf.constraints();
    double bound = 0.0;
    for (const auto& v : views) {
        bound = std::max(bound, v.constraint->alpha / static_cast<double>(v.n));
    }

    std::mt19937_64 rng(909);
    std::normal_distribution<double> gauss(0.0, 12.0);
    bool ok = true;
    double worst_ratio = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::vector<double>> w, wp;
        for (const auto& v : views) {
            std::vector<double> a(static_cast<std::size_t>(v.n)), b(static_cast<std::size_t>(v.n));
            for (double& x : a) x = gauss(rng);
            for (double& x : b) x = gauss(rng);
            w.push_back(a);
            wp.push_back(b);
        }
        vf.eval(w);
        const auto gw = vf.gradient(w);
        vf.eval(wp);
        const auto gwp = vf.gradient(wp);
        const double num = block_norm(gw, gwp);
        const double den = block_norm(w, wp);
        if (den < 1e-9) continue;
        const double ratio = num / den;
        worst_ratio = std::max(worst_ratio, ratio);
        if (ratio > bound * (1.0 + 1e-6)) ok = false;
    }
    report(4, "empirical gradient Lipschitz constant respects max alpha_j/n_j", ok,
           "worst ratio " + std::to_string(worst_ratio) + " vs bound " + std::to_string(bound));
}

// ---- criterion 5 -----------------------------------------------------------

void criterion_strong_convexity() {
    std::mt19937_64 rng(505);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> upos(0.2, 2.0);
    bool ok = true;
    for (int trial = 0; trial < 20 && ok; ++trial) {
        const int m = 3 + static_cast<int>(rng() % 3);
        const int n1 = 2 + static_cast<int>(rng() % 3);
        const int n2 = 2 + static_cast<int>(rng() % 3);
        const double alpha1 = upos(rng), alpha2 = upos(rng), lambda = 1e-3 * upos(rng);

        std::vector<Triplet> a1t, joint;
        Eigen::MatrixXd a1d = Eigen::MatrixXd::Zero(n1, m);
        for (int i = 0; i < n1; ++i) {
            for (int j = 0; j < m; ++j) {
                const double v = std::fabs(gauss(rng));
                a1t.push_back({i, j, v});
                a1d(i, j) = v;
            }
        }
        for (int i = 0; i < n2; ++i) {
            for (int j = 0; j < m; ++j) joint.push_back({i, j, std::fabs(gauss(rng))});
            joint.push_back({i, m + i, -1.0});
        }
        auto ptv = SparseMatrix::from_triplets(n1, m + n2, std::move(a1t));
        auto coupling = SparseMatrix::from_triplets(n2, m + n2, std::move(joint));

        QuadraticObjective f(m + n2, lambda, m);
        f.add_term(alpha1 / n1, &ptv, std::vector<double>(n1, 81.0));
        f.add_term(alpha2 / n2, &coupling, std::vector<double>(n2, 0.0));

        const auto hflat = f.dense_hessian();
        const int dim = m + n2;
        Eigen::MatrixXd h(dim, dim);
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) h(i, j) = hflat[static_cast<std::size_t>(i * dim + j)];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
        if (es.eigenvalues().minCoeff() <= 0.0) ok = false;

        const Eigen::MatrixXd hxx = h.topLeftCorner(m, m);
        const Eigen::MatrixXd hxw = h.topRightCorner(m, n2);
        const Eigen::MatrixXd hww = h.bottomRightCorner(n2, n2);
        const Eigen::MatrixXd schur = hxx - hxw * hww.inverse() * hxw.transpose();
        const Eigen::MatrixXd expected = (alpha1 / n1) * a1d.transpose() * a1d +
                                         lambda * Eigen::MatrixXd::Identity(m, m);
        if ((schur - expected).cwiseAbs().maxCoeff() > 1e-10) ok = false;
    }
    report(5, "joint Hessian is positive definite with the closed-form Schur complement", ok);
}

// ---- criterion 6 -----------------------------------------------------------

void criterion_bcd_equals_pgd() {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 31; seed <= 40 && ok; ++seed) {
        const auto p = testsupport::random_phantom(seed);
        SolverConfig cfg;
        cfg.epsilon = 1e-4;
        cfg.inner_tol = 1e-10;
        cfg.record_iterates = true;
        const auto bcd = run_bcd(p, cfg);
        const auto pgd = run_pgd(p, cfg);
        if (bcd.w_history.size() != pgd.w_history.size()) {
            ok = false;
            detail = "iteration counts differ on seed " + std::to_string(seed);
            break;
        }
        for (std::size_t k = 0; k < bcd.w_history.size() && ok; ++k) {
            for (std::size_t j = 0; j < bcd.w_history[k].size() && ok; ++j) {
                for (std::size_t i = 0; i < bcd.w_history[k][j].size(); ++i) {
                    if (std::fabs(bcd.w_history[k][j][i] - pgd.w_history[k][j][i]) > 1e-10) {
                        ok = false;
                        detail = "seed " + std::to_string(seed) + " iterate " + std::to_string(k);
                        break;
                    }
                }
            }
        }
    }
    report(6, "block coordinate descent equals projected gradient at t = n/alpha", ok, detail);
}

// ---- criterion 7 -----------------------------------------------------------

void criterion_toy_two_minima() {
    const auto p = testsupport::toy_two_beamlet();
    SolverConfig cfg;
    cfg.epsilon = 1e-3;
    cfg.inner_tol = 1e-11;

    const auto first = run_bcd(p, cfg);
    bool ok = first.status == SolveStatus::Converged && first.outer_iters <= 100;
    ok = ok && is_cardinality_feasible(first.final_w[0], 1);

    // start deep in the other basin: all fluence on the second beamlet
    double a1_second = 0.0;
    for (const auto& t : p.ptvs[0].matrix.to_triplets()) {
        if (t.col == 1) a1_second = t.value;
    }
    std::vector<double> other_start{0.0, 81.0 / a1_second};
    const auto second = run_bcd(p, cfg, other_start);
    ok = ok && second.status == SolveStatus::Converged;

    // different stationary point with no better objective
    const double g1 = first.g_history.back();
    const double g2 = second.g_history.back();
    const double w_gap = block_norm(first.final_w, second.final_w);
    ok = ok && w_gap > 1.0;
    ok = ok && g2 >= g1 - 1e-9 * (1.0 + std::fabs(g1));

    const auto st1 = stationarity(p, first.final_w, cfg);
    const auto st2 = stationarity(p, second.final_w, cfg);
    ok = ok && st1.measure <= 10.0 * cfg.epsilon && st2.measure <= 10.0 * cfg.epsilon;

    report(7, "toy instance reproduces the two-basin structure", ok,
           "g(default init) " + std::to_string(g1) + ", g(other basin) " + std::to_string(g2) +
               ", iterations " + std::to_string(first.outer_iters));
}

// ---- criterion 8 -----------------------------------------------------------

void criterion_reweight_feasibility() {
    const auto p = testsupport::prostate_like(1e-8);
    SolverConfig scfg;
    scfg.epsilon = 1e-3;
    scfg.inner_tol = 1e-9;

    const auto plain = run_bcd(p, scfg);
    const auto plain_checks = check_original_constraints(p, plain.x);
    bool precondition = false;
    for (const auto& c : plain_checks) {
        if (!c.satisfied) precondition = true;
    }

    ReweightConfig rcfg;
    rcfg.sigma = 0.01;
    rcfg.gamma = 0.99;
    rcfg.stop = ReweightStop::AllConstraintsMet;
    const auto rep = run_reweight(p, rcfg, scfg);

    bool ok = precondition && rep.status == SolveStatus::Converged && rep.all_satisfied;
    const auto checks = check_original_constraints(p, rep.solve.x);
    for (const auto& c : checks) ok = ok && c.satisfied;

    const double d95_final = rep.rounds.back().ptv_d95[0];
    const double d95_init = rep.initial_d95[0];
    ok = ok && d95_final >= 0.95 * d95_init;

    report(8, "re-weighting reaches feasibility with bounded D95 loss", ok,
           "D95 " + std::to_string(d95_init) + " -> " + std::to_string(d95_final) + " Gy in " +
               std::to_string(rep.rounds.size()) + " rounds");
}

// ---- criterion 9 -----------------------------------------------------------

void criterion_slack_greedy_monotone() {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 61; seed <= 70 && ok; ++seed) {
        const auto p = testsupport::random_phantom(seed);
        SolverConfig cfg;
        cfg.inner_tol = 1e-8;
        cfg.record_iterates = true;
        SlackGreedyOptions opt;
        opt.max_iters = 25;
        const auto rep = solve_slack_greedy(p, cfg, opt);
        for (std::size_t k = 1; k < rep.w_history.size() && ok; ++k) {
            for (std::size_t g = 0; g < rep.w_history[k].size() && ok; ++g) {
                for (std::size_t i = 0; i < rep.w_history[k][g].size(); ++i) {
                    if (rep.w_history[k][g][i] < rep.w_history[k - 1][g][i] - 1e-12) {
                        ok = false;
                        detail = "seed " + std::to_string(seed);
                        break;
                    }
                }
            }
        }
    }
    report(9, "slack-greedy dose variables are elementwise nondecreasing", ok, detail);
}

// ---- criterion 10 ----------------------------------------------------------

void criterion_polish() {
    const auto p = testsupport::prostate_like(1e-8);
    SolverConfig scfg;
    scfg.epsilon = 1e-3;
    scfg.inner_tol = 1e-9;
    const auto bcd = run_bcd(p, scfg);
    const auto rep = polish(p, bcd.x);

    bool ok;
    std::string detail;
    if (rep.status == SolveStatus::Converged) {
        ok = true;
        for (const auto& c : rep.checks) ok = ok && c.satisfied;
        detail = "feasible, objective_p1 " + std::to_string(objective_p1(p, rep.solve.x)) +
                 " (warm start " + std::to_string(objective_p1(p, bcd.x)) + ")";

        // hard objective bound applies when the warm start already satisfies
        // the hard subvolume bounds
        const auto sel = select_subvolumes(p, bcd.x);
        const auto views = constraint_views(p);
        bool warm_feasible = true;
        std::vector<double> dose(static_cast<std::size_t>(views[0].n));
        kernels::spmv(*views[0].matrix, bcd.x, dose);
        for (const auto v : sel[0]) {
            if (dose[static_cast<std::size_t>(v)] > views[0].constraint->d.front()) {
                warm_feasible = false;
            }
        }
        if (warm_feasible) {
            ok = ok && objective_p1(p, rep.solve.x) <=
                           objective_p1(p, bcd.x) * (1.0 + 1e-9) + 1e-12;
        }

        // ranking regression, recorded (not asserted)
        ReweightConfig rcfg;
        const auto rw = run_reweight(p, rcfg, scfg);
        std::cout << "         method ranking by idealized objective: bcd+polish "
                  << objective_p1(p, rep.solve.x) << ", reweight "
                  << objective_p1(p, rw.solve.x) << std::endl;
    } else if (rep.status == SolveStatus::Infeasible) {
        ok = true;  // an honestly surfaced infeasibility satisfies the contract
        detail = "reported infeasible";
    } else {
        ok = false;
        detail = "QP hit its iteration limit";
    }
    report(10, "polish satisfies every original constraint or reports infeasible", ok, detail);
}

// ---- criterion 11 ----------------------------------------------------------

void criterion_rate() {
    // Halving epsilon from 1e-2 down past 1e-4 may grow the outer iteration
    // count by at most 3x per halving (the O(1/eps) rate predicts 2x).
    bool ok = true;
    std::string detail;
    int used = 0;
    for (std::uint64_t seed : {81, 83, 85, 87, 89}) {
        const auto p = testsupport::random_phantom(seed);
        SolverConfig cfg;
        cfg.inner_tol = 1e-10;
        cfg.step_fraction = 0.5;
        cfg.max_outer_iters = 200000;
        std::vector<int> iters;
        for (double eps = 1e-2; eps > 0.9e-4; eps *= 0.5) {
            cfg.epsilon = eps;
            iters.push_back(run_pgd(p, cfg).outer_iters);
        }
        if (iters[0] < 5) continue;  // too fast to measure a rate
        ++used;
        for (std::size_t step = 0; step + 1 < iters.size(); ++step) {
            const double factor =
                static_cast<double>(iters[step + 1]) / static_cast<double>(iters[step]);
            if (factor > 3.0) {
                ok = false;
                detail = "seed " + std::to_string(seed) + " halving " + std::to_string(step) +
                         ": " + std::to_string(iters[step]) + " -> " +
                         std::to_string(iters[step + 1]);
            }
        }
    }
    ok = ok && used >= 3;
    report(11, "halving epsilon grows iterations by at most 3x per halving", ok,
           detail.empty() ? std::to_string(used) + " phantoms measured" : detail);
}

// ---- criterion 12 (dataset-gated) ------------------------------------------

void criterion_cort() {
    const char* dir = std::getenv("FMO_CORT_DIR");
    if (dir == nullptr || !std::filesystem::exists(std::filesystem::path(dir) / "manifest.json")) {
        report_skip(12,
                    "CORT prostate reproduction (D95 79.17 +/- 1.0 Gy, %>30 Gy 34.16 +/- 3)",
                    "set FMO_CORT_DIR to a problem directory holding the CORT prostate "
                    "matrices in the triplet format to enable");
        return;
    }
    try {
        auto problem = load_problem(dir);
        problem.lambda = 1e-8;
        problem = validate(std::move(problem));
        SolverConfig cfg;
        cfg.epsilon = 1e-3;
        cfg.inner_tol = 1e-8;
        const auto rep = run_bcd(problem, cfg);
        const double d95 = d_quantile(rep.structure_dose[0], 95.0);
        const double pct = percent_above(rep.structure_dose[1], 30.0);
        const bool ok = std::fabs(d95 - 79.17) <= 1.0 && std::fabs(pct - 34.16) <= 3.0;
        report(12, "CORT prostate reproduction", ok,
               "D95 " + std::to_string(d95) + " Gy, %>30 Gy " + std::to_string(pct));
    } catch (const Error& e) {
        report(12, "CORT prostate reproduction", false, e.what());
    }
}

}  // namespace

int main() {
    std::cout << "fluence map optimization acceptance suite\n" << std::endl;
    criterion_projection_oracle();
    criterion_gradient_fd();
    criterion_monotone_descent();
    criterion_lipschitz();
    criterion_strong_convexity();
    criterion_bcd_equals_pgd();
    criterion_toy_two_minima();
    criterion_reweight_feasibility();
    criterion_slack_greedy_monotone();
    criterion_polish();
    criterion_rate();
    criterion_cort();
    std::cout << std::endl
              << (g_failures == 0 ? "all criteria passed"
                                  : std::to_string(g_failures) + " criteria FAILED")
              << std::endl;
    return g_failures == 0 ? 0 : 1;
}
