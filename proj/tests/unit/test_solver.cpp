#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "../support/phantoms.hpp"
#include "fmo/errors.hpp"
#include "fmo/kernels.hpp"
#include "fmo/projection.hpp"
#include "fmo/solver.hpp"

using namespace fmo;

namespace {

SparseMatrix dense(std::int64_t rows, std::int64_t cols, std::vector<double> vals) {
    std::vector<Triplet> t;
    std::size_t k = 0;
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) {
            if (vals[k] != 0.0) t.push_back({r, c, vals[k]});
            ++k;
        }
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

// One PTV voxel with A1 = [1], one OAR voxel with A2 = [1], thresholds d1 = 1
// and d2 = 0: x(w) = (1 + w) / 2 in closed form (lambda negligible).
ProblemSpec scalar_instance(double lambda = 1e-12) {
    ProblemSpec p;
    PtvEntry ptv;
    ptv.structure = {"t", StructureKind::PTV, 1, {}};
    ptv.matrix = dense(1, 1, {1.0});
    ptv.objective.d = {1.0};
    p.ptvs.push_back(std::move(ptv));
    OarEntry oar;
    oar.structure = {"o", StructureKind::OAR, 1, {}};
    oar.matrix = dense(1, 1, {1.0});
    DoseVolumeConstraint c;
    c.direction = ConstraintDirection::Upper;
    c.d = {0.0};
    c.p = 0.0;
    c.alpha = 1.0;
    oar.constraints.push_back(c);
    p.oars.push_back(std::move(oar));
    p.lambda = lambda;
    return validate(std::move(p));
}

ProblemSpec zero_matrix_instance() {
    ProblemSpec p;
    PtvEntry ptv;
    ptv.structure = {"t", StructureKind::PTV, 1, {}};
    ptv.matrix = SparseMatrix::from_triplets(1, 2, {});
    ptv.objective.d = {10.0};
    p.ptvs.push_back(std::move(ptv));
    OarEntry oar;
    oar.structure = {"o", StructureKind::OAR, 2, {}};
    oar.matrix = SparseMatrix::from_triplets(2, 2, {});
    DoseVolumeConstraint c;
    c.direction = ConstraintDirection::Upper;
    c.d = {3.0};
    c.p = 50.0;
    oar.constraints.push_back(c);
    p.oars.push_back(std::move(oar));
    p.lambda = 1e-6;
    return validate(std::move(p));
}

SolverConfig tight_config() {
    SolverConfig cfg;
    cfg.inner_tol = 1e-10;
    cfg.inner_max_iters = 30000;
    return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("solver");

TEST_CASE("initialization with zero dose matrices") {
    const auto p = zero_matrix_instance();
    const auto s = initialize(p, tight_config());
    CHECK(s.x == std::vector<double>{0.0, 0.0});
    REQUIRE(s.w.size() == 1);
    CHECK(s.w[0] == std::vector<double>{-3.0, -3.0});
}

TEST_CASE("initialization approaches the least-squares solution as lambda vanishes") {
    ProblemSpec p;
    PtvEntry ptv;
    ptv.structure = {"t", StructureKind::PTV, 2, {}};
    ptv.matrix = dense(2, 2, {1.0, 0.2, 0.3, 1.0});
    ptv.objective.d = {2.0, 3.0};
    p.ptvs.push_back(std::move(ptv));
    OarEntry oar;
    oar.structure = {"o", StructureKind::OAR, 1, {}};
    oar.matrix = dense(1, 2, {0.1, 0.1});
    DoseVolumeConstraint c;
    c.d = {100.0};
    c.p = 0.0;
    oar.constraints.push_back(c);
    p.oars.push_back(std::move(oar));
    p.lambda = 1e-10;
    const auto problem = validate(std::move(p));

    const auto s = initialize(problem, tight_config());

    Eigen::Matrix2d a;
    a << 1.0, 0.2, 0.3, 1.0;
    Eigen::Vector2d d(2.0, 3.0);
    const Eigen::Vector2d exact = a.fullPivLu().solve(d);
    REQUIRE(exact.minCoeff() > 0.0);  // interior, so the bound is inactive
    CHECK(std::fabs(s.x[0] - exact(0)) <= 1e-6);
    CHECK(std::fabs(s.x[1] - exact(1)) <= 1e-6);
}

TEST_CASE("initialization projects the unconstrained-minimum residual") {
    const auto p = testsupport::toy_two_beamlet();
    const auto s = initialize(p, tight_config());
    // w0 = proj onto the cap-1 set of A2 x0 - 20
    ValueFunction vf(p, tight_config());
    const auto r = vf.residuals(s.x);
    CHECK(s.w[0] == project_upper(r[0], 1));
    CHECK(is_cardinality_feasible(s.w[0], 1));
}

TEST_CASE("value function matches the scalar closed form") {
    const auto p = scalar_instance();
    auto [g, x] = eval_g(p, {{1.0}}, tight_config());
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-8));  // (1 + w)/2 with w = 1
    CHECK(g <= 1e-12);

    auto [g0, x0] = eval_g(p, {{0.0}}, tight_config());
    CHECK(x0[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(g0 == doctest::Approx(0.25).epsilon(1e-6));  // 1/2 (1/2)^2 + 1/2 (1/2)^2
}

TEST_CASE("gradient matches the scalar closed form") {
    const auto p = scalar_instance();
    const SolverConfig cfg = tight_config();
    auto [g, x] = eval_g(p, {{0.0}}, cfg);
    const auto grads = grad_g(p, {{0.0}}, x, cfg);
    REQUIRE(grads.size() == 1);
    CHECK(grads[0][0] == doctest::Approx(-0.5).epsilon(1e-7));
}

TEST_CASE("gradient is zero when w equals the residual") {
    const auto p = zero_matrix_instance();
    // zero matrices: residual is always -d, so w = -d is the fixed point
    const SolverConfig cfg = tight_config();
    auto [g, x] = eval_g(p, {{-3.0, -3.0}}, cfg);
    const auto grads = grad_g(p, {{-3.0, -3.0}}, x, cfg);
    CHECK(std::fabs(grads[0][0]) <= 1e-12);
    CHECK(std::fabs(grads[0][1]) <= 1e-12);
}

TEST_CASE("stale inner solutions are rejected") {
    const auto p = testsupport::toy_two_beamlet();
    const SolverConfig cfg = tight_config();
    const std::vector<std::vector<double>> w{{0.0, 0.0}};
    std::vector<double> bad_x{1000.0, 1000.0};
    try {
        grad_g(p, w, bad_x, cfg);
        FAIL("expected StaleInnerSolution");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::StaleInnerSolution);
    }
}

TEST_CASE("gradient agrees with central finite differences") {
    const auto p = testsupport::random_phantom(21, {.lambda = 1e-6, .small_oar = true});
    SolverConfig cfg = tight_config();
    ValueFunction vf(p, cfg);

    std::mt19937_64 rng(77);
    std::normal_distribution<double> gauss(0.0, 8.0);
    const auto views = vf.constraints();
    const std::size_t n_w = static_cast<std::size_t>(views[0].n);

    for (int trial = 0; trial < 3; ++trial) {
        std::vector<std::vector<double>> w{std::vector<double>(n_w)};
        for (double& v : w[0]) v = gauss(rng);

        vf.eval(w);
        const auto grad = vf.gradient(w);

        const double h = 1e-5;
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n_w; ++i) {
            auto wp = w, wm = w;
            wp[0][i] += h;
            wm[0][i] -= h;
            const double gp = vf.eval(wp);
            const double gm = vf.eval(wm);
            const double fd = (gp - gm) / (2.0 * h);
            num += (fd - grad[0][i]) * (fd - grad[0][i]);
            den += fd * fd;
        }
        CHECK(std::sqrt(num) <= 1e-4 * std::max(1.0, std::sqrt(den)));
    }
}

TEST_CASE("a feasible unconstrained optimum is an immediate fixed point") {
    // huge threshold: nothing violates, so the initialization is stationary
    auto p = testsupport::random_phantom(31);
    for (auto& c : p.oars[0].constraints) c.d = {1e6};
    p = validate(p);
    SolverConfig cfg = tight_config();
    const auto rep = run_bcd(p, cfg);
    CHECK(rep.status == SolveStatus::Converged);
    CHECK(rep.outer_iters == 1);
    CHECK(rep.final_err <= 1e-6);
}

TEST_CASE("a 100 percent cap disables the constraint") {
    auto p = testsupport::random_phantom(32);
    for (auto& c : p.oars[0].constraints) c.p = 100.0;
    const auto rep = run_bcd(p, tight_config());
    CHECK(rep.status == SolveStatus::Converged);
    CHECK(rep.outer_iters == 1);
}

TEST_CASE("violating voxel counts drop from initialization") {
    const auto p = testsupport::prostate_like(1e-8);
    SolverConfig cfg = tight_config();
    cfg.epsilon = 1e-3;
    const auto init = initialize(p, cfg);
    const auto init_violations = dose_violations(p, init.x);
    const auto rep = run_bcd(p, cfg);
    CHECK(rep.status == SolveStatus::Converged);
    REQUIRE(rep.final_violations.size() == 1);
    CHECK(rep.final_violations[0] < init_violations[0]);
}

TEST_CASE("objective history is nonincreasing") {
    for (std::uint64_t seed : {101, 102, 103}) {
        const auto p = testsupport::random_phantom(seed);
        for (double frac : {1.0, 0.5}) {
            SolverConfig cfg = tight_config();
            cfg.epsilon = 1e-3;
            cfg.step_fraction = frac;
            const auto rep = frac == 1.0 ? run_bcd(p, cfg) : run_pgd(p, cfg);
            REQUIRE(rep.g_history.size() >= 2);
            for (std::size_t k = 1; k < rep.g_history.size(); ++k) {
                CHECK(rep.g_history[k] <=
                      rep.g_history[k - 1] + 1e-9 * (1.0 + std::fabs(rep.g_history[k - 1])));
            }
        }
    }
}

TEST_CASE("pgd with unit fraction reproduces bcd iterates") {
    for (std::uint64_t seed : {201, 202}) {
        const auto p = testsupport::random_phantom(seed);
        SolverConfig cfg = tight_config();
        cfg.epsilon = 1e-4;
        cfg.record_iterates = true;
        const auto bcd = run_bcd(p, cfg);
        const auto pgd = run_pgd(p, cfg);
        REQUIRE(bcd.w_history.size() == pgd.w_history.size());
        for (std::size_t k = 0; k < bcd.w_history.size(); ++k) {
            for (std::size_t j = 0; j < bcd.w_history[k].size(); ++j) {
                for (std::size_t i = 0; i < bcd.w_history[k][j].size(); ++i) {
                    CHECK(std::fabs(bcd.w_history[k][j][i] - pgd.w_history[k][j][i]) <= 1e-10);
                }
            }
        }
    }
}

TEST_CASE("toy instance: deterministic convergence to a feasible stationary point") {
    const auto p = testsupport::toy_two_beamlet();
    SolverConfig cfg = tight_config();
    cfg.epsilon = 1e-3;
    const auto rep = run_bcd(p, cfg);
    CHECK(rep.status == SolveStatus::Converged);
    CHECK(rep.outer_iters <= 100);
    CHECK(is_cardinality_feasible(rep.final_w[0], 1));
    const auto st = stationarity(p, rep.final_w, cfg);
    CHECK(st.measure <= 10.0 * cfg.epsilon);

    // starting from all-zero fluence also lands on a feasible stationary point
    const auto from_zero = run_bcd(p, cfg, std::vector<double>(2, 0.0));
    CHECK(from_zero.status == SolveStatus::Converged);
    CHECK(is_cardinality_feasible(from_zero.final_w[0], 1));
    CHECK(stationarity(p, from_zero.final_w, cfg).measure <= 10.0 * cfg.epsilon);
}

TEST_CASE("stationarity is zero at an all-negative gradient-free point") {
    const auto p = zero_matrix_instance();
    SolverConfig cfg = tight_config();
    const auto st = stationarity(p, {{-3.0, -3.0}}, cfg);
    CHECK(st.measure <= 1e-18);
    CHECK(st.is_epsilon_accurate);
}

TEST_CASE("perturbing a fixed point raises the stationarity measure") {
    const auto p = testsupport::toy_two_beamlet();
    SolverConfig cfg = tight_config();
    cfg.epsilon = 1e-6;
    const auto rep = run_bcd(p, cfg);
    auto w = rep.final_w;
    w[0][0] -= 15.0;  // push well away from the fixed point
    const auto st = stationarity(p, w, cfg);
    CHECK(st.measure > 1e-4);
}

TEST_CASE("stronger constraint weights pull w toward the residual") {
    const auto base = testsupport::random_phantom(7, {.grid = 32});
    double prev_gap = 1e300;
    for (double alpha : {1.0, 10.0, 100.0}) {
        auto p = base;
        p.oars[0].constraints[0].alpha = alpha;
        SolverConfig cfg;
        cfg.inner_tol = 1e-9;
        cfg.epsilon = 1e-3;
        cfg.max_outer_iters = 30000;
        const auto rep = run_bcd(p, cfg);
        ValueFunction vf(p, cfg);
        const auto r = vf.residuals(rep.x);
        double gap = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < r[j].size(); ++i) {
                const double e = rep.final_w[j][i] - r[j][i];
                s += e * e;
            }
            gap += std::sqrt(s);
        }
        CHECK(gap <= prev_gap + 1e-6 * (1.0 + prev_gap));
        prev_gap = gap;
    }
}

TEST_CASE("step fraction is honored in the report") {
    const auto p = testsupport::random_phantom(41);
    SolverConfig cfg = tight_config();
    cfg.step_fraction = 0.5;
    const auto rep = run_pgd(p, cfg);
    const auto views = constraint_views(p);
    REQUIRE(rep.steps.size() == views.size());
    for (std::size_t j = 0; j < views.size(); ++j) {
        const double limit = static_cast<double>(views[j].n) / views[j].constraint->alpha;
        CHECK(rep.steps[j] == doctest::Approx(0.5 * limit));
    }
}

TEST_CASE("iteration cap is flagged") {
    const auto p = testsupport::prostate_like(1e-8);
    SolverConfig cfg = tight_config();
    cfg.epsilon = 1e-12;  // unreachable in two iterations
    cfg.max_outer_iters = 2;
    const auto rep = run_bcd(p, cfg);
    CHECK(rep.status == SolveStatus::MaxItersExceeded);
    CHECK(rep.outer_iters == 2);
    CHECK(!rep.x.empty());
}

TEST_SUITE_END();
