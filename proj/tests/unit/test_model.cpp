#include <doctest.h>

#include <cmath>

#include "fmo/errors.hpp"
#include "fmo/model.hpp"

using namespace fmo;

namespace {

SparseMatrix dense(std::int64_t rows, std::int64_t cols, std::initializer_list<double> vals) {
    std::vector<Triplet> t;
    auto it = vals.begin();
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) {
            t.push_back({r, c, *it++});
        }
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

ProblemSpec tiny_problem() {
    ProblemSpec p;
    PtvEntry ptv;
    ptv.structure = {"t", StructureKind::PTV, 1, {}};
    ptv.matrix = dense(1, 2, {1.0, 1.0});
    ptv.objective.d = {81.0};
    p.ptvs.push_back(std::move(ptv));

    OarEntry oar;
    oar.structure = {"o", StructureKind::OAR, 2, {}};
    oar.matrix = dense(2, 2, {1.0, 0.2, 0.2, 1.0});
    DoseVolumeConstraint c;
    c.direction = ConstraintDirection::Upper;
    c.d = {20.0};
    c.p = 50.0;
    p.oars.push_back(std::move(oar));
    p.oars.back().constraints.push_back(c);

    p.lambda = 5e-6;
    return p;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("cap matches the closed form") {
    CHECK(cap(2, 50.0) == 1);
    CHECK(cap(1764, 30.0) == 529);
    CHECK(cap(10, 0.0) == 0);
    CHECK(cap(1, 100.0) == 1);
    CHECK(cap(3, 33.0) == 0);
}

TEST_CASE("cap plus the clamped count recovers n") {
    // p restricted to halves so both expressions are exact in binary
    for (std::int64_t n : {1, 2, 3, 7, 10, 100, 1764, 9999}) {
        for (int halves = 0; halves <= 200; halves += 1) {
            const double p = halves * 0.5;
            const auto k = cap(n, p);
            const auto kept = static_cast<std::int64_t>(
                std::ceil((100.0 - p) * static_cast<double>(n) / 100.0));
            CHECK(k + kept == n);
        }
    }
}

TEST_CASE("cap rejects bad arguments") {
    CHECK_THROWS_AS(cap(0, 10.0), Error);
    CHECK_THROWS_AS(cap(5, -1.0), Error);
    CHECK_THROWS_AS(cap(5, 100.5), Error);
}

TEST_CASE("validate accepts the two-beamlet instance") {
    auto p = validate(tiny_problem());
    CHECK(p.beamlet_count == 2);
    // scalar prescriptions broadcast to per-voxel vectors
    CHECK(p.ptvs[0].objective.d.size() == 1);
    CHECK(p.oars[0].constraints[0].d.size() == 2);
    CHECK(p.oars[0].constraints[0].d[0] == 20.0);
}

TEST_CASE("validate is idempotent") {
    auto once = validate(tiny_problem());
    auto twice = validate(once);
    CHECK(once.beamlet_count == twice.beamlet_count);
    CHECK(once.ptvs[0].objective.d == twice.ptvs[0].objective.d);
    CHECK(once.oars[0].constraints[0].d == twice.oars[0].constraints[0].d);
    CHECK(once.ptvs[0].matrix == twice.ptvs[0].matrix);
}

TEST_CASE("validate flags inconsistent beamlet counts") {
    auto p = tiny_problem();
    p.oars[0].matrix = dense(2, 3, {1, 0, 0, 0, 1, 0});
    try {
        validate(p);
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
    }
}

TEST_CASE("validate flags non-positive lambda") {
    auto p = tiny_problem();
    p.lambda = 0.0;
    try {
        validate(p);
        FAIL("expected NonPositiveWeight");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonPositiveWeight);
    }
}

TEST_CASE("validate flags negative matrix entries") {
    auto p = tiny_problem();
    p.oars[0].matrix = dense(2, 2, {1.0, -0.5, 0.0, 1.0});
    try {
        validate(p);
        FAIL("expected NegativeMatrixEntry");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NegativeMatrixEntry);
    }
}

TEST_CASE("validate flags empty structures") {
    auto p = tiny_problem();
    p.ptvs[0].structure.voxel_count = 0;
    try {
        validate(p);
        FAIL("expected EmptyStructure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyStructure);
    }
}

TEST_CASE("validate flags duplicate voxel ids") {
    auto p = tiny_problem();
    p.oars[0].structure.voxel_ids = {3, 3};
    CHECK_THROWS_AS(validate(p), Error);
}

TEST_CASE("constraint views carry caps and block order") {
    auto p = validate(tiny_problem());
    auto views = constraint_views(p);
    REQUIRE(views.size() == 1);
    CHECK(views[0].n == 2);
    CHECK(views[0].max_violations == 1);
    CHECK(views[0].structure_index == 1);  // PTV first, OAR second
}

TEST_CASE("resolve_steps enforces the step cap") {
    auto p = validate(tiny_problem());
    SolverConfig cfg;
    cfg.step_fraction = 1.0;
    auto steps = resolve_steps(p, cfg);
    REQUIRE(steps.size() == 1);
    CHECK(steps[0] == doctest::Approx(2.0));  // n/alpha = 2/1

    cfg.step_fraction = 0.5;
    CHECK(resolve_steps(p, cfg)[0] == doctest::Approx(1.0));

    cfg.step_override = {3.0};  // above n/alpha
    CHECK_THROWS_AS(resolve_steps(p, cfg), Error);

    cfg.step_override = {0.0};
    CHECK_THROWS_AS(resolve_steps(p, cfg), Error);

    cfg.step_override.clear();
    cfg.epsilon = 0.0;
    CHECK_THROWS_AS(resolve_steps(p, cfg), Error);
}

TEST_SUITE_END();
