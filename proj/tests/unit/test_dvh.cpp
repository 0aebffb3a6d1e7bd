#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "fmo/dvh.hpp"
#include "fmo/errors.hpp"

using namespace fmo;

TEST_SUITE_BEGIN("dvh");

TEST_CASE("constant dose gives a step curve") {
    std::vector<double> dose(10, 5.0);
    std::vector<double> grid{0.0, 5.0, 6.0};
    const auto curve = dvh_curve(dose, grid);
    CHECK(curve[0].second == 100.0);
    CHECK(curve[1].second == 100.0);  // '>=' semantics keeps the level itself
    CHECK(curve[2].second == 0.0);
}

TEST_CASE("curve uses at-least semantics") {
    std::vector<double> dose{1.0, 2.0, 3.0};
    const auto curve = dvh_curve(dose, std::vector<double>{2.0});
    CHECK(curve[0].second == doctest::Approx(100.0 * 2.0 / 3.0));
}

TEST_CASE("curve is nonincreasing and permutation invariant") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 90.0);
    std::vector<double> dose(200);
    for (double& v : dose) v = u(rng);
    const auto grid = default_dose_grid(dose);
    const auto curve = dvh_curve(dose, grid);
    CHECK(curve.front().second == 100.0);  // grid starts at zero dose
    for (std::size_t i = 1; i < curve.size(); ++i) {
        CHECK(curve[i].second <= curve[i - 1].second);
    }
    auto shuffled = dose;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(dvh_curve(shuffled, grid) == curve);
}

TEST_CASE("d_quantile is the order statistic") {
    CHECK(d_quantile(std::vector<double>{7.0, 7.0, 7.0}, 95.0) == 7.0);
    CHECK(d_quantile(std::vector<double>{1.0, 2.0, 3.0, 4.0}, 50.0) == 3.0);
    CHECK(d_quantile(std::vector<double>{4.0, 1.0, 3.0, 2.0}, 100.0) == 1.0);
    CHECK(d_quantile(std::vector<double>{4.0, 1.0, 3.0, 2.0}, 25.0) == 4.0);
}

TEST_CASE("d_quantile is nonincreasing in q") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 90.0);
    std::vector<double> dose(57);
    for (double& v : dose) v = u(rng);
    double prev = 1e300;
    for (double q = 1.0; q <= 100.0; q += 1.0) {
        const double dq = d_quantile(dose, q);
        CHECK(dq <= prev);
        prev = dq;
    }
}

TEST_CASE("percent_above counts strictly") {
    std::vector<double> dose{10.0, 30.0, 50.0};
    CHECK(percent_above(dose, 30.0) == doctest::Approx(100.0 / 3.0));
    CHECK(percent_above(std::vector<double>{5.0, 5.0}, 5.0) == 0.0);
    CHECK(percent_above(dose, 9.0) == 100.0);
}

TEST_CASE("percent_below mirrors percent_above") {
    std::vector<double> dose{80.0, 82.0};
    CHECK(percent_below(dose, 81.0) == 50.0);
    CHECK(percent_below(dose, 80.0) == 0.0);
}

TEST_CASE("strict percent never exceeds the curve value") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 90.0);
    std::vector<double> dose(101);
    for (double& v : dose) v = u(rng);
    for (double level : {10.0, 30.0, 55.5, 80.0}) {
        const double curve_pct = dvh_curve(dose, std::vector<double>{level})[0].second;
        CHECK(percent_above(dose, level) <= curve_pct);
    }
    // with no voxel exactly at the level the two agree
    std::vector<double> exact{1.0, 2.0, 3.0};
    CHECK(percent_above(exact, 2.5) ==
          dvh_curve(exact, std::vector<double>{2.5})[0].second);
}

TEST_CASE("empty dose vectors are rejected") {
    std::vector<double> empty;
    CHECK_THROWS_AS(dvh_curve(empty, std::vector<double>{0.0}), Error);
    CHECK_THROWS_AS(d_quantile(empty, 95.0), Error);
    CHECK_THROWS_AS(percent_above(empty, 1.0), Error);
}

TEST_SUITE_END();
