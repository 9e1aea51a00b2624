#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "disco/distance.hpp"
#include "oracles.hpp"

using namespace disco;

namespace {

PointSet random_points(SplitRng& rng, std::size_t n, std::size_t d) {
    return PointSet{oracle::random_matrix(rng, n, d, -2.0, 2.0)};
}

}  // namespace

TEST_CASE("pairwise_distance basics") {
    PointSet p{Matrix::from_rows({{0.0}, {3.0}})};
    DistanceMatrix d = pairwise_distance(p);
    CHECK(d.values.at(0, 1) == 3.0);
    CHECK(d.values.at(1, 0) == 3.0);
    CHECK(d.values.at(0, 0) == 0.0);
    CHECK(d.values.at(1, 1) == 0.0);
}

TEST_CASE("pairwise_distance matches loop oracle and validates") {
    SplitRng rng(17);
    PointSet p = random_points(rng, 10, 3);
    DistanceMatrix d = pairwise_distance(p);
    CHECK(max_abs_diff(d.values, oracle::pairwise_loops(p.coords)) < 1e-12);
    SplitRng vr(1);
    CHECK(d.validate(vr));
}

TEST_CASE("pairwise_distance rejects non-finite input") {
    Matrix m(2, 1);
    m.at(1, 0) = std::nan("");
    CHECK_THROWS_AS(pairwise_distance(PointSet{m}), InputError);
}

TEST_CASE("double_center closed form at n=2 and zero rows/cols") {
    const double dist = 1.7;
    DistanceMatrix d{Matrix::from_rows({{0.0, dist}, {dist, 0.0}})};
    Matrix c = double_center(d);
    CHECK(c.at(0, 0) == doctest::Approx(-dist / 2).epsilon(1e-14));
    CHECK(c.at(0, 1) == doctest::Approx(dist / 2).epsilon(1e-14));

    CHECK(max_abs(double_center(DistanceMatrix{Matrix(3, 3)})) == 0.0);

    SplitRng rng(23);
    DistanceMatrix r = pairwise_distance(random_points(rng, 12, 2));
    Matrix cr = double_center(r);
    CHECK(max_abs(row_sum(cr)) < 1e-9);
    CHECK(max_abs(col_sum(cr)) < 1e-9);
}

TEST_CASE("dcov2 closed forms and loop oracle") {
    DistanceMatrix a{Matrix::from_rows({{0.0, 2.0}, {2.0, 0.0}})};
    DistanceMatrix b{Matrix::from_rows({{0.0, 5.0}, {5.0, 0.0}})};
    CHECK(dcov2(a, b) == doctest::Approx(2.0 * 5.0 / 4.0).epsilon(1e-14));

    SplitRng rng(31);
    PointSet x = random_points(rng, 9, 2);
    PointSet yconst{Matrix(9, 1, 0.42)};
    CHECK(dcov2(pairwise_distance(x), pairwise_distance(yconst)) == 0.0);

    PointSet y = random_points(rng, 9, 1);
    DistanceMatrix dx = pairwise_distance(x);
    DistanceMatrix dy = pairwise_distance(y);
    CHECK(dcov2(dx, dy) == doctest::Approx(oracle::dcov2_loops(dx.values, dy.values)).epsilon(1e-10));
}

TEST_CASE("dcor2 self-correlation, degenerate, and n=2") {
    SplitRng rng(37);
    DistanceMatrix a = pairwise_distance(random_points(rng, 8, 2));
    CHECK(dcor2(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    DistanceMatrix cst{Matrix(8, 8)};
    CHECK(dcor2(a, cst) == 0.0);

    DistanceMatrix p{Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}})};
    DistanceMatrix q{Matrix::from_rows({{0.0, 0.3}, {0.3, 0.0}})};
    CHECK(dcor2(p, q) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dcor2 symmetry is exact") {
    SplitRng rng(41);
    DistanceMatrix a = pairwise_distance(random_points(rng, 14, 2));
    DistanceMatrix b = pairwise_distance(random_points(rng, 14, 3));
    CHECK(dcor2(a, b) == dcor2(b, a));
}

TEST_CASE("dcor2 invariances") {
    SplitRng rng(43);
    PointSet x = random_points(rng, 20, 2);
    PointSet y = random_points(rng, 20, 2);
    const double base = dcor2(pairwise_distance(x), pairwise_distance(y));

    SUBCASE("scaling X by c > 0") {
        PointSet xs{scale(x.coords, 3.7)};
        CHECK(dcor2(pairwise_distance(xs), pairwise_distance(y)) ==
              doctest::Approx(base).epsilon(1e-10));
    }
    SUBCASE("translation") {
        Matrix shifted = x.coords;
        for (std::size_t i = 0; i < shifted.rows(); ++i) {
            shifted.at(i, 0) += 5.0;
            shifted.at(i, 1) -= 2.5;
        }
        CHECK(dcor2(pairwise_distance(PointSet{shifted}), pairwise_distance(y)) ==
              doctest::Approx(base).epsilon(1e-10));
    }
    SUBCASE("orthogonal map") {
        const double th = 0.83;
        Matrix rot(20, 2);
        for (std::size_t i = 0; i < 20; ++i) {
            rot.at(i, 0) = std::cos(th) * x.coords.at(i, 0) - std::sin(th) * x.coords.at(i, 1);
            rot.at(i, 1) = std::sin(th) * x.coords.at(i, 0) + std::cos(th) * x.coords.at(i, 1);
        }
        CHECK(dcor2(pairwise_distance(PointSet{rot}), pairwise_distance(y)) ==
              doctest::Approx(base).epsilon(1e-10));
    }
}

TEST_CASE("independence sanity at n=512 over 100 seeds") {
    int below = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        SplitRng rng(900 + seed);
        Matrix x(512, 1), y(512, 1);
        for (std::size_t i = 0; i < 512; ++i) {
            x.at(i, 0) = rng.normal();
            y.at(i, 0) = rng.normal();
        }
        const double v = dcor2(pairwise_distance(PointSet{x}), pairwise_distance(PointSet{y}));
        if (v < 0.05) ++below;
    }
    CHECK(below >= 95);

    SplitRng rng(999);
    Matrix x(512, 1);
    for (std::size_t i = 0; i < 512; ++i) x.at(i, 0) = rng.normal();
    DistanceMatrix dx = pairwise_distance(PointSet{x});
    CHECK(dcor2(dx, dx) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("size mismatch raises dimension error") {
    DistanceMatrix a{Matrix(4, 4)};
    DistanceMatrix b{Matrix(5, 5)};
    CHECK_THROWS_AS(dcov2(a, b), DimensionError);
    CHECK_THROWS_AS(dcor2(a, b), DimensionError);
}
