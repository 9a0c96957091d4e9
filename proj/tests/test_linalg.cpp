#include "test_util.hpp"

#include <lyapjet/errors.hpp>
#include <lyapjet/linalg.hpp>
#include <lyapjet/rng.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace lyapjet;
using testutil::frame_error;
using testutil::max_entry_gap;
using testutil::random_invertible;
using testutil::random_matrix;
using testutil::random_unit;
using testutil::reconstruct;

TEST_CASE("vector and matrix construction is validated", "[linalg]") {
    REQUIRE_THROWS_AS(Vec(std::vector<double>{}), ValidationError);
    REQUIRE_THROWS_AS((Vec{1.0, std::numeric_limits<double>::infinity()}), ValidationError);
    REQUIRE_THROWS_AS(Mat::from_rows({{1.0, 2.0}, {3.0}}), ValidationError);

    const Mat r = Mat::rotation(0.7);
    REQUIRE(frame_error(r) < 1e-15);
    REQUIRE(std::abs(r(0, 0) - std::cos(0.7)) < 1e-15);
    REQUIRE(std::abs(r(1, 0) - std::sin(0.7)) < 1e-15);

    const Vec e1 = Vec::unit(3, 0);
    REQUIRE(e1[0] == 1.0);
    REQUIRE(e1[1] == 0.0);
    REQUIRE(norm2(Vec::ones(4)) == 2.0);
}

TEST_CASE("svd reconstructs random matrices with orthonormal frames", "[linalg]") {
    for (int d : {2, 3, 4}) {
        RngStream rng = stream_for(11, "test.linalg.svd", static_cast<std::uint64_t>(d));
        double worst_rec = 0.0, worst_frame = 0.0, worst_order = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            const double scale = std::exp(6.0 * rng.symmetric());  // spans ~5e-3 .. 4e2
            const Mat m = random_matrix(d, scale, rng);
            const SvdResult s = svd(m);
            const double ref = std::max(1.0, max_abs(m));
            worst_rec = std::max(worst_rec, max_entry_gap(m, reconstruct(s)) / ref);
            worst_frame = std::max(worst_frame, std::max(frame_error(s.left), frame_error(s.right)));
            for (int k = 0; k + 1 < d; ++k)
                worst_order = std::max(worst_order, s.sigma[k + 1] - s.sigma[k]);
            REQUIRE(s.sigma[d - 1] >= 0.0);
        }
        INFO("d = " << d);
        REQUIRE(worst_rec < 1e-10);
        REQUIRE(worst_frame < 1e-10);
        REQUIRE(worst_order <= 0.0);  // descending
    }
}

TEST_CASE("svd handles degenerate shapes", "[linalg]") {
    const SvdResult z = svd(Mat(3));
    for (int k = 0; k < 3; ++k) REQUIRE(z.sigma[k] == 0.0);
    REQUIRE(frame_error(z.left) < 1e-12);
    REQUIRE(frame_error(z.right) < 1e-12);

    const SvdResult rot = svd(Mat::rotation(1.3));
    REQUIRE(std::abs(rot.sigma[0] - 1.0) < 1e-14);
    REQUIRE(std::abs(rot.sigma[1] - 1.0) < 1e-14);

    // rank one: second singular value collapses but the factorization holds
    const Mat outer = Mat::from_rows({{1, 2}, {2, 4}});
    const SvdResult r1 = svd(outer);
    REQUIRE(std::abs(r1.sigma[0] - 5.0) < 1e-12);
    REQUIRE(r1.sigma[1] < 1e-12);
    REQUIRE(max_entry_gap(outer, reconstruct(r1)) < 1e-12);

    // entries whose squares would overflow without the max-entry pre-scale
    const Mat skew = Mat::from_rows({{3e200, 0}, {0, 2e100}});
    const SvdResult sk = svd(skew);
    REQUIRE(sk.sigma[0] == 3e200);
    REQUIRE(std::abs(sk.sigma[1] - 2e100) < 1e87);
}

TEST_CASE("spectral and frobenius norms", "[linalg]") {
    REQUIRE(spectral_norm(Mat::from_rows({{2, 0}, {0, 0.5}})) == 2.0);
    REQUIRE(std::abs(spectral_norm(Mat::rotation(0.4)) - 1.0) < 1e-14);
    REQUIRE(std::abs(frobenius_norm(Mat::identity(2)) - std::sqrt(2.0)) < 1e-15);

    // max-scaled accumulation keeps huge entries finite
    const Mat big = Mat::from_rows({{1e200, 1e200}, {1e200, 1e200}});
    REQUIRE(std::abs(frobenius_norm(big) - 2e200) / 2e200 < 1e-14);
    REQUIRE(max_abs(big) == 1e200);

    RngStream rng = stream_for(12, "test.linalg.norm");
    for (int trial = 0; trial < 200; ++trial) {
        const Mat m = random_matrix(3, 1.0, rng);
        const Vec x = random_unit(3, rng);
        REQUIRE(norm2(m * x) <= spectral_norm(m) * (1.0 + 1e-12));
        REQUIRE(spectral_norm(m) <= frobenius_norm(m) * (1.0 + 1e-12));
    }
}

TEST_CASE("invert matches hand inverses and flags singularity", "[linalg]") {
    const Mat shear = Mat::from_rows({{1, 1}, {0, 1}});
    REQUIRE(max_entry_gap(invert(shear), Mat::from_rows({{1, -1}, {0, 1}})) < 1e-15);

    RngStream rng = stream_for(13, "test.linalg.inv");
    for (int d : {2, 3, 4}) {
        for (int trial = 0; trial < 200; ++trial) {
            const Mat m = random_invertible(d, rng);
            const SvdResult s = svd(m);
            const double cond = s.sigma[0] / s.sigma[d - 1];
            const double gap = max_entry_gap(m * invert(m), Mat::identity(d));
            REQUIRE(gap < 1e-12 * cond);
        }
    }

    REQUIRE_THROWS_AS(invert(Mat::from_rows({{1, 2}, {2, 4}})), SingularMatrix);
    REQUIRE_THROWS_AS(invert(Mat(3)), SingularMatrix);
}

TEST_CASE("projective distance basics", "[linalg]") {
    const Vec e1 = Vec::unit(2, 0), e2 = Vec::unit(2, 1);
    REQUIRE(delta(e1, e2) == 1.0);
    REQUIRE(delta(e1, e1) == 0.0);
    REQUIRE(delta(e1, -1.0 * e1) == 0.0);  // lines, not rays
    REQUIRE(delta(e1, 3.0 * e2) == 1.0);   // scale invariant
    REQUIRE_THROWS_AS(delta(e1, Vec(2)), ZeroVector);

    // sine of the angle for an explicit rotation
    const Vec tilted{std::cos(0.3), std::sin(0.3)};
    REQUIRE(std::abs(delta(e1, tilted) - std::sin(0.3)) < 1e-15);
}

TEST_CASE("projective distance satisfies the triangle inequality", "[linalg]") {
    RngStream rng = stream_for(14, "test.linalg.delta");
    for (int trial = 0; trial < 10000; ++trial) {
        const Vec x = random_unit(3, rng), y = random_unit(3, rng), z = random_unit(3, rng);
        REQUIRE(delta(x, z) <= delta(x, y) + delta(y, z) + 1e-14);
    }
}

TEST_CASE("delta is sandwiched by chord lengths", "[linalg]") {
    const DeltaBounds axes = delta_equiv_bounds(Vec::unit(2, 0), Vec::unit(2, 1));
    REQUIRE(axes.lower == 1.0);
    REQUIRE(std::abs(axes.upper - std::sqrt(2.0)) < 1e-15);
    REQUIRE(axes.holds);

    const Vec x = normalized(Vec{3, 4});
    const DeltaBounds anti = delta_equiv_bounds(x, -1.0 * x);
    REQUIRE(anti.lower == 0.0);
    REQUIRE(std::abs(anti.upper - 2.0) < 1e-12);
    REQUIRE(anti.holds);

    REQUIRE_THROWS_AS(delta_equiv_bounds(Vec{1, 1}, Vec::unit(2, 0)), NotNormalised);

    RngStream rng = stream_for(15, "test.linalg.sandwich");
    for (int d : {2, 3, 5}) {
        for (int trial = 0; trial < 3000; ++trial) {
            const DeltaBounds b = delta_equiv_bounds(random_unit(d, rng), random_unit(d, rng));
            REQUIRE(b.holds);
        }
    }
}

TEST_CASE("second compound matrix and exterior norm", "[linalg]") {
    REQUIRE_THROWS_AS(compound2(Mat::from_rows({{2.0}})), DimensionTooSmall);
    REQUIRE_THROWS_AS(exterior_square_norm(Mat::from_rows({{2.0}})), DimensionTooSmall);

    // d = 2: the compound is the 1x1 determinant
    RngStream rng = stream_for(16, "test.linalg.wedge");
    for (int trial = 0; trial < 500; ++trial) {
        const Mat m = random_matrix(2, 1.0, rng);
        const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
        REQUIRE(std::abs(compound2(m)(0, 0) - det) < 1e-15);
        REQUIRE(std::abs(exterior_square_norm(m) - std::abs(det)) < 1e-12);
    }

    REQUIRE(max_entry_gap(compound2(Mat::identity(3)), Mat::identity(3)) == 0.0);

    // sigma1*sigma2 equals the compound's top singular value, and the
    // compound is multiplicative
    for (int trial = 0; trial < 200; ++trial) {
        const Mat a = random_matrix(3, 1.0, rng), b = random_matrix(3, 1.0, rng);
        REQUIRE(std::abs(spectral_norm(compound2(a)) - exterior_square_norm(a)) <
                1e-10 * std::max(1.0, exterior_square_norm(a)));
        REQUIRE(max_entry_gap(compound2(a * b), compound2(a) * compound2(b)) < 1e-12);
        REQUIRE(exterior_square_norm(a) <= spectral_norm(a) * spectral_norm(a) + 1e-12);
    }
}
