#include "test_util.hpp"

#include <lyapjet/ensemble.hpp>
#include <lyapjet/errors.hpp>
#include <lyapjet/estimators.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace lyapjet;

namespace {

double combined3(const XiEstimate& a, const XiEstimate& b) {
    return 3.0 * std::sqrt(a.std_err * a.std_err + b.std_err * b.std_err);
}

// straight power iteration on vectors; shares no code with the engine path
double vector_iteration_gamma(const EnsembleSpec& spec, long steps, RngStream& rng) {
    Vec v = normalized(Vec::ones(spec.dim()));
    double acc = 0.0;
    for (long k = 0; k < steps; ++k) {
        const Atom& at = spec.atoms()[static_cast<size_t>(spec.sample_index(rng))];
        const Vec w = at.A * v;
        const double n = norm2(w);
        acc += std::log(n);
        v = (1.0 / n) * w;
    }
    return acc / static_cast<double>(steps);
}

} // namespace

TEST_CASE("top exponent is zero on rotations and exact on a diagonal atom", "[estimators]") {
    const LyapunovEstimate rot = estimate_lyapunov(builtin("pure_rotation"), 2000, 4, 3);
    REQUIRE(std::abs(rot.gamma) < 1e-10);
    REQUIRE(rot.gamma2.has_value());
    REQUIRE(std::abs(*rot.gamma2) < 1e-10);
    REQUIRE(rot.std_err_gamma < 1e-10);
    REQUIRE(rot.replicas.size() == 4);
    REQUIRE(rot.ensemble_digest == builtin("pure_rotation").digest());

    const LyapunovEstimate diag = estimate_lyapunov(builtin("diag_rotation"), 500, 2, 3);
    REQUIRE(std::abs(diag.gamma - std::log(2.0)) < 1e-12);
    REQUIRE(std::abs(*diag.gamma2 - std::log(0.5)) < 1e-11);

    const LyapunovEstimate flat = estimate_lyapunov(builtin("scalar_iid"), 100, 2, 3);
    REQUIRE_FALSE(flat.gamma2.has_value());
    REQUIRE(std::abs(flat.gamma - std::log(2.0)) < 1e-13);

    REQUIRE_THROWS_AS(estimate_lyapunov(builtin("scalar_iid"), 0, 4, 3), ValidationError);
    REQUIRE_THROWS_AS(estimate_lyapunov(builtin("scalar_iid"), 10, 1, 3), ValidationError);
}

TEST_CASE("top exponent matches an independent power iteration", "[estimators]") {
    const EnsembleSpec pb = builtin("positive_bernoulli");
    const LyapunovEstimate est = estimate_lyapunov(pb, 10000, 16, 5);

    RngStream oracle_rng = stream_for(77, "test.est.poweriter");
    std::vector<double> batches;
    for (int b = 0; b < 10; ++b) batches.push_back(vector_iteration_gamma(pb, 60000, oracle_rng));
    double om = 0.0;
    for (double x : batches) om += x;
    om /= batches.size();
    double ov = 0.0;
    for (double x : batches) ov += (x - om) * (x - om);
    const double ose = std::sqrt(ov / (batches.size() * (batches.size() - 1.0)));

    REQUIRE(std::abs(est.gamma - om) <
            4.0 * std::sqrt(est.std_err_gamma * est.std_err_gamma + ose * ose) + 1e-3);
    // both atoms are unimodular, so the exponents must mirror each other
    REQUIRE(std::abs(*est.gamma2 + est.gamma) < 1e-12);
    REQUIRE(est.gamma > 0.5);  // growth is genuinely positive here
}

TEST_CASE("stationary directions settle on contracting families", "[estimators]") {
    const EnsembleSpec diag = builtin("diag_rotation");
    RngStream rng = stream_for(31, "test.est.dirs");
    const Direction nu = sample_direction_nu(diag, 60, rng);
    REQUIRE(std::abs(norm2(nu.unit) - 1.0) < 1e-12);
    REQUIRE(nu.unit[0] > 0.0);  // canonical sign
    REQUIRE(std::abs(nu.unit[0] - 1.0) < 1e-9);
    REQUIRE(nu.step_delta < 1e-9);
    REQUIRE(nu.burn_in == 60);

    const Direction nu_star = sample_direction_nu_star(diag, 60, rng);
    REQUIRE(std::abs(nu_star.unit[0] - 1.0) < 1e-9);  // A is symmetric here
    REQUIRE(nu_star.step_delta < 1e-9);

    REQUIRE_THROWS_AS(sample_direction_nu(diag, 0, rng), ValidationError);
}

TEST_CASE("a permuting atom never settles and says so", "[estimators]") {
    const EnsembleSpec swap = EnsembleSpec::finite(
        2, {{1.0, Mat::from_rows({{0, 2}, {1, 0}}), Mat::identity(2)}});
    RngStream rng = stream_for(32, "test.est.swap");
    const Direction dir = sample_direction_nu(swap, 51, rng);
    REQUIRE(dir.step_delta > 0.1);
    REQUIRE(std::abs(dir.step_delta - 1.0 / std::sqrt(10.0)) < 1e-12);
}

TEST_CASE("integral route is exact when B is proportional to A", "[estimators]") {
    RngStream build = stream_for(33, "test.est.integral");
    const Mat a1 = testutil::random_invertible(2, build);
    const Mat a2 = testutil::random_invertible(2, build);
    const EnsembleSpec spec =
        EnsembleSpec::finite(2, {{0.5, a1, 0.7 * a1}, {0.5, a2, 0.7 * a2}});
    const XiEstimate est = estimate_xi_integral(spec, 400, 50, 9);
    REQUIRE(est.method == "integral_route");
    REQUIRE(std::abs(est.value - 0.7) < 1e-12);
    REQUIRE(est.std_err < 1e-12);
    REQUIRE(est.rejected_samples == 0);
    REQUIRE(est.n_replicas == 16);  // batch means
    REQUIRE(est.steps == 400);

    REQUIRE_THROWS_AS(estimate_xi_integral(spec, 8, 50, 9), ValidationError);
}

TEST_CASE("tracked routes reproduce the rotation constants per replica", "[estimators]") {
    const XiEstimate psi = estimate_xi_psi(builtin("pure_rotation"), 400, 4, 11);
    REQUIRE(psi.method == "psi_route");
    REQUIRE(std::abs(psi.value - std::cos(1.0)) < 1e-12);
    REQUIRE(psi.std_err < 1e-12);
    for (double r : psi.replicas) REQUIRE(std::abs(r - std::cos(1.0)) < 1e-12);
    REQUIRE(psi.half_value.has_value());
    REQUIRE(std::abs(*psi.half_value - std::cos(1.0)) < 1e-12);
    REQUIRE(psi.abs_value == std::abs(psi.value));

    const XiEstimate phi = estimate_abs_xi_phi(builtin("pure_rotation"), 400, 4, 11);
    REQUIRE(phi.method == "phi_route");
    REQUIRE(std::abs(phi.value - 1.0) < 1e-12);
    REQUIRE(phi.value == phi.abs_value);

    REQUIRE_THROWS_AS(estimate_xi_psi(builtin("pure_rotation"), 1, 4, 11), ValidationError);
    REQUIRE_THROWS_AS(estimate_xi_psi(builtin("pure_rotation"), 400, 1, 11), ValidationError);
}

TEST_CASE("signed coin flips average out in both tracked routes", "[estimators]") {
    const EnsembleSpec sp = builtin("signed_pair");
    const XiEstimate psi = estimate_xi_psi(sp, 10000, 16, 13);
    REQUIRE(std::abs(psi.value) < 3.0 * psi.std_err + 0.01);

    const XiEstimate phi = estimate_abs_xi_phi(sp, 10000, 16, 13);
    REQUIRE(phi.value >= 0.0);
    REQUIRE(phi.value < 0.05);  // |walk|/n at n = 1e4 is a few per mille
}

TEST_CASE("orbit route replays to an exact scalar mean", "[estimators]") {
    const EnsembleSpec scalar = builtin("scalar_iid");
    const long m = 64, tail = 8, replicas = 16;
    const std::uint64_t seed = 17;
    const XiEstimate est = xi_orbit_average(scalar, m, tail, seed, {}, {}, replicas);
    REQUIRE(est.method == "orbit_route");
    REQUIRE(est.rejected_samples == 0);
    REQUIRE(est.n_replicas == replicas);

    for (long r = 0; r < replicas; ++r) {
        RngStream replay = stream_for(seed, "xi.orbit", static_cast<std::uint64_t>(r));
        double sum_b = 0.0;
        for (long k = 0; k < m; ++k)
            sum_b += scalar.atoms()[static_cast<size_t>(scalar.sample_index(replay))].B(0, 0);
        const double expect = sum_b / 2.0 / static_cast<double>(m);
        REQUIRE(std::abs(est.replicas[static_cast<size_t>(r)] - expect) < 1e-13);
    }

    REQUIRE_THROWS_AS(xi_orbit_average(scalar, 0, tail, seed), ValidationError);
    REQUIRE_THROWS_AS(xi_orbit_average(scalar, m, 0, seed), ValidationError);
}

TEST_CASE("orbit route is exact when B is proportional to A", "[estimators]") {
    RngStream build = stream_for(34, "test.est.orbit");
    const Mat a1 = testutil::random_invertible(2, build);
    const Mat a2 = testutil::random_invertible(2, build);
    const EnsembleSpec spec =
        EnsembleSpec::finite(2, {{0.5, a1, 0.7 * a1}, {0.5, a2, 0.7 * a2}});
    const XiEstimate est = xi_orbit_average(spec, 40, 60, 19, {}, {}, 8);
    REQUIRE(std::abs(est.value - 0.7) < 1e-9);
    REQUIRE(est.std_err < 1e-9);
}

TEST_CASE("difference quotient vanishes identically when B is zero", "[estimators]") {
    const EnsembleSpec spec =
        EnsembleSpec::finite(2, {{1.0, Mat::from_rows({{2, 1}, {1, 1}}), Mat(2)}});
    const auto pts = gamma_eps_derivative(spec, {1e-3, 1e-2}, 200, 4, 21);
    REQUIRE(pts.size() == 2);
    for (const GammaEpsPoint& pt : pts) {
        REQUIRE(pt.ratio == 0.0);
        REQUIRE(pt.std_err == 0.0);
        for (double r : pt.replicas) REQUIRE(r == 0.0);
    }
}

TEST_CASE("difference quotient matches the scalar closed form", "[estimators]") {
    const double eps = 1e-3;
    const auto pts = gamma_eps_derivative(builtin("scalar_iid"), {eps}, 2000, 16, 23);
    REQUIRE(pts.size() == 1);
    // E log(2 + eps b) shifts by (log(2+eps) + log(2+3 eps))/2 - log 2
    const double closed =
        (0.5 * (std::log(2.0 + eps) + std::log(2.0 + 3.0 * eps)) - std::log(2.0)) / eps;
    REQUIRE(std::abs(pts[0].ratio - closed) < 3.0 * pts[0].std_err + 1e-12);
    REQUIRE(pts[0].eps == eps);

    REQUIRE_THROWS_AS(gamma_eps_derivative(builtin("scalar_iid"), {}, 100, 4, 23),
                      ValidationError);
    REQUIRE_THROWS_AS(gamma_eps_derivative(builtin("scalar_iid"), {0.0}, 100, 4, 23),
                      ValidationError);
}

TEST_CASE("difference quotient refuses a perturbation that kills an atom", "[estimators]") {
    const EnsembleSpec spec =
        EnsembleSpec::finite(2, {{1.0, Mat::identity(2), -1.0 * Mat::identity(2)}});
    REQUIRE_THROWS_AS(gamma_eps_derivative(spec, {1.0}, 100, 4, 25), SingularPerturbedAtom);
}

TEST_CASE("forward and transposed stationary directions overlap", "[estimators]") {
    const EnsembleSpec pb = builtin("positive_bernoulli");
    for (std::uint64_t s = 0; s < 5; ++s) {
        RngStream r1 = stream_for(35, "test.est.overlap.nu", s);
        RngStream r2 = stream_for(35, "test.est.overlap.nustar", s);
        const Vec z = sample_direction_nu(pb, 300, r1).unit;
        const Vec zt = sample_direction_nu_star(pb, 300, r2).unit;
        REQUIRE(std::abs(dot(zt, z)) > 1e-3);
    }
}

TEST_CASE("tracked route start point washes out", "[estimators]") {
    const EnsembleSpec pb = builtin("positive_bernoulli");
    const XiEstimate a = estimate_abs_xi_phi(pb, 5000, 32, 27);
    const XiEstimate b = estimate_abs_xi_phi(pb, 5000, 32, 27, Vec::unit(2, 0));
    REQUIRE(std::abs(a.value - b.value) < std::max(combined3(a, b), 5e-3));
}

TEST_CASE("replica spread shrinks like one over sqrt replicas", "[estimators]") {
    const EnsembleSpec pb = builtin("positive_bernoulli");
    const XiEstimate few = estimate_xi_psi(pb, 2000, 16, 29);
    const XiEstimate many = estimate_xi_psi(pb, 2000, 256, 29);
    const double ratio = few.std_err / many.std_err;
    REQUIRE(ratio > 2.0);  // expected 4, generous band for sampling noise
    REQUIRE(ratio < 8.0);
    REQUIRE(std::abs(few.value - many.value) < std::max(combined3(few, many), 5e-3));
}
