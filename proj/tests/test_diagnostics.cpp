#include "test_util.hpp"

#include <lyapjet/diagnostics.hpp>
#include <lyapjet/ensemble.hpp>
#include <lyapjet/errors.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace lyapjet;
using Catch::Approx;

namespace {

EnsembleSpec proportional_pair(double alpha, std::uint64_t tag) {
    RngStream rng = stream_for(40, "test.diag.prop", tag);
    const Mat a1 = testutil::random_invertible(2, rng);
    const Mat a2 = testutil::random_invertible(2, rng);
    return EnsembleSpec::finite(2, {{0.5, a1, alpha * a1}, {0.5, a2, alpha * a2}});
}

} // namespace

TEST_CASE("alignment curve verdicts span all three outcomes", "[diagnostics]") {
    // y_n == x_n from step one when B is a multiple of A
    RngStream r1 = stream_for(41, "test.diag.align", 1);
    const TrajectoryRecord aligned =
        run_trajectory(proportional_pair(0.4, 1), 200, r1, {Vec::ones(2)});
    const DiagnosticSeries conv = alignment_curve(aligned, 0);
    REQUIRE(conv.verdict == Verdict::converged);
    REQUIRE(conv.name == "alignment.delta_xy");
    REQUIRE(conv.target == 0.0);
    REQUIRE_FALSE(conv.samples.empty());

    // the rotation pair keeps delta pinned at sin(1) ~ 0.84
    RngStream r2 = stream_for(41, "test.diag.align", 2);
    const TrajectoryRecord spinning =
        run_trajectory(builtin("pure_rotation"), 200, r2, {Vec::ones(2)});
    REQUIRE(alignment_curve(spinning, 0).verdict == Verdict::diverged);

    // loosening the threshold to straddle 0.84 lands in the middle
    const DiagnosticSeries mid = alignment_curve(spinning, 0, 0.1);
    REQUIRE(mid.threshold == Approx(1.0));
    REQUIRE(mid.verdict == Verdict::inconclusive);

    REQUIRE_THROWS_AS(alignment_curve(aligned, 3), NoTrackedVector);
}

TEST_CASE("alignment has nothing to say when T stays zero", "[diagnostics]") {
    const EnsembleSpec spec =
        EnsembleSpec::finite(2, {{1.0, Mat::from_rows({{2, 1}, {1, 1}}), Mat(2)}});
    RngStream rng = stream_for(42, "test.diag.zero");
    const TrajectoryRecord rec = run_trajectory(spec, 50, rng, {Vec::ones(2)});
    const DiagnosticSeries s = alignment_curve(rec, 0);
    REQUIRE(s.samples.empty());
    REQUIRE(s.verdict == Verdict::inconclusive);
    REQUIRE(s.detail == "no usable samples");
}

TEST_CASE("sign alignment picks out the true sign of the mean", "[diagnostics]") {
    const EnsembleSpec pb = builtin("positive_bernoulli");  // xi mean is positive
    RngStream rng = stream_for(43, "test.diag.sign");
    const TrajectoryRecord rec = run_trajectory(pb, 3000, rng, {Vec::ones(2)}, 10);

    const DiagnosticSeries plus = sign_alignment(rec, 0, 1);
    REQUIRE(plus.verdict == Verdict::converged);
    REQUIRE(plus.name == "alignment.sign_gap_plus");

    const DiagnosticSeries minus = sign_alignment(rec, 0, -1);
    REQUIRE(minus.verdict == Verdict::diverged);  // ||x + y|| tends to 2

    REQUIRE_THROWS_AS(sign_alignment(rec, 0, 0), ValidationError);
}

TEST_CASE("rank one ratio collapses geometrically for the diagonal atom", "[diagnostics]") {
    const Mat d2 = Mat::from_rows({{2, 0}, {0, 0.5}});
    const EnsembleSpec spec = EnsembleSpec::finite(2, {{1.0, d2, 0.3 * d2}});
    RngStream rng = stream_for(44, "test.diag.rank");
    const TrajectoryRecord rec = run_trajectory(spec, 5, rng, {}, 5);
    // T_n = 0.3 n diag(2,0.5)^n, so sigma2/sigma1 = 4^-n
    REQUIRE(std::abs(rank_one_ratio(rec.final_state) - std::pow(4.0, -5.0)) < 1e-12);

    // invariant under positive scaling of the block
    ProductState scaled = rec.final_state;
    scaled.u = 3.0 * scaled.u;
    REQUIRE(std::abs(rank_one_ratio(scaled) - rank_one_ratio(rec.final_state)) < 1e-15);
}

TEST_CASE("rank one ratio refuses degenerate states", "[diagnostics]") {
    REQUIRE_THROWS_AS(rank_one_ratio(init_state(1)), DimensionTooSmall);

    const EnsembleSpec zero_b =
        EnsembleSpec::finite(2, {{1.0, Mat::from_rows({{2, 1}, {1, 1}}), Mat(2)}});
    RngStream rng = stream_for(45, "test.diag.rankzero");
    const TrajectoryRecord rec = run_trajectory(zero_b, 10, rng, {}, 10);
    REQUIRE_THROWS_AS(rank_one_ratio(rec.final_state), ZeroT);
}

TEST_CASE("zero visits replay the coin walk's zero set", "[diagnostics]") {
    const EnsembleSpec sp = builtin("signed_pair");
    RngStream run = stream_for(46, "test.diag.visits");
    RngStream replay = run;
    const long n = 30000;
    const TrajectoryRecord rec = run_trajectory(sp, n, run, {});

    std::vector<long> walk_zeros;
    long w = 0;
    for (long i = 1; i <= n; ++i) {
        w += sp.sample_index(replay) == 0 ? 1 : -1;
        if (w == 0) walk_zeros.push_back(i);
    }
    REQUIRE(zero_visits(rec) == walk_zeros);
    REQUIRE_FALSE(walk_zeros.empty());

    // a proportional-B run never revisits zero; a zero-B run never leaves it
    RngStream r2 = stream_for(46, "test.diag.visits", 2);
    const TrajectoryRecord prop = run_trajectory(proportional_pair(0.4, 2), 100, r2, {});
    REQUIRE(zero_visits(prop).empty());

    const EnsembleSpec zero_b =
        EnsembleSpec::finite(2, {{1.0, Mat::from_rows({{2, 1}, {1, 1}}), Mat(2)}});
    RngStream r3 = stream_for(46, "test.diag.visits", 3);
    const TrajectoryRecord dead = run_trajectory(zero_b, 100, r3, {});
    REQUIRE(zero_visits(dead).size() == 100);
}

TEST_CASE("zero tolerance policy scales with the step count", "[diagnostics]") {
    const ZeroTolPolicy custom{2e-14};
    REQUIRE(custom.threshold(9) == Approx(2e-13));
    REQUIRE(ZeroTolPolicy{}.threshold(0) == Approx(1e-14));
}

TEST_CASE("walk return gaps keep growing in the mean", "[diagnostics]") {
    // engine zero set agrees with the raw walk on a shared prefix, and the
    // walk's own mean return gap grows without settling (null recurrence)
    const EnsembleSpec sp = builtin("signed_pair");
    RngStream walk_rng = stream_for(47, "test.diag.gaps");

    std::vector<long> zeros;
    long w = 0;
    const long horizon = 1000000, prefix = 100000;
    long zeros_at_prefix = 0;
    for (long i = 1; i <= horizon; ++i) {
        w += sp.sample_index(walk_rng) == 0 ? 1 : -1;
        if (w == 0) {
            zeros.push_back(i);
            if (i <= prefix) ++zeros_at_prefix;
        }
    }
    REQUIRE(zeros_at_prefix > 0);
    const double gap_small = static_cast<double>(prefix) / zeros_at_prefix;
    const double gap_large = static_cast<double>(horizon) / zeros.size();
    REQUIRE(gap_large > 1.3 * gap_small);
}
