#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lyapjet/ensemble.hpp"
#include "lyapjet/errors.hpp"
#include "lyapjet/linalg.hpp"
#include "lyapjet/rng.hpp"

// The product engine. State after n factors:
//
//   s_hat = S_n / ||S_n||_2,  u = T_n / ||S_n||_2,  log_norm_s = log ||S_n||_2
//
// where S_n = A_n...A_1 and T_n is its first-order companion, grown by
// T_n = B_n.S_{n-1} + A_n.T_{n-1}. Renormalizing both blocks by the same
// scalar every step keeps all entries O(1) for arbitrarily long runs while
// preserving every scale-free observable exactly.
//
// Tracked vectors follow the same one-step rule restricted to a line:
// phi = ||T_n x|| / ||S_n x|| and psi = <S_n x, T_n x> / ||S_n x||^2 are
// recomputed from the carried unit directions, never from the full matrices.

namespace lyapjet {

// Below this, ||T_n x|| (or ||T_n||) is treated as exactly zero. The slack
// grows with n because the rounding noise that a true zero leaves behind
// does: it rides the same cocycle as the signal.
inline double zero_threshold(long n) { return 1e-14 * (1.0 + static_cast<double>(n)); }

struct TrackedVector {
    Vec x0;                    // the start direction, unit
    Vec sx_hat;                // S_n x0 normalized
    double log_norm_sx = 0.0;  // log ||S_n x0||
    double phi = 0.0;
    double psi = 0.0;
    std::optional<Vec> y_hat;  // T_n x0 normalized; empty exactly when phi == 0
    bool phi_zero = true;
};

struct ProductState {
    long n = 0;
    Mat s_hat;
    Mat u;
    double log_norm_s = 0.0;
    std::vector<TrackedVector> tracked;
};

inline ProductState init_state(int dim, const std::vector<Vec>& tracked_inits = {}) {
    ProductState st;
    st.n = 0;
    st.s_hat = Mat::identity(dim);  // ||I||_2 = 1, so no scale is lost at n = 0
    st.u = Mat(dim);
    for (const Vec& x : tracked_inits) {
        if (x.dim() != dim) throw ValidationError("tracked start vector has wrong dimension");
        TrackedVector tv;
        tv.x0 = normalized(x);
        tv.sx_hat = tv.x0;
        st.tracked.push_back(std::move(tv));
    }
    return st;
}

inline ProductState step(const ProductState& st, const Mat& A, const Mat& B) {
    const int d = st.s_hat.dim();
    if (A.dim() != d || B.dim() != d) throw ValidationError("step: pair dimension mismatch");
    const std::string at = "step " + std::to_string(st.n + 1);
    const double fa = frobenius_norm(A);

    Mat s_raw = A * st.s_hat;
    Mat u_raw = B * st.s_hat + A * st.u;
    if (!s_raw.all_finite() || !u_raw.all_finite()) throw Overflow(at + ": non-finite product entry");

    const double s = spectral_norm(s_raw);
    if (s <= kSingularRatio * fa) throw NonInvertibleA(at + ": ||A.S_hat|| collapsed relative to ||A||");

    ProductState out;
    out.n = st.n + 1;
    out.log_norm_s = st.log_norm_s + std::log(s);
    out.s_hat = (1.0 / s) * s_raw;
    out.u = (1.0 / s) * u_raw;
    // snap a dead T to exact zero so later steps restart it cleanly
    if (frobenius_norm(out.u) < zero_threshold(out.n)) out.u = Mat(d);

    out.tracked.reserve(st.tracked.size());
    for (const TrackedVector& tv : st.tracked) {
        const Vec asx = A * tv.sx_hat;
        const double d2 = dot(asx, asx);
        const double nasx = std::sqrt(d2);
        if (nasx <= kSingularRatio * fa)
            throw NonInvertibleA(at + ": ||A.sx|| collapsed relative to ||A||");

        Vec tx = B * tv.sx_hat;
        if (tv.phi > 0.0) tx = tx + tv.phi * (A * (*tv.y_hat));
        const double ntx = norm2(tx);
        if (!std::isfinite(ntx) || !std::isfinite(nasx))
            throw Overflow(at + ": tracked ratio left double range");

        TrackedVector next;
        next.x0 = tv.x0;
        next.sx_hat = (1.0 / nasx) * asx;
        next.log_norm_sx = tv.log_norm_sx + std::log(nasx);
        next.phi = ntx / nasx;
        next.psi = dot(asx, tx) / d2;
        if (next.phi < zero_threshold(out.n)) {
            next.phi = 0.0;
            next.psi = 0.0;
            next.phi_zero = true;
        } else {
            next.y_hat = (1.0 / ntx) * tx;
            next.phi_zero = false;
        }
        out.tracked.push_back(std::move(next));
    }
    return out;
}

// --- full-trajectory driver ---

struct TrajectoryRow {
    long n = 0;
    double log_norm_s = 0.0;
    double log_norm_wedge = 0.0;  // log ||S_n ^ S_n||_2; NaN when dim == 1
    struct PerTracked {
        double log_norm_sx = 0.0;
        double phi = 0.0;
        double psi = 0.0;
        // NaN whenever phi == 0 (no direction to compare against)
        double delta_xy = 0.0;
        double sign_gap_plus = 0.0;   // ||x_n - y_n||
        double sign_gap_minus = 0.0;  // ||x_n + y_n||
        bool phi_zero = true;
    };
    std::vector<PerTracked> tracked;
    double trace_cocycle = 0.0;  // tr(T_n S_n^-1); NaN once S_hat is numerically singular
    double trace_running_sum = 0.0;
    double u_norm = 0.0;  // Frobenius norm of the renormalized T block
    bool t_zero = true;
};

struct TrajectoryRecord {
    int dim = 0;
    long steps = 0;
    long record_every = 1;
    std::vector<TrajectoryRow> rows;
    ProductState final_state;
    double final_log_norm_wedge = std::numeric_limits<double>::quiet_NaN();
    double final_trace_sum = 0.0;
};

namespace detail {

inline double trace_lhs_soft(const ProductState& st) {
    // tr(0 . X) needs no inverse, and a snapped-to-zero T block should not
    // inherit NaN from a contracting S
    if (max_abs(st.u) == 0.0) return 0.0;
    // NaN instead of a throw: on contracting runs S_hat legitimately drifts
    // past the inversion threshold and the row simply has no left side
    const SvdResult s = svd(st.s_hat);
    const int d = st.s_hat.dim();
    if (s.sigma[0] == 0.0 || s.sigma[d - 1] / s.sigma[0] < kSingularRatio)
        return std::numeric_limits<double>::quiet_NaN();
    double acc = 0.0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double inv_ji = 0.0;
            for (int k = 0; k < d; ++k) inv_ji += s.right(j, k) * s.left(i, k) / s.sigma[k];
            acc += st.u(i, j) * inv_ji;
        }
    return acc;
}

inline TrajectoryRow make_row(const ProductState& st, double log_wedge, double trace_sum) {
    TrajectoryRow row;
    row.n = st.n;
    row.log_norm_s = st.log_norm_s;
    row.log_norm_wedge = log_wedge;
    row.trace_running_sum = trace_sum;
    row.trace_cocycle = trace_lhs_soft(st);
    row.u_norm = frobenius_norm(st.u);
    row.t_zero = row.u_norm < zero_threshold(st.n);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const TrackedVector& tv : st.tracked) {
        TrajectoryRow::PerTracked pt;
        pt.log_norm_sx = tv.log_norm_sx;
        pt.phi = tv.phi;
        pt.psi = tv.psi;
        pt.phi_zero = tv.phi_zero;
        if (tv.y_hat) {
            pt.delta_xy = delta(tv.sx_hat, *tv.y_hat);
            pt.sign_gap_plus = norm2(tv.sx_hat - *tv.y_hat);
            pt.sign_gap_minus = norm2(tv.sx_hat + *tv.y_hat);
        } else {
            pt.delta_xy = pt.sign_gap_plus = pt.sign_gap_minus = nan;
        }
        row.tracked.push_back(pt);
    }
    return row;
}

} // namespace detail

// Runs `steps` i.i.d. factors, recording every `record_every` steps (the
// final step is always recorded). Alongside the state it accumulates the
// exterior-square log norm and the additive trace cocycle sum(tr(B_i A_i^-1)),
// both of which are per-atom constants on finite ensembles.
inline TrajectoryRecord run_trajectory(const EnsembleSpec& spec, long steps, RngStream& rng,
                                       const std::vector<Vec>& tracked_inits = {},
                                       long record_every = 1) {
    if (steps < 1) throw ValidationError("run_trajectory: steps must be >= 1");
    if (record_every < 1) throw ValidationError("run_trajectory: record_every must be >= 1");
    const int d = spec.dim();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    struct AtomCache {
        Mat wedge;
        double tr_ba_inv;
    };
    std::vector<AtomCache> cache;
    if (spec.is_finite()) {
        for (const Atom& at : spec.atoms())
            cache.push_back({d >= 2 ? compound2(at.A) : Mat(1), trace(at.B * invert(at.A))});
    }

    TrajectoryRecord rec;
    rec.dim = d;
    rec.steps = steps;
    rec.record_every = record_every;

    ProductState st = init_state(d, tracked_inits);
    Mat w_hat = d >= 2 ? Mat::identity(d * (d - 1) / 2) : Mat(1);
    double log_wedge_f = 0.0;  // Frobenius-renormalized; spectral correction applied on read
    double trace_sum = 0.0;

    for (long n = 1; n <= steps; ++n) {
        const Mat* A = nullptr;
        const Mat* B = nullptr;
        Mat wedge_a;
        double tr_ba = 0.0;
        std::pair<Mat, Mat> drawn;
        if (spec.is_finite()) {
            const int idx = spec.sample_index(rng);
            const Atom& at = spec.atoms()[static_cast<size_t>(idx)];
            A = &at.A;
            B = &at.B;
            if (d >= 2) wedge_a = cache[static_cast<size_t>(idx)].wedge;
            tr_ba = cache[static_cast<size_t>(idx)].tr_ba_inv;
        } else {
            drawn = spec.sample_pair(rng);
            A = &drawn.first;
            B = &drawn.second;
            if (d >= 2) wedge_a = compound2(*A);
            tr_ba = trace(drawn.second * invert(drawn.first));
        }

        st = step(st, *A, *B);
        trace_sum += tr_ba;
        if (d >= 2) {
            Mat w_raw = wedge_a * w_hat;
            if (!w_raw.all_finite())
                throw Overflow("step " + std::to_string(n) + ": exterior square overflowed");
            const double f = frobenius_norm(w_raw);
            if (f == 0.0) throw NonInvertibleA("step " + std::to_string(n) + ": exterior square collapsed");
            w_hat = (1.0 / f) * w_raw;
            log_wedge_f += std::log(f);
        }

        if (n % record_every == 0 || n == steps) {
            const double lw = d >= 2 ? log_wedge_f + std::log(spectral_norm(w_hat)) : nan;
            rec.rows.push_back(detail::make_row(st, lw, trace_sum));
        }
    }
    rec.final_state = std::move(st);
    rec.final_log_norm_wedge = d >= 2 ? log_wedge_f + std::log(spectral_norm(w_hat)) : nan;
    rec.final_trace_sum = trace_sum;
    return rec;
}

// --- cross-checks ---

struct TraceCheck {
    double lhs;
    double rhs;
    bool ok;
};

// tr(T_n S_n^-1) must equal the additive walk sum(tr(B_i A_i^-1)) exactly;
// here up to 1e-8 relative. Throws SingularMatrix if the renormalized S_n
// cannot be inverted, in which case the left side is simply not computable
// in double precision (condition number ~ exp(n.(top spread))).
inline TraceCheck trace_cocycle_check(const ProductState& st, double running_sum) {
    const double lhs = trace(st.u * invert(st.s_hat));
    const bool ok = std::abs(lhs - running_sum) <= 1e-8 * std::max(1.0, std::abs(running_sum));
    return {lhs, running_sum, ok};
}

struct OraclePair {
    Mat S;
    Mat T;
};

// Reference computation #1: multiply the 2d x 2d embeddings
// [[A_i, B_i], [0, A_i]] left to right; the product is [[S_n, T_n], [0, S_n]].
// No renormalization, so it is only usable while entries stay in range.
inline OraclePair block_oracle(const std::vector<std::pair<Mat, Mat>>& pairs) {
    if (pairs.empty()) throw ValidationError("block_oracle: needs at least one pair");
    const int d = pairs.front().first.dim();
    Mat prod = Mat::identity(2 * d);
    for (size_t i = 0; i < pairs.size(); ++i) {
        const auto& [A, B] = pairs[i];
        if (A.dim() != d || B.dim() != d) throw ValidationError("block_oracle: dimension mismatch");
        Mat c(2 * d);
        for (int r = 0; r < d; ++r)
            for (int q = 0; q < d; ++q) {
                c(r, q) = A(r, q);
                c(r, q + d) = B(r, q);
                c(r + d, q + d) = A(r, q);
            }
        prod = c * prod;
        if (!prod.all_finite())
            throw Overflow("block_oracle: overflow at factor " + std::to_string(i + 1));
    }
    OraclePair out{Mat(d), Mat(d)};
    for (int r = 0; r < d; ++r)
        for (int q = 0; q < d; ++q) {
            out.S(r, q) = prod(r, q);
            out.T(r, q) = prod(r, q + d);
        }
    return out;
}

// Reference computation #2: first-order jets. (V, D) composes as
// (V2, D2).(V1, D1) = (V2 V1, V2 D1 + D2 V1); feeding (A_i, B_i) left to
// right yields (S_n, T_n) directly.
inline OraclePair dual_product_oracle(const std::vector<std::pair<Mat, Mat>>& pairs) {
    if (pairs.empty()) throw ValidationError("dual_product_oracle: needs at least one pair");
    const int d = pairs.front().first.dim();
    Mat S = pairs.front().first;
    Mat T = pairs.front().second;
    if (T.dim() != d) throw ValidationError("dual_product_oracle: dimension mismatch");
    for (size_t i = 1; i < pairs.size(); ++i) {
        const auto& [A, B] = pairs[i];
        if (A.dim() != d || B.dim() != d)
            throw ValidationError("dual_product_oracle: dimension mismatch");
        T = A * T + B * S;
        S = A * S;
        if (!S.all_finite() || !T.all_finite())
            throw Overflow("dual_product_oracle: overflow at factor " + std::to_string(i + 1));
    }
    return {S, T};
}

} // namespace lyapjet
