#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lyapjet/engine.hpp"
#include "lyapjet/errors.hpp"
#include "lyapjet/linalg.hpp"

// Convergence read-outs over recorded trajectories. A series gets one of
// three verdicts from its tail (the last 10% of recorded points):
//   converged    every tail point within tol of the target
//   diverged     every tail point beyond `threshold` away from it
//   inconclusive anything in between
// The defaults (tol 1e-3, read at n ~ 1e4) are calibrated to the builtin
// ensembles, where the alignment gaps decay geometrically and sit far below
// tol by then; they are loose screens, not sharp tests.

namespace lyapjet {

enum class Verdict { converged, diverged, inconclusive };

inline const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::converged: return "converged";
        case Verdict::diverged: return "diverged";
        case Verdict::inconclusive: return "inconclusive";
    }
    return "?";
}

struct DiagnosticSeries {
    std::string name;
    std::vector<std::pair<long, double>> samples;  // (n, value)
    Verdict verdict = Verdict::inconclusive;
    double target = 0.0;
    double tol = 0.0;
    double threshold = 0.0;
    std::string detail;
};

namespace detail {

inline void apply_tail_verdict(DiagnosticSeries& s) {
    if (s.samples.empty()) {
        s.verdict = Verdict::inconclusive;
        s.detail = "no usable samples";
        return;
    }
    const size_t tail_len = std::max<size_t>(1, s.samples.size() / 10);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (size_t i = s.samples.size() - tail_len; i < s.samples.size(); ++i) {
        const double dist = std::abs(s.samples[i].second - s.target);
        lo = std::min(lo, dist);
        hi = std::max(hi, dist);
    }
    if (hi < s.tol)
        s.verdict = Verdict::converged;
    else if (lo > s.threshold)
        s.verdict = Verdict::diverged;
    else
        s.verdict = Verdict::inconclusive;
    s.detail = "tail of " + std::to_string(tail_len) + ": distance to target in [" +
               detail::fmt17(lo) + ", " + detail::fmt17(hi) + "]";
}

inline const TrajectoryRow::PerTracked& tracked_cell(const TrajectoryRecord& rec, size_t row,
                                                     int tracked_index) {
    const auto& tr = rec.rows[row].tracked;
    if (tracked_index < 0 || static_cast<size_t>(tracked_index) >= tr.size())
        throw NoTrackedVector("no tracked vector with index " + std::to_string(tracked_index));
    return tr[static_cast<size_t>(tracked_index)];
}

} // namespace detail

// delta(x_n, y_n) over the record; rows with phi = 0 carry no direction y_n
// and are skipped outright.
inline DiagnosticSeries alignment_curve(const TrajectoryRecord& rec, int tracked_index,
                                        double tol = 1e-3) {
    if (rec.rows.empty()) throw ValidationError("alignment_curve: empty record");
    DiagnosticSeries s;
    s.name = "alignment.delta_xy";
    s.target = 0.0;
    s.tol = tol;
    s.threshold = 10.0 * tol;
    for (size_t i = 0; i < rec.rows.size(); ++i) {
        const auto& pt = detail::tracked_cell(rec, i, tracked_index);
        if (!pt.phi_zero) s.samples.emplace_back(rec.rows[i].n, pt.delta_xy);
    }
    detail::apply_tail_verdict(s);
    return s;
}

// ||x_n - s.y_n|| for s = +/-1, the signed refinement of the alignment
// curve. Pass the sign of the xi mean (estimate it first).
inline DiagnosticSeries sign_alignment(const TrajectoryRecord& rec, int tracked_index, int xi_sign,
                                       double tol = 1e-3) {
    if (rec.rows.empty()) throw ValidationError("sign_alignment: empty record");
    if (xi_sign != 1 && xi_sign != -1)
        throw ValidationError("sign_alignment: xi_sign must be +1 or -1");
    DiagnosticSeries s;
    s.name = xi_sign > 0 ? "alignment.sign_gap_plus" : "alignment.sign_gap_minus";
    s.target = 0.0;
    s.tol = tol;
    s.threshold = 10.0 * tol;
    for (size_t i = 0; i < rec.rows.size(); ++i) {
        const auto& pt = detail::tracked_cell(rec, i, tracked_index);
        if (!pt.phi_zero)
            s.samples.emplace_back(rec.rows[i].n, xi_sign > 0 ? pt.sign_gap_plus : pt.sign_gap_minus);
    }
    detail::apply_tail_verdict(s);
    return s;
}

// sigma_2 / sigma_1 of the renormalized T block: how far T_n is from rank
// one, invariant under transposition and positive scaling.
inline double rank_one_ratio(const ProductState& st) {
    if (st.s_hat.dim() < 2) throw DimensionTooSmall("rank_one_ratio: needs dim >= 2");
    if (frobenius_norm(st.u) < zero_threshold(st.n))
        throw ZeroT("rank_one_ratio: T is zero at step " + std::to_string(st.n));
    const SvdResult s = svd(st.u);
    return s.sigma[1] / s.sigma[0];
}

struct ZeroTolPolicy {
    double scale = 1e-14;  // threshold(n) = scale * (1 + n), the engine's own rule
    double threshold(long n) const { return scale * (1.0 + static_cast<double>(n)); }
};

// Recorded steps at which the whole matrix T_n vanished. With a stride-1
// record and a sign-flipping ensemble this is exactly the zero set of the
// underlying +/-1 walk.
inline std::vector<long> zero_visits(const TrajectoryRecord& rec,
                                     const ZeroTolPolicy& policy = {}) {
    std::vector<long> visits;
    for (const TrajectoryRow& row : rec.rows)
        if (row.u_norm < policy.threshold(row.n)) visits.push_back(row.n);
    return visits;
}

} // namespace lyapjet
