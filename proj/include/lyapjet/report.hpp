#pragma once

#include <cmath>
#include <ostream>
#include <string>

#include <json.hpp>

#include "lyapjet/diagnostics.hpp"
#include "lyapjet/engine.hpp"
#include "lyapjet/ensemble.hpp"
#include "lyapjet/estimators.hpp"

// Serialization. CSV floats carry 17 significant digits (lossless for
// doubles); non-values (delta columns at phi = 0, the wedge column in
// dimension 1, the trace left side once S_hat is numerically singular) are
// written as empty cells. JSON goes through nlohmann with sorted keys, so
// identical runs produce identical bytes.

namespace lyapjet {

namespace detail {

inline std::string csv_cell(double x) {
    return std::isnan(x) ? std::string() : fmt17(x);
}

} // namespace detail

inline void write_trajectory_csv(const TrajectoryRecord& rec, std::ostream& os) {
    const size_t ntracked = rec.rows.empty() ? 0 : rec.rows.front().tracked.size();
    os << "n,log_norm_s,log_norm_wedge";
    for (size_t k = 0; k < ntracked; ++k) {
        const std::string s = std::to_string(k);
        os << ",log_norm_sx_" << s << ",phi_" << s << ",psi_" << s << ",delta_xy_" << s
           << ",sign_gap_plus_" << s << ",sign_gap_minus_" << s;
    }
    os << ",trace_cocycle,trace_running_sum\n";
    for (const TrajectoryRow& row : rec.rows) {
        os << row.n << ',' << detail::fmt17(row.log_norm_s) << ','
           << detail::csv_cell(row.log_norm_wedge);
        for (const auto& pt : row.tracked) {
            os << ',' << detail::fmt17(pt.log_norm_sx) << ',' << detail::fmt17(pt.phi) << ','
               << detail::fmt17(pt.psi) << ',' << detail::csv_cell(pt.delta_xy) << ','
               << detail::csv_cell(pt.sign_gap_plus) << ',' << detail::csv_cell(pt.sign_gap_minus);
        }
        os << ',' << detail::csv_cell(row.trace_cocycle) << ','
           << detail::fmt17(row.trace_running_sum) << '\n';
    }
}

inline void write_series_csv(const DiagnosticSeries& s, std::ostream& os) {
    os << "n,value\n";
    for (const auto& [n, v] : s.samples) os << n << ',' << detail::fmt17(v) << '\n';
}

inline nlohmann::json to_json(const XiEstimate& e) {
    nlohmann::json j{
        {"method", e.method},
        {"value", e.value},
        {"abs_value", e.abs_value},
        {"std_err", e.std_err},
        {"replicas", e.replicas},
        {"steps", e.steps},
        {"n_replicas", e.n_replicas},
        {"seed", e.seed},
        {"ensemble_digest", e.ensemble_digest},
        {"rejected_samples", e.rejected_samples},
    };
    if (e.half_value) j["half_value"] = *e.half_value;
    return j;
}

inline nlohmann::json to_json(const LyapunovEstimate& e) {
    nlohmann::json j{
        {"method", "lyapunov"},
        {"value", e.gamma},
        {"abs_value", std::abs(e.gamma)},
        {"std_err", e.std_err_gamma},
        {"replicas", e.replicas},
        {"steps", e.steps},
        {"n_replicas", e.n_replicas},
        {"seed", e.seed},
        {"ensemble_digest", e.ensemble_digest},
        {"rejected_samples", 0},
        {"gamma", e.gamma},
    };
    j["gamma2"] = e.gamma2 ? nlohmann::json(*e.gamma2) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const GammaEpsPoint& p) {
    return nlohmann::json{
        {"eps", p.eps},
        {"ratio", p.ratio},
        {"std_err", p.std_err},
        {"replicas", p.replicas},
    };
}

inline nlohmann::json to_json(const DiagnosticSeries& s) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& [n, v] : s.samples) samples.push_back({n, v});
    return nlohmann::json{
        {"name", s.name},         {"verdict", verdict_name(s.verdict)},
        {"target", s.target},     {"tol", s.tol},
        {"threshold", s.threshold}, {"detail", s.detail},
        {"samples", samples},
    };
}

inline nlohmann::json to_json(const FeReport& r) {
    return nlohmann::json{
        {"exact", r.exact},
        {"log_plus_norm_a", {{"value", r.fe1}, {"ok", r.fe1_ok}}},
        {"norm_b_a_inv", {{"value", r.fe2}, {"ok", r.fe2_ok}}},
        {"log_plus_norm_a_inv", {{"value", r.fe3}, {"ok", r.fe3_ok}}},
        {"exp_tau_ell_a", {{"value", r.fe4}, {"ok", r.fe4_ok}}},
        {"tau", r.tau},
        {"n_probe", r.n_probe},
        {"note", r.note},
    };
}

} // namespace lyapjet
