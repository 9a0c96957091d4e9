#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lyapjet/errors.hpp"
#include "lyapjet/linalg.hpp"
#include "lyapjet/rng.hpp"

// Distributions over pairs (A, B): finite atom lists (the usual case, and
// the only kind a config file can describe) plus an escape hatch for
// programmatic samplers. Validation guarantees that every A an engine will
// ever see is invertible.

namespace lyapjet {

enum class EnsembleKind {
    finite_atoms,
    scalar,
    signed_pair,
    diag_rotation,
    pure_rotation,
    positive_bernoulli,
    custom_parametric,
};

inline const char* kind_name(EnsembleKind k) {
    switch (k) {
        case EnsembleKind::finite_atoms: return "finite_atoms";
        case EnsembleKind::scalar: return "scalar";
        case EnsembleKind::signed_pair: return "signed_pair";
        case EnsembleKind::diag_rotation: return "diag_rotation";
        case EnsembleKind::pure_rotation: return "pure_rotation";
        case EnsembleKind::positive_bernoulli: return "positive_bernoulli";
        case EnsembleKind::custom_parametric: return "custom_parametric";
    }
    return "?";
}

struct Atom {
    double prob;
    Mat A;
    Mat B;
};

using PairSampler = std::function<std::pair<Mat, Mat>(RngStream&)>;

namespace detail {
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}
} // namespace detail

class EnsembleSpec {
public:
    static EnsembleSpec finite(int dim, std::vector<Atom> atoms,
                               EnsembleKind label = EnsembleKind::finite_atoms,
                               std::map<std::string, double> params = {}) {
        if (dim < 1) throw ValidationError("ensemble: dim must be >= 1");
        if (atoms.empty()) throw ValidationError("ensemble: no atoms");
        double total = 0.0;
        for (size_t i = 0; i < atoms.size(); ++i) {
            const Atom& at = atoms[i];
            const std::string tag = "atom " + std::to_string(i);
            if (!(at.prob > 0.0)) throw ValidationError(tag + ": prob must be positive");
            if (at.A.dim() != dim || at.B.dim() != dim)
                throw ValidationError(tag + ": matrix dimension differs from ensemble dim");
            total += at.prob;
            const SvdResult s = svd(at.A);
            if (s.sigma[0] == 0.0 || s.sigma[dim - 1] / s.sigma[0] < kSingularRatio)
                throw ValidationError(tag + ": A fails the invertibility threshold");
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw ValidationError("ensemble: atom probabilities sum to " + detail::fmt17(total) + ", not 1");
        EnsembleSpec s;
        s.dim_ = dim;
        s.kind_ = label;
        s.atoms_ = std::move(atoms);
        s.params_ = std::move(params);
        return s;
    }

    static EnsembleSpec parametric(int dim, PairSampler sampler, std::string name,
                                   std::map<std::string, double> params = {}) {
        if (dim < 1) throw ValidationError("ensemble: dim must be >= 1");
        if (!sampler) throw ValidationError("ensemble: null sampler");
        EnsembleSpec s;
        s.dim_ = dim;
        s.kind_ = EnsembleKind::custom_parametric;
        s.sampler_ = std::move(sampler);
        s.name_ = std::move(name);
        s.params_ = std::move(params);
        return s;
    }

    int dim() const { return dim_; }
    EnsembleKind kind() const { return kind_; }
    bool is_finite() const { return kind_ != EnsembleKind::custom_parametric; }
    const std::vector<Atom>& atoms() const { return atoms_; }
    const std::map<std::string, double>& params() const { return params_; }
    double param_or(const std::string& key, double fallback) const {
        auto it = params_.find(key);
        return it == params_.end() ? fallback : it->second;
    }

    // inverse-CDF draw; exactly one uniform per sample
    int sample_index(RngStream& rng) const {
        if (!is_finite()) throw Error("sample_index: parametric ensemble has no atom list");
        const double u = rng.uniform();
        double cum = 0.0;
        for (size_t i = 0; i + 1 < atoms_.size(); ++i) {
            cum += atoms_[i].prob;
            if (u < cum) return static_cast<int>(i);
        }
        return static_cast<int>(atoms_.size()) - 1;
    }

    std::pair<Mat, Mat> sample_pair(RngStream& rng) const {
        if (is_finite()) {
            const Atom& at = atoms_[static_cast<size_t>(sample_index(rng))];
            return {at.A, at.B};
        }
        std::pair<Mat, Mat> p = sampler_(rng);
        if (p.first.dim() != dim_ || p.second.dim() != dim_)
            throw ValidationError("sampled pair has wrong dimension");
        const SvdResult s = svd(p.first);
        if (s.sigma[0] == 0.0 || s.sigma[dim_ - 1] / s.sigma[0] < kSingularRatio)
            throw ValidationError("sampled A fails the invertibility threshold");
        return p;
    }

    // same atoms, B replaced by B + alpha.A
    EnsembleSpec with_shifted_b(double alpha) const {
        if (!is_finite()) throw Error("with_shifted_b: finite ensembles only");
        std::vector<Atom> shifted = atoms_;
        for (Atom& at : shifted) at.B = at.B + alpha * at.A;
        return finite(dim_, std::move(shifted), EnsembleKind::finite_atoms, params_);
    }

    // same atoms, A replaced by A + eps.B (for difference-quotient runs);
    // every perturbed atom must stay invertible
    EnsembleSpec with_perturbed_a(double eps) const {
        if (!is_finite()) throw Error("with_perturbed_a: finite ensembles only");
        std::vector<Atom> shifted = atoms_;
        for (size_t i = 0; i < shifted.size(); ++i) {
            shifted[i].A = shifted[i].A + eps * shifted[i].B;
            const SvdResult s = svd(shifted[i].A);
            if (s.sigma[0] == 0.0 || s.sigma[dim_ - 1] / s.sigma[0] < kSingularRatio)
                throw SingularPerturbedAtom("atom " + std::to_string(i) +
                                            ": A + eps.B singular at eps = " + detail::fmt17(eps));
        }
        return finite(dim_, std::move(shifted), EnsembleKind::finite_atoms, params_);
    }

    // stable fingerprint of everything that defines the distribution
    std::string digest() const {
        std::string s = std::string(kind_name(kind_)) + "|d=" + std::to_string(dim_);
        if (!name_.empty()) s += "|name=" + name_;
        for (const Atom& at : atoms_) {
            s += "|p=" + detail::fmt17(at.prob) + ";A=";
            for (double x : at.A.data()) s += detail::fmt17(x) + ",";
            s += ";B=";
            for (double x : at.B.data()) s += detail::fmt17(x) + ",";
        }
        for (const auto& [k, v] : params_) s += "|" + k + "=" + detail::fmt17(v);
        char buf[20];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(detail::fnv1a64(s)));
        return buf;
    }

private:
    EnsembleSpec() = default;
    int dim_ = 0;
    EnsembleKind kind_ = EnsembleKind::finite_atoms;
    std::vector<Atom> atoms_;
    std::map<std::string, double> params_;
    PairSampler sampler_;
    std::string name_;
};

// --- builtin families ---

namespace detail {

inline void check_param_keys(const std::map<std::string, double>& params,
                             std::initializer_list<const char*> allowed) {
    for (const auto& [k, v] : params) {
        (void)v;
        if (k == "tau") continue;  // consumed by the moment-condition probe, valid everywhere
        bool ok = false;
        for (const char* a : allowed)
            if (k == a) ok = true;
        if (!ok) throw BadParams("unknown param '" + k + "' for this builtin");
    }
}

} // namespace detail

// Families used throughout the tests and docs:
//   scalar_iid         d=1, a fixed, b equally likely one of two values
//   signed_pair        (P, P) or (Q, -Q) with prob 1/2 each
//   diag_rotation      deterministic A = diag(alpha, beta), B = quarter turn
//   pure_rotation      deterministic A = rotation(theta), B = I
//   positive_bernoulli two positive atoms for A; independently B = +/-F with
//                      P(+) = p_plus (0.75 unless overridden; an equal coin
//                      would force the target mean to 0 by symmetry)
inline EnsembleSpec builtin(const std::string& name,
                            std::map<std::string, double> params = {}) {
    using detail::check_param_keys;
    if (name == "scalar_iid") {
        check_param_keys(params, {"a", "b1", "b2"});
        const double a = params.count("a") ? params.at("a") : 2.0;
        const double b1 = params.count("b1") ? params.at("b1") : 1.0;
        const double b2 = params.count("b2") ? params.at("b2") : 3.0;
        if (a == 0.0) throw BadParams("scalar_iid: a must be nonzero");
        params["a"] = a, params["b1"] = b1, params["b2"] = b2;
        std::vector<Atom> atoms = {
            {0.5, Mat::from_rows({{a}}), Mat::from_rows({{b1}})},
            {0.5, Mat::from_rows({{a}}), Mat::from_rows({{b2}})},
        };
        return EnsembleSpec::finite(1, std::move(atoms), EnsembleKind::scalar, std::move(params));
    }
    if (name == "signed_pair") {
        check_param_keys(params, {});
        const Mat P = Mat::from_rows({{2, 1}, {1, 1}});
        const Mat Q = Mat::from_rows({{1, 1}, {1, 2}});
        std::vector<Atom> atoms = {
            {0.5, P, P},
            {0.5, Q, -1.0 * Q},
        };
        return EnsembleSpec::finite(2, std::move(atoms), EnsembleKind::signed_pair, std::move(params));
    }
    if (name == "diag_rotation") {
        check_param_keys(params, {"alpha", "beta"});
        const double alpha = params.count("alpha") ? params.at("alpha") : 2.0;
        const double beta = params.count("beta") ? params.at("beta") : 0.5;
        if (!(alpha > beta && beta > 0.0)) throw BadParams("diag_rotation: need alpha > beta > 0");
        params["alpha"] = alpha, params["beta"] = beta;
        std::vector<Atom> atoms = {
            {1.0, Mat::from_rows({{alpha, 0}, {0, beta}}), Mat::from_rows({{0, -1}, {1, 0}})},
        };
        return EnsembleSpec::finite(2, std::move(atoms), EnsembleKind::diag_rotation, std::move(params));
    }
    if (name == "pure_rotation") {
        check_param_keys(params, {"theta"});
        const double theta = params.count("theta") ? params.at("theta") : 1.0;
        params["theta"] = theta;
        std::vector<Atom> atoms = {{1.0, Mat::rotation(theta), Mat::identity(2)}};
        return EnsembleSpec::finite(2, std::move(atoms), EnsembleKind::pure_rotation, std::move(params));
    }
    if (name == "positive_bernoulli") {
        check_param_keys(params, {"p_plus"});
        const double p = params.count("p_plus") ? params.at("p_plus") : 0.75;
        if (!(p > 0.0 && p < 1.0)) throw BadParams("positive_bernoulli: need 0 < p_plus < 1");
        params["p_plus"] = p;
        const Mat P1 = Mat::from_rows({{2, 1}, {1, 1}});
        const Mat P2 = Mat::from_rows({{1, 1}, {1, 2}});
        const Mat F = Mat::from_rows({{1.0, 0.5}, {0.5, 1.0}});
        std::vector<Atom> atoms = {
            {0.5 * p, P1, F},
            {0.5 * (1.0 - p), P1, -1.0 * F},
            {0.5 * p, P2, F},
            {0.5 * (1.0 - p), P2, -1.0 * F},
        };
        return EnsembleSpec::finite(2, std::move(atoms), EnsembleKind::positive_bernoulli, std::move(params));
    }
    throw UnknownBuiltin("unknown builtin '" + name + "'");
}

// --- config parsing ---

namespace detail {

inline Mat mat_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a nested array");
    std::vector<std::vector<double>> rows;
    for (const auto& row : j) {
        if (!row.is_array()) throw ValidationError(where + ": expected a nested array");
        std::vector<double> r;
        for (const auto& x : row) {
            if (!x.is_number()) throw ValidationError(where + ": matrix entries must be numbers");
            r.push_back(x.get<double>());
        }
        rows.push_back(std::move(r));
    }
    try {
        return Mat::from_rows(rows);
    } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
    }
}

inline std::map<std::string, double> params_from_json(const nlohmann::json& j) {
    std::map<std::string, double> params;
    if (j.contains("params")) {
        if (!j.at("params").is_object()) throw ValidationError("params: expected an object");
        for (const auto& [k, v] : j.at("params").items()) {
            if (!v.is_number()) throw ValidationError("params." + k + ": expected a number");
            params[k] = v.get<double>();
        }
    }
    return params;
}

} // namespace detail

inline EnsembleSpec parse_ensemble_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("config root must be an object");
    std::map<std::string, double> params = detail::params_from_json(j);

    if (j.contains("atoms")) {
        const auto& ja = j.at("atoms");
        if (!ja.is_array() || ja.empty()) throw ValidationError("atoms: expected a non-empty array");
        std::vector<Atom> atoms;
        for (size_t i = 0; i < ja.size(); ++i) {
            const auto& jat = ja[i];
            const std::string tag = "atom " + std::to_string(i);
            if (!jat.is_object() || !jat.contains("prob") || !jat.contains("A") || !jat.contains("B"))
                throw ValidationError(tag + ": needs prob, A and B");
            if (!jat.at("prob").is_number()) throw ValidationError(tag + ": prob must be a number");
            atoms.push_back({jat.at("prob").get<double>(),
                             detail::mat_from_json(jat.at("A"), tag + ".A"),
                             detail::mat_from_json(jat.at("B"), tag + ".B")});
        }
        int dim = atoms.front().A.dim();
        if (j.contains("dim")) {
            if (!j.at("dim").is_number_integer()) throw ValidationError("dim: expected an integer");
            dim = j.at("dim").get<int>();
        }
        EnsembleKind label = EnsembleKind::finite_atoms;
        if (j.contains("kind")) {
            const std::string ks = j.at("kind").get<std::string>();
            bool found = false;
            for (EnsembleKind k : {EnsembleKind::finite_atoms, EnsembleKind::scalar,
                                   EnsembleKind::signed_pair, EnsembleKind::diag_rotation,
                                   EnsembleKind::pure_rotation, EnsembleKind::positive_bernoulli})
                if (ks == kind_name(k)) label = k, found = true;
            if (!found) throw ValidationError("kind '" + ks + "' cannot label an atom list");
        }
        return EnsembleSpec::finite(dim, std::move(atoms), label, std::move(params));
    }

    if (!j.contains("kind")) throw ValidationError("config needs either atoms or a builtin kind");
    const std::string ks = j.at("kind").get<std::string>();
    if (ks == "finite_atoms") throw ValidationError("kind finite_atoms requires an atoms array");
    if (ks == "custom_parametric")
        throw ValidationError("custom_parametric ensembles can only be constructed programmatically");
    EnsembleSpec spec = builtin(ks == "scalar" ? "scalar_iid" : ks, std::move(params));
    if (j.contains("dim") && j.at("dim").get<int>() != spec.dim())
        throw ValidationError("dim does not match the builtin's dimension");
    return spec;
}

inline EnsembleSpec parse_ensemble(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_ensemble_json(j);
}

// --- moment conditions ---

// The four integrability conditions a pair distribution has to satisfy
// before any of the limit statements apply:
//   fe1 = E[log+ ||A||]        fe2 = E[||B.A^-1||]
//   fe3 = E[log+ ||A^-1||]     fe4 = E[exp(tau.l(A))],
// with l(M) = max(log+ ||M||, log+ ||M^-1||). On finite atom lists all four
// are plain weighted sums (exact = true, always finite). For parametric
// samplers they are Monte Carlo means over probes of size n, 2n and 4n; a
// mean that keeps growing across the doublings flags that condition.
struct FeReport {
    bool exact = false;
    double fe1 = 0.0, fe2 = 0.0, fe3 = 0.0, fe4 = 0.0;
    double tau = 1.0;
    bool fe1_ok = false, fe2_ok = false, fe3_ok = false, fe4_ok = false;
    long n_probe = 0;
    std::string note;
};

namespace detail {

struct FeSample {
    double f1, f2, f3, f4;
};

inline FeSample fe_sample(const Mat& A, const Mat& B, double tau) {
    const SvdResult s = svd(A);
    const double na = s.sigma[0];
    const double nainv = 1.0 / s.sigma[A.dim() - 1];
    const double lp_a = std::max(0.0, std::log(na));
    const double lp_ainv = std::max(0.0, std::log(nainv));
    FeSample r{};
    r.f1 = lp_a;
    r.f2 = spectral_norm(B * invert(A));
    r.f3 = lp_ainv;
    r.f4 = std::exp(tau * std::max(lp_a, lp_ainv));
    return r;
}

} // namespace detail

inline FeReport validate_fe(const EnsembleSpec& spec, long n_probe, RngStream& rng) {
    FeReport rep;
    rep.tau = spec.param_or("tau", 1.0);
    if (spec.is_finite()) {
        rep.exact = true;
        for (const Atom& at : spec.atoms()) {
            const detail::FeSample s = detail::fe_sample(at.A, at.B, rep.tau);
            rep.fe1 += at.prob * s.f1;
            rep.fe2 += at.prob * s.f2;
            rep.fe3 += at.prob * s.f3;
            rep.fe4 += at.prob * s.f4;
        }
        rep.fe1_ok = rep.fe2_ok = rep.fe3_ok = rep.fe4_ok = true;
        rep.note = "finite atom support: weighted sums are exact and finite";
        return rep;
    }

    if (n_probe < 8) throw ValidationError("validate_fe: n_probe too small");
    rep.n_probe = n_probe;
    double m1[3] = {0, 0, 0}, m2[3] = {0, 0, 0}, m3[3] = {0, 0, 0}, m4[3] = {0, 0, 0};
    double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    long done = 0;
    for (int stage = 0; stage < 3; ++stage) {
        const long target = n_probe << stage;
        for (; done < target; ++done) {
            auto [A, B] = spec.sample_pair(rng);
            const detail::FeSample s = detail::fe_sample(A, B, rep.tau);
            s1 += s.f1, s2 += s.f2, s3 += s.f3, s4 += s.f4;
        }
        const double inv = 1.0 / static_cast<double>(done);
        m1[stage] = s1 * inv, m2[stage] = s2 * inv, m3[stage] = s3 * inv, m4[stage] = s4 * inv;
    }
    // diverging = the empirical mean grows materially across both doublings
    auto stable = [](const double m[3]) {
        const double slack = 1e-9;
        return !(m[1] > 1.25 * m[0] + slack && m[2] > 1.25 * m[1] + slack);
    };
    rep.fe1 = m1[2], rep.fe2 = m2[2], rep.fe3 = m3[2], rep.fe4 = m4[2];
    rep.fe1_ok = stable(m1), rep.fe2_ok = stable(m2), rep.fe3_ok = stable(m3), rep.fe4_ok = stable(m4);
    rep.note = "Monte Carlo probe; _ok flags mean the running mean stopped growing, not a proof";
    return rep;
}

} // namespace lyapjet
