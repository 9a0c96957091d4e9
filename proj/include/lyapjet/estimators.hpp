#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lyapjet/engine.hpp"
#include "lyapjet/ensemble.hpp"
#include "lyapjet/errors.hpp"
#include "lyapjet/linalg.hpp"
#include "lyapjet/rng.hpp"

// Monte Carlo estimators. Every routine derives its streams from the user
// seed and a purpose tag, so independent estimators never share draws and
// any single replica can be reproduced in isolation.
//
// The target quantity xi is the mean one-step ratio <y, Bx>/<y, Ax> under
// stationary directions x and y for the forward and transposed products.
// Four routes measure it:
//   psi_route      psi_n / n, signed
//   phi_route      phi_n / n, magnitude only
//   integral_route independent triples (direction, transposed direction, pair)
//   orbit_route    one long orbit split at m, compared through a tail window
// plus a difference-quotient route for the derivative of the top exponent.

namespace lyapjet {

namespace detail {

struct MeanErr {
    double mean;
    double std_err;
};

inline MeanErr mean_err(const std::vector<double>& xs) {
    const auto k = static_cast<double>(xs.size());
    double m = 0.0;
    for (double x : xs) m += x;
    m /= k;
    if (xs.size() < 2) return {m, 0.0};
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    v = std::max(0.0, v / (k - 1.0));
    return {m, std::sqrt(v / k)};
}

// cosmetic: make the largest-magnitude entry positive so reported
// directions do not flip sign between runs that agree projectively
inline Vec canonical_sign(Vec v) {
    int arg = 0;
    for (int i = 1; i < v.dim(); ++i)
        if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    if (v[arg] < 0.0)
        for (int i = 0; i < v.dim(); ++i) v[i] = -v[i];
    return v;
}

// Replica loops are embarrassingly parallel: each index owns its RNG stream
// and writes only its own result slot, so the outcome is identical to the
// serial loop no matter how the work is scheduled. The first exception wins
// and stops the queue.
template <typename Fn>
inline void for_indices(long count, Fn&& fn) {
    const unsigned hw = std::thread::hardware_concurrency();
    const long workers = std::max<long>(1, std::min<long>(count, hw == 0 ? 4 : hw));
    if (workers == 1) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (long w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const long i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(err_mu);
                    if (!err) err = std::current_exception();
                    next.store(count);
                    return;
                }
            }
        });
    for (std::thread& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

} // namespace detail

// --- Lyapunov exponents ---

struct LyapunovEstimate {
    double gamma = 0.0;
    std::optional<double> gamma2;  // second exponent; absent when dim == 1
    double std_err_gamma = 0.0;
    long steps = 0;
    long n_replicas = 0;
    std::uint64_t seed = 0;
    std::vector<double> replicas;
    std::string ensemble_digest;
};

inline LyapunovEstimate estimate_lyapunov(const EnsembleSpec& spec, long steps, long replicas,
                                          std::uint64_t seed) {
    if (steps < 1) throw ValidationError("estimate_lyapunov: steps must be >= 1");
    if (replicas < 2) throw ValidationError("estimate_lyapunov: need at least 2 replicas");
    std::vector<double> g(static_cast<size_t>(replicas));
    std::vector<double> g2(spec.dim() >= 2 ? static_cast<size_t>(replicas) : 0u);
    detail::for_indices(replicas, [&](long r) {
        RngStream rng = stream_for(seed, "lyapunov", static_cast<std::uint64_t>(r));
        const TrajectoryRecord rec = run_trajectory(spec, steps, rng, {}, steps);
        const double gr = rec.final_state.log_norm_s / static_cast<double>(steps);
        g[static_cast<size_t>(r)] = gr;
        if (!g2.empty())
            g2[static_cast<size_t>(r)] = rec.final_log_norm_wedge / static_cast<double>(steps) - gr;
    });
    const auto [mean, se] = detail::mean_err(g);
    LyapunovEstimate est;
    est.gamma = mean;
    est.std_err_gamma = se;
    if (!g2.empty()) est.gamma2 = detail::mean_err(g2).mean;
    est.steps = steps;
    est.n_replicas = replicas;
    est.seed = seed;
    est.replicas = std::move(g);
    est.ensemble_digest = spec.digest();
    return est;
}

// --- stationary directions ---

struct Direction {
    Vec unit;
    long burn_in = 0;
    // projective distance between the last two burn-in iterates; stays O(1)
    // on ensembles whose direction never settles (e.g. a pure permutation),
    // so treat anything above ~0.1 as "did not converge"
    double step_delta = 0.0;
};

inline Direction sample_direction_nu(const EnsembleSpec& spec, long burn_in, RngStream& rng,
                                     const Vec& x0 = Vec{}) {
    if (burn_in < 1) throw ValidationError("sample_direction_nu: burn_in must be >= 1");
    Vec v = x0.dim() == 0 ? normalized(Vec::ones(spec.dim())) : normalized(x0);
    Vec prev = v;
    for (long k = 0; k < burn_in; ++k) {
        prev = v;
        if (spec.is_finite()) {
            // skip the pair copy; only A matters here
            const Atom& at = spec.atoms()[static_cast<size_t>(spec.sample_index(rng))];
            v = normalized(at.A * v);
        } else {
            const auto [A, B] = spec.sample_pair(rng);
            v = normalized(A * v);
        }
    }
    return {detail::canonical_sign(v), burn_in, delta(prev, v)};
}

// Stationary direction of the transposed product: factors append on the
// inner end (M <- M.A^T), so the whole matrix is carried, renormalized by
// a scalar each step. Fine for burn-ins up to ~1e3; past that the columns
// of M all align and the start vector no longer matters anyway.
inline Direction sample_direction_nu_star(const EnsembleSpec& spec, long burn_in, RngStream& rng,
                                          const Vec& x0 = Vec{}) {
    if (burn_in < 1) throw ValidationError("sample_direction_nu_star: burn_in must be >= 1");
    const Vec v0 = x0.dim() == 0 ? normalized(Vec::ones(spec.dim())) : normalized(x0);
    std::vector<Mat> t_atoms;
    if (spec.is_finite())
        for (const Atom& at : spec.atoms()) t_atoms.push_back(transpose(at.A));
    Mat m = Mat::identity(spec.dim());
    Vec v = v0;
    Vec prev = v0;
    for (long k = 0; k < burn_in; ++k) {
        if (spec.is_finite()) {
            m = m * t_atoms[static_cast<size_t>(spec.sample_index(rng))];
        } else {
            const auto [A, B] = spec.sample_pair(rng);
            m = m * transpose(A);
        }
        const double f = frobenius_norm(m);
        if (f == 0.0 || !m.all_finite()) throw Overflow("sample_direction_nu_star: product degenerated");
        m = (1.0 / f) * m;
        prev = v;
        v = normalized(m * v0);
    }
    return {detail::canonical_sign(v), burn_in, delta(prev, v)};
}

// --- xi estimators ---

struct XiEstimate {
    std::string method;
    double value = 0.0;
    double abs_value = 0.0;
    double std_err = 0.0;
    std::vector<double> replicas;
    long steps = 0;
    long n_replicas = 0;
    std::uint64_t seed = 0;
    long rejected_samples = 0;
    // same estimator at half the steps; drift beyond a few std errs means
    // the trajectory average has not settled yet
    std::optional<double> half_value;
    std::string ensemble_digest;
};

namespace detail {

inline XiEstimate finish_xi(std::string method, std::vector<double> values, long steps,
                            std::uint64_t seed, long rejected, const EnsembleSpec& spec) {
    const MeanErr me = mean_err(values);
    XiEstimate est;
    est.method = std::move(method);
    est.value = me.mean;
    est.abs_value = std::abs(me.mean);
    est.std_err = me.std_err;
    est.n_replicas = static_cast<long>(values.size());
    est.replicas = std::move(values);
    est.steps = steps;
    est.seed = seed;
    est.rejected_samples = rejected;
    est.ensemble_digest = spec.digest();
    return est;
}

} // namespace detail

// Average of <z~, Bz>/<z~, Az> over independent triples. Samples whose
// denominator is degenerate (|<z~, Az>| < 1e-12 ||A||) are discarded and
// counted; more than 1% of them aborts the run, since mass near the
// degenerate set means the hypotheses behind the formula are in doubt.
inline XiEstimate estimate_xi_integral(const EnsembleSpec& spec, long n_samples, long burn_in,
                                       std::uint64_t seed) {
    if (n_samples < 16) throw ValidationError("estimate_xi_integral: need at least 16 samples");
    std::vector<double> atom_norms;
    if (spec.is_finite())
        for (const Atom& at : spec.atoms()) atom_norms.push_back(spectral_norm(at.A));

    std::vector<double> slot(static_cast<size_t>(n_samples));
    std::vector<char> kept(static_cast<size_t>(n_samples), 0);
    detail::for_indices(n_samples, [&](long k) {
        RngStream rng_z = stream_for(seed, "xi.nu", static_cast<std::uint64_t>(k));
        RngStream rng_zt = stream_for(seed, "xi.nustar", static_cast<std::uint64_t>(k));
        RngStream rng_mu = stream_for(seed, "xi.mu", static_cast<std::uint64_t>(k));
        const Vec z = sample_direction_nu(spec, burn_in, rng_z).unit;
        const Vec zt = sample_direction_nu_star(spec, burn_in, rng_zt).unit;

        double norm_a;
        const Mat *A, *B;
        std::pair<Mat, Mat> drawn;
        if (spec.is_finite()) {
            const int idx = spec.sample_index(rng_mu);
            A = &spec.atoms()[static_cast<size_t>(idx)].A;
            B = &spec.atoms()[static_cast<size_t>(idx)].B;
            norm_a = atom_norms[static_cast<size_t>(idx)];
        } else {
            drawn = spec.sample_pair(rng_mu);
            A = &drawn.first;
            B = &drawn.second;
            norm_a = spectral_norm(*A);
        }
        const double denom = dot(zt, *A * z);
        if (std::abs(denom) < 1e-12 * norm_a) return;
        slot[static_cast<size_t>(k)] = dot(zt, *B * z) / denom;
        kept[static_cast<size_t>(k)] = 1;
    });
    std::vector<double> ratios;
    ratios.reserve(static_cast<size_t>(n_samples));
    for (long k = 0; k < n_samples; ++k)
        if (kept[static_cast<size_t>(k)]) ratios.push_back(slot[static_cast<size_t>(k)]);
    const long rejected = n_samples - static_cast<long>(ratios.size());
    if (rejected > n_samples / 100)
        throw HypothesisSuspect("estimate_xi_integral: " + std::to_string(rejected) + " of " +
                                std::to_string(n_samples) +
                                " samples had a degenerate denominator (> 1%)");

    // per-sample mean and std err; the replica list is 16 batch means so
    // reports stay small
    const detail::MeanErr me = detail::mean_err(ratios);
    const long n_acc = static_cast<long>(ratios.size());
    const long batches = std::min<long>(16, n_acc);
    std::vector<double> batch_means;
    for (long b = 0; b < batches; ++b) {
        const long lo = b * n_acc / batches, hi = (b + 1) * n_acc / batches;
        double s = 0.0;
        for (long i = lo; i < hi; ++i) s += ratios[static_cast<size_t>(i)];
        batch_means.push_back(s / static_cast<double>(hi - lo));
    }
    XiEstimate est = detail::finish_xi("integral_route", std::move(batch_means), n_samples, seed,
                                       rejected, spec);
    est.value = me.mean;
    est.abs_value = std::abs(me.mean);
    est.std_err = me.std_err;
    return est;
}

namespace detail {

inline XiEstimate tracked_route(const EnsembleSpec& spec, long steps, long replicas,
                                std::uint64_t seed, const Vec& x0, const char* tag,
                                bool use_phi) {
    if (steps < 2) throw ValidationError("tracked xi route: steps must be >= 2");
    if (replicas < 2) throw ValidationError("tracked xi route: need at least 2 replicas");
    const Vec start = x0.dim() == 0 ? normalized(Vec::ones(spec.dim())) : normalized(x0);
    std::vector<double> values(static_cast<size_t>(replicas)), halves(static_cast<size_t>(replicas));
    detail::for_indices(replicas, [&](long r) {
        RngStream rng = stream_for(seed, tag, static_cast<std::uint64_t>(r));
        const TrajectoryRecord rec = run_trajectory(spec, steps, rng, {start}, steps / 2);
        const TrajectoryRow& half = rec.rows.front();
        const TrajectoryRow& last = rec.rows.back();
        const auto pick = [use_phi](const TrajectoryRow::PerTracked& pt) {
            return use_phi ? pt.phi : pt.psi;
        };
        values[static_cast<size_t>(r)] = pick(last.tracked[0]) / static_cast<double>(last.n);
        halves[static_cast<size_t>(r)] = pick(half.tracked[0]) / static_cast<double>(half.n);
    });
    XiEstimate est = finish_xi(use_phi ? "phi_route" : "psi_route", std::move(values), steps, seed,
                               0, spec);
    est.half_value = mean_err(halves).mean;
    return est;
}

} // namespace detail

// psi_n / n, the signed estimator.
inline XiEstimate estimate_xi_psi(const EnsembleSpec& spec, long steps, long replicas,
                                  std::uint64_t seed, const Vec& x0 = Vec{}) {
    return detail::tracked_route(spec, steps, replicas, seed, x0, "xi.psi", false);
}

// phi_n / n. Converges to |xi mean|; the sign is not recoverable from this
// route, so value and abs_value coincide here.
inline XiEstimate estimate_abs_xi_phi(const EnsembleSpec& spec, long steps, long replicas,
                                      std::uint64_t seed, const Vec& x0 = Vec{}) {
    return detail::tracked_route(spec, steps, replicas, seed, x0, "xi.phi", true);
}

// One orbit of length m + tail per replica: the first m factors build
// (S_m, T_m) around a tracked z, the remaining tail factors estimate the
// stationary transposed direction of the shifted sequence, and the replica
// value is <z~, T_m z> / (m <z~, S_m z>). Splitting a single stream at m is
// what makes z~ belong to the *shifted* orbit.
inline XiEstimate xi_orbit_average(const EnsembleSpec& spec, long m, long tail, std::uint64_t seed,
                                   const std::optional<Vec>& x0 = {},
                                   const std::optional<Vec>& y0 = {}, long replicas = 64) {
    if (m < 1) throw ValidationError("xi_orbit_average: m must be >= 1");
    if (tail < 1) throw ValidationError("xi_orbit_average: tail must be >= 1");
    if (replicas < 2) throw ValidationError("xi_orbit_average: need at least 2 replicas");
    const Vec ytail = y0 ? normalized(*y0) : normalized(Vec::ones(spec.dim()));

    std::vector<double> slot(static_cast<size_t>(replicas));
    std::vector<char> kept(static_cast<size_t>(replicas), 0);
    detail::for_indices(replicas, [&](long r) {
        Vec z;
        if (x0) {
            z = normalized(*x0);
        } else {
            RngStream zrng = stream_for(seed, "xi.orbit.z", static_cast<std::uint64_t>(r));
            z = sample_direction_nu(spec, 200, zrng).unit;
        }
        RngStream rng = stream_for(seed, "xi.orbit", static_cast<std::uint64_t>(r));
        const TrajectoryRecord rec = run_trajectory(spec, m, rng, {z}, m);
        const TrackedVector& tv = rec.final_state.tracked[0];

        Mat mt = Mat::identity(spec.dim());
        for (long k = 0; k < tail; ++k) {
            const auto [A, B] = spec.sample_pair(rng);
            mt = mt * transpose(A);
            const double f = frobenius_norm(mt);
            if (f == 0.0 || !mt.all_finite()) throw Overflow("xi_orbit_average: tail product degenerated");
            mt = (1.0 / f) * mt;
        }
        const Vec zt = normalized(mt * ytail);

        const double denom = dot(zt, tv.sx_hat);
        if (std::abs(denom) < 1e-12) return;
        double val = 0.0;
        if (tv.phi > 0.0) val = tv.phi * dot(zt, *tv.y_hat) / denom / static_cast<double>(m);
        slot[static_cast<size_t>(r)] = val;
        kept[static_cast<size_t>(r)] = 1;
    });
    std::vector<double> values;
    values.reserve(static_cast<size_t>(replicas));
    for (long r = 0; r < replicas; ++r)
        if (kept[static_cast<size_t>(r)]) values.push_back(slot[static_cast<size_t>(r)]);
    const long rejected = replicas - static_cast<long>(values.size());
    if (values.size() < 2 || rejected * 100 > replicas)
        throw HypothesisSuspect("xi_orbit_average: " + std::to_string(rejected) + " of " +
                                std::to_string(replicas) + " replicas had degenerate alignment");
    XiEstimate est = detail::finish_xi("orbit_route", std::move(values), m, seed, rejected, spec);
    return est;
}

// --- derivative of the top exponent ---

struct GammaEpsPoint {
    double eps = 0.0;
    double ratio = 0.0;  // (gamma(eps) - gamma(0)) / eps
    double std_err = 0.0;
    std::vector<double> replicas;
};

namespace detail {

// top-exponent estimate along one replayed stream, with A replaced by
// A + eps.B (eps = 0 gives the base run)
inline double gamma_along_stream(const EnsembleSpec& spec, double eps, long steps, RngStream rng) {
    const int d = spec.dim();
    std::vector<Mat> perturbed;
    if (spec.is_finite())
        for (const Atom& at : spec.atoms()) perturbed.push_back(at.A + eps * at.B);
    Mat s_hat = Mat::identity(d);
    double log_norm = 0.0;
    for (long n = 1; n <= steps; ++n) {
        Mat p;
        if (spec.is_finite()) {
            p = perturbed[static_cast<size_t>(spec.sample_index(rng))];
        } else {
            auto [A, B] = spec.sample_pair(rng);
            p = A + eps * B;
        }
        const Mat raw = p * s_hat;
        const double s = spectral_norm(raw);
        if (s <= kSingularRatio * frobenius_norm(p))
            throw SingularPerturbedAtom("gamma(eps): product collapsed at step " + std::to_string(n) +
                                        ", eps = " + fmt17(eps));
        s_hat = (1.0 / s) * raw;
        log_norm += std::log(s);
    }
    return log_norm / static_cast<double>(steps);
}

} // namespace detail

// Difference quotients of the top exponent under A -> A + eps.B, one point
// per requested eps. Base and perturbed runs replay the same stream, so the
// quotient's replica variance reflects only the perturbation, not the draw.
inline std::vector<GammaEpsPoint> gamma_eps_derivative(const EnsembleSpec& spec,
                                                       const std::vector<double>& eps_list,
                                                       long steps, long replicas,
                                                       std::uint64_t seed) {
    if (eps_list.empty()) throw ValidationError("gamma_eps_derivative: empty eps list");
    for (double e : eps_list)
        if (e == 0.0) throw ValidationError("gamma_eps_derivative: eps must be nonzero");
    if (steps < 1) throw ValidationError("gamma_eps_derivative: steps must be >= 1");
    if (replicas < 2) throw ValidationError("gamma_eps_derivative: need at least 2 replicas");
    if (spec.is_finite())
        for (double e : eps_list) spec.with_perturbed_a(e);  // throws if any atom degenerates

    std::vector<double> base(static_cast<size_t>(replicas));
    detail::for_indices(replicas, [&](long r) {
        base[static_cast<size_t>(r)] = detail::gamma_along_stream(
            spec, 0.0, steps, stream_for(seed, "gamma.eps", static_cast<std::uint64_t>(r)));
    });

    std::vector<GammaEpsPoint> out;
    for (double e : eps_list) {
        GammaEpsPoint pt;
        pt.eps = e;
        pt.replicas.resize(static_cast<size_t>(replicas));
        detail::for_indices(replicas, [&](long r) {
            const double ge = detail::gamma_along_stream(
                spec, e, steps, stream_for(seed, "gamma.eps", static_cast<std::uint64_t>(r)));
            pt.replicas[static_cast<size_t>(r)] = (ge - base[static_cast<size_t>(r)]) / e;
        });
        const auto [mean, se] = detail::mean_err(pt.replicas);
        pt.ratio = mean;
        pt.std_err = se;
        out.push_back(std::move(pt));
    }
    return out;
}

} // namespace lyapjet
