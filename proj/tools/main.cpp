#include <algorithm>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <lyapjet/report.hpp>
#include <lyapjet/verify.hpp>

// Front end: `run` records one trajectory, `estimate` runs one estimator,
// `verify` runs the built-in check suites. Exit codes are part of the
// contract: 0 success, 1 verification failure, 2 bad configuration or usage,
// 3 numerical abort mid-computation.

namespace {

struct EnsembleFlags {
    std::string config_path;
    std::string builtin_name;
    std::optional<double> theta, alpha, beta, tau;
    std::optional<int> dim;
};

void add_ensemble_flags(CLI::App* cmd, EnsembleFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON file describing the pair ensemble");
    cmd->add_option("--builtin", f.builtin_name,
                    "builtin ensemble: scalar_iid, signed_pair, diag_rotation, pure_rotation, "
                    "positive_bernoulli");
    cmd->add_option("--theta", f.theta, "rotation angle param (overrides the config)");
    cmd->add_option("--alpha", f.alpha, "fast diagonal param (overrides the config)");
    cmd->add_option("--beta", f.beta, "slow diagonal param (overrides the config)");
    cmd->add_option("--tau", f.tau, "moment-condition exponent (overrides the config)");
    cmd->add_option("--dim", f.dim, "expected matrix dimension (checked against the ensemble)");
}

lyapjet::EnsembleSpec resolve_ensemble(const EnsembleFlags& f) {
    nlohmann::json cfg = nlohmann::json::object();
    if (!f.config_path.empty()) {
        std::ifstream is(f.config_path, std::ios::binary);
        if (!is) throw lyapjet::ValidationError("cannot read config file: " + f.config_path);
        std::ostringstream ss;
        ss << is.rdbuf();
        try {
            cfg = nlohmann::json::parse(ss.str());
        } catch (const nlohmann::json::exception& e) {
            throw lyapjet::ParseError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!cfg.is_object()) throw lyapjet::ValidationError("config root must be an object");
    }
    if (!f.builtin_name.empty()) {
        cfg["kind"] = f.builtin_name;
        cfg.erase("atoms");
    }
    const auto put = [&cfg](const char* key, const std::optional<double>& v) {
        if (v) cfg["params"][key] = *v;
    };
    put("theta", f.theta);
    put("alpha", f.alpha);
    put("beta", f.beta);
    put("tau", f.tau);
    if (f.dim) cfg["dim"] = *f.dim;
    if (cfg.empty())
        throw lyapjet::ValidationError("no ensemble given: pass --builtin or --config");
    return lyapjet::parse_ensemble_json(cfg);
}

lyapjet::Vec parse_track(const std::string& text) {
    std::vector<double> xs;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            size_t used = 0;
            const double v = std::stod(cell, &used);
            while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
                ++used;
            if (used != cell.size()) throw std::invalid_argument(cell);
            xs.push_back(v);
        } catch (const std::exception&) {
            throw lyapjet::ValidationError("--track: cannot parse '" + cell + "' as a number");
        }
    }
    if (xs.empty()) throw lyapjet::ValidationError("--track: empty vector");
    return lyapjet::Vec(std::move(xs));
}

std::vector<lyapjet::Vec> parse_tracks(const std::vector<std::string>& texts, int dim) {
    std::vector<lyapjet::Vec> out;
    for (const std::string& t : texts) {
        lyapjet::Vec v = parse_track(t);
        if (v.dim() != dim)
            throw lyapjet::ValidationError("--track: vector '" + t + "' has dimension " +
                                           std::to_string(v.dim()) + ", ensemble has " +
                                           std::to_string(dim));
        out.push_back(std::move(v));
    }
    return out;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw lyapjet::ValidationError("cannot open output file: " + path);
    os << text;
    os.flush();
    if (!os) throw lyapjet::ValidationError("write failed: " + path);
}

std::string iso_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

nlohmann::json ensemble_json(const lyapjet::EnsembleSpec& spec) {
    nlohmann::json j;
    j["kind"] = lyapjet::kind_name(spec.kind());
    j["dim"] = spec.dim();
    j["digest"] = spec.digest();
    return j;
}

int cmd_run(const EnsembleFlags& flags, long steps, long record_every, std::uint64_t seed,
            const std::vector<std::string>& track_texts, const std::string& out_csv,
            const std::string& out_json) {
    const lyapjet::EnsembleSpec spec = resolve_ensemble(flags);
    std::vector<lyapjet::Vec> tracked = parse_tracks(track_texts, spec.dim());
    if (tracked.empty()) tracked.push_back(lyapjet::Vec::ones(spec.dim()));

    lyapjet::RngStream rng = lyapjet::stream_for(seed, "trajectory", 0);
    const lyapjet::TrajectoryRecord rec =
        lyapjet::run_trajectory(spec, steps, rng, tracked, record_every);

    if (!out_csv.empty()) {
        std::ostringstream os;
        lyapjet::write_trajectory_csv(rec, os);
        write_file(out_csv, os.str());
    }

    nlohmann::json j;
    j["command"] = "run";
    j["ensemble"] = ensemble_json(spec);
    j["steps"] = steps;
    j["record_every"] = record_every;
    j["seed"] = seed;
    j["rows_recorded"] = rec.rows.size();
    j["gamma_hat"] = rec.final_state.log_norm_s / static_cast<double>(steps);
    if (spec.dim() >= 2)
        j["log_norm_wedge"] = rec.final_log_norm_wedge;
    else
        j["log_norm_wedge"] = nullptr;
    j["trace_sum"] = rec.final_trace_sum;
    nlohmann::json jt = nlohmann::json::array();
    for (const lyapjet::TrackedVector& tv : rec.final_state.tracked) {
        nlohmann::json e;
        e["phi_over_n"] = tv.phi / static_cast<double>(steps);
        e["psi_over_n"] = tv.psi / static_cast<double>(steps);
        e["log_norm_sx"] = tv.log_norm_sx;
        e["phi_zero"] = tv.phi_zero;
        jt.push_back(std::move(e));
    }
    j["tracked"] = std::move(jt);
    j["zero_visit_count"] = lyapjet::zero_visits(rec).size();
    lyapjet::RngStream fe_rng = lyapjet::stream_for(seed, "fe.validate", 0);
    j["fe"] = lyapjet::to_json(lyapjet::validate_fe(spec, std::min<long>(steps, 1000), fe_rng));
    j["timestamp"] = iso_now();
    if (!out_json.empty()) write_file(out_json, j.dump(2) + "\n");

    std::cout << "ran " << steps << " steps of " << lyapjet::kind_name(spec.kind()) << " (dim "
              << spec.dim() << "), recorded " << rec.rows.size() << " rows\n";
    for (size_t k = 0; k < rec.final_state.tracked.size(); ++k) {
        const lyapjet::TrackedVector& tv = rec.final_state.tracked[k];
        std::cout << "tracked " << k << ": phi/n = " << tv.phi / static_cast<double>(steps)
                  << ", psi/n = " << tv.psi / static_cast<double>(steps) << "\n";
    }
    return 0;
}

int cmd_estimate(const EnsembleFlags& flags, const std::string& method, long steps, long replicas,
                 long burn_in, long samples, const std::vector<double>& eps, long tail,
                 const std::vector<std::string>& track_texts, std::uint64_t seed,
                 const std::string& out_json) {
    const lyapjet::EnsembleSpec spec = resolve_ensemble(flags);
    if (track_texts.size() > 1)
        throw lyapjet::ValidationError("estimate takes at most one --track start vector");
    std::optional<lyapjet::Vec> x0;
    if (track_texts.size() == 1) x0 = parse_tracks(track_texts, spec.dim()).front();

    nlohmann::json j;
    if (method == "psi") {
        j = lyapjet::to_json(
            lyapjet::estimate_xi_psi(spec, steps, replicas, seed, x0 ? *x0 : lyapjet::Vec{}));
    } else if (method == "phi") {
        j = lyapjet::to_json(
            lyapjet::estimate_abs_xi_phi(spec, steps, replicas, seed, x0 ? *x0 : lyapjet::Vec{}));
    } else if (method == "integral") {
        j = lyapjet::to_json(lyapjet::estimate_xi_integral(spec, samples, burn_in, seed));
    } else if (method == "orbit") {
        j = lyapjet::to_json(lyapjet::xi_orbit_average(spec, steps, tail, seed, x0, {}, replicas));
    } else if (method == "gamma-eps") {
        const auto pts = lyapjet::gamma_eps_derivative(spec, eps, steps, replicas, seed);
        j["method"] = "gamma_eps";
        j["steps"] = steps;
        j["n_replicas"] = replicas;
        j["seed"] = seed;
        j["ensemble_digest"] = spec.digest();
        nlohmann::json arr = nlohmann::json::array();
        for (const lyapjet::GammaEpsPoint& pt : pts) arr.push_back(lyapjet::to_json(pt));
        j["points"] = std::move(arr);
    } else {
        j = lyapjet::to_json(lyapjet::estimate_lyapunov(spec, steps, replicas, seed));
    }
    j["command"] = "estimate";
    j["ensemble"] = ensemble_json(spec);
    j["timestamp"] = iso_now();

    std::cout << j.dump(2) << "\n";
    if (!out_json.empty()) write_file(out_json, j.dump(2) + "\n");
    return 0;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out_csv,
               const std::string& out_json) {
    std::vector<lyapjet::CheckResult> results;
    const auto append = [&results](std::vector<lyapjet::CheckResult> v) {
        for (lyapjet::CheckResult& c : v) results.push_back(std::move(c));
    };
    if (suite == "oracles" || suite == "all") append(lyapjet::verify_oracles(seed));
    if (suite == "examples" || suite == "all") append(lyapjet::verify_examples(seed));
    if (suite == "theorems" || suite == "all") append(lyapjet::verify_theorems(seed));

    size_t passed = 0;
    for (const lyapjet::CheckResult& c : results) {
        passed += c.pass ? 1 : 0;
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << "\n       " << c.detail << "\n";
    }
    const bool all_pass = passed == results.size();
    std::cout << passed << "/" << results.size() << " checks passed\n";

    if (!out_csv.empty()) {
        std::ostringstream os;
        lyapjet::write_trajectory_csv(lyapjet::rotation_reference_record(), os);
        write_file(out_csv, os.str());
    }
    if (!out_json.empty()) {
        nlohmann::json j;
        j["command"] = "verify";
        j["suite"] = suite;
        j["seed"] = seed;
        j["all_pass"] = all_pass;
        nlohmann::json arr = nlohmann::json::array();
        for (const lyapjet::CheckResult& c : results) {
            nlohmann::json e;
            e["criterion"] = c.criterion;
            e["name"] = c.name;
            e["pass"] = c.pass;
            e["detail"] = c.detail;
            arr.push_back(std::move(e));
        }
        j["checks"] = std::move(arr);
        j["timestamp"] = iso_now();
        write_file(out_json, j.dump(2) + "\n");
    }
    return all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"random products of matrix pairs: trajectories, estimators, verification"};
    app.require_subcommand(1);

    EnsembleFlags run_flags;
    long run_steps = 1000, run_record_every = 1;
    std::uint64_t run_seed = 1;
    std::vector<std::string> run_tracks;
    std::string run_out_csv, run_out_json;
    CLI::App* run = app.add_subcommand("run", "run one trajectory and write its record");
    add_ensemble_flags(run, run_flags);
    run->add_option("--steps", run_steps, "trajectory length")->capture_default_str();
    run->add_option("--record-every", run_record_every, "record one row every this many steps")
        ->capture_default_str();
    run->add_option("--track", run_tracks, "start vector to track, comma-separated (repeatable)")
        ->type_size(1);
    run->add_option("--seed", run_seed, "master seed")->capture_default_str();
    run->add_option("--out-csv", run_out_csv, "write the trajectory record here");
    run->add_option("--out-json", run_out_json, "write the run summary here");

    EnsembleFlags est_flags;
    std::string est_method;
    long est_steps = 10000, est_replicas = 16, est_burn_in = 200, est_samples = 100000,
         est_tail = 200;
    std::vector<double> est_eps;
    std::vector<std::string> est_tracks;
    std::uint64_t est_seed = 1;
    std::string est_out_json;
    CLI::App* est = app.add_subcommand("estimate", "run an estimator and print a JSON report");
    add_ensemble_flags(est, est_flags);
    est->add_option("--method", est_method, "psi | phi | integral | orbit | gamma-eps | lyapunov")
        ->required()
        ->check(CLI::IsMember({"psi", "phi", "integral", "orbit", "gamma-eps", "lyapunov"}));
    est->add_option("--steps", est_steps, "steps per replica (orbit: the split point)")
        ->capture_default_str();
    est->add_option("--replicas", est_replicas, "independent replicas")->capture_default_str();
    est->add_option("--burn-in", est_burn_in, "direction burn-in (integral method)")
        ->capture_default_str();
    est->add_option("--samples", est_samples, "sample count (integral method)")
        ->capture_default_str();
    est->add_option("--eps", est_eps, "difference-quotient eps (gamma-eps, repeatable)")
        ->type_size(1);
    est->add_option("--tail", est_tail, "tail window (orbit method)")->capture_default_str();
    est->add_option("--track", est_tracks, "start vector, comma-separated")->type_size(1);
    est->add_option("--seed", est_seed, "master seed")->capture_default_str();
    est->add_option("--out-json", est_out_json, "also write the JSON report here");

    std::string ver_suite = "all";
    std::uint64_t ver_seed = 1;
    std::string ver_out_csv, ver_out_json;
    CLI::App* ver = app.add_subcommand("verify", "run the verification suites");
    ver->add_option("--suite", ver_suite, "oracles | examples | theorems | all")
        ->capture_default_str()
        ->check(CLI::IsMember({"oracles", "examples", "theorems", "all"}));
    ver->add_option("--seed", ver_seed, "master seed")->capture_default_str();
    ver->add_option("--out-csv", ver_out_csv, "write the rotation reference trajectory here");
    ver->add_option("--out-json", ver_out_json, "write the check report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed())
            return cmd_run(run_flags, run_steps, run_record_every, run_seed, run_tracks,
                           run_out_csv, run_out_json);
        if (est->parsed())
            return cmd_estimate(est_flags, est_method, est_steps, est_replicas, est_burn_in,
                                est_samples, est_eps, est_tail, est_tracks, est_seed,
                                est_out_json);
        return cmd_verify(ver_suite, ver_seed, ver_out_csv, ver_out_json);
    } catch (const lyapjet::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const lyapjet::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
