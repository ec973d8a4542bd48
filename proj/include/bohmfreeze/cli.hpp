#pragma once

// Configuration-driven pipeline runner behind the bohmfreeze command line.
// A run is a pure function of (subcommand, resolved config): every data file
// it writes is byte-identical across reruns and worker counts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bohmfreeze/bohm.hpp"
#include "bohmfreeze/coords.hpp"
#include "bohmfreeze/format.hpp"
#include "bohmfreeze/freeze.hpp"
#include "bohmfreeze/mode_state.hpp"
#include "bohmfreeze/multimode.hpp"
#include "bohmfreeze/parallel.hpp"
#include "bohmfreeze/stats.hpp"
#include "bohmfreeze/transform.hpp"

namespace bohmfreeze::cli {

using json = nlohmann::json;

inline constexpr const char* program_version = "1.0.0";

enum ExitCode : int { exit_ok = 0, exit_invalid = 1, exit_numerical = 2, exit_internal = 3 };

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names{"evolve",     "trajectory", "ensemble",         "equivariance",
                                                "freeze-scan", "multimode", "verify-transforms"};
    return names;
}

/// Every configurable field with its default. Dotted paths into this object
/// are the names accepted by --<dotted.name>=<value> overrides.
inline json default_config() {
    return json::parse(R"({
  "cosmology": {"H": 1.0},
  "mode": {"k": 1.0, "k_grid": [0.1, 1.0, 10.0]},
  "state": {"preset": "bunch-davies", "n_basis": 32, "levels": [[0, 0, 1.0, 0.0]],
            "max_level": 2, "seed": 1, "tau_ref": 0.0},
  "multimode": {"modes": [1.0, 2.0], "preset": "bunch-davies", "terms": []},
  "initial": {"sample": true, "seed": 7, "z0": [0.5, 0.0], "z0_modes": []},
  "eta": {"start": -5.0, "end": -0.0001},
  "tolerances": {"integrator": 1e-9, "epsilon": 0.01, "node": 1e-8},
  "ensemble": {"n_points": 10000, "seed": 7, "null_replicates": 100},
  "evolve": {"steps": 100},
  "scan": {"tau_start": -2.0},
  "verify": {"points": 1000, "seed": 2024},
  "output": {"dir": "out", "samples": 400}
})");
}

struct Diagnostic {
    std::string field;
    std::string message;
};

struct MultimodeTermSpec {
    complex amplitude{1.0, 0.0};
    std::vector<std::vector<LevelAmplitude>> factors;
};

struct RunConfig {
    Cosmology cosmology;
    double k = 1.0;
    std::vector<double> k_grid;
    std::string state_preset;
    int n_basis = default_basis_size;
    std::vector<LevelAmplitude> levels;
    int max_level = 2;
    std::uint64_t state_seed = 1;
    double tau_ref = 0.0;
    std::vector<double> modes;
    std::string multimode_preset;
    std::vector<MultimodeTermSpec> terms;
    bool sample_initial = true;
    std::uint64_t initial_seed = 7;
    complex z0{};
    std::vector<complex> z0_modes;
    double eta_start = -5.0;
    double eta_end = -1e-4;
    double tol = 1e-9;
    double epsilon = 0.01;
    double node = 1e-8;
    std::size_t ensemble_points = 10000;
    std::uint64_t ensemble_seed = 7;
    std::size_t null_replicates = 100;
    int evolve_steps = 100;
    double scan_tau_start = -2.0;
    std::size_t verify_points = 1000;
    std::uint64_t verify_seed = 2024;
    std::string output_dir = "out";
    int output_samples = 400;
    json resolved;  // the merged configuration, echoed into the manifest
};

// ---------------------------------------------------------------------------
// Loading and overrides

/// Parses "--a.b.c=value" / "--a.b.c value" pairs into JSON-pointer overrides.
/// Values are read as JSON when possible ("2", "[1,2]", "true"), else as strings.
inline std::vector<std::pair<std::string, json>> parse_overrides(const std::vector<std::string>& args,
                                                                 std::vector<Diagnostic>& diags) {
    std::vector<std::pair<std::string, json>> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.rfind("--", 0) != 0) {
            diags.push_back({a, "unexpected argument"});
            continue;
        }
        std::string key = a.substr(2), value;
        if (const auto eq = key.find('='); eq != std::string::npos) {
            value = key.substr(eq + 1);
            key = key.substr(0, eq);
        } else if (i + 1 < args.size()) {
            value = args[++i];
        } else {
            diags.push_back({key, "override has no value"});
            continue;
        }
        json v = json::parse(value, nullptr, false);
        if (v.is_discarded()) v = value;
        out.emplace_back(key, std::move(v));
    }
    return out;
}

inline void apply_overrides(json& cfg, const std::vector<std::pair<std::string, json>>& overrides,
                            std::vector<Diagnostic>& diags) {
    const json defaults = default_config();
    for (const auto& [dotted, value] : overrides) {
        std::string pointer = "/" + dotted;
        std::replace(pointer.begin(), pointer.end(), '.', '/');
        const json::json_pointer ptr(pointer);
        if (!defaults.contains(ptr)) {
            diags.push_back({dotted, "unknown configuration field"});
            continue;
        }
        cfg[ptr] = value;
    }
}

namespace detail {

template <class T>
std::optional<T> read(const json& cfg, const std::string& dotted, std::vector<Diagnostic>& diags) {
    std::string pointer = "/" + dotted;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    try {
        return cfg.at(json::json_pointer(pointer)).get<T>();
    } catch (const std::exception&) {
        diags.push_back({dotted, "missing or has the wrong type"});
        return std::nullopt;
    }
}

inline std::optional<complex> read_complex(const json& j) {
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
        return complex(j[0].get<double>(), j[1].get<double>());
    return std::nullopt;
}

inline std::optional<std::vector<LevelAmplitude>> read_levels(const json& j) {
    if (!j.is_array() || j.empty()) return std::nullopt;
    std::vector<LevelAmplitude> out;
    for (const auto& row : j) {
        if (!row.is_array() || row.size() != 4 || !row[0].is_number_integer() || !row[1].is_number_integer() ||
            !row[2].is_number() || !row[3].is_number())
            return std::nullopt;
        out.push_back({row[0].get<int>(), row[1].get<int>(), complex(row[2].get<double>(), row[3].get<double>())});
    }
    return out;
}

}  // namespace detail

/// Reads the merged JSON into a RunConfig. Type problems become diagnostics.
inline RunConfig parse_config(const json& cfg, std::vector<Diagnostic>& diags) {
    RunConfig rc;
    rc.resolved = cfg;
    auto set = [&](auto& field, const std::string& name) {
        using T = std::decay_t<decltype(field)>;
        if (auto v = detail::read<T>(cfg, name, diags)) field = *v;
    };
    set(rc.cosmology.H, "cosmology.H");
    set(rc.k, "mode.k");
    set(rc.k_grid, "mode.k_grid");
    set(rc.state_preset, "state.preset");
    set(rc.n_basis, "state.n_basis");
    set(rc.max_level, "state.max_level");
    set(rc.state_seed, "state.seed");
    set(rc.tau_ref, "state.tau_ref");
    set(rc.modes, "multimode.modes");
    set(rc.multimode_preset, "multimode.preset");
    set(rc.sample_initial, "initial.sample");
    set(rc.initial_seed, "initial.seed");
    set(rc.eta_start, "eta.start");
    set(rc.eta_end, "eta.end");
    set(rc.tol, "tolerances.integrator");
    set(rc.epsilon, "tolerances.epsilon");
    set(rc.node, "tolerances.node");
    set(rc.ensemble_points, "ensemble.n_points");
    set(rc.ensemble_seed, "ensemble.seed");
    set(rc.null_replicates, "ensemble.null_replicates");
    set(rc.evolve_steps, "evolve.steps");
    set(rc.scan_tau_start, "scan.tau_start");
    set(rc.verify_points, "verify.points");
    set(rc.verify_seed, "verify.seed");
    set(rc.output_dir, "output.dir");
    set(rc.output_samples, "output.samples");

    if (auto lv = detail::read_levels(cfg.value(json::json_pointer("/state/levels"), json()))) rc.levels = *lv;
    else diags.push_back({"state.levels", "must be a non-empty list of [n_x, n_y, re, im] rows"});
    if (auto z = detail::read_complex(cfg.value(json::json_pointer("/initial/z0"), json()))) rc.z0 = *z;
    else diags.push_back({"initial.z0", "must be [re, im]"});
    const json zm = cfg.value(json::json_pointer("/initial/z0_modes"), json::array());
    if (zm.is_array()) {
        for (const auto& z : zm) {
            if (auto c = detail::read_complex(z)) rc.z0_modes.push_back(*c);
            else diags.push_back({"initial.z0_modes", "entries must be [re, im]"});
        }
    }
    const json terms = cfg.value(json::json_pointer("/multimode/terms"), json::array());
    if (!terms.is_array()) {
        diags.push_back({"multimode.terms", "must be a list"});
    } else {
        for (const auto& t : terms) {
            MultimodeTermSpec spec;
            auto amp = t.is_object() ? detail::read_complex(t.value("amplitude", json())) : std::nullopt;
            if (!amp || !t.contains("factors") || !t["factors"].is_array()) {
                diags.push_back({"multimode.terms", "each term needs \"amplitude\": [re, im] and \"factors\""});
                continue;
            }
            spec.amplitude = *amp;
            for (const auto& f : t["factors"]) {
                if (auto lv = detail::read_levels(f)) spec.factors.push_back(*lv);
                else diags.push_back({"multimode.terms", "factor must be a list of [n_x, n_y, re, im] rows"});
            }
            rc.terms.push_back(std::move(spec));
        }
    }
    return rc;
}

// ---------------------------------------------------------------------------
// Validation

inline std::vector<Diagnostic> validate(const RunConfig& c, const std::string& subcommand) {
    std::vector<Diagnostic> d;
    if (std::find(subcommands().begin(), subcommands().end(), subcommand) == subcommands().end())
        d.push_back({"subcommand", "unknown subcommand '" + subcommand + "'"});
    if (!(c.cosmology.H > 0.0) || !std::isfinite(c.cosmology.H)) d.push_back({"cosmology.H", "must be positive"});
    if (!(c.eta_end < 0.0)) d.push_back({"eta.end", "eta window must end strictly before 0"});
    if (!(c.eta_start < c.eta_end)) d.push_back({"eta.start", "eta window must satisfy eta.start < eta.end"});
    if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) d.push_back({"tolerances.epsilon", "must lie in (0, 1)"});
    if (!(c.tol > 0.0 && c.tol < 1.0)) d.push_back({"tolerances.integrator", "must lie in (0, 1)"});
    if (!(c.node > 0.0 && c.node < 1.0)) d.push_back({"tolerances.node", "must lie in (0, 1)"});
    if (c.n_basis < 1) d.push_back({"state.n_basis", "must be at least 1"});
    if (c.output_samples < 2) d.push_back({"output.samples", "must be at least 2"});
    if (c.output_dir.empty()) d.push_back({"output.dir", "must not be empty"});
    static const std::vector<std::string> presets{"bunch-davies", "levels", "random"};
    if (std::find(presets.begin(), presets.end(), c.state_preset) == presets.end())
        d.push_back({"state.preset", "must be one of bunch-davies, levels, random"});
    for (const auto& l : c.levels)
        if (l.nx < 0 || l.ny < 0 || l.nx >= c.n_basis || l.ny >= c.n_basis)
            d.push_back({"state.levels", "level outside the basis"});

    auto check_k = [&](double k, const std::string& field) {
        if (k == 0.0) d.push_back({field, "zero mode is degenerate"});
        else if (!(k > 0.0) || !std::isfinite(k)) d.push_back({field, "wave number must be positive"});
    };
    const bool single_k = subcommand == "evolve" || subcommand == "trajectory" || subcommand == "ensemble" ||
                          subcommand == "equivariance";
    if (single_k) check_k(c.k, "mode.k");
    if (subcommand == "trajectory" || subcommand == "ensemble" || subcommand == "equivariance")
        if (c.ensemble_points < 1) d.push_back({"ensemble.n_points", "must be at least 1"});
    if (subcommand == "equivariance" && c.ensemble_points < 2)
        d.push_back({"ensemble.n_points", "equivariance needs at least two points"});
    if (subcommand == "equivariance" && c.null_replicates < 2)
        d.push_back({"ensemble.null_replicates", "must be at least 2"});
    if (subcommand == "evolve" && c.evolve_steps < 1) d.push_back({"evolve.steps", "must be at least 1"});
    if (subcommand == "verify-transforms" && c.verify_points < 1) d.push_back({"verify.points", "must be at least 1"});
    if (subcommand == "freeze-scan") {
        if (c.k_grid.size() < 2) d.push_back({"mode.k_grid", "needs at least two wave numbers"});
        for (double k : c.k_grid) check_k(k, "mode.k_grid");
        if (c.k_grid.size() >= 2) {
            const auto [lo, hi] = std::minmax_element(c.k_grid.begin(), c.k_grid.end());
            if (*lo > 0.0 && *hi / *lo < 100.0 * (1.0 - 1e-12))
                d.push_back({"mode.k_grid", "must span at least two decades"});
        }
        if (!(c.scan_tau_start <= -1.0)) d.push_back({"scan.tau_start", "must be <= -1 to cover -1 < tau < 0"});
    }
    if (subcommand == "multimode") {
        if (c.modes.empty() || c.modes.size() > max_modes) d.push_back({"multimode.modes", "needs 1 to 4 modes"});
        for (double k : c.modes) check_k(k, "multimode.modes");
        for (std::size_t i = 0; i < c.modes.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (c.modes[i] == c.modes[j]) d.push_back({"multimode.modes", "a mode may appear only once"});
        if (c.multimode_preset == "terms") {
            if (c.terms.empty() || c.terms.size() > max_rank)
                d.push_back({"multimode.terms", "needs 1 to 8 terms"});
            for (const auto& t : c.terms)
                if (t.factors.size() != c.modes.size())
                    d.push_back({"multimode.terms", "every term needs one factor per mode"});
            if (c.sample_initial && c.terms.size() > 1)
                d.push_back({"initial.sample", "sampling is only supported for product states; give initial.z0_modes"});
        } else if (c.multimode_preset != "bunch-davies") {
            d.push_back({"multimode.preset", "must be bunch-davies or terms"});
        }
        if (!c.sample_initial && c.z0_modes.size() != c.modes.size())
            d.push_back({"initial.z0_modes", "needs one [re, im] entry per mode"});
    }
    return d;
}

// ---------------------------------------------------------------------------
// Pipeline

inline ModeState build_state(const RunConfig& c, double k) {
    if (c.state_preset == "bunch-davies") return ground_state(k, c.n_basis, c.tau_ref);
    if (c.state_preset == "levels") return level_superposition(k, c.n_basis, c.levels, c.tau_ref);
    return random_superposition(k, c.n_basis, c.max_level, c.state_seed, c.tau_ref);
}

inline MultiModeState build_multimode(const RunConfig& c) {
    std::vector<MultiModeTerm> terms;
    if (c.multimode_preset == "bunch-davies") {
        MultiModeTerm t;
        for (double k : c.modes) t.factors.push_back(ground_state(k, c.n_basis));
        terms.push_back(std::move(t));
    } else {
        for (const auto& spec : c.terms) {
            MultiModeTerm t;
            t.amplitude = spec.amplitude;
            for (std::size_t m = 0; m < c.modes.size(); ++m)
                t.factors.push_back(level_superposition(c.modes[m], c.n_basis, spec.factors[m]));
            terms.push_back(std::move(t));
        }
    }
    return make_multimode(c.modes, std::move(terms), c.eta_start);
}

inline TrajectoryOptions trajectory_options(const RunConfig& c) {
    TrajectoryOptions o;
    o.tol = c.tol;
    o.node_threshold = c.node;
    o.output_samples = c.output_samples;
    o.cosmo = c.cosmology;
    return o;
}

inline json freeze_report_json(const FreezeReport& r) {
    auto num = [](double v) -> json {
        if (std::isfinite(v)) return v;
        if (std::isnan(v)) return nullptr;
        return v > 0 ? "inf" : "-inf";
    };
    return json{{"k", r.k},
                {"H", r.H},
                {"c_k", {r.c_k.real(), r.c_k.imag()}},
                {"epsilon", r.epsilon},
                {"onset", to_string(r.onset.kind)},
                {"eta0", num(r.onset.eta0)},
                {"t0", num(r.t0)},
                {"tau0", num(r.tau0)},
                {"assumption_C", r.assumption_C},
                {"refinement_change", r.refinement_change},
                {"latest_consistency", r.latest_consistency},
                {"absolute_errors", r.error_curve.absolute},
                {"converged", r.converged},
                {"diagnostic", r.diagnostic}};
}

class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

    template <class Writer>
    void write(const std::string& name, Writer&& w) {
        std::ofstream os(dir_ / name, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open output file " + (dir_ / name).string());
        w(os);
        if (!os) throw std::runtime_error("failed writing " + (dir_ / name).string());
        files_.push_back(name);
    }
    void write_json(const std::string& name, const json& j) {
        write(name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    }
    const std::vector<std::string>& files() const { return files_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> files_;
};

struct RunResult {
    int exit_code = exit_ok;
    std::vector<Diagnostic> diagnostics;
    json summary;
};

namespace detail {

inline complex initial_z0(const RunConfig& c, const ModeState& at_start, std::uint64_t stream) {
    if (!c.sample_initial) return c.z0;
    return sample_ensemble(at_start, 1, derive_seed(c.initial_seed, stream)).points.front();
}

inline RunResult run_verify_transforms(const RunConfig& c, OutputSet& out) {
    std::mt19937_64 rng(c.verify_seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    out.write("residuals.tsv", [&](std::ostream& os) {
        os << "eta\tk\tr1\tr2\tr3\n";
        for (std::size_t i = 0; i < c.verify_points; ++i) {
            const double eta = -std::exp(std::log(1e-4) + u(rng) * (std::log(100.0) - std::log(1e-4)));
            const double k = std::exp(std::log(0.01) + u(rng) * (std::log(100.0) - std::log(0.01)));
            const auto r = ode_residuals(eta, TransformParams{k});
            worst = std::max(worst, r.max_abs());
            os << format_double(eta) << '\t' << format_double(k) << '\t' << format_double(r.r1) << '\t'
               << format_double(r.r2) << '\t' << format_double(r.r3) << '\n';
        }
    });
    const bool pass = worst < 1e-9;
    RunResult res;
    res.summary = {{"points", c.verify_points}, {"max_residual", worst}, {"threshold", 1e-9}, {"pass", pass}};
    out.write_json("verify_transforms.json", res.summary);
    res.exit_code = pass ? exit_ok : exit_numerical;
    return res;
}

inline RunResult run_evolve(const RunConfig& c, OutputSet& out) {
    ModeState s = evolve_to(build_state(c, c.k), tau_of_eta(c.eta_start, c.k));
    const double h = (c.eta_end - c.eta_start) / c.evolve_steps;
    double worst_drift = 0.0;
    out.write("evolve.tsv", [&](std::ostream& os) {
        os << "eta\ttau\tnorm\tenergy\ttail_mass\n";
        for (int i = 0; i <= c.evolve_steps; ++i) {
            const double eta = i == c.evolve_steps ? c.eta_end : c.eta_start + h * i;
            s = evolve_to(s, tau_of_eta(eta, c.k));
            const double n2 = norm_squared(s);
            worst_drift = std::max(worst_drift, std::abs(n2 - 1.0));
            os << format_double(eta) << '\t' << format_double(s.tau) << '\t' << format_double(n2) << '\t'
               << format_double(energy(s)) << '\t' << format_double(tail_mass(s)) << '\n';
        }
    });
    out.write("state_final.txt", [&](std::ostream& os) { write_mode_state(os, s); });
    RunResult res;
    res.summary = {{"norm_drift", worst_drift}, {"tail_mass", tail_mass(s)}};
    out.write_json("evolve.json", res.summary);
    return res;
}

inline RunResult run_trajectory(const RunConfig& c, OutputSet& out) {
    const ModeState start = evolve_to(build_state(c, c.k), tau_of_eta(c.eta_start, c.k));
    const complex z0 = initial_z0(c, start, 0);
    const auto traj = integrate_trajectory(start, z0, c.eta_start, c.eta_end, trajectory_options(c));
    out.write("trajectory.tsv", [&](std::ostream& os) { write_trajectory_table(os, traj); });
    RunResult res;
    res.summary = {{"z0", {z0.real(), z0.imag()}},
                   {"status", to_string(traj.diagnostics.status)},
                   {"message", traj.diagnostics.message},
                   {"accepted_steps", traj.diagnostics.accepted_steps},
                   {"rejected_steps", traj.diagnostics.rejected_steps},
                   {"min_abs_Phi", traj.diagnostics.min_abs_phi},
                   {"max_speed", traj.diagnostics.max_speed}};
    if (!traj.completed()) {
        res.exit_code = exit_numerical;
        res.diagnostics.push_back({"trajectory", traj.diagnostics.message});
    } else if (std::abs(c.eta_end) <= deep_freeze_scale / c.k * (1.0 + 1e-12)) {
        const auto rep = analyze_freeze(traj, c.epsilon);
        out.write("error_curve.tsv", [&](std::ostream& os) { write_error_curve_table(os, {rep}); });
        res.summary["freeze"] = freeze_report_json(rep);
        if (!rep.converged) {
            res.exit_code = exit_numerical;
            res.diagnostics.push_back({"freeze", rep.diagnostic});
        }
    } else {
        res.summary["freeze"] = "skipped: eta.end is not in the deep-freeze regime |eta| <= 1e-4/k";
    }
    out.write_json("trajectory.json", res.summary);
    return res;
}

inline RunResult run_ensemble(const RunConfig& c, OutputSet& out) {
    const ModeState start = evolve_to(build_state(c, c.k), tau_of_eta(c.eta_start, c.k));
    const auto ens = sample_ensemble(start, c.ensemble_points, c.ensemble_seed);
    out.write("ensemble.tsv", [&](std::ostream& os) { write_ensemble_table(os, ens); });
    RunResult res;
    res.summary = {{"n_points", ens.points.size()}, {"tau", ens.tau}, {"seed", ens.seed},
                   {"method", ens.method},          {"acceptance_rate", ens.acceptance_rate}};
    out.write_json("ensemble.json", res.summary);
    return res;
}

inline RunResult run_equivariance(const RunConfig& c, OutputSet& out) {
    const ModeState state = build_state(c, c.k);
    EquivarianceOptions eo;
    eo.trajectory = trajectory_options(c);
    eo.trajectory.tol = std::max(c.tol, 1e-8);
    const auto m = equivariance_distance(state, c.eta_start, c.eta_end, c.ensemble_points, c.ensemble_seed, eo);
    const auto null = energy_distance_null(evolve_to(state, tau_of_eta(c.eta_end, c.k)), c.ensemble_points,
                                           c.null_replicates, c.ensemble_seed);
    const double q95 = quantile(null, 0.95);
    RunResult res;
    res.summary = {{"distance", m.distance},   {"null_q95", q95},       {"null_q99", quantile(null, 0.99)},
                   {"transported", m.transported}, {"aborted", m.aborted}, {"pass", m.distance < q95}};
    out.write("equivariance_null.tsv", [&](std::ostream& os) {
        os << "replicate\tenergy_distance\n";
        for (std::size_t i = 0; i < null.size(); ++i) os << i << '\t' << format_double(null[i]) << '\n';
    });
    out.write_json("equivariance.json", res.summary);
    return res;
}

inline RunResult run_freeze_scan(const RunConfig& c, OutputSet& out) {
    ScanOptions so;
    so.trajectory = trajectory_options(c);
    so.tau_start = c.scan_tau_start;
    std::vector<double> ks = c.k_grid;
    std::sort(ks.begin(), ks.end());
    const auto scan = scan_k([&](double k) { return build_state(c, k); },
                             [&](double k, const ModeState& at_start) {
                                 const auto idx = static_cast<std::uint64_t>(
                                     std::find(ks.begin(), ks.end(), k) - ks.begin());
                                 return initial_z0(c, at_start, idx);
                             },
                             ks, c.epsilon, so);
    json reports = json::array();
    for (std::size_t i = 0; i < scan.reports.size(); ++i) {
        json r = freeze_report_json(scan.reports[i]);
        r["z0"] = {scan.z0[i].real(), scan.z0[i].imag()};
        reports.push_back(std::move(r));
    }
    RunResult res;
    res.summary = {{"reports", reports},
                   {"C_max", scan.c_max},
                   {"C_min", scan.c_min},
                   {"C_spread", scan.c_spread},
                   {"common_tau0", std::isfinite(scan.common_tau0) ? json(scan.common_tau0) : json("-inf")},
                   {"all_converged", scan.all_converged},
                   {"C_within_band", scan.c_within_band},
                   {"spread_ok", scan.spread_ok},
                   {"onsets_ok", scan.onsets_ok},
                   {"common_onset_holds", scan.common_onset_holds},
                   {"k_independent", scan.k_independent()},
                   {"diagnostics", scan.diagnostics}};
    out.write_json("freeze_scan.json", res.summary);
    out.write("error_curves.tsv", [&](std::ostream& os) { write_error_curve_table(os, scan.reports); });
    if (!scan.all_converged) {
        res.exit_code = exit_numerical;
        for (const auto& d : scan.diagnostics) res.diagnostics.push_back({"freeze-scan", d});
    }
    return res;
}

inline RunResult run_multimode(const RunConfig& c, OutputSet& out) {
    const MultiModeState state = build_multimode(c);
    std::vector<complex> config = c.z0_modes;
    if (c.sample_initial) {
        config.clear();
        const auto& t = state.terms.front();
        for (std::size_t m = 0; m < state.modes.size(); ++m)
            config.push_back(sample_ensemble(t.factors[m], 1, derive_seed(c.initial_seed, m)).points.front());
    }
    MultiOptions mo;
    mo.tol = c.tol;
    mo.node_threshold = c.node;
    mo.output_samples = c.output_samples;
    mo.cosmo = c.cosmology;
    const auto traj = integrate_multimode(state, config, c.eta_start, c.eta_end, mo);
    out.write("multitrajectory.tsv", [&](std::ostream& os) { write_multitrajectory_table(os, traj); });
    RunResult res;
    json cfg0 = json::array();
    for (const auto& z : config) cfg0.push_back({z.real(), z.imag()});
    res.summary = {{"modes", state.modes},
                   {"z0", cfg0},
                   {"status", to_string(traj.diagnostics.status)},
                   {"message", traj.diagnostics.message},
                   {"norm", multimode_norm_squared(evolve_multimode(state, c.eta_end - state.eta))}};
    if (!traj.completed()) {
        res.exit_code = exit_numerical;
        res.diagnostics.push_back({"multimode", traj.diagnostics.message});
    } else {
        bool deep = true;
        for (double k : state.modes) deep = deep && std::abs(c.eta_end) <= deep_freeze_scale / k * (1.0 + 1e-12);
        if (deep) {
            const auto rep = freeze_scan_multimode(traj, c.epsilon);
            json modes = json::array();
            for (const auto& r : rep.modes) modes.push_back(freeze_report_json(r));
            res.summary["freeze"] = {{"modes", modes},
                                     {"joint_tau0", std::isfinite(rep.joint_tau0) ? json(rep.joint_tau0) : json("-inf")},
                                     {"joint_C", rep.joint_C},
                                     {"joint_onset_holds", rep.joint_onset_holds},
                                     {"verdict", rep.verdict()}};
            if (!rep.all_converged) {
                res.exit_code = exit_numerical;
                res.diagnostics.push_back({"multimode", "per-mode freeze analysis did not converge"});
            }
        } else {
            res.summary["freeze"] = "skipped: eta.end is not in the deep-freeze regime for every mode";
        }
    }
    out.write_json("multimode_report.json", res.summary);
    return res;
}

}  // namespace detail

/// Validates, runs the subcommand, writes data files plus manifest.json into
/// output.dir. Returns one of the ExitCode values.
inline RunResult run(const std::string& subcommand, const json& merged, std::ostream& log = std::cerr) {
    RunResult res;
    auto report = [&](const std::vector<Diagnostic>& ds) {
        for (const auto& d : ds) log << "bohmfreeze: " << d.field << ": " << d.message << '\n';
    };
    RunConfig c = parse_config(merged, res.diagnostics);
    if (res.diagnostics.empty()) res.diagnostics = validate(c, subcommand);
    if (!res.diagnostics.empty()) {
        report(res.diagnostics);
        res.exit_code = exit_invalid;
        return res;
    }
    try {
        OutputSet out(c.output_dir);
        RunResult body;
        if (subcommand == "verify-transforms") body = detail::run_verify_transforms(c, out);
        else if (subcommand == "evolve") body = detail::run_evolve(c, out);
        else if (subcommand == "trajectory") body = detail::run_trajectory(c, out);
        else if (subcommand == "ensemble") body = detail::run_ensemble(c, out);
        else if (subcommand == "equivariance") body = detail::run_equivariance(c, out);
        else if (subcommand == "freeze-scan") body = detail::run_freeze_scan(c, out);
        else body = detail::run_multimode(c, out);

        json manifest = {{"program", "bohmfreeze"},
                         {"version", program_version},
                         {"subcommand", subcommand},
                         {"config", c.resolved},
                         {"seeds",
                          {{"state", c.state_seed},
                           {"initial", c.initial_seed},
                           {"ensemble", c.ensemble_seed},
                           {"verify", c.verify_seed}}},
                         {"exit_code", body.exit_code},
                         {"outputs", out.files()}};
        out.write_json("manifest.json", manifest);
        report(body.diagnostics);
        return body;
    } catch (const DomainError& e) {
        log << "bohmfreeze: invalid input: " << e.what() << '\n';
        res.exit_code = exit_invalid;
    } catch (const ConvergenceError& e) {
        log << "bohmfreeze: numerical failure: " << e.what() << '\n';
        res.exit_code = exit_numerical;
    } catch (const NodeProximityError& e) {
        log << "bohmfreeze: numerical failure: " << e.what() << '\n';
        res.exit_code = exit_numerical;
    } catch (const std::exception& e) {
        log << "bohmfreeze: internal error: " << e.what() << '\n';
        res.exit_code = exit_internal;
    }
    return res;
}

/// Merges a config file (may be empty) and dotted overrides over the defaults.
inline json resolve_config(const std::string& config_path, const std::vector<std::string>& override_args,
                           std::vector<Diagnostic>& diags) {
    json cfg = default_config();
    if (!config_path.empty()) {
        std::ifstream is(config_path);
        if (!is) {
            diags.push_back({"config", "cannot open " + config_path});
            return cfg;
        }
        json file = json::parse(is, nullptr, false);
        if (file.is_discarded() || !file.is_object()) {
            diags.push_back({"config", "not a JSON object: " + config_path});
            return cfg;
        }
        const json defaults = default_config();
        const json flat = file.flatten();
        for (const auto& [ptr, value] : flat.items()) {
            // Arrays are leaf values of the schema: the nearest known prefix
            // must be a leaf, not an object that lacks the key.
            json::json_pointer p(ptr);
            while (!p.empty() && !defaults.contains(p)) p = p.parent_pointer();
            if (p.empty() || (defaults.at(p).is_object() && p.to_string() != ptr))
                diags.push_back({ptr, "unknown configuration field"});
        }
        cfg.merge_patch(file);
    }
    apply_overrides(cfg, parse_overrides(override_args, diags), diags);
    return cfg;
}

}  // namespace bohmfreeze::cli
