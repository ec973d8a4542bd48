#pragma once

// Bohmian guidance for one mode. The configuration z moves with
// dz/dtau = d_{z*} Im log Phi(z, tau) while Phi is advanced exactly in the
// oscillator eigenbasis, so the only discretisation error is the
// Runge-Kutta step for z itself.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "bohmfreeze/coords.hpp"
#include "bohmfreeze/format.hpp"
#include "bohmfreeze/mode_state.hpp"
#include "bohmfreeze/parallel.hpp"
#include "bohmfreeze/rk45.hpp"
#include "bohmfreeze/stats.hpp"

namespace bohmfreeze {

/// dz/dtau at the state's own mode time.
inline complex velocity(const ModeState& state, complex z, double node_threshold = default_node_threshold) {
    return phase_gradient(state, z, node_threshold);
}

struct TrajectorySample {
    double eta = 0.0;
    double tau = 0.0;
    complex z{};
    complex phi{};
    double abs_phi = 0.0;  // |Phi(z, tau)|
    double speed = 0.0;    // |dz/dtau|
};

struct TrajectoryDiagnostics {
    double min_abs_phi = std::numeric_limits<double>::infinity();
    double max_speed = 0.0;
    double max_speed_unit_window = 0.0;  // sup |dz/dtau| over -1 < tau < 0
    long accepted_steps = 0;
    long rejected_steps = 0;
    long node_retries = 0;
    IntegrationStatus status = IntegrationStatus::completed;
    std::string message;
};

struct Trajectory {
    double k = 1.0;
    double H = 1.0;
    std::vector<TrajectorySample> samples;
    TrajectoryDiagnostics diagnostics;

    bool completed() const { return diagnostics.status == IntegrationStatus::completed; }
    const TrajectorySample& final_sample() const { return samples.back(); }
};

struct TrajectoryOptions {
    double tol = 1e-9;
    double node_threshold = default_node_threshold;
    int output_samples = 400;
    double max_step = 0.05;       // in tau
    double velocity_scale = 1.0;  // != 1 only for negative controls
    Cosmology cosmo{};
};

namespace detail {

inline TrajectorySample make_sample(double eta, double tau, complex z, double k, const Cosmology& cosmo,
                                    ModeEvaluator& ev, double velocity_scale) {
    TrajectorySample s;
    s.eta = eta;
    s.tau = tau;
    s.z = z;
    s.phi = phi_per_z(eta, k, cosmo) * z;
    const auto v = ev.at(z, tau);
    s.abs_phi = std::abs(v.value);
    s.speed = velocity_scale * std::abs(phase_gradient_from(v.value, v.dx, v.dy));
    return s;
}

// Core integrator over an explicit list of output mode times (monotone, last
// entry is the end point). output_etas, when given, are reported verbatim
// instead of being recovered by inverting tau(eta).
inline Trajectory integrate_over_taus(const ModeState& state0, complex z0, double tau_start,
                                      const std::vector<double>& output_taus, const std::vector<double>& output_etas,
                                      const TrajectoryOptions& opt) {
    detail::require_positive_k(state0.k);
    opt.cosmo.validate();
    Trajectory traj;
    traj.k = state0.k;
    traj.H = opt.cosmo.H;
    traj.samples.reserve(output_taus.size());

    ModeEvaluator ev(state0);
    const double k = state0.k;
    auto& diag = traj.diagnostics;

    auto rhs = [&](double tau, const std::array<double, 2>& y, std::array<double, 2>& dy) {
        const complex v = opt.velocity_scale * ev.velocity(complex(y[0], y[1]), tau, opt.node_threshold);
        dy[0] = v.real();
        dy[1] = v.imag();
    };
    auto track = [&](double tau, double abs_phi, double speed) {
        diag.min_abs_phi = std::min(diag.min_abs_phi, abs_phi);
        diag.max_speed = std::max(diag.max_speed, speed);
        if (tau > -1.0 && tau < 0.0) diag.max_speed_unit_window = std::max(diag.max_speed_unit_window, speed);
    };
    auto on_output = [&](std::size_t i, double tau, const std::array<double, 2>& y) {
        const double eta = output_etas.empty() ? eta_of_tau(tau, k) : output_etas[i];
        auto s = make_sample(eta, tau, complex(y[0], y[1]), k, opt.cosmo, ev, opt.velocity_scale);
        track(tau, s.abs_phi, s.speed);
        traj.samples.push_back(s);
    };
    auto on_step = [&](double tau, const std::array<double, 2>& y, const std::array<double, 2>& f) {
        const double abs_phi = std::abs(ev.value(complex(y[0], y[1]), tau));
        track(tau, abs_phi, std::hypot(f[0], f[1]));
    };

    Rk45Options ro;
    ro.rtol = opt.tol;
    ro.atol = opt.tol;
    ro.max_step = opt.max_step;
    std::array<double, 2> y{z0.real(), z0.imag()};
    const auto stats = integrate_dopri5<2>(rhs, y, tau_start, output_taus, ro, on_output, on_step);
    diag.accepted_steps = stats.accepted;
    diag.rejected_steps = stats.rejected;
    diag.node_retries = stats.node_retries;
    diag.status = stats.status;
    diag.message = stats.message;
    return traj;
}

}  // namespace detail

/// Output grid for an eta window ending before 0: geometric in |eta| so the
/// approach to eta -> 0- is resolved, plus the dyadic refinements 2 eta_end
/// and 4 eta_end used for limit extraction.
inline std::vector<double> eta_output_grid(double eta_start, double eta_end, int samples) {
    std::vector<double> etas;
    samples = std::max(samples, 2);
    const double a = -eta_start, b = -eta_end;
    for (int i = 0; i < samples; ++i) {
        const double f = static_cast<double>(i) / (samples - 1);
        etas.push_back(-a * std::pow(b / a, f));
    }
    etas.front() = eta_start;
    etas.back() = eta_end;
    for (double m : {2.0, 4.0})
        if (m * eta_end > eta_start) etas.push_back(m * eta_end);
    std::sort(etas.begin(), etas.end());
    etas.erase(std::unique(etas.begin(), etas.end()), etas.end());
    return etas;
}

/// Integrates a trajectory over the conformal window (eta_start, eta_end),
/// eta_start < eta_end < 0. Integration runs in tau; samples report both clocks.
/// Node encounters halve the step, then abort with the partial trajectory.
inline Trajectory integrate_trajectory(const ModeState& state0, complex z0, double eta_start, double eta_end,
                                       const TrajectoryOptions& opt = {}) {
    if (!(eta_start < eta_end && eta_end < 0.0))
        throw DomainError("eta window must satisfy eta_start < eta_end < 0");
    const double k = state0.k;
    const auto etas = eta_output_grid(eta_start, eta_end, opt.output_samples);
    std::vector<double> taus;
    taus.reserve(etas.size());
    for (double e : etas) taus.push_back(tau_of_eta(e, k));
    const double tau_start = taus.front();
    return detail::integrate_over_taus(evolve_to(state0, tau_start), z0, tau_start, taus, etas, opt);
}

/// Integrates directly in mode time over any interval (either direction, may
/// cross tau = 0). Samples are uniform in tau.
inline Trajectory integrate_trajectory_tau(const ModeState& state0, complex z0, double tau_start, double tau_end,
                                           const TrajectoryOptions& opt = {}) {
    const int n = std::max(opt.output_samples, 2);
    std::vector<double> taus;
    taus.reserve(n);
    for (int i = 0; i < n; ++i) taus.push_back(tau_start + (tau_end - tau_start) * i / (n - 1));
    taus.back() = tau_end;
    return detail::integrate_over_taus(evolve_to(state0, tau_start), z0, tau_start, taus, {}, opt);
}

// ---------------------------------------------------------------------------
// Ensembles

struct Ensemble {
    std::vector<complex> points;
    double tau = 0.0;
    std::uint64_t seed = 0;
    std::string method = "rejection/gaussian-envelope";
    double acceptance_rate = 0.0;
    std::size_t envelope_violations = 0;
};

/// i.i.d. draws from |Phi(., tau)|^2 by rejection against an isotropic
/// Gaussian envelope whose width covers the top occupied level.
inline Ensemble sample_ensemble(const ModeState& state, std::size_t n_points, std::uint64_t seed) {
    if (n_points < 1) throw DomainError("ensemble needs at least one point");
    ModeEvaluator ev(state);
    const double w = state.omega();
    int top = 0;
    for (int nx = 0; nx < state.n_basis; ++nx)
        for (int ny = 0; ny < state.n_basis; ++ny)
            if (state.at(nx, ny) != complex{}) top = std::max(top, nx + ny);
    const double sigma2 = (top + 1.0) / (2.0 * w);
    const double sigma = std::sqrt(sigma2);
    const double n2 = norm_squared(state);
    auto envelope = [&](complex z) { return std::exp(-std::norm(z) / (2.0 * sigma2)) / (2.0 * std::numbers::pi * sigma2); };
    auto density = [&](complex z) { return std::norm(ev.value(z, state.tau)) / n2; };

    double ratio_max = 0.0;
    constexpr int grid = 161;
    const double extent = 7.0 * sigma;
    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
            const complex z(-extent + 2.0 * extent * i / (grid - 1), -extent + 2.0 * extent * j / (grid - 1));
            ratio_max = std::max(ratio_max, density(z) / envelope(z));
        }
    const double bound = 1.25 * ratio_max;

    Ensemble ens;
    ens.tau = state.tau;
    ens.seed = seed;
    ens.points.reserve(n_points);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::size_t proposals = 0;
    while (ens.points.size() < n_points) {
        const complex z(normal(rng), normal(rng));
        const double u = uniform(rng);
        ++proposals;
        const double target = density(z);
        const double env = bound * envelope(z);
        if (target > env) ++ens.envelope_violations;
        if (u * env <= target) ens.points.push_back(z);
        if (proposals >= 10000 && static_cast<double>(ens.points.size()) < 1e-3 * static_cast<double>(proposals))
            throw ConvergenceError("rejection sampler acceptance below 1e-3: envelope unsuited to this state");
    }
    ens.acceptance_rate = static_cast<double>(n_points) / static_cast<double>(proposals);
    return ens;
}

/// Moves every point of a configuration cloud from tau0 to tau1 along its
/// Bohmian trajectory. Aborted trajectories are dropped and counted.
struct TransportResult {
    std::vector<complex> points;
    std::size_t aborted = 0;
};

inline TransportResult transport(const ModeState& state, std::span<const complex> points, double tau0, double tau1,
                                 const TrajectoryOptions& opt) {
    std::vector<complex> out(points.size());
    std::vector<char> ok(points.size(), 0);
    const ModeState at0 = evolve_to(state, tau0);
    TrajectoryOptions o = opt;
    o.output_samples = 2;
    parallel_for(points.size(), [&](std::size_t i) {
        const auto traj = detail::integrate_over_taus(at0, points[i], tau0, {tau1}, {}, o);
        if (traj.completed() && !traj.samples.empty()) {
            out[i] = traj.samples.back().z;
            ok[i] = 1;
        }
    });
    TransportResult r;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (ok[i]) r.points.push_back(out[i]);
        else ++r.aborted;
    }
    return r;
}

struct EquivarianceOptions {
    TrajectoryOptions trajectory{.tol = 1e-8};
    double max_abort_fraction = 0.01;
};

struct EquivarianceMeasurement {
    double distance = 0.0;
    std::size_t transported = 0;
    std::size_t aborted = 0;
    bool abort_budget_ok = true;
};

/// Energy distance between a |Phi|^2 ensemble drawn at eta0 and transported
/// to eta1, and a fresh |Phi|^2 ensemble drawn at eta1.
inline EquivarianceMeasurement equivariance_distance(const ModeState& state0, double eta0, double eta1,
                                                     std::size_t n_points, std::uint64_t seed,
                                                     const EquivarianceOptions& opt = {}) {
    if (!(eta0 < eta1 && eta1 < 0.0)) throw DomainError("equivariance window must satisfy eta0 < eta1 < 0");
    const double k = state0.k;
    const double tau0 = tau_of_eta(eta0, k);
    const double tau1 = tau_of_eta(eta1, k);
    const auto start = sample_ensemble(evolve_to(state0, tau0), n_points, derive_seed(seed, 0));
    const auto moved = transport(state0, start.points, tau0, tau1, opt.trajectory);
    const auto fresh = sample_ensemble(evolve_to(state0, tau1), n_points, derive_seed(seed, 1));

    EquivarianceMeasurement m;
    m.transported = moved.points.size();
    m.aborted = moved.aborted;
    m.abort_budget_ok = static_cast<double>(moved.aborted) <= opt.max_abort_fraction * static_cast<double>(n_points);
    if (!m.abort_budget_ok)
        throw ConvergenceError("more than the allowed fraction of transported trajectories aborted");
    m.distance = energy_distance(moved.points, fresh.points);
    return m;
}

/// Null distribution of the energy distance between two independent fresh
/// |Phi|^2 samples of size n at the state's mode time.
inline std::vector<double> energy_distance_null(const ModeState& state, std::size_t n_points, std::size_t replicates,
                                                std::uint64_t seed) {
    std::vector<double> null(replicates);
    for (std::size_t r = 0; r < replicates; ++r) {
        const auto a = sample_ensemble(state, n_points, derive_seed(seed, 2 * r + 100));
        const auto b = sample_ensemble(state, n_points, derive_seed(seed, 2 * r + 101));
        null[r] = energy_distance(a.points, b.points);
    }
    return null;
}

// ---------------------------------------------------------------------------
// Delimited-text export

inline void write_trajectory_table(std::ostream& os, const Trajectory& traj) {
    os << "eta\ttau\tre_z\tim_z\tre_phi\tim_phi\tabs_Phi\n";
    for (const auto& s : traj.samples) {
        os << format_double(s.eta) << '\t' << format_double(s.tau) << '\t' << format_double(s.z.real()) << '\t'
           << format_double(s.z.imag()) << '\t' << format_double(s.phi.real()) << '\t'
           << format_double(s.phi.imag()) << '\t' << format_double(s.abs_phi) << '\n';
    }
}

inline void write_ensemble_table(std::ostream& os, const Ensemble& ens) {
    os << "re_z\tim_z\n";
    for (const auto& p : ens.points) os << format_double(p.real()) << '\t' << format_double(p.imag()) << '\n';
}

}  // namespace bohmfreeze
