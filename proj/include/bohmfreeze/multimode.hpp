#pragma once

// Non-product states over a finite set of modes, held as a short sum of
// product terms. Modes never interact, so each factor evolves with its own
// oscillator propagator U_k(delta tau_k) and the sum-of-products form is
// closed under evolution. The guided configuration is integrated in the
// shared clock eta, with dz_k/deta = gamma_k^{-2} d_{z_k*} Im log Phi.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bohmfreeze/bohm.hpp"
#include "bohmfreeze/coords.hpp"
#include "bohmfreeze/format.hpp"
#include "bohmfreeze/freeze.hpp"
#include "bohmfreeze/mode_state.hpp"
#include "bohmfreeze/rk45.hpp"

namespace bohmfreeze {

inline constexpr std::size_t max_modes = 4;
inline constexpr std::size_t max_rank = 8;

struct MultiModeTerm {
    complex amplitude{1.0, 0.0};
    std::vector<ModeState> factors;  // one per mode, in mode order
};

struct MultiModeState {
    std::vector<double> modes;  // wave numbers, one representative per (k, -k) pair
    std::vector<MultiModeTerm> terms;
    double eta = -1.0;  // factor for mode k is given at tau_k(eta)
};

namespace detail {

inline double mode_tau_any(double eta, double k) {
    return eta < 0.0 ? tau_of_eta(eta, k) : tau_of_eta_extended(eta, k);
}

inline void validate_multimode(const MultiModeState& s) {
    if (s.modes.empty() || s.modes.size() > max_modes)
        throw DomainError("multimode state needs between 1 and 4 modes");
    if (s.terms.empty() || s.terms.size() > max_rank) throw DomainError("multimode state needs between 1 and 8 terms");
    for (std::size_t i = 0; i < s.modes.size(); ++i) {
        require_positive_k(s.modes[i]);
        for (std::size_t j = 0; j < i; ++j)
            if (s.modes[i] == s.modes[j]) throw DomainError("a mode may be stored only once");
    }
    for (const auto& t : s.terms) {
        if (t.factors.size() != s.modes.size()) throw DomainError("every term needs one factor per mode");
        for (std::size_t m = 0; m < s.modes.size(); ++m) {
            if (t.factors[m].k != s.modes[m]) throw DomainError("factor wave number does not match its mode");
            if (t.factors[m].n_basis != s.terms.front().factors[m].n_basis)
                throw DomainError("factors of one mode must share the basis size");
        }
    }
}

}  // namespace detail

inline complex multimode_inner(const MultiModeState& a, const MultiModeState& b) {
    complex sum{};
    for (const auto& ta : a.terms)
        for (const auto& tb : b.terms) {
            complex prod = std::conj(ta.amplitude) * tb.amplitude;
            for (std::size_t m = 0; m < a.modes.size(); ++m) prod *= overlap(ta.factors[m], tb.factors[m]);
            sum += prod;
        }
    return sum;
}

inline double multimode_norm_squared(const MultiModeState& s) { return std::real(multimode_inner(s, s)); }

/// Builds a state at conformal time eta from factor coefficients given at
/// that time, and normalises it.
inline MultiModeState make_multimode(std::vector<double> modes, std::vector<MultiModeTerm> terms, double eta) {
    MultiModeState s{std::move(modes), std::move(terms), eta};
    for (auto& t : s.terms)
        for (std::size_t m = 0; m < t.factors.size() && m < s.modes.size(); ++m)
            t.factors[m].tau = detail::mode_tau_any(eta, s.modes[m]);
    detail::validate_multimode(s);
    const double n2 = multimode_norm_squared(s);
    if (!(n2 > 0.0)) throw DomainError("multimode state has zero norm");
    for (auto& t : s.terms) t.amplitude /= std::sqrt(n2);
    return s;
}

/// Factorised propagation by d_eta: each factor advances by its own
/// delta tau_k; amplitudes are untouched.
inline MultiModeState evolve_multimode(const MultiModeState& s, double d_eta, bool allow_beyond_patch = false) {
    const double eta_b = s.eta + d_eta;
    if (!allow_beyond_patch && !(s.eta < 0.0 && eta_b < 0.0))
        throw DomainError("multimode evolution must stay on the patch eta < 0");
    MultiModeState out = s;
    out.eta = eta_b;
    for (auto& t : out.terms)
        for (std::size_t m = 0; m < s.modes.size(); ++m) {
            const double k = s.modes[m];
            t.factors[m] = evolve_to(t.factors[m], detail::mode_tau_any(eta_b, k));
        }
    return out;
}

/// Evaluates Phi(config, eta) and all per-mode gradients. Not thread-safe.
class MultiModeEvaluator {
public:
    struct Sample {
        complex value{};
        std::array<complex, max_modes> dx{};
        std::array<complex, max_modes> dy{};
    };

    explicit MultiModeEvaluator(const MultiModeState& s) : modes_(s.modes) {
        detail::validate_multimode(s);
        for (const auto& t : s.terms) {
            amplitudes_.push_back(t.amplitude);
            double bound = std::abs(t.amplitude);
            for (const auto& f : t.factors) {
                evaluators_.emplace_back(f);
                bound *= evaluators_.back().amplitude_bound();
            }
            amplitude_bound_ += bound;
        }
    }

    std::size_t mode_count() const { return modes_.size(); }
    double mode(std::size_t m) const { return modes_[m]; }
    double amplitude_bound() const { return amplitude_bound_; }

    Sample at(std::span<const complex> config, double eta) {
        const std::size_t K = modes_.size();
        std::array<double, max_modes> taus{};
        for (std::size_t m = 0; m < K; ++m) taus[m] = detail::mode_tau_any(eta, modes_[m]);
        Sample out;
        std::array<ModeEvaluator::Sample, max_modes> f{};
        for (std::size_t j = 0; j < amplitudes_.size(); ++j) {
            for (std::size_t m = 0; m < K; ++m) f[m] = evaluators_[j * K + m].at(config[m], taus[m]);
            complex prod = amplitudes_[j];
            for (std::size_t m = 0; m < K; ++m) prod *= f[m].value;
            out.value += prod;
            for (std::size_t m = 0; m < K; ++m) {
                complex rest = amplitudes_[j];
                for (std::size_t l = 0; l < K; ++l)
                    if (l != m) rest *= f[l].value;
                out.dx[m] += rest * f[m].dx;
                out.dy[m] += rest * f[m].dy;
            }
        }
        return out;
    }

    /// d_{z_m*} Im log Phi, i.e. dz_m/dtau_m, for every mode.
    std::array<complex, max_modes> mode_time_velocities(std::span<const complex> config, double eta,
                                                        double node_threshold = default_node_threshold) {
        const Sample s = at(config, eta);
        const double amp = std::abs(s.value);
        const double limit = node_threshold * amplitude_bound_;
        if (!(amp >= limit)) throw NodeProximityError("configuration is at a node of the multimode wave function", amp, limit);
        std::array<complex, max_modes> v{};
        for (std::size_t m = 0; m < modes_.size(); ++m) v[m] = phase_gradient_from(s.value, s.dx[m], s.dy[m]);
        return v;
    }

private:
    std::vector<double> modes_;
    std::vector<complex> amplitudes_;
    std::vector<ModeEvaluator> evaluators_;  // term-major
    double amplitude_bound_ = 0.0;
};

/// dz_m/dtau_m = d_{z_m*} Im log Phi at the state's own eta.
inline complex mode_time_velocity(const MultiModeState& s, std::span<const complex> config, std::size_t m,
                                  double node_threshold = default_node_threshold) {
    if (config.size() != s.modes.size()) throw DomainError("configuration needs one value per mode");
    if (m >= s.modes.size()) throw DomainError("mode index out of range");
    MultiModeEvaluator ev(s);
    return ev.mode_time_velocities(config, s.eta, node_threshold)[m];
}

/// dz_m/deta = gamma_m^{-2} d_{z_m*} Im log Phi.
inline complex velocity_k(const MultiModeState& s, std::span<const complex> config, std::size_t m,
                          double node_threshold = default_node_threshold) {
    return dtau_deta(s.eta, s.modes[m]) * mode_time_velocity(s, config, m, node_threshold);
}

struct ModeSample {
    double tau = 0.0;
    complex z{};
    complex phi{};
};

struct MultiSample {
    double eta = 0.0;
    std::vector<ModeSample> modes;
};

struct MultiDiagnostics {
    double min_abs_phi = std::numeric_limits<double>::infinity();
    std::vector<double> max_mode_speed;         // sup |dz_m/dtau_m| over the run
    std::vector<double> max_mode_speed_window;  // sup |dz_m/dtau_m| for -1 < tau_m < 0
    long accepted_steps = 0;
    long rejected_steps = 0;
    long node_retries = 0;
    IntegrationStatus status = IntegrationStatus::completed;
    std::string message;
};

struct MultiTrajectory {
    std::vector<double> modes;
    double H = 1.0;
    std::vector<MultiSample> samples;
    MultiDiagnostics diagnostics;

    bool completed() const { return diagnostics.status == IntegrationStatus::completed; }
};

struct MultiOptions {
    double tol = 1e-9;
    double node_threshold = default_node_threshold;
    int output_samples = 400;
    double max_step = 0.05;  // in eta
    std::vector<double> velocity_scales;  // per mode; empty means 1 (negative controls only)
    Cosmology cosmo{};
};

/// Coupled integration of all mode configurations over (eta_start, eta_end),
/// eta_start < eta_end < 0, stepping in the shared clock eta.
inline MultiTrajectory integrate_multimode(const MultiModeState& state0, std::span<const complex> config0,
                                           double eta_start, double eta_end, const MultiOptions& opt = {}) {
    if (!(eta_start < eta_end && eta_end < 0.0))
        throw DomainError("eta window must satisfy eta_start < eta_end < 0");
    if (config0.size() != state0.modes.size()) throw DomainError("configuration needs one value per mode");
    opt.cosmo.validate();
    const std::size_t K = state0.modes.size();
    std::array<double, max_modes> scales{};
    for (std::size_t m = 0; m < K; ++m) scales[m] = m < opt.velocity_scales.size() ? opt.velocity_scales[m] : 1.0;

    MultiTrajectory traj;
    traj.modes = state0.modes;
    traj.H = opt.cosmo.H;
    auto& diag = traj.diagnostics;
    diag.max_mode_speed.assign(K, 0.0);
    diag.max_mode_speed_window.assign(K, 0.0);

    MultiModeEvaluator ev(evolve_multimode(state0, eta_start - state0.eta, true));
    const auto etas = eta_output_grid(eta_start, eta_end, opt.output_samples);

    auto to_config = [K](const std::array<double, 2 * max_modes>& y) {
        std::array<complex, max_modes> c{};
        for (std::size_t m = 0; m < K; ++m) c[m] = complex(y[2 * m], y[2 * m + 1]);
        return c;
    };
    auto rhs = [&](double eta, const std::array<double, 2 * max_modes>& y, std::array<double, 2 * max_modes>& dy) {
        const auto c = to_config(y);
        const auto v = ev.mode_time_velocities(std::span<const complex>(c.data(), K), eta, opt.node_threshold);
        dy.fill(0.0);
        for (std::size_t m = 0; m < K; ++m) {
            const complex d = scales[m] * dtau_deta(eta, state0.modes[m]) * v[m];
            dy[2 * m] = d.real();
            dy[2 * m + 1] = d.imag();
        }
    };
    auto track = [&](double eta, const std::array<complex, max_modes>& c) {
        const auto s = ev.at(std::span<const complex>(c.data(), K), eta);
        diag.min_abs_phi = std::min(diag.min_abs_phi, std::abs(s.value));
        if (s.value == complex{}) return;
        for (std::size_t m = 0; m < K; ++m) {
            const double speed = scales[m] * std::abs(phase_gradient_from(s.value, s.dx[m], s.dy[m]));
            diag.max_mode_speed[m] = std::max(diag.max_mode_speed[m], speed);
            const double tau_m = tau_of_eta(eta, state0.modes[m]);
            if (tau_m > -1.0) diag.max_mode_speed_window[m] = std::max(diag.max_mode_speed_window[m], speed);
        }
    };
    auto on_output = [&](std::size_t i, double eta, const std::array<double, 2 * max_modes>& y) {
        const auto c = to_config(y);
        track(eta, c);
        MultiSample s;
        s.eta = etas[i];
        for (std::size_t m = 0; m < K; ++m) {
            const double k = state0.modes[m];
            s.modes.push_back({tau_of_eta(s.eta, k), c[m], phi_per_z(s.eta, k, opt.cosmo) * c[m]});
        }
        traj.samples.push_back(std::move(s));
    };
    auto on_step = [&](double eta, const std::array<double, 2 * max_modes>& y, const std::array<double, 2 * max_modes>&) {
        track(eta, to_config(y));
    };

    std::array<double, 2 * max_modes> y{};
    for (std::size_t m = 0; m < K; ++m) {
        y[2 * m] = config0[m].real();
        y[2 * m + 1] = config0[m].imag();
    }
    Rk45Options ro;
    ro.rtol = opt.tol;
    ro.atol = opt.tol;
    ro.max_step = opt.max_step;
    const auto stats = integrate_dopri5<2 * max_modes>(rhs, y, eta_start, etas, ro, on_output, on_step);
    diag.accepted_steps = stats.accepted;
    diag.rejected_steps = stats.rejected;
    diag.node_retries = stats.node_retries;
    diag.status = stats.status;
    diag.message = stats.message;
    return traj;
}

/// Single-mode view of one mode of a joint trajectory.
inline Trajectory mode_trajectory(const MultiTrajectory& traj, std::size_t m) {
    Trajectory t;
    t.k = traj.modes.at(m);
    t.H = traj.H;
    for (const auto& s : traj.samples) {
        TrajectorySample ts;
        ts.eta = s.eta;
        ts.tau = s.modes[m].tau;
        ts.z = s.modes[m].z;
        ts.phi = s.modes[m].phi;
        t.samples.push_back(ts);
    }
    t.diagnostics.status = traj.diagnostics.status;
    t.diagnostics.message = traj.diagnostics.message;
    t.diagnostics.accepted_steps = traj.diagnostics.accepted_steps;
    t.diagnostics.rejected_steps = traj.diagnostics.rejected_steps;
    t.diagnostics.min_abs_phi = traj.diagnostics.min_abs_phi;
    t.diagnostics.max_speed = traj.diagnostics.max_mode_speed.at(m);
    t.diagnostics.max_speed_unit_window = traj.diagnostics.max_mode_speed_window.at(m);
    return t;
}

struct MultiFreezeReport {
    std::vector<FreezeReport> modes;
    double joint_tau0 = -std::numeric_limits<double>::infinity();  // latest per-mode onset
    double joint_C = 0.0;  // max over modes of sup |dz_m/dtau_m| for -1 < tau_m < 0
    double c_band = 10.0;
    bool all_converged = false;
    bool joint_onset_holds = false;

    bool verdict() const { return all_converged && joint_onset_holds && joint_C < c_band; }
};

inline MultiFreezeReport freeze_scan_multimode(const MultiTrajectory& traj, double epsilon, double c_band = 10.0) {
    MultiFreezeReport rep;
    rep.c_band = c_band;
    rep.all_converged = true;
    for (std::size_t m = 0; m < traj.modes.size(); ++m) {
        auto r = analyze_freeze(mode_trajectory(traj, m), epsilon);
        if (!r.converged) rep.all_converged = false;
        rep.joint_C = std::max(rep.joint_C, r.assumption_C);
        if (r.onset.kind == OnsetKind::attained) rep.joint_tau0 = std::max(rep.joint_tau0, r.tau0);
        rep.modes.push_back(std::move(r));
    }
    rep.joint_onset_holds = rep.all_converged;
    for (const auto& r : rep.modes)
        for (const auto& p : r.error_curve.points)
            if (p.eta > rep.joint_tau0 && !(p.err < epsilon)) rep.joint_onset_holds = false;
    return rep;
}

/// Wide table: eta, then (tau, re z, im z, re phi, im phi) per mode.
inline void write_multitrajectory_table(std::ostream& os, const MultiTrajectory& traj) {
    os << "eta";
    for (std::size_t m = 0; m < traj.modes.size(); ++m)
        for (const char* col : {"tau", "re_z", "im_z", "re_phi", "im_phi"}) os << '\t' << col << '_' << m;
    os << '\n';
    for (const auto& s : traj.samples) {
        os << format_double(s.eta);
        for (const auto& ms : s.modes)
            os << '\t' << format_double(ms.tau) << '\t' << format_double(ms.z.real()) << '\t'
               << format_double(ms.z.imag()) << '\t' << format_double(ms.phi.real()) << '\t'
               << format_double(ms.phi.imag());
        os << '\n';
    }
}

}  // namespace bohmfreeze
