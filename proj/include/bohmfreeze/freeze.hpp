#pragma once

// Late-time freezing analysis: the limit c_k of phi_k, the relative error of
// the envelope c_k sqrt(1 + k^2 eta^2), the onset eta0 after which the error
// stays below a target epsilon, and a scan of those quantities across k.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bohmfreeze/bohm.hpp"
#include "bohmfreeze/coords.hpp"
#include "bohmfreeze/format.hpp"
#include "bohmfreeze/parallel.hpp"

namespace bohmfreeze {

/// Deep-freeze endpoint: trajectories should reach |eta| <= this / k.
inline constexpr double deep_freeze_scale = 1e-4;
inline constexpr double velocity_roundoff_floor = 1e-12;

struct LimitEstimate {
    complex c_k{};
    complex z_final{};
    double refinement_change = 0.0;  // relative change between the last two dyadic endpoints
    bool converged = false;
};

/// c_k = H z(tau_final) / k, checked against the estimate at twice the
/// endpoint |eta|. Requires the trajectory to end in the deep-freeze regime.
inline LimitEstimate extract_limit(const Trajectory& traj, double epsilon) {
    if (traj.samples.size() < 2) throw DomainError("trajectory has too few samples");
    const auto& last = traj.samples.back();
    if (std::abs(last.eta) > deep_freeze_scale / traj.k * (1.0 + 1e-12))
        throw DomainError("trajectory does not reach the deep-freeze regime |eta| <= 1e-4/k");

    LimitEstimate est;
    est.z_final = last.z;
    est.c_k = traj.H * last.z / traj.k;

    // Latest sample at (or nearest to) twice the final |eta|.
    const double target = 2.0 * last.eta;
    const TrajectorySample* ref = nullptr;
    for (const auto& s : traj.samples)
        if (!ref || std::abs(s.eta - target) < std::abs(ref->eta - target)) ref = &s;
    const complex c_ref = ref->phi / std::sqrt(1.0 + (traj.k * ref->eta) * (traj.k * ref->eta));
    const double scale = std::abs(est.c_k);
    est.refinement_change = scale > 0.0 ? std::abs(c_ref - est.c_k) / scale : std::abs(c_ref - est.c_k);
    est.converged = traj.completed() && est.refinement_change < epsilon / 10.0;
    return est;
}

struct ErrorPoint {
    double eta = 0.0;
    double err = 0.0;
};

struct ErrorCurve {
    std::vector<ErrorPoint> points;
    bool absolute = false;  // true when c_k = 0 and |phi - 0| is reported instead
};

/// err(eta) = |phi(eta) - c sqrt(1 + k^2 eta^2)| / |c sqrt(1 + k^2 eta^2)|.
inline ErrorCurve relative_error_curve(const Trajectory& traj, complex c_k) {
    ErrorCurve curve;
    curve.absolute = (c_k == complex{});
    curve.points.reserve(traj.samples.size());
    for (const auto& s : traj.samples) {
        const double envelope = std::sqrt(1.0 + (traj.k * s.eta) * (traj.k * s.eta));
        const complex asymptote = c_k * envelope;
        const double dev = std::abs(s.phi - asymptote);
        curve.points.push_back({s.eta, curve.absolute ? dev : dev / std::abs(asymptote)});
    }
    std::sort(curve.points.begin(), curve.points.end(),
              [](const ErrorPoint& a, const ErrorPoint& b) { return a.eta < b.eta; });
    return curve;
}

enum class OnsetKind { attained, always, not_attained };

inline const char* to_string(OnsetKind k) {
    switch (k) {
        case OnsetKind::attained: return "attained";
        case OnsetKind::always: return "always";
        case OnsetKind::not_attained: return "not_attained";
    }
    return "unknown";
}

struct Onset {
    OnsetKind kind = OnsetKind::not_attained;
    double eta0 = std::numeric_limits<double>::quiet_NaN();  // -inf for always
};

/// eta0 is the latest sampled eta with err >= epsilon, so err < epsilon at
/// every sample beyond it.
inline Onset find_onset(const ErrorCurve& curve, double epsilon) {
    Onset onset;
    if (curve.points.empty()) return onset;
    if (curve.points.back().err >= epsilon) return onset;
    for (auto it = curve.points.rbegin(); it != curve.points.rend(); ++it) {
        if (it->err >= epsilon) {
            onset.kind = OnsetKind::attained;
            onset.eta0 = it->eta;
            return onset;
        }
    }
    onset.kind = OnsetKind::always;
    onset.eta0 = -std::numeric_limits<double>::infinity();
    return onset;
}

struct FreezeReport {
    double k = 1.0;
    double H = 1.0;
    complex c_k{};
    double epsilon = 0.01;
    Onset onset;
    double t0 = std::numeric_limits<double>::quiet_NaN();
    double tau0 = std::numeric_limits<double>::quiet_NaN();
    ErrorCurve error_curve;
    double assumption_C = 0.0;  // sup |dz/dtau| on -1 < tau < 0
    double refinement_change = 0.0;
    double latest_consistency = 0.0;  // |phi(latest) - c_k| / |c_k|
    bool converged = false;
    std::string diagnostic;
};

inline FreezeReport analyze_freeze(const Trajectory& traj, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("epsilon must lie in (0, 1)");
    FreezeReport r;
    r.k = traj.k;
    r.H = traj.H;
    r.epsilon = epsilon;
    r.assumption_C = traj.diagnostics.max_speed_unit_window;
    if (!traj.completed()) {
        r.diagnostic = std::string("trajectory aborted: ") + to_string(traj.diagnostics.status) + ": " +
                       traj.diagnostics.message;
        return r;
    }
    const auto lim = extract_limit(traj, epsilon);
    r.c_k = lim.c_k;
    r.refinement_change = lim.refinement_change;
    r.error_curve = relative_error_curve(traj, lim.c_k);
    r.onset = find_onset(r.error_curve, epsilon);
    const double c_abs = std::abs(lim.c_k);
    const auto& last = traj.samples.back();
    r.latest_consistency = c_abs > 0.0 ? std::abs(last.phi - lim.c_k) / c_abs : std::abs(last.phi);
    if (r.onset.kind == OnsetKind::attained) {
        r.t0 = eta_to_t(r.onset.eta0, Cosmology{traj.H});
        r.tau0 = tau_of_eta(r.onset.eta0, traj.k);
    } else if (r.onset.kind == OnsetKind::always) {
        r.t0 = -std::numeric_limits<double>::infinity();
        r.tau0 = -std::numeric_limits<double>::infinity();
    }
    r.converged = lim.converged && r.onset.kind != OnsetKind::not_attained &&
                  r.latest_consistency < epsilon / 10.0;
    if (!lim.converged) r.diagnostic = "limit estimate not converged under endpoint refinement";
    else if (r.onset.kind == OnsetKind::not_attained) r.diagnostic = "error never settles below epsilon";
    else if (!(r.latest_consistency < epsilon / 10.0)) r.diagnostic = "latest sample inconsistent with c_k";
    if (c_abs == 0.0) r.diagnostic += (r.diagnostic.empty() ? "" : "; ") + std::string("c_k = 0: absolute errors reported");
    return r;
}

// ---------------------------------------------------------------------------
// k-independence scan

struct ScanOptions {
    TrajectoryOptions trajectory{};
    double tau_start = -2.0;  // every mode starts at this mode time, covering -1 < tau < 0
    double c_band = 10.0;     // acceptable magnitude of the velocity bound C
    double spread_band = 10.0;
    double tau0_floor = -1.0;
};

struct ScanReport {
    std::vector<FreezeReport> reports;  // sorted by k
    std::vector<complex> z0;
    double c_max = 0.0;
    double c_min = 0.0;
    double c_spread = 1.0;
    double common_tau0 = -std::numeric_limits<double>::infinity();
    bool all_converged = false;
    bool c_finite = false;
    bool c_within_band = false;
    bool spread_ok = false;
    bool onsets_ok = false;
    bool common_onset_holds = false;
    std::vector<std::string> diagnostics;

    bool k_independent() const {
        return all_converged && c_finite && c_within_band && spread_ok && onsets_ok && common_onset_holds;
    }
};

using StateFamily = std::function<ModeState(double k)>;
using StartFamily = std::function<complex(double k, const ModeState& state_at_start)>;

/// Runs the full freeze pipeline for every k, then measures the velocity bound
/// C per k, its spread across k, the per-k onsets tau0, and whether the latest
/// onset works as a common eta0 for all modes.
inline ScanReport scan_k(const StateFamily& family, const StartFamily& z0_family, std::span<const double> k_grid,
                         double epsilon, const ScanOptions& opt = {}) {
    if (k_grid.size() < 2) throw DomainError("k grid needs at least two values");
    std::vector<double> ks(k_grid.begin(), k_grid.end());
    std::sort(ks.begin(), ks.end());
    if (ks.front() <= 0.0) throw DomainError("zero mode is degenerate");
    if (ks.back() / ks.front() < 100.0 * (1.0 - 1e-12)) throw DomainError("k grid must span at least two decades");

    ScanReport scan;
    scan.reports.resize(ks.size());
    scan.z0.resize(ks.size());
    parallel_for(ks.size(), [&](std::size_t i) {
        const double k = ks[i];
        const double eta_start = eta_of_tau(opt.tau_start, k);
        const double eta_end = -deep_freeze_scale / k;
        const ModeState start = evolve_to(family(k), tau_of_eta(eta_start, k));
        const complex z0 = z0_family(k, start);
        scan.z0[i] = z0;
        const auto traj = integrate_trajectory(start, z0, eta_start, eta_end, opt.trajectory);
        scan.reports[i] = analyze_freeze(traj, epsilon);
    });

    scan.all_converged = true;
    scan.c_finite = true;
    scan.onsets_ok = true;
    scan.c_max = 0.0;
    scan.c_min = std::numeric_limits<double>::infinity();
    for (const auto& r : scan.reports) {
        if (!r.converged) {
            scan.all_converged = false;
            scan.diagnostics.push_back("k=" + format_double(r.k) + ": " + r.diagnostic);
        }
        if (!std::isfinite(r.assumption_C)) scan.c_finite = false;
        scan.c_max = std::max(scan.c_max, r.assumption_C);
        scan.c_min = std::min(scan.c_min, r.assumption_C);
        const bool onset_ok = r.onset.kind == OnsetKind::always ||
                              (r.onset.kind == OnsetKind::attained && r.tau0 > opt.tau0_floor && r.tau0 < 0.0);
        if (!onset_ok) {
            scan.onsets_ok = false;
            scan.diagnostics.push_back("k=" + format_double(r.k) + ": onset tau0 = " + format_double(r.tau0) +
                                       " outside (" + format_double(opt.tau0_floor) + ", 0)");
        }
        if (r.onset.kind == OnsetKind::attained) scan.common_tau0 = std::max(scan.common_tau0, r.tau0);
    }
    // Below the floor the velocity field is zero up to roundoff.
    scan.c_spread = scan.c_max < velocity_roundoff_floor ? 1.0 : scan.c_max / scan.c_min;
    scan.c_within_band = scan.c_max < opt.c_band;
    scan.spread_ok = scan.c_spread < opt.spread_band;
    if (!scan.spread_ok)
        scan.diagnostics.push_back("velocity bound spread across k = " + format_double(scan.c_spread));

    // With eta0 = common tau0, every mode must satisfy err < epsilon for eta > eta0.
    scan.common_onset_holds = scan.all_converged;
    for (const auto& r : scan.reports)
        for (const auto& p : r.error_curve.points)
            if (p.eta > scan.common_tau0 && !(p.err < epsilon)) scan.common_onset_holds = false;
    if (!scan.common_onset_holds) scan.diagnostics.push_back("common onset eta0 = tau0 does not hold for every k");
    return scan;
}

// ---------------------------------------------------------------------------
// Export

inline void write_error_curve_table(std::ostream& os, const std::vector<FreezeReport>& reports) {
    os << "k\teta\terr\n";
    for (const auto& r : reports)
        for (const auto& p : r.error_curve.points)
            os << format_double(r.k) << '\t' << format_double(p.eta) << '\t' << format_double(p.err) << '\n';
}

}  // namespace bohmfreeze
