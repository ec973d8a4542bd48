#pragma once

// Dormand-Prince 5(4) embedded Runge-Kutta with error-per-step control,
// exact landing on requested output times, and step halving when the
// right-hand side reports a node of the guiding wave function.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "bohmfreeze/errors.hpp"

namespace bohmfreeze {

struct Rk45Options {
    double rtol = 1e-9;
    double atol = 1e-9;
    double initial_step = 0.0;  // 0: pick automatically
    double max_step = std::numeric_limits<double>::infinity();
    long max_steps = 2'000'000;
    int max_node_retries = 40;
    double safety = 0.9;
};

enum class IntegrationStatus { completed, node_abort, step_underflow, max_steps };

inline const char* to_string(IntegrationStatus s) {
    switch (s) {
        case IntegrationStatus::completed: return "completed";
        case IntegrationStatus::node_abort: return "node_abort";
        case IntegrationStatus::step_underflow: return "step_underflow";
        case IntegrationStatus::max_steps: return "max_steps";
    }
    return "unknown";
}

struct Rk45Stats {
    long accepted = 0;
    long rejected = 0;
    long node_retries = 0;
    IntegrationStatus status = IntegrationStatus::completed;
    std::string message;
    double t_reached = 0.0;
};

namespace dopri {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
}  // namespace dopri

/// Integrates y' = rhs(t, y) from t0 through each entry of `outputs` (which
/// must be monotone in the direction of integration; the last entry is the
/// end point). on_output(i, t, y) fires at each output time, on_step(t, y, f)
/// after each accepted step. rhs may throw NodeProximityError.
template <std::size_t N, class Rhs, class OnOutput, class OnStep>
Rk45Stats integrate_dopri5(Rhs&& rhs, std::array<double, N>& y, double t0, std::span<const double> outputs,
                           const Rk45Options& opt, OnOutput&& on_output, OnStep&& on_step) {
    using Vec = std::array<double, N>;
    using namespace dopri;
    Rk45Stats stats;
    stats.t_reached = t0;
    if (outputs.empty()) return stats;

    const double t_end = outputs.back();
    const double dir = t_end >= t0 ? 1.0 : -1.0;
    double t = t0;

    auto scaled_norm = [&](const Vec& v, const Vec& ya, const Vec& yb) {
        double worst = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double sc = opt.atol + opt.rtol * std::max(std::abs(ya[i]), std::abs(yb[i]));
            worst = std::max(worst, std::abs(v[i]) / sc);
        }
        return worst;
    };

    Vec k1{}, k2{}, k3{}, k4{}, k5{}, k6{}, k7{}, tmp{}, y_new{}, err{};
    try {
        rhs(t, y, k1);
    } catch (const NodeProximityError& e) {
        stats.status = IntegrationStatus::node_abort;
        stats.message = std::string("initial point: ") + e.what();
        return stats;
    }

    std::size_t next_out = 0;
    while (next_out < outputs.size() && (outputs[next_out] - t) * dir <= 0.0) {
        on_output(next_out, t, y);
        ++next_out;
    }
    if (next_out == outputs.size()) return stats;

    double h = opt.initial_step;
    if (h <= 0.0) {
        const double d0 = scaled_norm(y, y, y);
        const double d1 = scaled_norm(k1, y, y);
        h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h = std::min(h, std::abs(t_end - t));
    }
    h = std::min(h, opt.max_step);

    int node_retries_in_row = 0;
    while (next_out < outputs.size()) {
        if (stats.accepted + stats.rejected >= opt.max_steps) {
            stats.status = IntegrationStatus::max_steps;
            stats.message = "step budget exhausted";
            stats.t_reached = t;
            return stats;
        }
        const double target = outputs[next_out];
        bool lands = false;
        double step = h;
        if (step >= std::abs(target - t)) {
            step = std::abs(target - t);
            lands = true;
        }
        const double hs = dir * step;

        bool node_hit = false;
        try {
            for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + hs * a21 * k1[i];
            rhs(t + c2 * hs, tmp, k2);
            for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + hs * (a31 * k1[i] + a32 * k2[i]);
            rhs(t + c3 * hs, tmp, k3);
            for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + hs * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
            rhs(t + c4 * hs, tmp, k4);
            for (std::size_t i = 0; i < N; ++i)
                tmp[i] = y[i] + hs * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
            rhs(t + c5 * hs, tmp, k5);
            for (std::size_t i = 0; i < N; ++i)
                tmp[i] = y[i] + hs * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
            rhs(t + hs, tmp, k6);
            for (std::size_t i = 0; i < N; ++i)
                y_new[i] = y[i] + hs * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
            rhs(lands ? target : t + hs, y_new, k7);
        } catch (const NodeProximityError& e) {
            node_hit = true;
            ++stats.node_retries;
            if (++node_retries_in_row > opt.max_node_retries) {
                stats.status = IntegrationStatus::node_abort;
                stats.message = e.what();
                stats.t_reached = t;
                return stats;
            }
        }
        if (node_hit) {
            h = 0.5 * step;
            continue;
        }

        for (std::size_t i = 0; i < N; ++i)
            err[i] = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        const double en = scaled_norm(err, y, y_new);
        const double factor = en == 0.0 ? 5.0 : std::clamp(opt.safety * std::pow(en, -0.2), 0.2, 5.0);

        if (en <= 1.0) {
            t = lands ? target : t + hs;
            y = y_new;
            k1 = k7;
            ++stats.accepted;
            node_retries_in_row = 0;
            on_step(t, y, k1);
            while (next_out < outputs.size() && (outputs[next_out] - t) * dir <= 0.0) {
                on_output(next_out, t, y);
                ++next_out;
            }
            // Clipping to an output time must not shrink the controller's step.
            const double proposal = step * factor;
            h = std::min(opt.max_step, lands ? std::max(h, proposal) : proposal);
        } else {
            ++stats.rejected;
            h = step * factor;
            const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1e-300);
            if (h < floor) {
                stats.status = IntegrationStatus::step_underflow;
                stats.message = "step size underflow: tolerance cannot be met";
                stats.t_reached = t;
                return stats;
            }
        }
    }
    stats.t_reached = t;
    return stats;
}

}  // namespace bohmfreeze
