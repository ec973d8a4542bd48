#pragma once

// Time and field-variable coordinates for one field mode on the expanding
// de Sitter patch. Conformal time eta < 0 is the master clock; cosmic time t
// and the per-mode clock tau are views of it.

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>

#include "bohmfreeze/errors.hpp"

namespace bohmfreeze {

using complex = std::complex<double>;

struct Cosmology {
    double H = 1.0;  // Hubble constant, > 0

    void validate() const {
        if (!(H > 0.0) || !std::isfinite(H))
            throw DomainError("Hubble constant must be finite and positive");
    }
};

enum class TimeCoordinate { cosmic, conformal, mode_tau };

struct TimePoint {
    TimeCoordinate coordinate = TimeCoordinate::conformal;
    double value = -1.0;
    std::optional<double> k;  // required for mode_tau
};

/// True for the k = 0 mode, which has no oscillator potential and no transform.
inline bool mode_is_degenerate(double k) { return k == 0.0; }

inline double t_to_eta(double t, const Cosmology& cosmo) {
    return -std::exp(-cosmo.H * t) / cosmo.H;
}

inline double eta_to_t(double eta, const Cosmology& cosmo) {
    if (!(eta < 0.0))
        throw DomainError("conformal time must be negative (eta = " + std::to_string(eta) + ")");
    return -std::log(-cosmo.H * eta) / cosmo.H;
}

namespace detail {

// x - arctan(x), odd in x. Power series near the origin where the direct
// difference cancels catastrophically (the result is ~x^3/3).
inline double x_minus_arctan(double x) {
    if (std::abs(x) < 0.25) {
        const double x2 = x * x;
        double power = x * x2;  // x^3
        double sum = 0.0;
        double sign = 1.0;
        for (int n = 1; n < 40; ++n) {
            const double term = sign * power / (2 * n + 1);
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
            power *= x2;
            sign = -sign;
        }
        return sum;
    }
    return x - std::atan(x);
}

inline void require_positive_k(double k) {
    if (!(k > 0.0) || !std::isfinite(k))
        throw DomainError("wave number must be finite and positive (k = " + std::to_string(k) + ")");
}

}  // namespace detail

/// Mode time on the whole real eta line; the closed form is odd in eta and
/// smooth through eta = 0, which is how evolution continues past the end of
/// the conformal patch.
inline double tau_of_eta_extended(double eta, double k) {
    detail::require_positive_k(k);
    return detail::x_minus_arctan(k * eta) / k;
}

/// tau = eta - arctan(k eta)/k on the physical patch eta < 0. The k = 0 mode
/// is degenerate and reported as tau = 0 (see mode_is_degenerate).
inline double tau_of_eta(double eta, double k) {
    if (!(eta < 0.0)) throw DomainError("conformal time must be negative");
    if (k < 0.0) throw DomainError("wave number must be non-negative");
    if (mode_is_degenerate(k)) return 0.0;
    return tau_of_eta_extended(eta, k);
}

/// dtau/deta = gamma^{-2} = k^2 eta^2 / (1 + k^2 eta^2), always in (0, 1).
inline double dtau_deta(double eta, double k) {
    if (!(eta < 0.0)) throw DomainError("conformal time must be negative");
    detail::require_positive_k(k);
    const double x2 = (k * eta) * (k * eta);
    return x2 / (1.0 + x2);
}

/// Inverse of tau_of_eta_extended. Safeguarded Newton on x - arctan(x) = k tau,
/// seeded with the cube-root asymptote near the origin.
inline double eta_of_tau(double tau, double k, double rel_tol = 1e-14) {
    detail::require_positive_k(k);
    const double s = std::abs(k * tau);
    if (s == 0.0) return 0.0;
    double lo = 0.0;
    double hi = s + std::numbers::pi;  // g(hi) > s since arctan < pi/2
    double x = std::min(std::cbrt(3.0 * s), s + 0.5 * std::numbers::pi);
    for (int iter = 0; iter < 200; ++iter) {
        const double g = detail::x_minus_arctan(x) - s;
        if (g > 0.0) hi = x; else lo = x;
        const double dg = x * x / (1.0 + x * x);
        double next = dg > 0.0 ? x - g / dg : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double step = std::abs(next - x);
        x = next;
        if (step <= rel_tol * std::abs(x) || hi - lo <= rel_tol * hi) break;
    }
    const double eta = x / k;
    return tau < 0.0 ? -eta : eta;
}

inline double to_conformal(const TimePoint& p, const Cosmology& cosmo) {
    switch (p.coordinate) {
        case TimeCoordinate::conformal: return p.value;
        case TimeCoordinate::cosmic: return t_to_eta(p.value, cosmo);
        case TimeCoordinate::mode_tau:
            if (!p.k) throw DomainError("mode time requires a wave number");
            return eta_of_tau(p.value, *p.k);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

inline TimePoint convert_time(const TimePoint& p, TimeCoordinate target, const Cosmology& cosmo,
                              std::optional<double> k = std::nullopt) {
    const double eta = to_conformal(p, cosmo);
    TimePoint out{target, eta, p.k};
    switch (target) {
        case TimeCoordinate::conformal: break;
        case TimeCoordinate::cosmic: out.value = eta_to_t(eta, cosmo); break;
        case TimeCoordinate::mode_tau: {
            const auto kk = k ? k : p.k;
            if (!kk) throw DomainError("mode time requires a wave number");
            out.k = kk;
            out.value = tau_of_eta(eta, *kk);
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Field variables: phi (physical mode), y = e^{Ht} phi, z = y / gamma.

enum class Representation { phi, y, z };

struct ModeVariable {
    Representation representation = Representation::phi;
    complex value{};
    double k = 1.0;
};

/// -H eta gamma(eta) = H sqrt(1 + k^2 eta^2) / k, the factor with phi = (that) * z.
inline double phi_per_z(double eta, double k, const Cosmology& cosmo) {
    detail::require_positive_k(k);
    return cosmo.H * std::sqrt(1.0 + (k * eta) * (k * eta)) / k;
}

inline ModeVariable convert_field(const ModeVariable& v, Representation target, double eta,
                                  const Cosmology& cosmo) {
    if (!(eta < 0.0)) throw DomainError("conformal time must be negative");
    if (v.k < 0.0) throw DomainError("wave number must be non-negative");
    const bool needs_gamma = v.representation == Representation::z || target == Representation::z;
    if (needs_gamma && mode_is_degenerate(v.k))
        throw DomainError("zero mode is degenerate: the z variable is undefined");

    const double e_ht = -1.0 / (cosmo.H * eta);  // e^{Ht}
    complex y;
    switch (v.representation) {
        case Representation::phi: y = e_ht * v.value; break;
        case Representation::y: y = v.value; break;
        case Representation::z: {
            const double kx = v.k * eta;
            y = (-std::sqrt(1.0 + kx * kx) / kx) * v.value;
            break;
        }
    }
    ModeVariable out{target, y, v.k};
    switch (target) {
        case Representation::phi: out.value = y / e_ht; break;
        case Representation::y: break;
        case Representation::z: {
            const double kx = v.k * eta;
            out.value = y / (-std::sqrt(1.0 + kx * kx) / kx);
            break;
        }
    }
    return out;
}

}  // namespace bohmfreeze
