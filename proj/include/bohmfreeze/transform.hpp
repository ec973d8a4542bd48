#pragma once

// Closed-form transform functions mapping a de Sitter field mode onto a
// non-singular 2D harmonic oscillator:
//
//   Phi(z, eta) = e^{alpha} e^{i beta |z|^2} Psi(gamma z, eta),   z = y / gamma
//
// with omega = k, gamma = -sqrt(1 + k^2 eta^2)/(k eta), beta = -1/eta,
// alpha = log(gamma) + alpha0.

#include <algorithm>
#include <cmath>
#include <complex>

#include "bohmfreeze/coords.hpp"

namespace bohmfreeze {

struct TransformParams {
    double k = 1.0;
    double alpha0 = 0.0;

    double omega() const { return k; }
};

namespace detail {
inline void require_patch(double eta) {
    if (!(eta < 0.0)) throw DomainError("conformal time must be negative");
}
}  // namespace detail

inline double gamma(double eta, const TransformParams& p) {
    detail::require_patch(eta);
    detail::require_positive_k(p.k);
    const double kx = p.k * eta;
    return -std::sqrt(1.0 + kx * kx) / kx;
}

inline double beta(double eta) {
    detail::require_patch(eta);
    return -1.0 / eta;
}

inline double alpha(double eta, const TransformParams& p) {
    return std::log(gamma(eta, p)) + p.alpha0;
}

// Analytic derivatives, each differentiated from its own closed form.
inline double gamma_prime(double eta, const TransformParams& p) {
    detail::require_patch(eta);
    const double kx = p.k * eta;
    return 1.0 / (p.k * eta * eta * std::sqrt(1.0 + kx * kx));
}

inline double beta_prime(double eta) {
    detail::require_patch(eta);
    return 1.0 / (eta * eta);
}

inline double alpha_prime(double eta, const TransformParams& p) {
    detail::require_patch(eta);
    const double kx = p.k * eta;
    // d/deta [ 0.5 log(1 + k^2 eta^2) - log(-k eta) ] = k^2 eta/(1 + k^2 eta^2) - 1/eta,
    // combined over one denominator so large |k eta| does not cancel.
    return -1.0 / (eta * (1.0 + kx * kx));
}

/// Residuals of the three transform conditions, each divided by the sum of
/// the magnitudes of its terms so the check is scale-free across (eta, k).
struct OdeResiduals {
    double r1 = 0.0;  // alpha' - gamma'/gamma
    double r2 = 0.0;  // gamma'/gamma + beta/gamma^2 + 1/eta
    double r3 = 0.0;  // -beta' + k^2 gamma^2 - beta^2/gamma^2 - omega^2/gamma^2
    double scale1 = 0.0;
    double scale2 = 0.0;
    double scale3 = 0.0;

    double max_abs() const { return std::max({std::abs(r1), std::abs(r2), std::abs(r3)}); }
};

inline OdeResiduals ode_residuals(double eta, const TransformParams& p) {
    const double g = gamma(eta, p);
    const double gp = gamma_prime(eta, p);
    const double b = beta(eta);
    const double bp = beta_prime(eta);
    const double ap = alpha_prime(eta, p);
    const double w = p.omega();
    const double g2 = g * g;

    OdeResiduals r;
    const double t1[] = {ap, -gp / g};
    const double t2[] = {gp / g, b / g2, 1.0 / eta};
    const double t3[] = {-bp, p.k * p.k * g2, -b * b / g2, -w * w / g2};
    auto fill = [](const auto& terms, double& res, double& scale) {
        double sum = 0.0, mag = 0.0;
        for (double t : terms) {
            sum += t;
            mag += std::abs(t);
        }
        scale = mag;
        res = mag > 0.0 ? sum / mag : 0.0;
    };
    fill(t1, r.r1, r.scale1);
    fill(t2, r.r2, r.scale2);
    fill(t3, r.r3, r.scale3);
    return r;
}

/// Psi value at y = gamma z  ->  Phi value at z.
inline complex phase_rescale_forward(complex psi_value, complex z, double eta, const TransformParams& p) {
    const double a = alpha(eta, p);
    const double b = beta(eta);
    return std::exp(a) * std::polar(1.0, b * std::norm(z)) * psi_value;
}

/// Phi value at z  ->  Psi value at y = gamma z.
inline complex phase_rescale_inverse(complex phi_value, complex z, double eta, const TransformParams& p) {
    const double a = alpha(eta, p);
    const double b = beta(eta);
    return std::exp(-a) * std::polar(1.0, -b * std::norm(z)) * phi_value;
}

}  // namespace bohmfreeze
