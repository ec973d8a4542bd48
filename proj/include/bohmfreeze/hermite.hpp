#pragma once

#include <cmath>
#include <numbers>
#include <span>

namespace bohmfreeze {

/// Orthonormal eigenfunctions of the 1D oscillator -1/4 d^2/dx^2 + omega^2 x^2
/// (mass 2, frequency omega, length scale (2 omega)^{-1/2}) and their x
/// derivatives, for n = 0 .. values.size()-1. Uses the stable three-term
/// recurrence on the normalised functions, so no factorials appear.
inline void oscillator_functions(double x, double omega, std::span<double> values,
                                 std::span<double> derivs) {
    const std::size_t count = values.size();
    if (count == 0) return;
    const double scale = std::sqrt(2.0 * omega);
    const double xi = scale * x;
    const double norm = std::sqrt(scale);  // (2 omega)^{1/4}

    double prev = 0.0;
    double cur = std::exp(-0.5 * xi * xi) / std::sqrt(std::sqrt(std::numbers::pi));
    for (std::size_t n = 0; n < count; ++n) {
        values[n] = norm * cur;
        if (!derivs.empty()) {
            // psi_n' = -xi psi_n + sqrt(2n) psi_{n-1}
            derivs[n] = norm * scale * (-xi * cur + std::sqrt(2.0 * static_cast<double>(n)) * prev);
        }
        const double nd = static_cast<double>(n);
        const double next = std::sqrt(2.0 / (nd + 1.0)) * xi * cur - std::sqrt(nd / (nd + 1.0)) * prev;
        prev = cur;
        cur = next;
    }
}

}  // namespace bohmfreeze
