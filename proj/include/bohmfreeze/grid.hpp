#pragma once

// Reference solver for the untransformed mode equation in the y-plane,
//
//   i dPsi/deta = [ -1/4 (d_x^2 + d_y^2) + k^2 |y|^2 + (i/eta)(1 + y . grad) ] Psi,
//
// used only as an independent cross-check of the oscillator picture.
// Strang splitting: the dilation flow Psi(y) -> lambda Psi(lambda y) with
// lambda = eta_b / eta_a is exact on a co-moving grid (values scale by lambda,
// the grid extent by 1/lambda); the potential is a pointwise phase; the
// kinetic term is diagonal in Fourier space.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "bohmfreeze/coords.hpp"
#include "bohmfreeze/errors.hpp"
#include "bohmfreeze/mode_state.hpp"
#include "bohmfreeze/transform.hpp"

namespace bohmfreeze {

struct GridState {
    std::vector<complex> values;  // row-major, index ix * n + iy
    double extent = 1.0;          // half-width L of the periodic box [-L, L)
    int n = 256;
    double eta = -1.0;

    double spacing() const { return 2.0 * extent / n; }
    double coord(int i) const { return -extent + i * spacing(); }
    complex point(int ix, int iy) const { return {coord(ix), coord(iy)}; }
    complex& at(int ix, int iy) { return values[static_cast<std::size_t>(ix) * n + iy]; }
    const complex& at(int ix, int iy) const { return values[static_cast<std::size_t>(ix) * n + iy]; }
};

inline GridState make_grid(int n, double extent, double eta, const std::function<complex(complex)>& f) {
    GridState g;
    g.n = n;
    g.extent = extent;
    g.eta = eta;
    g.values.resize(static_cast<std::size_t>(n) * n);
    for (int ix = 0; ix < n; ++ix)
        for (int iy = 0; iy < n; ++iy) g.at(ix, iy) = f(g.point(ix, iy));
    return g;
}

/// Riemann sum of |Psi|^2 on the periodic grid (the trapezoid rule for periodic data).
inline double grid_norm(const GridState& g) {
    double s = 0.0;
    for (const auto& v : g.values) s += std::norm(v);
    return s * g.spacing() * g.spacing();
}

/// Largest amplitude on the box boundary relative to the largest amplitude overall.
inline double boundary_ratio(const GridState& g) {
    double edge = 0.0, peak = 0.0;
    for (int ix = 0; ix < g.n; ++ix)
        for (int iy = 0; iy < g.n; ++iy) {
            const double a = std::abs(g.at(ix, iy));
            peak = std::max(peak, a);
            if (ix == 0 || iy == 0 || ix == g.n - 1 || iy == g.n - 1) edge = std::max(edge, a);
        }
    return peak > 0.0 ? edge / peak : 0.0;
}

/// L2 distance between the grid and a reference function sampled on it.
inline double l2_difference(const GridState& g, const std::function<complex(complex)>& f) {
    double s = 0.0;
    for (int ix = 0; ix < g.n; ++ix)
        for (int iy = 0; iy < g.n; ++iy) s += std::norm(g.at(ix, iy) - f(g.point(ix, iy)));
    return std::sqrt(s * g.spacing() * g.spacing());
}

/// Psi(y, eta) = e^{-alpha} e^{-i beta |z|^2} Phi(z, tau(eta)), z = y / gamma.
inline complex psi_from_phi(ModeEvaluator& ev, complex y, double eta, const TransformParams& p) {
    const double g = gamma(eta, p);
    const complex z = y / g;
    return phase_rescale_inverse(ev.value(z, tau_of_eta(eta, p.k)), z, eta, p);
}

/// Samples the y-picture wave function of an oscillator-picture state.
inline GridState grid_from_mode_state(const ModeState& state, double eta, int n, double extent) {
    ModeEvaluator ev(state);
    const TransformParams p{state.k};
    return make_grid(n, extent, eta, [&](complex y) { return psi_from_phi(ev, y, eta, p); });
}

/// Default box: six turning radii of the top occupied level, mapped to y.
inline double default_grid_extent(const ModeState& state, double eta) {
    return 6.0 * turning_radius_of_top_occupied(state) * gamma(eta, TransformParams{state.k});
}

struct ReferenceOptions {
    bool dilation = true;  // false: drop the (i/eta) term (free-limit checks)
    double max_norm_drift = 1e-6;
};

class EtaReferenceSolver {
public:
    explicit EtaReferenceSolver(int n) : n_(n) {
        buffer_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n * n));
        std::lock_guard lock(plan_mutex());
        forward_ = fftw_plan_dft_2d(n, n, buffer_, buffer_, FFTW_FORWARD, FFTW_ESTIMATE);
        backward_ = fftw_plan_dft_2d(n, n, buffer_, buffer_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~EtaReferenceSolver() {
        std::lock_guard lock(plan_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
        fftw_free(buffer_);
    }
    EtaReferenceSolver(const EtaReferenceSolver&) = delete;
    EtaReferenceSolver& operator=(const EtaReferenceSolver&) = delete;

    GridState step(const GridState& in, double d_eta, double k, const ReferenceOptions& opt = {}) {
        if (in.n != n_) throw DomainError("grid size does not match solver");
        const double eta_a = in.eta;
        const double eta_b = in.eta + d_eta;
        if (opt.dilation && !(eta_a < 0.0 && eta_b < 0.0))
            throw DomainError("reference evolution must stay on the patch eta < 0");
        const double eta_mid = eta_a + 0.5 * d_eta;
        const double norm_before = grid_norm(in);

        GridState g = in;
        if (opt.dilation) dilate(g, eta_mid / eta_a);
        potential(g, k, 0.5 * d_eta);
        kinetic(g, d_eta);
        potential(g, k, 0.5 * d_eta);
        if (opt.dilation) dilate(g, eta_b / eta_mid);
        g.eta = eta_b;

        const double drift = std::abs(grid_norm(g) - norm_before);
        if (drift > opt.max_norm_drift * std::max(norm_before, 1e-300))
            throw ConvergenceError("reference step rejected: norm drift exceeds tolerance");
        return g;
    }

private:
    static std::mutex& plan_mutex() {
        static std::mutex m;
        return m;
    }

    static void dilate(GridState& g, double lambda) {
        for (auto& v : g.values) v *= lambda;
        g.extent /= lambda;
    }

    static void potential(GridState& g, double k, double h) {
        if (k == 0.0) return;
        for (int ix = 0; ix < g.n; ++ix)
            for (int iy = 0; iy < g.n; ++iy) g.at(ix, iy) *= std::polar(1.0, -k * k * std::norm(g.point(ix, iy)) * h);
    }

    void kinetic(GridState& g, double h) {
        auto* data = reinterpret_cast<complex*>(buffer_);
        std::copy(g.values.begin(), g.values.end(), data);
        fftw_execute(forward_);
        const double dp = 2.0 * std::numbers::pi / (g.n * g.spacing());
        const double inv = 1.0 / (static_cast<double>(g.n) * g.n);
        for (int ix = 0; ix < g.n; ++ix) {
            const double px = dp * (ix < g.n / 2 ? ix : ix - g.n);
            for (int iy = 0; iy < g.n; ++iy) {
                const double py = dp * (iy < g.n / 2 ? iy : iy - g.n);
                data[static_cast<std::size_t>(ix) * g.n + iy] *= std::polar(inv, -0.25 * (px * px + py * py) * h);
            }
        }
        fftw_execute(backward_);
        std::copy(data, data + g.values.size(), g.values.begin());
    }

    int n_;
    fftw_complex* buffer_ = nullptr;
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
};

/// One reference step; reuses a per-thread solver for the grid size.
inline GridState evolve_eta_reference(const GridState& grid, double d_eta, double k, const ReferenceOptions& opt = {}) {
    thread_local std::map<int, std::unique_ptr<EtaReferenceSolver>> solvers;
    auto& solver = solvers[grid.n];
    if (!solver) solver = std::make_unique<EtaReferenceSolver>(grid.n);
    return solver->step(grid, d_eta, k, opt);
}

/// Evolves a grid over [eta, eta_target] in equal steps no larger than max_step.
inline GridState evolve_eta_reference_to(GridState grid, double eta_target, double k, double max_step,
                                         const ReferenceOptions& opt = {}) {
    const double span = eta_target - grid.eta;
    const long steps = std::max<long>(1, static_cast<long>(std::ceil(std::abs(span) / max_step)));
    const double h = span / static_cast<double>(steps);
    const double eta0 = grid.eta;
    for (long i = 0; i < steps; ++i) {
        grid = evolve_eta_reference(grid, h, k, opt);
        grid.eta = eta0 + h * static_cast<double>(i + 1);
    }
    grid.eta = eta_target;
    return grid;
}

}  // namespace bohmfreeze
