#pragma once

// Single-mode transformed wave function Phi(z, tau) in the product eigenbasis
// of the mass-2 oscillator  H = -1/4 (d_x^2 + d_y^2) + omega^2 (x^2 + y^2),
// z = x + i y, omega = k. Level (n_x, n_y) has energy omega (n_x + n_y + 1),
// so evolution in tau is a diagonal phase and exactly unitary.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bohmfreeze/coords.hpp"
#include "bohmfreeze/errors.hpp"
#include "bohmfreeze/format.hpp"
#include "bohmfreeze/hermite.hpp"

namespace bohmfreeze {

inline constexpr int default_basis_size = 32;
inline constexpr double default_node_threshold = 1e-8;

struct ModeState {
    double k = 1.0;
    int n_basis = default_basis_size;
    double tau = 0.0;
    std::vector<complex> coeffs;  // row-major, index n_x * n_basis + n_y

    ModeState() = default;
    ModeState(double k_, int n_basis_, double tau_ = 0.0)
        : k(k_), n_basis(n_basis_), tau(tau_), coeffs(static_cast<std::size_t>(n_basis_) * n_basis_) {
        detail::require_positive_k(k_);
        if (n_basis_ < 1) throw DomainError("basis size must be at least 1");
    }

    double omega() const { return k; }

    complex& at(int nx, int ny) { return coeffs[static_cast<std::size_t>(nx) * n_basis + ny]; }
    const complex& at(int nx, int ny) const { return coeffs[static_cast<std::size_t>(nx) * n_basis + ny]; }

    double level_energy(int nx, int ny) const { return omega() * (nx + ny + 1); }
};

inline double norm_squared(const ModeState& s) {
    double sum = 0.0;
    for (const auto& c : s.coeffs) sum += std::norm(c);
    return sum;
}

inline double energy(const ModeState& s) {
    double e = 0.0;
    for (int nx = 0; nx < s.n_basis; ++nx)
        for (int ny = 0; ny < s.n_basis; ++ny) e += std::norm(s.at(nx, ny)) * s.level_energy(nx, ny);
    return e / norm_squared(s);
}

/// Probability mass in the outermost two rows/columns of the basis table.
/// Truncation is considered faithful while this stays below 1e-10.
inline double tail_mass(const ModeState& s) {
    const int edge = std::max(0, s.n_basis - 2);
    double sum = 0.0;
    for (int nx = 0; nx < s.n_basis; ++nx)
        for (int ny = 0; ny < s.n_basis; ++ny)
            if (nx >= edge || ny >= edge) sum += std::norm(s.at(nx, ny));
    return sum / norm_squared(s);
}

/// Overlap <a|b> of two states of the same mode at the same mode time.
inline complex overlap(const ModeState& a, const ModeState& b) {
    if (a.k != b.k || a.n_basis != b.n_basis) throw DomainError("overlap requires matching k and basis size");
    complex sum{};
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) sum += std::conj(a.coeffs[i]) * b.coeffs[i];
    return sum;
}

inline ModeState basis_state(double k, int n_basis, int nx, int ny, double tau = 0.0) {
    ModeState s(k, n_basis, tau);
    if (nx < 0 || ny < 0 || nx >= n_basis || ny >= n_basis) throw DomainError("level outside basis");
    s.at(nx, ny) = 1.0;
    return s;
}

/// Bunch-Davies state: the oscillator ground state, Phi ~ exp(-omega |z|^2).
inline ModeState ground_state(double k, int n_basis = default_basis_size, double tau = 0.0) {
    return basis_state(k, n_basis, 0, 0, tau);
}

inline ModeState normalized(ModeState s) {
    const double n2 = norm_squared(s);
    if (!(n2 > 0.0)) throw DomainError("cannot normalise a zero state");
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& c : s.coeffs) c *= inv;
    return s;
}

/// Normalised linear combination. All states must share k, basis size and tau.
inline ModeState superpose(const std::vector<std::pair<complex, ModeState>>& terms) {
    if (terms.empty()) throw DomainError("superposition of no states");
    const ModeState& first = terms.front().second;
    ModeState out(first.k, first.n_basis, first.tau);
    for (const auto& [amp, st] : terms) {
        if (st.k != first.k || st.n_basis != first.n_basis)
            throw DomainError("superposed states must share k and basis size");
        if (st.tau != first.tau) throw DomainError("superposed states must be given at the same mode time");
        for (std::size_t i = 0; i < out.coeffs.size(); ++i) out.coeffs[i] += amp * st.coeffs[i];
    }
    if (!(norm_squared(out) > 0.0)) throw DomainError("superposition has zero norm");
    return normalized(std::move(out));
}

/// State built from explicit (n_x, n_y, amplitude) entries, normalised.
struct LevelAmplitude {
    int nx = 0;
    int ny = 0;
    complex amplitude{1.0, 0.0};
};

inline ModeState level_superposition(double k, int n_basis, const std::vector<LevelAmplitude>& levels,
                                     double tau = 0.0) {
    std::vector<std::pair<complex, ModeState>> terms;
    terms.reserve(levels.size());
    for (const auto& l : levels) terms.emplace_back(l.amplitude, basis_state(k, n_basis, l.nx, l.ny, tau));
    return superpose(terms);
}

/// Product of 1D coherent states with complex amplitudes ax, ay (truncated).
inline ModeState coherent_state(double k, int n_basis, complex ax, complex ay, double tau = 0.0) {
    ModeState s(k, n_basis, tau);
    std::vector<complex> cx(n_basis), cy(n_basis);
    const double wx = std::exp(-0.5 * std::norm(ax));
    const double wy = std::exp(-0.5 * std::norm(ay));
    complex px = 1.0, py = 1.0;
    double fact = 1.0;
    for (int n = 0; n < n_basis; ++n) {
        if (n > 0) {
            px *= ax;
            py *= ay;
            fact *= n;
        }
        cx[n] = wx * px / std::sqrt(fact);
        cy[n] = wy * py / std::sqrt(fact);
    }
    for (int nx = 0; nx < n_basis; ++nx)
        for (int ny = 0; ny < n_basis; ++ny) s.at(nx, ny) = cx[nx] * cy[ny];
    return normalized(std::move(s));
}

/// Seeded random superposition of all levels with n_x + n_y <= max_level.
inline ModeState random_superposition(double k, int n_basis, int max_level, std::uint64_t seed,
                                      double tau = 0.0) {
    ModeState s(k, n_basis, tau);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (int nx = 0; nx < n_basis; ++nx)
        for (int ny = 0; ny < n_basis; ++ny)
            if (nx + ny <= max_level) s.at(nx, ny) = complex(normal(rng), normal(rng));
    return normalized(std::move(s));
}

/// Exact propagation by dtau (any sign; tau may cross 0).
inline ModeState evolve_tau(const ModeState& s, double dtau) {
    ModeState out = s;
    out.tau = s.tau + dtau;
    for (int nx = 0; nx < s.n_basis; ++nx)
        for (int ny = 0; ny < s.n_basis; ++ny) {
            auto& c = out.at(nx, ny);
            if (c != complex{}) c *= std::polar(1.0, -s.level_energy(nx, ny) * dtau);
        }
    return out;
}

inline ModeState evolve_to(const ModeState& s, double tau) { return evolve_tau(s, tau - s.tau); }

/// Wirtinger-form gradient of the phase: (1/2)(d_x S + i d_y S), S = Im log Phi.
/// This is the Bohmian velocity dz/dtau of the mass-2 oscillator.
inline complex phase_gradient_from(complex value, complex dx, complex dy) {
    return 0.5 * complex(std::imag(dx / value), std::imag(dy / value));
}

/// Fast repeated evaluation of Phi and its gradient at arbitrary (z, tau).
/// Only the occupied levels are stored.
class ModeEvaluator {
public:
    struct Sample {
        complex value;
        complex dx;
        complex dy;
    };

    explicit ModeEvaluator(const ModeState& s) : omega_(s.omega()), tau_ref_(s.tau) {
        double abs_sum = 0.0;
        for (int nx = 0; nx < s.n_basis; ++nx)
            for (int ny = 0; ny < s.n_basis; ++ny) {
                const complex c = s.at(nx, ny);
                if (c == complex{}) continue;
                terms_.push_back({nx, ny, c, s.level_energy(nx, ny)});
                max_nx_ = std::max(max_nx_, nx);
                max_ny_ = std::max(max_ny_, ny);
                abs_sum += std::abs(c);
            }
        // Every normalised basis function is bounded by the ground-state peak.
        amplitude_bound_ = std::sqrt(2.0 * omega_ / std::numbers::pi) * abs_sum;
        fx_.resize(max_nx_ + 1);
        dfx_.resize(max_nx_ + 1);
        fy_.resize(max_ny_ + 1);
        dfy_.resize(max_ny_ + 1);
    }

    double omega() const { return omega_; }
    double amplitude_bound() const { return amplitude_bound_; }

    /// Not thread-safe (scratch buffers); copy the evaluator per worker.
    Sample at(complex z, double tau, bool with_gradient = true) {
        oscillator_functions(z.real(), omega_, fx_, with_gradient ? std::span<double>(dfx_) : std::span<double>{});
        oscillator_functions(z.imag(), omega_, fy_, with_gradient ? std::span<double>(dfy_) : std::span<double>{});
        const double dt = tau - tau_ref_;
        Sample out{};
        for (const auto& t : terms_) {
            const complex c = t.coeff * std::polar(1.0, -t.energy * dt);
            out.value += c * (fx_[t.nx] * fy_[t.ny]);
            if (with_gradient) {
                out.dx += c * (dfx_[t.nx] * fy_[t.ny]);
                out.dy += c * (fx_[t.nx] * dfy_[t.ny]);
            }
        }
        return out;
    }

    complex value(complex z, double tau) { return at(z, tau, false).value; }

    /// dz/dtau at (z, tau); throws NodeProximityError when
    /// |Phi| < node_threshold * amplitude_bound().
    complex velocity(complex z, double tau, double node_threshold = default_node_threshold) {
        const Sample s = at(z, tau);
        const double amp = std::abs(s.value);
        const double limit = node_threshold * amplitude_bound_;
        if (!(amp >= limit))
            throw NodeProximityError("configuration is at a node of the wave function", amp, limit);
        return phase_gradient_from(s.value, s.dx, s.dy);
    }

private:
    struct Term {
        int nx;
        int ny;
        complex coeff;
        double energy;
    };
    double omega_;
    double tau_ref_;
    double amplitude_bound_ = 0.0;
    int max_nx_ = 0;
    int max_ny_ = 0;
    std::vector<Term> terms_;
    std::vector<double> fx_, dfx_, fy_, dfy_;
};

/// Position-space value Phi(z) at the state's own mode time.
inline complex evaluate(const ModeState& s, complex z) {
    ModeEvaluator ev(s);
    return ev.value(z, s.tau);
}

/// Classical turning radius of the top basis level, sqrt((2N - 1)/omega).
/// Beyond it the truncated expansion no longer resolves the state.
inline double resolvable_radius(const ModeState& s) {
    return std::sqrt((2.0 * s.n_basis - 1.0) / s.omega());
}

inline double turning_radius_of_top_occupied(const ModeState& s) {
    int top = 0;
    for (int nx = 0; nx < s.n_basis; ++nx)
        for (int ny = 0; ny < s.n_basis; ++ny)
            if (s.at(nx, ny) != complex{}) top = std::max(top, nx + ny);
    return std::sqrt((top + 1.0) / s.omega());
}

/// Bohmian velocity field dz/dtau = d_{z*} Im log Phi at the state's mode time.
inline complex phase_gradient(const ModeState& s, complex z, double node_threshold = default_node_threshold) {
    ModeEvaluator ev(s);
    return ev.velocity(z, s.tau, node_threshold);
}

// ---------------------------------------------------------------------------
// Structured-text serialisation:
//
//   # bohmfreeze mode-state v1
//   k <value>
//   n_basis <value>
//   tau <value>
//   # n_x n_y re im
//   <rows for every non-zero coefficient>

inline void write_mode_state(std::ostream& os, const ModeState& s) {
    os << "# bohmfreeze mode-state v1\n";
    os << "k " << format_double(s.k) << '\n';
    os << "n_basis " << s.n_basis << '\n';
    os << "tau " << format_double(s.tau) << '\n';
    os << "# n_x n_y re im\n";
    for (int nx = 0; nx < s.n_basis; ++nx)
        for (int ny = 0; ny < s.n_basis; ++ny) {
            const complex c = s.at(nx, ny);
            if (c == complex{}) continue;
            os << nx << ' ' << ny << ' ' << format_double(c.real()) << ' ' << format_double(c.imag()) << '\n';
        }
}

inline ModeState read_mode_state(std::istream& is) {
    std::string line;
    double k = 0.0, tau = 0.0;
    int n_basis = 0;
    bool have_k = false, have_n = false, have_tau = false;
    std::vector<std::pair<std::pair<int, int>, complex>> rows;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        if (line.rfind("k ", 0) == 0) {
            std::string key;
            ls >> key >> k;
            have_k = true;
        } else if (line.rfind("n_basis ", 0) == 0) {
            std::string key;
            ls >> key >> n_basis;
            have_n = true;
        } else if (line.rfind("tau ", 0) == 0) {
            std::string key;
            ls >> key >> tau;
            have_tau = true;
        } else {
            int nx = 0, ny = 0;
            double re = 0.0, im = 0.0;
            if (!(ls >> nx >> ny >> re >> im)) throw std::runtime_error("malformed coefficient row: " + line);
            rows.push_back({{nx, ny}, complex(re, im)});
        }
    }
    if (!have_k || !have_n || !have_tau) throw std::runtime_error("mode-state header incomplete");
    ModeState s(k, n_basis, tau);
    for (const auto& [idx, c] : rows) {
        if (idx.first < 0 || idx.second < 0 || idx.first >= n_basis || idx.second >= n_basis)
            throw std::runtime_error("coefficient index outside basis");
        s.at(idx.first, idx.second) = c;
    }
    return s;
}

}  // namespace bohmfreeze
