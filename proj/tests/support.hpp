#pragma once

// Hand-rolled generators for property tests. Every generator is seeded so a
// failing case can be replayed from the printed seed.

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <vector>

#include "bohmfreeze/mode_state.hpp"

namespace testing_support {

using complex = std::complex<double>;

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    // Negative conformal time with |eta| log-uniform in [lo, hi].
    double eta(double lo = 1e-6, double hi = 10.0) { return -log_uniform(lo, hi); }
    double k(double lo = 0.01, double hi = 100.0) { return log_uniform(lo, hi); }
    complex point(double radius) {
        return {uniform(-radius, radius), uniform(-radius, radius)};
    }
    complex unit_complex() { return std::polar(1.0, uniform(0.0, 2.0 * std::acos(-1.0))); }

    // Random normalized superposition of up to `levels` low-lying levels.
    bohmfreeze::ModeState state(double k, int max_level = 3, int n_basis = 16) {
        std::vector<bohmfreeze::LevelAmplitude> amps;
        const int count = integer(2, 4);
        for (int i = 0; i < count; ++i)
            amps.push_back({integer(0, max_level), integer(0, max_level), uniform(0.3, 1.0) * unit_complex()});
        return bohmfreeze::level_superposition(k, n_basis, amps);
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }
inline double rel_diff(complex a, complex b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace testing_support
