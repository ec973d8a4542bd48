#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "bohmfreeze/parallel.hpp"

namespace bohmfreeze {

namespace detail {

// Sum of |a_i - b_j| over a block of rows, optionally skipping the diagonal.
inline double pair_distance_sum(std::span<const std::complex<double>> a, std::span<const std::complex<double>> b,
                                std::size_t row_begin, std::size_t row_end, bool same) {
    double sum = 0.0;
    for (std::size_t i = row_begin; i < row_end; ++i) {
        const double ax = a[i].real(), ay = a[i].imag();
        const std::size_t j0 = same ? i + 1 : 0;
        double row = 0.0;
        for (std::size_t j = j0; j < b.size(); ++j) {
            const double dx = ax - b[j].real();
            const double dy = ay - b[j].imag();
            row += std::sqrt(dx * dx + dy * dy);
        }
        sum += same ? 2.0 * row : row;
    }
    return sum;
}

// Mean pairwise distance; fixed block partition keeps the summation order
// independent of the number of workers.
inline double mean_pair_distance(std::span<const std::complex<double>> a, std::span<const std::complex<double>> b,
                                 bool same) {
    constexpr std::size_t blocks = 64;
    std::vector<double> partial(blocks, 0.0);
    const std::size_t n = a.size();
    parallel_for(blocks, [&](std::size_t blk) {
        const std::size_t lo = n * blk / blocks;
        const std::size_t hi = n * (blk + 1) / blocks;
        partial[blk] = pair_distance_sum(a, b, lo, hi, same);
    });
    double total = 0.0;
    for (double p : partial) total += p;
    const double pairs = same ? static_cast<double>(n) * static_cast<double>(n - 1)
                              : static_cast<double>(n) * static_cast<double>(b.size());
    return total / pairs;
}

}  // namespace detail

/// Energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| between two planar samples
/// (within-sample terms exclude self pairs). Zero in expectation iff the
/// distributions coincide.
inline double energy_distance(std::span<const std::complex<double>> a, std::span<const std::complex<double>> b) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("energy distance needs at least two points per sample");
    const double xy = detail::mean_pair_distance(a, b, false);
    const double xx = detail::mean_pair_distance(a, a, true);
    const double yy = detail::mean_pair_distance(b, b, true);
    return 2.0 * xy - xx - yy;
}

/// Empirical quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

/// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
    if (samples.empty()) throw std::invalid_argument("KS statistic of empty sample");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

/// Asymptotic p-value of the KS statistic with the Stephens small-sample correction.
inline double ks_pvalue(double d, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    for (int j = 1; j <= 200; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += (j % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-18) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

/// SplitMix64 step, used to derive independent child seeds from one run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace bohmfreeze
