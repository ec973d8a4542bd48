#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "bohmfreeze/grid.hpp"
#include "bohmfreeze/transform.hpp"
#include "support.hpp"

using namespace bohmfreeze;
using testing_support::Gen;
using testing_support::rel_diff;

namespace {

// Central-difference residuals of the three transform conditions, computed
// only from the closed forms of alpha, beta, gamma (no analytic derivatives).
struct FdResiduals {
    double r1, r2, r3;
};

FdResiduals fd_residuals(double eta, double k) {
    const TransformParams p{k};
    const double h = 1e-5 * std::abs(eta);
    auto d = [&](auto f) { return (f(eta + h) - f(eta - h)) / (2.0 * h); };
    const double g = gamma(eta, p), b = beta(eta);
    const double gp = d([&](double e) { return gamma(e, p); });
    const double bp = d([&](double e) { return beta(e); });
    const double ap = d([&](double e) { return alpha(e, p); });
    return {ap - gp / g, gp / g + b / (g * g) + 1.0 / eta,
            (-bp + k * k * g * g - b * b / (g * g) - k * k / (g * g)) / (bp + k * k * g * g)};
}

}  // namespace

TEST(Transform, ClosedFormValues) {
    for (double k : {0.01, 1.0, 30.0}) {
        const TransformParams p{k};
        EXPECT_NEAR(gamma(-1.0 / k, p), std::numbers::sqrt2, 1e-15);
        EXPECT_NEAR(alpha(-1.0 / k, p), std::log(std::numbers::sqrt2), 1e-15);
        EXPECT_NEAR(alpha(-1.0 / k, p), 0.3465736, 1e-7);
        EXPECT_NEAR(gamma(-1e8 / k, p), 1.0, 1e-15);
        EXPECT_GE(gamma(-1e8 / k, p), 1.0);
        EXPECT_NEAR(alpha(-1e8 / k, p), 0.0, 1e-15);
        EXPECT_NEAR(-1e-8 * gamma(-1e-8, p), -1.0 / k, 1e-12 / k);
        EXPECT_EQ(p.omega(), k);
    }
    EXPECT_DOUBLE_EQ(beta(-0.5), 2.0);
    EXPECT_DOUBLE_EQ(beta(-2.0), 0.5);
    EXPECT_DOUBLE_EQ(alpha(-1.0, TransformParams{1.0, 0.25}), std::log(std::numbers::sqrt2) + 0.25);
}

TEST(Transform, PositivityAndBetaIdentity) {
    Gen g(21);
    for (int i = 0; i < 1000; ++i) {
        const double k = g.k(), eta = g.eta(1e-6, 1e3);
        EXPECT_GT(gamma(eta, TransformParams{k}), 0.0);
        EXPECT_GT(beta(eta), 0.0);
        EXPECT_NEAR(beta(eta) * eta, -1.0, 1e-15);
    }
    EXPECT_THROW(gamma(0.0, TransformParams{1.0}), DomainError);
    EXPECT_THROW(beta(1.0), DomainError);
}

TEST(Transform, ResidualsVanishAtUnitPoint) {
    const auto r = ode_residuals(-1.0, TransformParams{1.0});
    EXPECT_LT(r.max_abs(), 1e-12);
    const auto fd = fd_residuals(-1.0, 1.0);
    EXPECT_LT(std::abs(fd.r1), 1e-9);
    EXPECT_LT(std::abs(fd.r2), 1e-9);
    EXPECT_LT(std::abs(fd.r3), 1e-9);
}

TEST(Transform, ResidualsVanishOnRandomDomainPoints) {
    Gen g(22);
    double worst = 0.0;
    for (int i = 0; i < 5000; ++i) {
        const double eta = g.eta(1e-4, 100.0), k = g.k(1e-2, 1e2);
        worst = std::max(worst, ode_residuals(eta, TransformParams{k}).max_abs());
    }
    EXPECT_LT(worst, 1e-9);
}

TEST(Transform, AnalyticDerivativesMatchFiniteDifferences) {
    Gen g(23);
    for (int i = 0; i < 200; ++i) {
        const double k = g.k(0.1, 10.0), eta = -g.log_uniform(0.05, 20.0) / k;
        const TransformParams p{k};
        const double h = 1e-6 * std::abs(eta);
        auto fd = [&](auto f) { return (f(eta + h) - f(eta - h)) / (2.0 * h); };
        EXPECT_LT(rel_diff(beta_prime(eta), fd([](double e) { return beta(e); })), 1e-8);
        EXPECT_LT(rel_diff(gamma_prime(eta, p), fd([&](double e) { return gamma(e, p); })), 1e-7);
        EXPECT_LT(rel_diff(alpha_prime(eta, p), fd([&](double e) { return alpha(e, p); })), 1e-7);
    }
}

TEST(Transform, PhaseRescaleIdentities) {
    Gen g(24);
    for (int i = 0; i < 200; ++i) {
        const double k = g.k(0.1, 10.0), eta = g.eta(1e-3, 10.0);
        const TransformParams p{k};
        EXPECT_LT(rel_diff(phase_rescale_forward(1.0, 0.0, eta, p), complex(std::exp(alpha(eta, p)), 0.0)), 1e-15);
        const complex psi = g.point(2.0), z = g.point(2.0);
        const complex phi = phase_rescale_forward(psi, z, eta, p);
        EXPECT_LT(rel_diff(std::abs(phi), std::exp(alpha(eta, p)) * std::abs(psi)), 1e-14);
        EXPECT_LT(rel_diff(phase_rescale_inverse(phi, z, eta, p), psi), 1e-13);
        EXPECT_LT(rel_diff(phase_rescale_forward(phase_rescale_inverse(psi, z, eta, p), z, eta, p), psi), 1e-13);
    }
}

TEST(Transform, MapPreservesNormOnGrid) {
    for (double eta : {-3.0, -1.0, -0.2}) {
        for (const auto& state : {ground_state(1.0), level_superposition(1.0, 16, {{0, 0, 1.0}, {1, 0, 1.0}, {0, 2, {0.0, 1.0}}})}) {
            const double L = default_grid_extent(state, eta);
            const auto grid = grid_from_mode_state(evolve_to(state, tau_of_eta(eta, 1.0)), eta, 256, L);
            EXPECT_NEAR(grid_norm(grid), 1.0, 1e-8) << "eta=" << eta;
            EXPECT_LT(boundary_ratio(grid), 1e-6);
        }
    }
}
