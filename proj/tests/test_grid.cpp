#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "bohmfreeze/grid.hpp"

using namespace bohmfreeze;

namespace {

// Free packet of i psi_t = -1/4 lap psi (mass 2), width sigma0 at t = 0.
complex free_gaussian_1d(double x, double t, double sigma0) {
    const complex a(1.0, t / (4.0 * sigma0 * sigma0));
    return std::pow(2.0 * std::numbers::pi * sigma0 * sigma0, -0.25) / std::sqrt(a) *
           std::exp(-x * x / (4.0 * sigma0 * sigma0 * a));
}

double second_moment_x(const GridState& g) {
    double s = 0.0, n = 0.0;
    for (int ix = 0; ix < g.n; ++ix)
        for (int iy = 0; iy < g.n; ++iy) {
            const double p = std::norm(g.at(ix, iy));
            s += p * g.coord(ix) * g.coord(ix);
            n += p;
        }
    return s / n;
}

GridState bunch_davies_grid(double eta, int n) {
    const auto s = evolve_to(ground_state(1.0), tau_of_eta(eta, 1.0));
    return grid_from_mode_state(s, eta, n, default_grid_extent(s, eta));
}

double picture_difference(double d_eta, int n) {
    const auto state = ground_state(1.0);
    const auto start = bunch_davies_grid(-2.0, n);
    const auto end = evolve_eta_reference_to(start, -0.5, 1.0, d_eta);
    ModeEvaluator ev(evolve_to(state, tau_of_eta(-0.5, 1.0)));
    const TransformParams p{1.0};
    return l2_difference(end, [&](complex y) { return psi_from_phi(ev, y, -0.5, p); });
}

}  // namespace

TEST(ReferenceGrid, FreeGaussianSpreading) {
    const double sigma0 = 0.5;
    auto g = make_grid(192, 12.0, -10.0, [&](complex y) {
        return free_gaussian_1d(y.real(), 0.0, sigma0) * free_gaussian_1d(y.imag(), 0.0, sigma0);
    });
    ReferenceOptions opt;
    opt.dilation = false;
    const double t = 2.0;
    g = evolve_eta_reference_to(g, g.eta + t, 0.0, 0.05, opt);
    const double expected = sigma0 * sigma0 * (1.0 + std::pow(t / (4.0 * sigma0 * sigma0), 2));
    EXPECT_NEAR(second_moment_x(g), expected, 1e-8 * expected);
    const double diff = l2_difference(g, [&](complex y) {
        return free_gaussian_1d(y.real(), t, sigma0) * free_gaussian_1d(y.imag(), t, sigma0);
    });
    EXPECT_LT(diff, 1e-8);
    EXPECT_NEAR(grid_norm(g), 1.0, 1e-10);
}

TEST(ReferenceGrid, BunchDaviesFitsTheBox) {
    for (double eta : {-2.0, -1.0, -0.5}) {
        const auto g = bunch_davies_grid(eta, 256);
        EXPECT_LT(boundary_ratio(g), 1e-6);
        EXPECT_NEAR(grid_norm(g), 1.0, 1e-10);
    }
}

TEST(ReferenceGrid, NormConservedPerUnitEta) {
    const auto g0 = bunch_davies_grid(-2.0, 128);
    const auto g1 = evolve_eta_reference_to(g0, -1.0, 1.0, 1e-2);
    EXPECT_LT(std::abs(grid_norm(g1) - grid_norm(g0)), 1e-6);
    EXPECT_NEAR(g1.eta, -1.0, 1e-15);
    // The co-moving box follows gamma: extent scales by eta_a / eta_b.
    EXPECT_NEAR(g1.extent, g0.extent * 2.0, 1e-12 * g0.extent);
}

TEST(ReferenceGrid, PicturesAgreeAndConvergeAtSecondOrder) {
    const double coarse = picture_difference(2e-2, 128);
    const double fine = picture_difference(1e-2, 128);
    EXPECT_LT(fine, 1e-3);
    EXPECT_GT(coarse / fine, 3.0);
    EXPECT_LT(coarse / fine, 5.0);
}

TEST(ReferenceGrid, RejectsSteppingOffThePatch) {
    const auto g = bunch_davies_grid(-0.5, 64);
    EXPECT_THROW(evolve_eta_reference(g, 0.6, 1.0), DomainError);
}
