#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "bohmfreeze/multimode.hpp"
#include "support.hpp"

using namespace bohmfreeze;
using testing_support::Gen;
using testing_support::rel_diff;

namespace {

ModeState lv(double k, std::vector<LevelAmplitude> l) { return level_superposition(k, 16, l); }

// Rank-2 entangled state on modes {1, 2}: |0,0>|1,0> + |1,0>|0,1>.
MultiModeState entangled(double eta = -5.0) {
    MultiModeTerm a{1.0, {lv(1.0, {{0, 0, 1.0}}), lv(2.0, {{1, 0, 1.0}})}};
    MultiModeTerm b{complex(0.0, 1.0), {lv(1.0, {{1, 0, 1.0}}), lv(2.0, {{0, 1, 1.0}})}};
    return make_multimode({1.0, 2.0}, {a, b}, eta);
}

// Joint amplitude assembled from single-mode evaluations (independent of the
// multimode evaluator).
complex joint_value(const MultiModeState& s, std::span<const complex> config) {
    complex sum{};
    for (const auto& t : s.terms) {
        complex prod = t.amplitude;
        for (std::size_t m = 0; m < s.modes.size(); ++m) prod *= evaluate(t.factors[m], config[m]);
        sum += prod;
    }
    return sum;
}

complex fd_velocity_eta(const MultiModeState& s, std::vector<complex> config, std::size_t m, double h = 1e-5) {
    auto S = [&](complex dz) {
        auto c = config;
        c[m] += dz;
        return std::arg(joint_value(s, c));
    };
    auto wrap = [](double d) { return std::remainder(d, 2.0 * std::numbers::pi); };
    const complex v = 0.5 * complex(wrap(S({h, 0}) - S({-h, 0})) / (2 * h), wrap(S({0, h}) - S({0, -h})) / (2 * h));
    return dtau_deta(s.eta, s.modes[m]) * v;
}

}  // namespace

TEST(MultiMode, ConstructionValidatesAndNormalizes) {
    const auto s = entangled();
    EXPECT_NEAR(multimode_norm_squared(s), 1.0, 1e-14);
    for (const auto& t : s.terms)
        for (std::size_t m = 0; m < 2; ++m) EXPECT_EQ(t.factors[m].tau, tau_of_eta(-5.0, s.modes[m]));

    MultiModeTerm t{1.0, {ground_state(1.0, 8), ground_state(1.0, 8)}};
    EXPECT_THROW(make_multimode({1.0, 1.0}, {t}, -1.0), DomainError);
    MultiModeTerm five{1.0, {}};
    for (double k : {1.0, 2.0, 3.0, 4.0, 5.0}) five.factors.push_back(ground_state(k, 4));
    EXPECT_THROW(make_multimode({1.0, 2.0, 3.0, 4.0, 5.0}, {five}, -1.0), DomainError);
    MultiModeTerm wrong_k{1.0, {ground_state(1.0, 8), ground_state(3.0, 8)}};
    EXPECT_THROW(make_multimode({1.0, 2.0}, {wrong_k}, -1.0), DomainError);
    std::vector<MultiModeTerm> nine(9, MultiModeTerm{1.0, {ground_state(1.0, 4)}});
    EXPECT_THROW(make_multimode({1.0}, nine, -1.0), DomainError);
}

TEST(MultiMode, ProductEvolutionIsTensorOfSingleModes) {
    Gen g(61);
    for (int i = 0; i < 10; ++i) {
        const auto a = g.state(1.0), b = g.state(2.5);
        const auto s = make_multimode({1.0, 2.5}, {{1.0, {a, b}}}, -3.0);
        const double d = g.uniform(0.1, 2.9);
        const auto e = evolve_multimode(s, d);
        const auto ea = evolve_to(s.terms[0].factors[0], tau_of_eta(-3.0 + d, 1.0));
        const auto eb = evolve_to(s.terms[0].factors[1], tau_of_eta(-3.0 + d, 2.5));
        for (std::size_t j = 0; j < ea.coeffs.size(); ++j) {
            EXPECT_LT(std::abs(e.terms[0].factors[0].coeffs[j] - ea.coeffs[j]), 1e-12);
            EXPECT_LT(std::abs(e.terms[0].factors[1].coeffs[j] - eb.coeffs[j]), 1e-12);
        }
        EXPECT_EQ(e.terms[0].amplitude, s.terms[0].amplitude);
    }
}

TEST(MultiMode, ReversibleAndNormPreserving) {
    const auto s = entangled();
    const auto there = evolve_multimode(s, 4.0);
    const auto back = evolve_multimode(there, -4.0);
    for (std::size_t j = 0; j < s.terms.size(); ++j) {
        EXPECT_LT(std::abs(back.terms[j].amplitude - s.terms[j].amplitude), 1e-12);
        for (std::size_t m = 0; m < 2; ++m)
            for (std::size_t c = 0; c < s.terms[j].factors[m].coeffs.size(); ++c)
                EXPECT_LT(std::abs(back.terms[j].factors[m].coeffs[c] - s.terms[j].factors[m].coeffs[c]), 1e-12);
    }
    auto cur = s;
    for (double eta = -5.0; eta < -1e-4; eta *= 0.7) {
        cur = evolve_multimode(cur, eta - cur.eta);
        EXPECT_NEAR(multimode_norm_squared(cur), 1.0, 1e-10);
    }
}

TEST(MultiMode, EvolutionToTheEndOfThePatchIsRegular) {
    const auto s = entangled();
    const auto late = evolve_multimode(s, -1e-10 - s.eta);
    EXPECT_NEAR(multimode_norm_squared(late), 1.0, 1e-10);
    for (const auto& t : late.terms)
        for (const auto& f : t.factors) EXPECT_TRUE(std::isfinite(std::abs(f.coeffs[0])));
    EXPECT_THROW(evolve_multimode(s, 6.0), DomainError);
    const auto beyond = evolve_multimode(s, 6.0, true);
    EXPECT_NEAR(multimode_norm_squared(beyond), 1.0, 1e-10);
    EXPECT_GT(beyond.terms[0].factors[0].tau, 0.0);
}

TEST(MultiMode, StationaryProductsHaveNoVelocity) {
    Gen g(62);
    for (int i = 0; i < 20; ++i) {
        const int nx = g.integer(0, 3), ny = g.integer(0, 3);
        const auto s = make_multimode({1.0, 2.0},
                                      {{1.0, {basis_state(1.0, 8, nx, ny), basis_state(2.0, 8, ny, nx)}}}, -g.uniform(0.1, 4));
        const std::vector<complex> c{g.point(1.0), g.point(0.7)};
        if (std::abs(joint_value(s, c)) < 1e-4) continue;
        for (std::size_t m = 0; m < 2; ++m) EXPECT_LT(std::abs(velocity_k(s, c, m)), 1e-12);
    }
    const auto gs = make_multimode({1.0, 3.0}, {{1.0, {ground_state(1.0, 4), ground_state(3.0, 4)}}}, -1.0);
    const std::vector<complex> c{{0.2, 0.1}, {-0.3, 0.4}};
    EXPECT_EQ(velocity_k(gs, c, 0), complex(0.0, 0.0));
}

TEST(MultiMode, SingleTermReducesToScaledSingleModeVelocity) {
    Gen g(63);
    const auto a = g.state(1.0), b = g.state(2.0);
    const auto s = make_multimode({1.0, 2.0}, {{1.0, {a, b}}}, -0.8);
    const std::vector<complex> c{{0.3, -0.2}, {0.1, 0.25}};
    EXPECT_LT(rel_diff(velocity_k(s, c, 0), dtau_deta(-0.8, 1.0) * velocity(s.terms[0].factors[0], c[0])), 1e-12);
    EXPECT_LT(rel_diff(velocity_k(s, c, 1), dtau_deta(-0.8, 2.0) * velocity(s.terms[0].factors[1], c[1])), 1e-12);
}

TEST(MultiMode, EntanglementWitnessAndFiniteDifferenceOracle) {
    const auto s = evolve_multimode(entangled(), 4.0);  // eta = -1
    Gen g(64);
    const complex z1(0.3, 0.2);
    double spread = 0.0;
    const complex v_ref = velocity_k(s, std::vector<complex>{z1, {0.2, 0.0}}, 0);
    for (int i = 0; i < 20; ++i) {
        const std::vector<complex> c{z1, g.point(0.6)};
        if (std::abs(joint_value(s, c)) < 1e-2) continue;
        const complex v = velocity_k(s, c, 0);
        spread = std::max(spread, std::abs(v - v_ref));
        EXPECT_LT(std::abs(v - fd_velocity_eta(s, c, 0)), 1e-6);
        EXPECT_LT(std::abs(velocity_k(s, c, 1) - fd_velocity_eta(s, c, 1)), 1e-6);
    }
    EXPECT_GT(spread, 1e-3);
}

TEST(MultiMode, BunchDaviesProductIsFrozen) {
    const auto s = make_multimode({1.0, 2.0}, {{1.0, {ground_state(1.0), ground_state(2.0)}}}, -5.0);
    const std::vector<complex> c0{{0.4, -0.1}, {0.2, 0.3}};
    const auto traj = integrate_multimode(s, c0, -5.0, -5e-5);
    ASSERT_TRUE(traj.completed());
    for (const auto& smp : traj.samples)
        for (std::size_t m = 0; m < 2; ++m) {
            const double k = s.modes[m];
            EXPECT_EQ(smp.modes[m].z, c0[m]);
            EXPECT_LT(rel_diff(smp.modes[m].phi, c0[m] / k * std::sqrt(1.0 + k * k * smp.eta * smp.eta)), 1e-14);
            EXPECT_NEAR(smp.modes[m].tau, tau_of_eta(smp.eta, k), 1e-10);
        }
    EXPECT_TRUE(freeze_scan_multimode(traj, 0.01).verdict());
}

TEST(MultiMode, ProductMatchesIndependentSingleModeRuns) {
    const double tol = 1e-9;
    const auto a = lv(1.0, {{0, 0, 1.0}, {1, 0, 1.0}});
    const auto b = lv(2.0, {{0, 0, 1.0}, {0, 1, complex(0.0, 1.0)}});
    const auto s = make_multimode({1.0, 2.0}, {{1.0, {a, b}}}, -5.0);
    const std::vector<complex> c0{{0.35, 0.1}, {-0.2, 0.15}};
    MultiOptions mo;
    mo.tol = tol;
    const auto joint = integrate_multimode(s, c0, -5.0, -1e-3, mo);
    ASSERT_TRUE(joint.completed());
    TrajectoryOptions to;
    to.tol = tol;
    for (std::size_t m = 0; m < 2; ++m) {
        const auto single = integrate_trajectory(s.terms[0].factors[m], c0[m], -5.0, -1e-3, to);
        ASSERT_TRUE(single.completed());
        ASSERT_EQ(single.samples.size(), joint.samples.size());
        for (std::size_t i = 0; i < single.samples.size(); ++i)
            EXPECT_LT(std::abs(single.samples[i].z - joint.samples[i].modes[m].z), 10.0 * tol) << "mode " << m;
    }
}

TEST(MultiMode, EntangledStateFreezesInEveryMode) {
    const auto s = entangled();
    const std::vector<complex> c0{{0.45, 0.2}, {0.3, -0.25}};
    const auto traj = integrate_multimode(s, c0, -5.0, -5e-5);
    ASSERT_TRUE(traj.completed()) << traj.diagnostics.message;
    for (std::size_t m = 0; m < 2; ++m) {
        const auto single = mode_trajectory(traj, m);
        const complex z_end = single.samples.back().z;
        const auto near = *std::min_element(single.samples.begin(), single.samples.end(), [](const auto& x, const auto& y) {
            return std::abs(x.eta + 1e-3) < std::abs(y.eta + 1e-3);
        });
        EXPECT_LT(std::abs(z_end - near.z), 1e-3 * std::abs(z_end));
    }
    const auto rep = freeze_scan_multimode(traj, 0.01);
    EXPECT_TRUE(rep.all_converged);
    EXPECT_TRUE(rep.joint_onset_holds);
    for (const auto& r : rep.modes) {
        if (r.onset.kind == OnsetKind::attained) {
            EXPECT_LE(r.tau0, rep.joint_tau0);
        }
    }
}

TEST(MultiMode, ScaledVelocityBreaksTheJointBound) {
    const auto s = entangled();
    const std::vector<complex> c0{{0.45, 0.2}, {0.3, -0.25}};
    MultiOptions mo;
    mo.velocity_scales = {1.0, 100.0};
    const auto traj = integrate_multimode(s, c0, -5.0, -5e-5, mo);
    const auto rep = freeze_scan_multimode(traj, 0.01);
    EXPECT_GT(rep.joint_C, rep.c_band);
    EXPECT_FALSE(rep.verdict());
}

TEST(MultiMode, WideTableExport) {
    const auto s = entangled();
    MultiOptions mo;
    mo.output_samples = 4;
    const auto traj = integrate_multimode(s, std::vector<complex>{{0.4, 0.2}, {0.3, -0.2}}, -5.0, -1.0, mo);
    std::ostringstream os;
    write_multitrajectory_table(os, traj);
    const auto header = os.str().substr(0, os.str().find('\n'));
    EXPECT_EQ(header, "eta\ttau_0\tre_z_0\tim_z_0\tre_phi_0\tim_phi_0\ttau_1\tre_z_1\tim_z_1\tre_phi_1\tim_phi_1");
}
