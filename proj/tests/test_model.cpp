#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "hdaemon/model.hpp"

using namespace hdaemon;

TEST(Nondimensionalize, UnitInputsCollapseToRawRatios) {
    PhysicalParams p;
    p.Omega = 2.0;
    p.gamma = 3.0;
    const auto d = nondimensionalize(p);
    EXPECT_DOUBLE_EQ(d.M_tilde, 1.0);
    EXPECT_DOUBLE_EQ(d.Omega_tilde, 2.0);
    EXPECT_DOUBLE_EQ(d.gamma_tilde, 3.0);
    EXPECT_DOUBLE_EQ(d.L_over_hbar, 1.0);
}

TEST(Nondimensionalize, ReferenceCase) {
    // k = 1, g = 1, L = sqrt(30), hbar = 1: M~ = M^2/30 = 1/3000 needs M = sqrt(1/100).
    PhysicalParams p;
    p.L = std::sqrt(30.0);
    p.M = 0.1;
    p.Omega = 600.0 * p.M / p.L;
    p.gamma = 15.0 * p.M / p.L;
    const auto d = nondimensionalize(p);
    EXPECT_NEAR(d.M_tilde, 1.0 / 3000.0, 1e-16);
    EXPECT_NEAR(d.Omega_tilde, 600.0, 1e-12);
    EXPECT_NEAR(d.gamma_tilde, 15.0, 1e-13);
    EXPECT_NEAR(d.L_over_hbar, std::sqrt(30.0), 1e-14);
    EXPECT_NEAR(d.resonant_momentum(), 0.2, 1e-14);
}

TEST(Nondimensionalize, RejectsNonPositiveFields) {
    for (int field = 0; field < 7; ++field) {
        PhysicalParams p;
        double* f[] = {&p.M, &p.g, &p.k, &p.Omega, &p.gamma, &p.L, &p.hbar};
        *f[field] = field % 2 ? 0.0 : -1.0;
        EXPECT_THROW(nondimensionalize(p), DomainError) << field;
    }
    PhysicalParams p;
    p.g = std::numeric_limits<double>::infinity();
    EXPECT_THROW(nondimensionalize(p), DomainError);
}

TEST(Nondimensionalize, ScalingSymmetryRoundTrip) {
    PhysicalParams a{1.3, 9.81, 0.7, 4.2, 2.5, 3.1, 0.05};
    // M -> sM, g -> g/s^2 keeps M^2 g fixed and divides Mg by s; Omega and gamma follow.
    for (double s : {0.5, 2.0, 7.3}) {
        PhysicalParams b = a;
        b.M = a.M * s;
        b.g = a.g / (s * s);
        b.Omega = a.Omega / s;
        b.gamma = a.gamma / s;
        const auto da = nondimensionalize(a);
        const auto db = nondimensionalize(b);
        EXPECT_NEAR(db.M_tilde / da.M_tilde, 1.0, 1e-14);
        EXPECT_NEAR(db.Omega_tilde / da.Omega_tilde, 1.0, 1e-14);
        EXPECT_NEAR(db.gamma_tilde / da.gamma_tilde, 1.0, 1e-14);
        EXPECT_NEAR(db.L_over_hbar / da.L_over_hbar, 1.0, 1e-14);
    }
}

TEST(Spin, HalfIntegerLadder) {
    const Spin s = Spin::from_l(0.5);
    EXPECT_EQ(s.dim(), 2);
    EXPECT_DOUBLE_EQ(s.m(0), -0.5);
    EXPECT_DOUBLE_EQ(s.m(1), 0.5);
    EXPECT_EQ(s.index_of(0.5), 1);
    EXPECT_DOUBLE_EQ(s.casimir(), 0.75);
    EXPECT_THROW((void)s.index_of(1.5), DomainError);
    EXPECT_THROW(Spin::from_l(0.3), DomainError);
}

TEST(Spin, ReferenceSpinGivesRootThirty) {
    const auto d = reference_params(Spin::from_l(5));
    EXPECT_NEAR(d.L_over_hbar, std::sqrt(30.0), 1e-14);
    EXPECT_NEAR(d.hbar_over_L(), 1.0 / std::sqrt(30.0), 1e-15);
    EXPECT_FALSE(reference_params().is_quantum());
    EXPECT_EQ(reference_params().hbar_over_L(), 0.0);
}

TEST(CriticalVelocities, ReferenceCase) {
    const auto c = critical_velocities(reference_params(Spin::from_l(5)));
    const double kick = 1.0 / std::sqrt(30.0);
    EXPECT_DOUBLE_EQ(c.v_c, 600.0);
    EXPECT_NEAR(c.p_c, 0.2, 1e-14);
    ASSERT_TRUE(c.quantum);
    EXPECT_NEAR(c.quantum->jump_period, 0.1826, 5e-5);
    EXPECT_NEAR(c.quantum->delta_p, kick, 1e-15);
    EXPECT_NEAR(c.quantum->p_q, 0.1087, 5e-5);
    EXPECT_NEAR(c.quantum->p_q_kicked, 0.2913, 5e-5);
    EXPECT_NEAR(0.5 * (c.quantum->p_q + c.quantum->p_q_kicked), 0.2, 1e-14);
    EXPECT_NEAR(c.quantum->v_q, 600.0 - 1500.0 * kick, 1e-10);
}

TEST(CriticalVelocities, ZeroFrequency) {
    auto d = reference_params(Spin::from_l(5));
    d.Omega_tilde = 0.0;
    const auto c = critical_velocities(d);
    EXPECT_EQ(c.v_c, 0.0);
    EXPECT_EQ(c.p_c, 0.0);
}

TEST(CriticalVelocities, ClassicalRejectsQuantumQuantities) {
    EXPECT_THROW(critical_velocities(reference_params()), UnsupportedModeError);
    EXPECT_NO_THROW(critical_velocities(reference_params(), false));
}

TEST(Regime, ReferenceCaseIsStrongQuantumDaemon) {
    const auto r = classify_regime(reference_params(Spin::from_l(5)));
    EXPECT_TRUE(r.is_daemon);
    EXPECT_TRUE(r.is_strong_quantum);
    const double threshold = std::pow(std::numbers::pi / 8.0, 2) / 30.0;
    EXPECT_NEAR(threshold, 0.00514, 5e-6);
    EXPECT_LT(0.005, threshold);
    EXPECT_NEAR(r.separatrix_area_estimate, 1.131, 5e-4);
    ASSERT_TRUE(r.separatrix_area_estimate_pi_hbar);
    EXPECT_NEAR(*r.separatrix_area_estimate_pi_hbar, 1.97, 5e-3);
}

TEST(Regime, WeakCouplingIsNotDaemon) {
    auto d = reference_params();
    d.gamma_tilde = 0.5;
    const auto r = classify_regime(d);
    EXPECT_FALSE(r.is_daemon);
    EXPECT_FALSE(r.notes.empty());
}

TEST(Regime, PureFunction) {
    const auto d = reference_params(Spin::from_l(5));
    const auto a = classify_regime(d);
    const auto b = classify_regime(d);
    EXPECT_EQ(a.is_daemon, b.is_daemon);
    EXPECT_EQ(a.is_strong_quantum, b.is_strong_quantum);
    EXPECT_EQ(a.separatrix_area_estimate, b.separatrix_area_estimate);
    EXPECT_EQ(a.notes, b.notes);
}

TEST(Regime, FactorIsConfigurable) {
    auto d = reference_params();
    d.gamma_tilde = 100.0;  // Omega~/gamma~ = 6
    EXPECT_FALSE(classify_regime(d).is_daemon);
    EXPECT_TRUE(classify_regime(d, {5.0}).is_daemon);
}
