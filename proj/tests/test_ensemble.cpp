#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "hdaemon/ensemble.hpp"

using namespace hdaemon;

namespace {

EnsembleSpec spec_of(std::size_t n) {
    EnsembleSpec s;
    s.n_traj = n;
    return s;
}

EnsembleOptions light(std::size_t samples = 257) {
    EnsembleOptions o;
    o.n_samples = samples;
    return o;
}

} // namespace

TEST(InitialPhases, UniformGrid) {
    const auto ph = initial_phases(spec_of(8));
    ASSERT_EQ(ph.size(), 8u);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_DOUBLE_EQ(ph[j], 2 * std::numbers::pi * j / 8.0);
}

TEST(InitialPhases, SeededUniformIsReproducibleAndInRange) {
    EnsembleSpec s = spec_of(500);
    s.phi_sampling = PhiSampling::SeededUniform;
    s.seed = 17;
    const auto a = initial_phases(s);
    const auto b = initial_phases(s);
    EXPECT_EQ(a, b);
    for (double x : a) {
        EXPECT_GE(x, 0.0);
        EXPECT_LT(x, 2 * std::numbers::pi);
    }
    s.seed = 18;
    EXPECT_NE(initial_phases(s), a);
}

TEST(InitialPhases, RejectsEmpty) { EXPECT_THROW(initial_phases(spec_of(0)), DomainError); }

TEST(RunEnsemble, SingletonMatchesSingleIntegration) {
    const auto d = reference_params();
    const EnsembleSpec s = spec_of(1);
    const auto c = run_ensemble(d, s, {0.0, 3.0}, light());
    ASSERT_EQ(c.members.size(), 1u);
    ASSERT_TRUE(c.members[0].ok);
    EXPECT_EQ(c.members[0].phi0, 0.0);
    const auto t = integrate_full(d, s.base_state, {0.0, 3.0});
    for (std::size_t i = 0; i < c.times.size(); ++i) {
        const auto x = t.at(c.times[i]);
        EXPECT_EQ(c.members[0].q[i], x.q);
        EXPECT_EQ(c.members[0].p[i], x.p);
        EXPECT_EQ(c.members[0].lz[i], x.lz);
    }
    EXPECT_EQ(c.members[0].downconverts, classify_trajectory(d, t).downconverts());
}

TEST(RunEnsemble, BothPhasesPresent) {
    const auto c = run_ensemble(reference_params(), spec_of(48), {0.0, 3.0}, light());
    EXPECT_EQ(c.n_failed(), 0u);
    const double f = downconversion_fraction(c);
    EXPECT_GT(f, 0.0);
    EXPECT_LT(f, 1.0);
}

TEST(RunEnsemble, DeterministicUnderSeedAndThreads) {
    EnsembleSpec s = spec_of(12);
    s.phi_sampling = PhiSampling::SeededUniform;
    s.seed = 99;
    auto o = light(129);
    const auto a = run_ensemble(reference_params(), s, {0.0, 1.5}, o);
    o.threads = 3;
    const auto b = run_ensemble(reference_params(), s, {0.0, 1.5}, o);
    ASSERT_EQ(a.members.size(), b.members.size());
    for (std::size_t j = 0; j < a.members.size(); ++j) {
        EXPECT_EQ(a.members[j].phi0, b.members[j].phi0);
        EXPECT_EQ(a.members[j].q, b.members[j].q);
        EXPECT_EQ(a.members[j].p, b.members[j].p);
        EXPECT_EQ(a.members[j].lz, b.members[j].lz);
    }
}

TEST(RunEnsemble, FailuresAreRecordedPerMember) {
    auto o = light(33);
    o.integration.max_steps = 50;
    const auto c = run_ensemble(reference_params(), spec_of(3), {0.0, 1.0}, o);
    EXPECT_EQ(c.members.size(), 3u);
    EXPECT_EQ(c.n_failed(), 3u);
    for (const auto& m : c.members) EXPECT_FALSE(m.failure.empty());
    EXPECT_THROW(bin_density(c, Axis::P, 10, 5), DomainError);
}

TEST(BinDensity, CountsConservedPerTime) {
    const auto c = run_ensemble(reference_params(), spec_of(40), {0.0, 3.0}, light());
    for (Axis axis : {Axis::Q, Axis::P}) {
        const auto h = bin_density(c, axis, 64, 31);
        ASSERT_EQ(h.time_samples.size(), 31u);
        for (std::size_t t = 0; t < 31; ++t) {
            std::uint64_t sum = h.underflow[t] + h.overflow[t];
            for (std::size_t b = 0; b < h.n_bins(); ++b) sum += h.at(t, b);
            EXPECT_EQ(sum, 40u);
            EXPECT_EQ(h.underflow[t] + h.overflow[t], 0u);
        }
    }
}

TEST(BinDensity, DecoupledSingleTrajectoryTracksParabola) {
    auto d = reference_params();
    d.gamma_tilde = 0.0;
    const auto c = run_ensemble(d, spec_of(1), {0.0, 1.2}, light());
    const auto h = bin_density(c, Axis::Q, 200, 13, BinRange{-100.0, 600.0});
    for (std::size_t t = 0; t < 13; ++t) {
        int nonzero = 0;
        std::size_t where = 0;
        for (std::size_t b = 0; b < h.n_bins(); ++b)
            if (h.at(t, b)) {
                ++nonzero;
                where = b;
            }
        ASSERT_EQ(nonzero, 1) << t;
        const double tau = h.time_samples[t];
        const double q = 3000.0 * (0.6 * tau - 0.5 * tau * tau);
        EXPECT_LE(h.bin_edges[where], q);
        EXPECT_GT(h.bin_edges[where + 1], q);
    }
}

TEST(BinDensity, TranslationShiftsQHistogramRigidly) {
    const auto d = reference_params();
    const double width = 50.0;
    const double a = 4 * width;
    EnsembleSpec s = spec_of(24);
    const auto base = run_ensemble(d, s, {0.0, 2.0}, light());
    s.base_state.q += a;
    s.phi_offset = a;
    const auto moved = run_ensemble(d, s, {0.0, 2.0}, light());
    const auto hb = bin_density(base, Axis::Q, 100, 21, BinRange{-2000.0, 3000.0});
    const auto hm = bin_density(moved, Axis::Q, 100, 21, BinRange{-2000.0 + a, 3000.0 + a});
    EXPECT_EQ(hb.counts, hm.counts);
    EXPECT_EQ(hb.underflow, hm.underflow);
    EXPECT_EQ(hb.overflow, hm.overflow);
}

TEST(BinDensity, MomentumShiftIsATimeShift) {
    // Starting with p0 + delta is the unshifted ensemble seen delta later, up to binomial noise.
    const auto d = reference_params();
    const double delta = 0.15;
    const std::size_t n = 600;
    EnsembleSpec s = spec_of(n);
    s.phi_sampling = PhiSampling::SeededUniform;
    s.seed = 5;
    const auto base = run_ensemble(d, s, {0.0, 1.5}, light(301));
    s.seed = 6;
    s.base_state.p += delta;
    const auto shifted = run_ensemble(d, s, {0.0, 1.5 + delta}, light(301));
    const BinRange range{-0.6, 0.5};
    const std::size_t bins = 22;
    const auto hb = bin_density(base, Axis::P, bins, 4, range);
    auto count_in = [&](double tau, double lo, double hi) {
        int k = 0;
        for (const auto& m : shifted.members) {
            const double v = member_value(shifted, m, Axis::P, tau);
            if (v >= lo && v < hi) ++k;
        }
        return k;
    };
    int outliers = 0;
    for (std::size_t t : {2u, 3u}) {
        for (std::size_t b = 0; b < bins; ++b) {
            const double x = hb.at(t, b);
            const double y = count_in(hb.time_samples[t] + delta, hb.bin_edges[b], hb.bin_edges[b + 1]);
            const double p = 0.5 * (x + y) / static_cast<double>(n);
            const double sd = std::sqrt(2.0 * static_cast<double>(n) * p * (1.0 - p)) + 1.0;
            if (std::abs(x - y) > 3.0 * sd) ++outliers;
        }
    }
    EXPECT_LE(outliers, 1);
}
