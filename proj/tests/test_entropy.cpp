#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "hdaemon/entropy.hpp"

using namespace hdaemon;

namespace {

ReducedWavefunction packet(Spin spin, std::size_t n) {
    GridOptions g;
    g.n_points = n;
    return init_packet(spin, reference_params(spin), PacketSpec{}, g);
}

double centre_crossing(Spin spin, int k) {
    const auto d = reference_params(spin);
    return diabatic_crossing_times(spin, d, packet_sigma_at(spin, d, PacketSpec{}, 0.0))[k];
}

double diagonal_entropy(const FastDensityMatrix& rho) { return shannon_entropy(rho.diagonal()); }

} // namespace

TEST(DensityMatrix, InitialStateIsPure) {
    const Spin spin = Spin::from_l(5);
    const auto d = reference_params(spin);
    const auto rho = reduced_density_fast(packet(spin, 256), d);
    const auto diag = rho.diagonal();
    for (int i = 0; i + 1 < spin.dim(); ++i) EXPECT_EQ(diag[i], 0.0);
    EXPECT_NEAR(diag[spin.index_of(5)], 1.0, 1e-10);
    EXPECT_NEAR(von_neumann_entropy(rho), 0.0, 1e-9);
}

TEST(DensityMatrix, HermitianUnitTracePositive) {
    const Spin spin = Spin::from_l(2);
    const auto d = reference_params(spin);
    const auto res = propagate(packet(spin, 256), d, centre_crossing(spin, 1) + 0.2);
    const auto rho = reduced_density_fast(res.state, d);
    EXPECT_NEAR(rho.rho.trace().real(), 1.0, 1e-10);
    EXPECT_NEAR(rho.rho.trace().imag(), 0.0, 1e-14);
    EXPECT_TRUE(rho.rho.isApprox(rho.rho.adjoint(), 1e-14));
    for (double e : density_eigenvalues(rho.rho)) EXPECT_GE(e, -1e-12);
    EXPECT_EQ(rho.tau, res.state.tau);
}

TEST(DensityMatrix, CoherencesAreNegligible) {
    const Spin spin = Spin::from_l(2);
    const auto d = reference_params(spin);
    const auto res = propagate(packet(spin, 256), d, centre_crossing(spin, 3) + 0.2);
    const auto rho = reduced_density_fast(res.state, d);
    double off = 0.0;
    for (int a = 0; a < spin.dim(); ++a)
        for (int b = 0; b < spin.dim(); ++b)
            if (a != b) off = std::max(off, std::abs(rho.rho(a, b)));
    EXPECT_LT(off, 1e-3);
    EXPECT_NEAR(von_neumann_entropy(rho), diagonal_entropy(rho), 1e-6);
    EXPECT_GT(diagonal_entropy(rho), 0.5);
}

TEST(DensityMatrix, SlowSectorHasSameSpectrum) {
    const Spin spin = Spin::from_l(1);
    const auto d = reference_params(spin);
    const auto res = propagate(packet(spin, 128), d, centre_crossing(spin, 0) + 0.1);
    const double fast = von_neumann_entropy(reduced_density_fast(res.state, d));
    EXPECT_GT(fast, 0.1);
    EXPECT_NEAR(slow_sector_entropy(res.state, d), fast, 1e-9);
}

TEST(DensityMatrix, SlowSectorSizeLimit) {
    const Spin spin = Spin::from_l(1);
    EXPECT_THROW(slow_sector_entropy(packet(spin, 128), reference_params(spin), 64), DomainError);
}

TEST(Entropy, Values) {
    EXPECT_EQ(von_neumann_entropy(std::vector<double>{0.0, 1.0, 0.0}), 0.0);
    EXPECT_NEAR(von_neumann_entropy(std::vector<double>(11, 1.0 / 11)), std::log(11.0), 1e-14);
    FastDensityMatrix mixed;
    mixed.rho = Eigen::MatrixXcd::Identity(4, 4) * 0.25;
    EXPECT_NEAR(von_neumann_entropy(mixed), std::log(4.0), 1e-14);
    // A pure superposition has zero entropy though its diagonal does not.
    FastDensityMatrix pure;
    pure.rho = Eigen::MatrixXcd::Constant(2, 2, 0.5);
    EXPECT_NEAR(von_neumann_entropy(pure), 0.0, 1e-12);
    EXPECT_NEAR(diagonal_entropy(pure), std::log(2.0), 1e-14);
}

TEST(Rm, StartsInTopLevel) {
    const Spin spin = Spin::from_l(5);
    const auto d = reference_params(spin);
    const auto rm = r_m_quadrature(spin, d, PacketSpec{}, 0.1);
    const auto r = rm(0.0);
    EXPECT_NEAR(std::accumulate(r.begin(), r.end(), 0.0), 1.0, 1e-10);
    EXPECT_NEAR(r[spin.index_of(5)], 1.0, 1e-3);
}

TEST(Rm, NormalizedAfterEveryCrossing) {
    const Spin spin = Spin::from_l(5);
    const auto d = reference_params(spin);
    const double tau_max = centre_crossing(spin, 9) + 0.2;
    const auto rm = r_m_quadrature(spin, d, PacketSpec{}, tau_max);
    for (double tau = 0.0; tau <= tau_max; tau += 0.25) {
        const auto r = rm(tau);
        EXPECT_NEAR(std::accumulate(r.begin(), r.end(), 0.0), 1.0, 1e-10) << tau;
    }
}

TEST(Rm, FirstPlateauMatchesZener) {
    const Spin spin = Spin::from_l(5);
    const auto d = reference_params(spin);
    const double t = 0.5 * (centre_crossing(spin, 0) + centre_crossing(spin, 1));
    const auto r = r_m_quadrature(spin, d, PacketSpec{}, t)(t);
    EXPECT_NEAR(r[spin.index_of(5)], 0.308, 0.02);
    EXPECT_NEAR(r[spin.index_of(4)], 0.692, 0.03);
    EXPECT_GT(von_neumann_entropy(r), 0.617 - 0.01);
    EXPECT_LT(von_neumann_entropy(r), 0.617 + 0.08);
}

TEST(Rm, AgreesWithGridPropagation) {
    const Spin spin = Spin::from_l(2);
    const auto d = reference_params(spin);
    const double tau = centre_crossing(spin, 1) + 0.15;
    const auto res = propagate(packet(spin, 256), d, tau);
    const auto diag = reduced_density_fast(res.state, d).diagonal();
    const auto r = r_m_quadrature(spin, d, PacketSpec{}, res.state.tau)(res.state.tau);
    for (int i = 0; i < spin.dim(); ++i) EXPECT_NEAR(r[i], diag[i], 1e-3) << spin.m(i);
}

TEST(Rm, RejectsBadStep) {
    const Spin spin = Spin::from_l(1);
    RmOptions o;
    o.dsigma = 0.0;
    EXPECT_THROW(r_m_quadrature(spin, reference_params(spin), PacketSpec{}, 0.5, o), DomainError);
}
