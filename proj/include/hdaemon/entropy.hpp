#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hdaemon/errors.hpp"
#include "hdaemon/lz.hpp"
#include "hdaemon/numerics.hpp"
#include "hdaemon/quantum.hpp"

namespace hdaemon {

struct FastDensityMatrix {
    Eigen::MatrixXcd rho;
    double tau = 0.0;

    [[nodiscard]] std::vector<double> diagonal() const {
        std::vector<double> d(rho.rows());
        for (Eigen::Index i = 0; i < rho.rows(); ++i) d[i] = rho(i, i).real();
        return d;
    }
};

/// Physical-basis amplitude of channel i at integration-grid index j, cubic phase included.
inline cplx physical_amplitude(const ReducedWavefunction& psi, const DimensionlessParams& d, std::size_t j, int i) {
    return psi(j, i) * std::polar(1.0, cubic_phase(d, psi.grid.at(j) - psi.tau));
}

/// rho_mn = integral over physical momentum of Psi_m(p + m hbar/L) conj(Psi_n(p + n hbar/L)).
inline FastDensityMatrix reduced_density_fast(const ReducedWavefunction& psi, const DimensionlessParams& d_in) {
    const DimensionlessParams d = with_spin(d_in, psi.spin);
    const int n = psi.dim();
    const std::size_t N = psi.grid.size;
    const long K = psi.grid.per_quantum;
    FastDensityMatrix out;
    out.tau = psi.tau;
    out.rho = Eigen::MatrixXcd::Zero(n, n);
    for (int a = 0; a < n; ++a) {
        for (int b = a; b < n; ++b) {
            // Physical index i = j + (2l - idx) K, so j_b = j_a + (b - a) K.
            const long shift = static_cast<long>(b - a) * K;
            cplx s(0.0, 0.0);
            for (std::size_t ja = 0; ja < N; ++ja) {
                const long jb = static_cast<long>(ja) + shift;
                if (jb < 0 || jb >= static_cast<long>(N)) continue;
                const cplx x = psi(ja, a);
                const cplx y = psi(static_cast<std::size_t>(jb), b);
                if (x == cplx(0.0, 0.0) || y == cplx(0.0, 0.0)) continue;
                if (a == b) {
                    s += std::norm(x);
                } else {
                    s += physical_amplitude(psi, d, ja, a) * std::conj(physical_amplitude(psi, d, static_cast<std::size_t>(jb), b));
                }
            }
            out.rho(a, b) = s * psi.grid.step;
            out.rho(b, a) = std::conj(out.rho(a, b));
        }
    }
    return out;
}

/// Eigenvalues of a density matrix, ascending; tiny negative round-off is kept as computed.
inline std::vector<double> density_eigenvalues(const Eigen::MatrixXcd& rho) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd v = es.eigenvalues();
    return {v.data(), v.data() + v.size()};
}

inline double von_neumann_entropy(const std::vector<double>& probabilities) { return shannon_entropy(probabilities); }

inline double von_neumann_entropy(const FastDensityMatrix& rho) {
    auto ev = density_eigenvalues(rho.rho);
    for (auto& x : ev) x = std::max(0.0, x);
    return shannon_entropy(ev);
}

/// Entropy of the slow-sector reduction, from the full physical-momentum density matrix.
/// Costs O(N_phys^3); intended for small grids.
inline double slow_sector_entropy(const ReducedWavefunction& psi, const DimensionlessParams& d_in,
                                  std::size_t max_points = 2048) {
    const DimensionlessParams d = with_spin(d_in, psi.spin);
    const std::size_t N = psi.grid.size;
    const std::size_t Np = N + static_cast<std::size_t>(psi.spin.two_l()) * psi.grid.per_quantum;
    if (Np > max_points) throw DomainError("slow-sector reduction too large for a dense eigensolve");
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(Np), psi.dim());
    for (std::size_t j = 0; j < N; ++j)
        for (int i = 0; i < psi.dim(); ++i) A(static_cast<Eigen::Index>(physical_index(psi, j, i)), i) = physical_amplitude(psi, d, j, i);
    const Eigen::MatrixXcd rho = psi.grid.step * (A * A.adjoint());
    auto ev = density_eigenvalues(rho);
    for (auto& x : ev) x = std::max(0.0, x);
    return shannon_entropy(ev);
}

// ---------------------------------------------------------------------------
// R_m quadrature from a single P-independent propagation

struct RmOptions {
    /// Start of the Phi propagation in units of hbar/L below zero; derived from the packet when unset.
    std::optional<double> start_offset_hbar_k;
    std::size_t nodes = 41;
    std::size_t max_nodes = 5248;
    double convergence_tol = 1e-6;
    double dsigma = 5e-5;
    /// Start Phi in the adiabatic eigenvector connected to m0 instead of the bare level.
    bool dressed_start = true;
};

/// Phi(sigma): solution of i dPhi/dsigma = h(sigma) Phi with Phi = e_{m0} for sigma <= sigma_start.
class PhiTable {
public:
    PhiTable(Spin spin, const DimensionlessParams& d, double m0, double sigma_start, double sigma_end, double dsigma,
             bool dressed = false)
        : h_(spin, d), sigma_start_(sigma_start), ds_(dsigma) {
        if (!(dsigma > 0.0)) throw DomainError("sigma step must be positive");
        const int i0 = spin.index_of(m0);
        std::vector<cplx> v(spin.dim(), cplx(0.0, 0.0));
        v[i0] = 1.0;
        if (dressed) {
            const Eigensystem es = eigensystem(h_, sigma_start);
            Eigen::Index best = 0;
            es.vectors.row(i0).cwiseAbs().maxCoeff(&best);
            const double sign = es.vectors(i0, best) < 0.0 ? -1.0 : 1.0;
            for (int i = 0; i < spin.dim(); ++i) v[i] = sign * es.vectors(i, best);
        }
        const std::size_t steps = sigma_end > sigma_start
                                      ? static_cast<std::size_t>(std::ceil((sigma_end - sigma_start) / dsigma)) + 1
                                      : 1;
        states_.reserve(steps + 1);
        PointPropagator pp(h_, sigma_start, v, dsigma);
        states_.push_back(v);
        for (std::size_t k = 0; k < steps; ++k) {
            pp.step();
            states_.push_back(pp.state());
        }
    }

    [[nodiscard]] double sigma_start() const { return sigma_start_; }
    [[nodiscard]] double sigma_end() const { return sigma_start_ + ds_ * static_cast<double>(states_.size() - 1); }

    [[nodiscard]] std::vector<cplx> at(double sigma) const {
        if (sigma <= sigma_start_) return states_.front();
        if (sigma > sigma_end()) throw DomainError("Phi requested beyond its propagated range");
        const double x = (sigma - sigma_start_) / ds_;
        const std::size_t k = std::min(states_.size() - 1, static_cast<std::size_t>(x));
        const double rest = sigma - (sigma_start_ + ds_ * static_cast<double>(k));
        if (rest <= 0.0) return states_[k];
        PointPropagator pp(h_, sigma_start_ + ds_ * static_cast<double>(k), states_[k], rest);
        pp.step();
        return pp.state();
    }

private:
    ReducedHamiltonian h_;
    double sigma_start_;
    double ds_;
    std::vector<std::vector<cplx>> states_;
};

struct RmQuadrature {
    Spin spin;
    PhiTable table;
    double sigma_p = 0.0;
    /// sigma of the packet centre at tau = 0.
    double sigma_center0 = 0.0;
    RmOptions opt;

    RmQuadrature(Spin s, PhiTable t, double sp, double sc0, RmOptions o)
        : spin(s), table(std::move(t)), sigma_p(sp), sigma_center0(sc0), opt(std::move(o)) {}

    /// R_m(tau) indexed like Spin::index_of; the node count doubles until converged.
    [[nodiscard]] std::vector<double> operator()(double tau) const {
        std::size_t n = opt.nodes;
        std::vector<double> prev = evaluate(tau, n);
        while (2 * n <= opt.max_nodes) {
            n *= 2;
            const std::vector<double> cur = evaluate(tau, n);
            double diff = 0.0;
            for (std::size_t i = 0; i < cur.size(); ++i) diff = std::max(diff, std::abs(cur[i] - prev[i]));
            if (diff <= opt.convergence_tol) return cur;
            prev = cur;
        }
        throw QuadratureError("R_m quadrature did not converge when doubling nodes");
    }

    [[nodiscard]] std::vector<double> evaluate(double tau, std::size_t nodes) const {
        const QuadratureRule& rule = cached_rule(nodes);
        std::vector<double> r(spin.dim(), 0.0);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const auto phi = table.at(sigma_center0 + tau - sigma_p * rule.nodes[q]);
            for (int i = 0; i < spin.dim(); ++i) r[i] += rule.weights[q] * std::norm(phi[i]);
        }
        return r;
    }

private:
    const QuadratureRule& cached_rule(std::size_t n) const {
        for (const auto& [k, rule] : rules_)
            if (k == n) return rule;
        rules_.emplace_back(n, gauss_hermite(n));
        return rules_.back().second;
    }
    mutable std::vector<std::pair<std::size_t, QuadratureRule>> rules_;
};

/// Builds the R_m evaluator for tau in [0, tau_max].
inline RmQuadrature r_m_quadrature(Spin spin, const DimensionlessParams& d_in, const PacketSpec& packet, double tau_max,
                                   const RmOptions& opt = {}) {
    const DimensionlessParams d = with_spin(d_in, spin);
    const double sp = packet_sigma(d, packet);
    const double sc0 = packet_sigma_at(spin, d, packet, 0.0);
    const double start = opt.start_offset_hbar_k ? -*opt.start_offset_hbar_k * d.hbar_over_L() : sc0;
    // Gauss-Hermite nodes of the largest rule stay below sqrt(2 n + 1).
    const double reach = std::sqrt(2.0 * static_cast<double>(opt.max_nodes) + 1.0) * sp;
    const double end = sc0 + tau_max + reach;
    return RmQuadrature{spin, PhiTable(spin, d, packet.level(spin), start, end, opt.dsigma, opt.dressed_start), sp, sc0, opt};
}

struct EntropySample {
    double tau = 0.0;
    double s_exact = 0.0;   ///< full fast-sector density matrix
    double s_diagonal = 0.0; ///< diagonal of the same matrix
    double s_rm = std::numeric_limits<double>::quiet_NaN(); ///< R_m quadrature
    double s_step = 0.0;    ///< Landau-Zener step curve
    double trace = 1.0;
};

} // namespace hdaemon
