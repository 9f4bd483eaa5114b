#pragma once

// Exact reduced quantum propagation.
//
// The state is stored as psi_m(P) on a uniform grid of the conserved variable
// P = P_phys + m hbar/L + tau. Every grid point evolves independently under
// i d psi/d tau = h(sigma) psi with sigma = tau + M~ Omega~ - P. The physical
// amplitude is Psi_m(P - tau) = psi_m(P) exp(i (L/hbar) (P - tau)^3 / (6 M~)).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "hdaemon/errors.hpp"
#include "hdaemon/model.hpp"
#include "hdaemon/numerics.hpp"
#include "hdaemon/spectrum.hpp"

namespace hdaemon {

using cplx = std::complex<double>;

struct PacketSpec {
    double p0 = 0.6;       ///< mean physical momentum
    double width_d = 20.0; ///< position width D in units of 1/k
    std::optional<double> m0;  ///< initial level; defaults to +l
    double q0 = 0.0;       ///< mean position

    [[nodiscard]] double level(Spin spin) const { return m0.value_or(spin.l()); }
};

struct MomentumGrid {
    double origin = 0.0;
    double step = 1.0;
    std::size_t size = 0;
    /// Grid steps per momentum kick hbar/L.
    int per_quantum = 1;

    [[nodiscard]] double at(std::size_t j) const { return origin + step * static_cast<double>(j); }
};

struct GridOptions {
    std::size_t n_points = 1024;
    /// Half-span of the grid in amplitude standard deviations.
    double half_span_sigmas = 10.0;
};

struct ReducedWavefunction {
    Spin spin;
    MomentumGrid grid;
    double tau = 0.0;
    /// amps[j * dim + i] = psi_{m_i}(P_j)
    std::vector<cplx> amps;

    [[nodiscard]] int dim() const { return spin.dim(); }
    [[nodiscard]] cplx& operator()(std::size_t j, int i) { return amps[j * dim() + i]; }
    [[nodiscard]] cplx operator()(std::size_t j, int i) const { return amps[j * dim() + i]; }
};

/// Amplitude standard deviation of the packet in P~, (hbar/L)/D.
inline double packet_sigma(const DimensionlessParams& d, const PacketSpec& p) {
    return d.hbar_over_L() / p.width_d;
}

/// Conserved-variable centre of the packet, p0 + m0 hbar/L + tau0.
inline double packet_center(Spin spin, const DimensionlessParams& d, const PacketSpec& p, double tau0 = 0.0) {
    return p.p0 + p.level(spin) * d.hbar_over_L() + tau0;
}

/// Reduced time of the packet centre at tau.
inline double packet_sigma_at(Spin spin, const DimensionlessParams& d, const PacketSpec& p, double tau, double tau0 = 0.0) {
    return tau + d.resonant_momentum() - packet_center(spin, d, p, tau0);
}

/// (L/hbar) x^3 / (6 M~)
inline double cubic_phase(const DimensionlessParams& d, double x) {
    return d.L_over_hbar * x * x * x / (6.0 * d.M_tilde);
}

inline MomentumGrid make_momentum_grid(Spin spin, const DimensionlessParams& d, const PacketSpec& p,
                                       const GridOptions& opt = {}, double tau0 = 0.0) {
    if (!d.is_quantum()) throw UnsupportedModeError("momentum grids need a finite L/hbar");
    if (!(p.width_d > 0.0) || !std::isfinite(p.width_d)) {
        throw UnsupportedModeError("packet width must be finite and positive (momentum eigenstates unsupported)");
    }
    if (opt.n_points < 2) throw DomainError("momentum grid needs at least two points");
    const double sp = packet_sigma(d, p);
    const double wanted = 2.0 * opt.half_span_sigmas * sp / static_cast<double>(opt.n_points);
    MomentumGrid g;
    g.per_quantum = static_cast<int>(std::ceil(d.hbar_over_L() / wanted - 1e-9));
    g.step = d.hbar_over_L() / g.per_quantum;
    g.size = opt.n_points;
    g.origin = packet_center(spin, d, p, tau0) - static_cast<double>(g.size / 2) * g.step;
    return g;
}

inline ReducedWavefunction init_packet(Spin spin, const DimensionlessParams& d_in, const PacketSpec& p,
                                       const MomentumGrid& grid, double tau0 = 0.0) {
    const DimensionlessParams d = with_spin(d_in, spin);
    const double sp = packet_sigma(d, p);
    if (!(sp > grid.step)) throw UnsupportedModeError("packet narrower than one grid step");
    const double center = packet_center(spin, d, p, tau0);
    const double half = 0.5 * grid.step * static_cast<double>(grid.size - 1);
    const double mid = grid.origin + half;
    if (half - std::abs(center - mid) < 8.0 * sp) {
        throw DomainError("momentum grid spans less than +-8 standard deviations around the packet");
    }
    const int i0 = spin.index_of(p.level(spin));
    ReducedWavefunction psi;
    psi.spin = spin;
    psi.grid = grid;
    psi.tau = tau0;
    psi.amps.assign(grid.size * spin.dim(), cplx(0.0, 0.0));
    double norm = 0.0;
    for (std::size_t j = 0; j < grid.size; ++j) {
        const double P = grid.at(j);
        const double x = (P - center) / sp;
        const double mag = std::exp(-0.5 * x * x);
        const double phase = -p.q0 * P * d.L_over_hbar - cubic_phase(d, P - tau0);
        psi(j, i0) = std::polar(mag, phase);
        norm += mag * mag;
    }
    const double z = 1.0 / std::sqrt(norm * grid.step);
    for (auto& a : psi.amps) a *= z;
    return psi;
}

inline ReducedWavefunction init_packet(Spin spin, const DimensionlessParams& d, const PacketSpec& p,
                                       const GridOptions& opt = {}, double tau0 = 0.0) {
    return init_packet(spin, d, p, make_momentum_grid(spin, with_spin(d, spin), p, opt, tau0), tau0);
}

// ---------------------------------------------------------------------------
// Observables

inline std::vector<double> occupation_probabilities(const ReducedWavefunction& psi) {
    const int n = psi.dim();
    std::vector<double> p(n, 0.0);
    for (std::size_t j = 0; j < psi.grid.size; ++j)
        for (int i = 0; i < n; ++i) p[i] += std::norm(psi(j, i));
    for (auto& v : p) v *= psi.grid.step;
    return p;
}

inline double total_norm(const ReducedWavefunction& psi) {
    double s = 0.0;
    for (const auto& a : psi.amps) s += std::norm(a);
    return s * psi.grid.step;
}

/// Sum over m of |psi_m(P_j)|^2 for each grid point.
inline std::vector<double> point_norms(const ReducedWavefunction& psi) {
    std::vector<double> r(psi.grid.size, 0.0);
    for (std::size_t j = 0; j < psi.grid.size; ++j)
        for (int i = 0; i < psi.dim(); ++i) r[j] += std::norm(psi(j, i));
    return r;
}

/// Density on a uniform physical-momentum grid.
struct MomentumDensity {
    double origin = 0.0;
    double step = 1.0;
    std::vector<double> density;

    [[nodiscard]] double at(std::size_t i) const { return origin + step * static_cast<double>(i); }
};

/// Physical grid index of channel i, grid point j: j + (l - m) K.
inline std::size_t physical_index(const ReducedWavefunction& psi, std::size_t j, int i) {
    return j + static_cast<std::size_t>(psi.spin.two_l() - i) * static_cast<std::size_t>(psi.grid.per_quantum);
}

inline MomentumDensity reconstruct_momentum_density(const ReducedWavefunction& psi) {
    const double kick = psi.grid.step * psi.grid.per_quantum;
    MomentumDensity out;
    out.step = psi.grid.step;
    out.origin = psi.grid.origin - psi.tau - psi.spin.l() * kick;
    out.density.assign(psi.grid.size + static_cast<std::size_t>(psi.spin.two_l()) * psi.grid.per_quantum, 0.0);
    for (std::size_t j = 0; j < psi.grid.size; ++j)
        for (int i = 0; i < psi.dim(); ++i) out.density[physical_index(psi, j, i)] += std::norm(psi(j, i));
    return out;
}

struct PositionWindowOptions {
    /// Centre of the reconstructed window in q~.
    double q_center = 0.0;
    /// Zero-padding factor of the transform.
    int pad = 4;
    /// Fraction of the window at each edge used by the aliasing check.
    double edge_fraction = 0.05;
    double edge_mass_threshold = 1e-6;
};

struct PositionDensity {
    double origin = 0.0;
    double step = 1.0;
    std::vector<double> density;
    /// per_channel[i][k]: contribution of level m_i.
    std::vector<std::vector<double>> per_channel;
    bool aliasing_warning = false;

    [[nodiscard]] double at(std::size_t k) const { return origin + step * static_cast<double>(k); }
};

/// Position window length 2 pi / (dP L/hbar) of a grid.
inline double position_window(const ReducedWavefunction& psi, double L_over_hbar) {
    return 2.0 * std::numbers::pi / (psi.grid.step * L_over_hbar);
}

inline PositionDensity reconstruct_position_density(const ReducedWavefunction& psi, const DimensionlessParams& d_in,
                                                    const PositionWindowOptions& opt = {}) {
    const DimensionlessParams d = with_spin(d_in, psi.spin);
    const std::size_t N = psi.grid.size;
    const std::size_t M = N * static_cast<std::size_t>(std::max(1, opt.pad));
    const double window = position_window(psi, d.L_over_hbar);
    const double dq = window / static_cast<double>(M);
    const double scale = psi.grid.step * psi.grid.step * d.L_over_hbar / (2.0 * std::numbers::pi);

    PositionDensity out;
    out.step = dq;
    out.origin = opt.q_center - 0.5 * window;
    out.density.assign(M, 0.0);
    out.per_channel.assign(psi.dim(), std::vector<double>(M, 0.0));

    Eigen::FFT<double> fft;
    std::vector<cplx> in(M), spec(M);
    for (int i = 0; i < psi.dim(); ++i) {
        bool any = false;
        std::fill(in.begin(), in.end(), cplx(0.0, 0.0));
        for (std::size_t j = 0; j < N; ++j) {
            const cplx a = psi(j, i);
            if (a == cplx(0.0, 0.0)) continue;
            any = true;
            const double P_arg = psi.grid.at(j) - psi.tau;
            const double ph = cubic_phase(d, P_arg) + out.origin * P_arg * d.L_over_hbar;
            in[j] = std::conj(a * std::polar(1.0, ph));
        }
        if (!any) continue;
        fft.fwd(spec, in);
        for (std::size_t k = 0; k < M; ++k) {
            const double v = std::norm(spec[k]) * scale;
            out.per_channel[i][k] = v;
            out.density[k] += v;
        }
    }
    const std::size_t edge = static_cast<std::size_t>(opt.edge_fraction * static_cast<double>(M));
    double edge_mass = 0.0;
    for (std::size_t k = 0; k < edge; ++k) edge_mass += out.density[k] + out.density[M - 1 - k];
    out.aliasing_warning = edge_mass * dq > opt.edge_mass_threshold;
    return out;
}

// ---------------------------------------------------------------------------
// Propagation

struct StepControl {
    /// Upper bound on the step; the actual step is grid.step / r with integer r.
    double max_dtau = 1e-3;
    /// Halve the step until centre-point occupations change by less than this.
    double observable_tol = 1e-8;
    int max_halvings = 12;
    /// Forces the substep count r when positive.
    int substeps = 0;
};

class PropagationFailure : public DaemonError {
public:
    PropagationFailure(const std::string& what, ReducedWavefunction partial)
        : DaemonError(what), partial_(std::move(partial)) {}
    [[nodiscard]] const ReducedWavefunction& partial() const noexcept { return partial_; }

private:
    ReducedWavefunction partial_;
};

/// exp(-i h(sigma) dt) as a dense row-major complex matrix.
inline void midpoint_propagator(const ReducedHamiltonian& h, double sigma, double dt, cplx* out) {
    const int n = h.spin.dim();
    const Eigensystem es = eigensystem(h, sigma);
    std::vector<cplx> ph(n);
    for (int k = 0; k < n; ++k) ph[k] = std::polar(1.0, -es.values(k) * dt);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            cplx s(0.0, 0.0);
            for (int k = 0; k < n; ++k) s += es.vectors(a, k) * es.vectors(b, k) * ph[k];
            out[a * n + b] = s;
        }
}

/// Propagates a single vector under h(sigma) from sigma_start with steps dt.
class PointPropagator {
public:
    PointPropagator(const ReducedHamiltonian& h, double sigma_start, std::vector<cplx> v, double dt)
        : h_(h), sigma_(sigma_start), v_(std::move(v)), dt_(dt), U_(v_.size() * v_.size()), tmp_(v_.size()) {}

    void step() { step_by(dt_); }

    void step_by(double dt) {
        midpoint_propagator(h_, sigma_ + 0.5 * dt, dt, U_.data());
        apply();
        sigma_ += dt;
    }

    [[nodiscard]] double sigma() const { return sigma_; }
    [[nodiscard]] const std::vector<cplx>& state() const { return v_; }

private:
    void apply() {
        const std::size_t n = v_.size();
        for (std::size_t a = 0; a < n; ++a) {
            cplx s(0.0, 0.0);
            for (std::size_t b = 0; b < n; ++b) s += U_[a * n + b] * v_[b];
            tmp_[a] = s;
        }
        v_.swap(tmp_);
    }

    ReducedHamiltonian h_;
    double sigma_;
    std::vector<cplx> v_;
    double dt_;
    std::vector<cplx> U_, tmp_;
};

/// Chooses the substep count r (dt = grid.step / r) by halving until the centre-point
/// occupations at grid-aligned checkpoints change by less than ctrl.observable_tol.
struct SubstepChoice {
    int substeps = 1;
    double dtau = 0.0;
    double last_change = 0.0;
    bool converged = false;
};

inline SubstepChoice choose_substeps(const ReducedWavefunction& psi, const DimensionlessParams& d_in, double tau_end,
                                     const StepControl& ctrl, std::optional<double> center = std::nullopt) {
    const DimensionlessParams d = with_spin(d_in, psi.spin);
    const ReducedHamiltonian h(psi.spin, d);
    SubstepChoice out;
    const double dP = psi.grid.step;
    if (ctrl.substeps > 0) {
        out.substeps = ctrl.substeps;
        out.dtau = dP / ctrl.substeps;
        out.converged = true;
        return out;
    }
    double pc = 0.0;
    if (center) {
        pc = *center;
    } else {
        double w = 0.0;
        const auto norms = point_norms(psi);
        for (std::size_t j = 0; j < norms.size(); ++j) {
            pc += norms[j] * psi.grid.at(j);
            w += norms[j];
        }
        pc /= w;
    }
    std::size_t jc = static_cast<std::size_t>(std::clamp(std::lround((pc - psi.grid.origin) / dP), 0L,
                                                         static_cast<long>(psi.grid.size - 1)));
    std::vector<cplx> v0(psi.dim());
    double nv = 0.0;
    for (int i = 0; i < psi.dim(); ++i) {
        v0[i] = psi(jc, i);
        nv += std::norm(v0[i]);
    }
    for (auto& a : v0) a /= std::sqrt(nv);
    const double sigma0 = psi.tau + d.resonant_momentum() - psi.grid.at(jc);
    const std::size_t grid_steps = static_cast<std::size_t>(std::ceil((tau_end - psi.tau) / dP - 1e-9));
    const std::size_t checkpoints = std::min<std::size_t>(64, std::max<std::size_t>(grid_steps, 1));

    auto run = [&](int r) {
        PointPropagator pp(h, sigma0, v0, dP / r);
        std::vector<std::vector<double>> occ;
        std::size_t next = 1;
        for (std::size_t g = 1; g <= grid_steps; ++g) {
            for (int s = 0; s < r; ++s) pp.step();
            if (g * checkpoints >= next * grid_steps) {
                std::vector<double> o(psi.dim());
                for (int i = 0; i < psi.dim(); ++i) o[i] = std::norm(pp.state()[i]);
                occ.push_back(std::move(o));
                ++next;
            }
        }
        return occ;
    };

    int r = std::max(1, static_cast<int>(std::ceil(dP / ctrl.max_dtau - 1e-9)));
    auto prev = run(r);
    for (int k = 0; k < ctrl.max_halvings; ++k) {
        const auto cur = run(2 * r);
        double change = 0.0;
        for (std::size_t c = 0; c < cur.size() && c < prev.size(); ++c)
            for (int i = 0; i < psi.dim(); ++i) change = std::max(change, std::abs(cur[c][i] - prev[c][i]));
        r *= 2;
        out.last_change = change;
        if (change < ctrl.observable_tol) {
            out.converged = true;
            break;
        }
        prev = cur;
    }
    out.substeps = r;
    out.dtau = dP / r;
    if (!out.converged && out.dtau < 1e-12) {
        throw PropagationFailure("step size underflow while choosing the time step", psi);
    }
    return out;
}

struct PropagatorOptions {
    unsigned threads = 1;
    /// Accumulate the integral of <m> for energy bookkeeping.
    bool track_mean_m = true;
};

/// Lattice propagator: all grid points share sigma-lattice points sigma_base + k dt,
/// with k = n - j r at step n, so each midpoint exponential is computed once per chunk.
class GridPropagator {
public:
    GridPropagator(const DimensionlessParams& d_in, ReducedWavefunction psi, int substeps,
                   const PropagatorOptions& opt = {})
        : d_(with_spin(d_in, psi.spin)), h_(psi.spin, d_), psi_(std::move(psi)), r_(substeps), opt_(opt) {
        if (r_ < 1) throw DomainError("substep count must be positive");
        dt_ = psi_.grid.step / r_;
        tau0_ = psi_.tau;
        sigma_base_ = tau0_ + d_.resonant_momentum() - psi_.grid.origin;
        const unsigned threads = resolve_threads(opt_.threads);
        const std::size_t N = psi_.grid.size;
        const std::size_t blocks = (N + kBlock - 1) / kBlock;
        const std::size_t workers = std::min<std::size_t>(threads, blocks);
        for (std::size_t w = 0; w < workers; ++w) {
            Chunk c;
            c.j0 = std::min(N, blocks * w / workers * kBlock);
            c.j1 = std::min(N, blocks * (w + 1) / workers * kBlock);
            if (c.j0 < c.j1) chunks_.push_back(std::move(c));
        }
        mean_m_ = mean_m_now();
        integral_m_ = 0.0;
    }

    [[nodiscard]] const ReducedWavefunction& state() const { return psi_; }
    [[nodiscard]] double dt() const { return dt_; }
    [[nodiscard]] long step_index() const { return n_; }
    [[nodiscard]] int substeps() const { return r_; }
    /// Integral of <m> over tau since the start (trapezoid over steps).
    [[nodiscard]] double integrated_mean_m() const { return integral_m_; }
    [[nodiscard]] double mean_m() const { return mean_m_; }
    [[nodiscard]] double start_tau() const { return tau0_; }

    /// Advances by n_steps steps of dt.
    void advance(std::size_t n_steps) {
        if (n_steps == 0) return;
        const std::size_t N = psi_.grid.size;
        const std::size_t blocks = (N + kBlock - 1) / kBlock;
        std::vector<double> block_sums(opt_.track_mean_m ? blocks * n_steps : 0, 0.0);
        const long n_start = n_;
        auto work = [&](Chunk& c) { run_chunk(c, n_start, n_steps, block_sums, blocks); };
        if (chunks_.size() == 1) {
            work(chunks_[0]);
        } else {
            std::vector<std::jthread> pool;
            for (auto& c : chunks_) pool.emplace_back([&work, &c] { work(c); });
        }
        n_ += static_cast<long>(n_steps);
        psi_.tau = tau0_ + static_cast<double>(n_) * dt_;
        if (opt_.track_mean_m) {
            for (std::size_t s = 0; s < n_steps; ++s) {
                double m = 0.0;
                for (std::size_t b = 0; b < blocks; ++b) m += block_sums[s * blocks + b];
                m *= psi_.grid.step;
                integral_m_ += 0.5 * dt_ * (mean_m_ + m);
                mean_m_ = m;
            }
        } else {
            mean_m_ = mean_m_now();
        }
    }

    /// Advances to the lattice time closest to tau (never backwards).
    void advance_to(double tau) {
        const long target = std::lround((tau - tau0_) / dt_);
        if (target > n_) advance(static_cast<std::size_t>(target - n_));
    }

private:
    static constexpr std::size_t kBlock = 64;

    struct Chunk {
        std::size_t j0 = 0, j1 = 0;
        std::vector<cplx> ring;
        std::size_t ring_size = 0;
        long k_hi = std::numeric_limits<long>::min();
    };

    [[nodiscard]] double mean_m_now() const {
        double m = 0.0;
        for (std::size_t j = 0; j < psi_.grid.size; ++j)
            for (int i = 0; i < psi_.dim(); ++i) m += psi_.spin.m(i) * std::norm(psi_(j, i));
        return m * psi_.grid.step;
    }

    [[nodiscard]] std::size_t slot(long k, std::size_t size) const {
        const long s = static_cast<long>(size);
        return static_cast<std::size_t>(((k % s) + s) % s);
    }

    void fill(Chunk& c, long k) const {
        const int n = psi_.dim();
        const double sigma = sigma_base_ + (static_cast<double>(k) + 0.5) * dt_;
        midpoint_propagator(h_, sigma, dt_, &c.ring[slot(k, c.ring_size) * n * n]);
    }

    void run_chunk(Chunk& c, long n_start, std::size_t n_steps, std::vector<double>& block_sums,
                   std::size_t blocks) {
        const int n = psi_.dim();
        const long r = r_;
        const long j0 = static_cast<long>(c.j0);
        const long j1 = static_cast<long>(c.j1);
        if (c.ring.empty()) {
            c.ring_size = static_cast<std::size_t>((j1 - 1 - j0) * r + 1);
            c.ring.assign(c.ring_size * n * n, cplx(0.0, 0.0));
        }
        std::vector<cplx> tmp(n);
        cplx* amps = psi_.amps.data();
        for (std::size_t s = 0; s < n_steps; ++s) {
            const long step = n_start + static_cast<long>(s);
            const long k_lo = step - (j1 - 1) * r;
            const long k_hi = step - j0 * r;
            const long from = std::max(k_lo, c.k_hi + 1);
            for (long k = from; k <= k_hi; ++k) fill(c, k);
            c.k_hi = k_hi;
            for (long j = j0; j < j1; ++j) {
                const cplx* U = &c.ring[slot(step - j * r, c.ring_size) * n * n];
                cplx* v = amps + static_cast<std::size_t>(j) * n;
                for (int a = 0; a < n; ++a) {
                    cplx acc(0.0, 0.0);
                    const cplx* row = U + a * n;
                    for (int b = 0; b < n; ++b) acc += row[b] * v[b];
                    tmp[a] = acc;
                }
                std::copy(tmp.begin(), tmp.end(), v);
            }
            if (!block_sums.empty()) {
                for (long j = j0; j < j1; ++j) {
                    const cplx* v = amps + static_cast<std::size_t>(j) * n;
                    double m = 0.0;
                    for (int a = 0; a < n; ++a) m += psi_.spin.m(a) * std::norm(v[a]);
                    block_sums[s * blocks + static_cast<std::size_t>(j) / kBlock] += m;
                }
            }
        }
    }

    DimensionlessParams d_;
    ReducedHamiltonian h_;
    ReducedWavefunction psi_;
    int r_;
    PropagatorOptions opt_;
    double dt_ = 0.0;
    double tau0_ = 0.0;
    double sigma_base_ = 0.0;
    long n_ = 0;
    std::vector<Chunk> chunks_;
    double mean_m_ = 0.0;
    double integral_m_ = 0.0;
};

struct EnergyBreakdown {
    double kinetic = 0.0;   ///< <(P - tau)^2>/2M~ over the conserved variable
    double internal = 0.0;  ///< (hbar/L) <h(sigma)>
    double position = 0.0;  ///< <q~>
    [[nodiscard]] double total() const { return kinetic + internal + position; }
};

/// Mean physical energy <P^2/2M~ + q~ + Omega~ lz - gamma~ coupling>, with <q~> advanced by
/// Ehrenfest's theorem from q0 at tau0.
inline EnergyBreakdown mean_energy(const GridPropagator& prop, const DimensionlessParams& d_in, double q0) {
    const ReducedWavefunction& psi = prop.state();
    const DimensionlessParams d = with_spin(d_in, psi.spin);
    const ReducedHamiltonian h(psi.spin, d);
    const int n = psi.dim();
    const double tau = psi.tau;
    EnergyBreakdown e;
    double mean_pc = 0.0;
    const Eigen::VectorXd off = h.offdiagonal_vector();
    for (std::size_t j = 0; j < psi.grid.size; ++j) {
        const double P = psi.grid.at(j);
        const double sigma = tau + d.resonant_momentum() - P;
        double rho = 0.0;
        double hv = 0.0;
        for (int i = 0; i < n; ++i) {
            const double p = std::norm(psi(j, i));
            rho += p;
            hv += h.diagonal(psi.spin.m(i), sigma) * p;
            if (i + 1 < n) hv += 2.0 * off(i) * std::real(std::conj(psi(j, i)) * psi(j, i + 1));
        }
        e.kinetic += (P - tau) * (P - tau) / (2.0 * d.M_tilde) * rho;
        e.internal += hv;
        mean_pc += P * rho;
    }
    e.kinetic *= psi.grid.step;
    e.internal *= psi.grid.step * d.hbar_over_L();
    mean_pc *= psi.grid.step;
    const double t0 = prop.start_tau();
    const double int_p = mean_pc * (tau - t0) - 0.5 * (tau * tau - t0 * t0) - d.hbar_over_L() * prop.integrated_mean_m();
    e.position = q0 + int_p / d.M_tilde;
    return e;
}

using Observer = std::function<void(const GridPropagator&)>;

struct PropagationResult {
    ReducedWavefunction state;
    SubstepChoice steps;
};

/// Propagates to tau_end, calling observer at tau0 and then every sample_dtau (rounded to the lattice).
inline PropagationResult propagate(const ReducedWavefunction& psi, const DimensionlessParams& d, double tau_end,
                                   const StepControl& ctrl = {}, const PropagatorOptions& popt = {},
                                   double sample_dtau = 0.0, const Observer& observer = {}) {
    if (tau_end < psi.tau) throw DomainError("propagation end precedes the current time");
    PropagationResult res;
    res.steps = choose_substeps(psi, d, tau_end, ctrl);
    GridPropagator prop(d, psi, res.steps.substeps, popt);
    if (observer) observer(prop);
    const long total = std::lround((tau_end - psi.tau) / prop.dt());
    if (sample_dtau > 0.0 && observer) {
        const long stride = std::max(1L, std::lround(sample_dtau / prop.dt()));
        while (prop.step_index() < total) {
            prop.advance(static_cast<std::size_t>(std::min(stride, total - prop.step_index())));
            observer(prop);
        }
    } else {
        prop.advance(static_cast<std::size_t>(total));
        if (observer) observer(prop);
    }
    res.state = prop.state();
    return res;
}

} // namespace hdaemon
