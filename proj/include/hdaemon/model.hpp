#pragma once

// Parameters of the daemon Hamiltonian
//
//   H = P^2/2M + M g Q + Omega L_z - gamma [L_x cos kQ + L_y sin kQ]
//
// and its dimensionless form. Everything downstream of this header works in
// the dimensionless variables q = kQ, p = P/(kL), lz = L_z/L and
// tau = M g t/(kL); physical units only appear at I/O boundaries.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hdaemon/errors.hpp"

namespace hdaemon {

struct PhysicalParams {
    double M = 1.0;      ///< mass of the weight
    double g = 1.0;      ///< acceleration of the linear force
    double k = 1.0;      ///< inverse coupling length
    double Omega = 1.0;  ///< fast angular frequency
    double gamma = 1.0;  ///< coupling rate
    double L = 1.0;      ///< total angular momentum (action units)
    double hbar = 1.0;   ///< action quantum
};

struct DimensionlessParams {
    double M_tilde = 1.0 / 3000.0;
    double Omega_tilde = 600.0;
    double gamma_tilde = 15.0;
    /// L/hbar; +inf for purely classical runs.
    double L_over_hbar = std::numeric_limits<double>::infinity();

    [[nodiscard]] bool is_quantum() const noexcept { return std::isfinite(L_over_hbar); }

    /// hbar/L, i.e. the momentum kick hbar k in units of kL. Zero classically.
    [[nodiscard]] double hbar_over_L() const noexcept {
        return is_quantum() ? 1.0 / L_over_hbar : 0.0;
    }

    /// Momentum at the classical critical speed, M~ * Omega~.
    [[nodiscard]] double resonant_momentum() const noexcept { return M_tilde * Omega_tilde; }

    /// Small-oscillation frequency inside the resonance, sqrt(gamma~/M~).
    [[nodiscard]] double libration_frequency() const noexcept {
        return std::sqrt(gamma_tilde / M_tilde);
    }
};

/// Angular momentum quantum number l, stored as 2l so half-integers are exact.
class Spin {
public:
    constexpr Spin() = default;
    constexpr explicit Spin(int two_l) : two_l_(two_l) {}

    static Spin from_l(double l) {
        const double twice = 2.0 * l;
        const long rounded = std::lround(twice);
        if (l <= 0.0 || std::abs(twice - static_cast<double>(rounded)) > 1e-12) {
            throw DomainError("l must be a positive integer or half-integer");
        }
        return Spin(static_cast<int>(rounded));
    }

    [[nodiscard]] constexpr int two_l() const noexcept { return two_l_; }
    [[nodiscard]] constexpr double l() const noexcept { return 0.5 * two_l_; }
    [[nodiscard]] constexpr int dim() const noexcept { return two_l_ + 1; }
    [[nodiscard]] constexpr double m(int index) const noexcept { return index - l(); }

    /// Index of quantum number m in the basis ordered m = -l ... +l.
    [[nodiscard]] int index_of(double m) const {
        const double idx = m + l();
        const long rounded = std::lround(idx);
        if (std::abs(idx - static_cast<double>(rounded)) > 1e-9 || rounded < 0 || rounded > two_l_) {
            throw DomainError("m = " + std::to_string(m) + " is not on the ladder of l = " +
                              std::to_string(l()));
        }
        return static_cast<int>(rounded);
    }

    [[nodiscard]] double casimir() const noexcept { return l() * (l() + 1.0); }
    [[nodiscard]] double L_over_hbar() const noexcept { return std::sqrt(casimir()); }

    friend constexpr bool operator==(Spin, Spin) = default;

private:
    int two_l_ = 1;
};

inline DimensionlessParams nondimensionalize(const PhysicalParams& p) {
    for (double v : {p.M, p.g, p.k, p.Omega, p.gamma, p.L, p.hbar}) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw DomainError("physical parameters must be finite and strictly positive");
        }
    }
    DimensionlessParams d;
    d.M_tilde = p.M * p.M * p.g / (p.k * p.k * p.k * p.L * p.L);
    d.Omega_tilde = p.k * p.L * p.Omega / (p.M * p.g);
    d.gamma_tilde = p.k * p.L * p.gamma / (p.M * p.g);
    d.L_over_hbar = p.L / p.hbar;
    return d;
}

/// Dimensionless parameters with L/hbar = sqrt(l(l+1)).
inline DimensionlessParams with_spin(DimensionlessParams d, Spin spin) {
    d.L_over_hbar = spin.L_over_hbar();
    return d;
}

/// The parameter set used throughout the reference runs (M~=1/3000, Omega~=600,
/// gamma~=15), optionally quantized with spin l.
inline DimensionlessParams reference_params(std::optional<Spin> spin = std::nullopt) {
    DimensionlessParams d;
    if (spin) d = with_spin(d, *spin);
    return d;
}

struct QuantumCriticals {
    double v_q = 0.0;           ///< quantum critical speed dq/dtau
    double p_q = 0.0;           ///< momentum at v_q
    double p_q_kicked = 0.0;    ///< momentum after one kick, p_q + hbar/L
    double delta_p = 0.0;       ///< momentum jump hbar k, in units of kL
    double jump_period = 0.0;   ///< tau between successive jumps
};

struct CriticalVelocities {
    double v_c = 0.0;  ///< classical critical speed dq/dtau = Omega~
    double p_c = 0.0;  ///< momentum at v_c = M~ Omega~
    std::optional<QuantumCriticals> quantum;
};

inline CriticalVelocities critical_velocities(const DimensionlessParams& d, bool include_quantum = true) {
    CriticalVelocities c;
    c.v_c = d.Omega_tilde;
    c.p_c = d.resonant_momentum();
    if (include_quantum) {
        if (!d.is_quantum()) {
            throw UnsupportedModeError("quantum critical quantities need a finite L/hbar");
        }
        const double kick = d.hbar_over_L();
        QuantumCriticals q;
        q.p_q = c.p_c - 0.5 * kick;
        q.v_q = q.p_q / d.M_tilde;
        q.p_q_kicked = q.p_q + kick;
        q.delta_p = kick;
        q.jump_period = kick;
        c.quantum = q;
    }
    return c;
}

struct RegimeOptions {
    /// Realization of "much less than": a << b means factor * a <= b.
    double much_less_factor = 10.0;
};

struct RegimeReport {
    bool is_daemon = false;
    bool is_strong_quantum = false;
    double resonant_momentum = 0.0;
    /// Small-coupling separatrix area estimate 16 sqrt(M~ gamma~), in units of L.
    double separatrix_area_estimate = 0.0;
    /// Same estimate in units of pi*hbar (quantum runs only).
    std::optional<double> separatrix_area_estimate_pi_hbar;
    std::string notes;
};

inline RegimeReport classify_regime(const DimensionlessParams& d, const RegimeOptions& opt = {}) {
    RegimeReport r;
    const double f = opt.much_less_factor;
    const bool lifts = d.gamma_tilde > 1.0;
    const bool fast_sector = f * d.gamma_tilde <= d.Omega_tilde;
    const bool cheap_launch = f * d.M_tilde * d.Omega_tilde / 4.0 <= 1.0;
    r.is_daemon = lifts && fast_sector && cheap_launch;
    r.resonant_momentum = d.resonant_momentum();
    r.separatrix_area_estimate = 16.0 * std::sqrt(d.M_tilde * d.gamma_tilde);

    if (d.is_quantum()) {
        const double threshold = std::pow(std::numbers::pi * d.hbar_over_L() / 8.0, 2);
        r.is_strong_quantum = d.M_tilde * d.gamma_tilde <= threshold;
        r.separatrix_area_estimate_pi_hbar = r.separatrix_area_estimate * d.L_over_hbar / std::numbers::pi;
    }

    if (!lifts) r.notes += "gamma~ <= 1: coupling cannot lift the weight; ";
    if (!fast_sector) r.notes += "gamma~ not << Omega~; ";
    if (!cheap_launch) r.notes += "M~ Omega~/4 not << 1; ";
    if (d.M_tilde * d.gamma_tilde > 0.05) r.notes += "M~ gamma~ > 0.05: area estimate unreliable; ";
    return r;
}

} // namespace hdaemon
