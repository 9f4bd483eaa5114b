#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "hdaemon/errors.hpp"
#include "hdaemon/model.hpp"
#include "hdaemon/numerics.hpp"

namespace hdaemon {

struct FullClassicalState {
    double q = 0.0;
    double p = 0.0;
    double phi = 0.0;
    double lz = 0.0;

    static constexpr std::size_t size = 4;
    using array_type = std::array<double, 4>;
    [[nodiscard]] array_type array() const { return {q, p, phi, lz}; }
    static FullClassicalState from(const array_type& a) { return {a[0], a[1], a[2], a[3]}; }
    static constexpr std::size_t lz_index = 3;
};

struct ReducedClassicalState {
    double phi = 0.0;
    double lz = 0.0;

    static constexpr std::size_t size = 2;
    using array_type = std::array<double, 2>;
    [[nodiscard]] array_type array() const { return {phi, lz}; }
    static ReducedClassicalState from(const array_type& a) { return {a[0], a[1]}; }
    static constexpr std::size_t lz_index = 1;
};

enum class PhaseLabel { Decoupling, Downconversion, Inconclusive };

inline const char* to_string(PhaseLabel l) {
    switch (l) {
        case PhaseLabel::Decoupling: return "decoupling";
        case PhaseLabel::Downconversion: return "downconversion";
        case PhaseLabel::Inconclusive: return "inconclusive";
    }
    return "?";
}

struct Diagnostics {
    double energy = 0.0;
    /// Conserved J~ for full trajectories, NaN for reduced ones.
    double J = std::numeric_limits<double>::quiet_NaN();
    PhaseLabel label = PhaseLabel::Inconclusive;
};

template <class State>
struct Trajectory {
    std::vector<double> times;
    std::vector<State> states;
    /// d(state)/dtau at each sample, used for Hermite dense output.
    std::vector<State> rates;
    std::vector<Diagnostics> diagnostics;
    /// Reduced trajectories only: sigma = tau + sigma_offset.
    double sigma_offset = 0.0;

    [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
    [[nodiscard]] bool empty() const noexcept { return times.empty(); }

    /// Dense output by cubic Hermite interpolation between accepted steps.
    [[nodiscard]] State at(double t) const {
        if (times.size() == 1) return states.front();
        const std::size_t i = bracket_index(times, t);
        const auto a = states[i].array();
        const auto b = states[i + 1].array();
        const auto da = rates[i].array();
        const auto db = rates[i + 1].array();
        typename State::array_type out{};
        for (std::size_t k = 0; k < State::size; ++k) {
            out[k] = hermite(times[i], times[i + 1], a[k], b[k], da[k], db[k], t);
        }
        return State::from(out);
    }
};

using FullTrajectory = Trajectory<FullClassicalState>;
using ReducedTrajectory = Trajectory<ReducedClassicalState>;

/// Thrown when the adaptive step collapses; carries what was integrated so far.
template <class State>
class IntegrationFailure : public DaemonError {
public:
    IntegrationFailure(const std::string& what, Trajectory<State> partial)
        : DaemonError(what), partial_(std::move(partial)) {}
    [[nodiscard]] const Trajectory<State>& partial() const noexcept { return partial_; }

private:
    Trajectory<State> partial_;
};

struct TimeSpan {
    double t0 = 0.0;
    double t1 = 3.0;
};

struct IntegrationOptions {
    double tol = 1e-12;
    /// Steps that would bring |lz| to 1 - pole_margin or beyond are rejected.
    double pole_margin = 1e-12;
    double initial_step = 1e-5;
    std::size_t max_steps = 50'000'000;
};

// ---------------------------------------------------------------------------
// Full four-dimensional system

inline double full_hamiltonian(const DimensionlessParams& d, const FullClassicalState& s) {
    const double r = std::sqrt(std::max(0.0, 1.0 - s.lz * s.lz));
    return s.p * s.p / (2.0 * d.M_tilde) + s.q + d.Omega_tilde * s.lz -
           d.gamma_tilde * r * std::cos(s.q - s.phi);
}

/// Hamilton's equations of the dimensionless daemon Hamiltonian.
inline FullClassicalState full_derivatives(const DimensionlessParams& d, const FullClassicalState& s,
                                           double /*tau*/ = 0.0) {
    if (std::abs(s.lz) >= 1.0) {
        throw PoleSingularityError("full_derivatives evaluated at a pole (|lz| = 1)");
    }
    const double r = std::sqrt(1.0 - s.lz * s.lz);
    const double c = std::cos(s.q - s.phi);
    const double sn = std::sin(s.q - s.phi);
    FullClassicalState ds;
    ds.q = s.p / d.M_tilde;
    ds.p = -1.0 - d.gamma_tilde * r * sn;
    ds.phi = d.Omega_tilde + d.gamma_tilde * s.lz * c / r;
    ds.lz = d.gamma_tilde * r * sn;
    return ds;
}

/// J~ = p + tau + lz, conserved along exact trajectories.
inline double noether_J(const FullClassicalState& s, double tau) { return s.p + tau + s.lz; }

// ---------------------------------------------------------------------------
// Reduced dynamics on the L sphere, driven by sigma = tau + sigma_offset

inline double reduced_hamiltonian(const DimensionlessParams& d, double sigma, double phi, double lz) {
    const double r = std::sqrt(std::max(0.0, 1.0 - lz * lz));
    return (0.5 * lz * lz + sigma * lz) / d.M_tilde - d.gamma_tilde * r * std::cos(phi);
}

inline ReducedClassicalState reduced_derivatives(const DimensionlessParams& d, const ReducedClassicalState& s,
                                                 double sigma) {
    if (std::abs(s.lz) >= 1.0) {
        throw PoleSingularityError("reduced_derivatives evaluated at a pole (|lz| = 1)");
    }
    const double r = std::sqrt(1.0 - s.lz * s.lz);
    ReducedClassicalState ds;
    ds.phi = (s.lz + sigma) / d.M_tilde + d.gamma_tilde * s.lz * std::cos(s.phi) / r;
    ds.lz = -d.gamma_tilde * r * std::sin(s.phi);
    return ds;
}

/// Offset such that sigma = tau + offset for a full trajectory with constant J~.
inline double reduced_sigma_offset(const DimensionlessParams& d, double J) {
    return d.resonant_momentum() - J;
}

/// Maps a full state onto the reduced sphere: (phi - q, lz).
inline ReducedClassicalState full_to_reduced(const FullClassicalState& s) { return {s.phi - s.q, s.lz}; }

struct SpherePoint {
    double x, y, z;
};

inline SpherePoint to_sphere(double phi, double lz) {
    const double r = std::sqrt(std::max(0.0, 1.0 - lz * lz));
    return {r * std::cos(phi), r * std::sin(phi), lz};
}

// ---------------------------------------------------------------------------
// Adaptive integration

namespace detail {

template <class State, class Rhs, class Diag>
Trajectory<State> integrate_adaptive(const Rhs& rhs, const Diag& diag, const State& s0, TimeSpan span,
                                     const IntegrationOptions& opt) {
    using namespace boost::numeric::odeint;
    using array_type = typename State::array_type;
    constexpr std::size_t lz_i = State::lz_index;

    if (!(opt.tol > 0.0)) throw DomainError("tolerance must be positive");
    if (!(span.t1 > span.t0)) throw DomainError("time span must be increasing");
    if (!(std::abs(s0.array()[lz_i]) < 1.0)) throw DomainError("initial |lz| must be < 1");

    auto system = [&](const array_type& x, array_type& dxdt, double t) {
        if (std::abs(x[lz_i]) >= 1.0 || !std::isfinite(x[lz_i])) {
            dxdt.fill(std::numeric_limits<double>::quiet_NaN());
            return;
        }
        dxdt = rhs(State::from(x), t).array();
    };

    Trajectory<State> traj;
    auto record = [&](double t, const array_type& x) {
        const State s = State::from(x);
        traj.times.push_back(t);
        traj.states.push_back(s);
        traj.rates.push_back(rhs(s, t));
        traj.diagnostics.push_back(diag(s, t));
    };

    auto stepper = make_controlled<runge_kutta_fehlberg78<array_type>>(opt.tol, 0.0);
    array_type x = s0.array();
    double t = span.t0;
    double dt = std::min(opt.initial_step, span.t1 - span.t0);
    record(t, x);

    const double limit = 1.0 - opt.pole_margin;
    std::size_t steps = 0;
    while (t < span.t1) {
        if (++steps > opt.max_steps) {
            throw IntegrationFailure<State>("step budget exhausted", std::move(traj));
        }
        const bool last = t + dt >= span.t1;
        if (last) dt = span.t1 - t;
        array_type trial = x;
        double t_trial = t;
        double dt_trial = dt;
        const auto res = stepper.try_step(system, trial, t_trial, dt_trial);
        bool ok = res == success;
        bool finite = true;
        for (double v : trial) finite = finite && std::isfinite(v);
        if (ok && (!finite || std::abs(trial[lz_i]) > limit)) {
            ok = false;
            dt_trial = 0.5 * dt;
        } else if (!finite) {
            dt_trial = 0.5 * dt;
        }
        if (ok) {
            x = trial;
            t = last ? span.t1 : t_trial;
            record(t, x);
            dt = dt_trial;
        } else {
            dt = std::min(dt_trial, 0.5 * dt);
        }
        if (dt < 1e-14 * std::max(1.0, std::abs(t))) {
            throw IntegrationFailure<State>("step size underflow at tau = " + std::to_string(t),
                                            std::move(traj));
        }
    }
    return traj;
}

} // namespace detail

inline FullTrajectory integrate_full(const DimensionlessParams& d, const FullClassicalState& s0, TimeSpan span,
                                     const IntegrationOptions& opt = {}) {
    auto rhs = [&](const FullClassicalState& s, double t) { return full_derivatives(d, s, t); };
    auto diag = [&](const FullClassicalState& s, double t) {
        Diagnostics g;
        g.energy = full_hamiltonian(d, s);
        g.J = noether_J(s, t);
        return g;
    };
    return detail::integrate_adaptive<FullClassicalState>(rhs, diag, s0, span, opt);
}

/// Integrates the reduced equations with sigma = tau + sigma_offset.
inline ReducedTrajectory integrate_reduced(const DimensionlessParams& d, const ReducedClassicalState& s0,
                                           TimeSpan span, double sigma_offset,
                                           const IntegrationOptions& opt = {}) {
    auto rhs = [&](const ReducedClassicalState& s, double t) {
        return reduced_derivatives(d, s, t + sigma_offset);
    };
    auto diag = [&](const ReducedClassicalState& s, double t) {
        Diagnostics g;
        g.energy = reduced_hamiltonian(d, t + sigma_offset, s.phi, s.lz);
        return g;
    };
    auto traj = detail::integrate_adaptive<ReducedClassicalState>(rhs, diag, s0, span, opt);
    traj.sigma_offset = sigma_offset;
    return traj;
}

// ---------------------------------------------------------------------------
// Phase classification

struct ClassifyOptions {
    /// Relative half-width of the speed band around Omega~.
    double band_tol = 0.1;
    /// Averaging window in units of the libration period 2 pi / omega~.
    double window_periods = 2.0;
    /// In-band stretches shorter than this are brief perturbations, not downconversion.
    double min_duration = 0.1;
};

struct PhaseInterval {
    double start = 0.0;
    double end = 0.0;
};

struct PhaseClassification {
    std::vector<PhaseLabel> labels;
    std::vector<PhaseInterval> downconversion;
    std::vector<PhaseInterval> perturbations;
    /// lz at the start minus lz at the end of the downconversion stretches.
    double net_lz_drop = 0.0;
    bool conclusive = true;

    [[nodiscard]] bool downconverts() const { return !downconversion.empty(); }
};

/// Mean dq/dtau over a window of width w centred at t, shifted to stay inside the trajectory.
inline double windowed_speed(const FullTrajectory& traj, double t, double w) {
    const double t0 = traj.times.front();
    const double t1 = traj.times.back();
    w = std::min(w, t1 - t0);
    double a = t - 0.5 * w;
    double b = t + 0.5 * w;
    if (a < t0) {
        a = t0;
        b = t0 + w;
    }
    if (b > t1) {
        b = t1;
        a = t1 - w;
    }
    return (traj.at(b).q - traj.at(a).q) / (b - a);
}

inline PhaseClassification classify_trajectory(const DimensionlessParams& d, const FullTrajectory& traj,
                                               const ClassifyOptions& opt = {}) {
    PhaseClassification out;
    const std::size_t n = traj.size();
    out.labels.assign(n, PhaseLabel::Decoupling);
    if (n < 2) {
        out.labels.assign(n, PhaseLabel::Inconclusive);
        out.conclusive = false;
        return out;
    }

    const double pc = d.resonant_momentum();
    const double upper = pc * (1.0 + opt.band_tol);
    double p_min = std::numeric_limits<double>::infinity();
    for (const auto& s : traj.states) p_min = std::min(p_min, s.p);
    if (d.gamma_tilde > 0.0 && p_min > upper) {
        out.labels.assign(n, PhaseLabel::Inconclusive);
        out.conclusive = false;
        return out;
    }
    if (d.gamma_tilde == 0.0 || d.Omega_tilde == 0.0) return out;

    const double w = opt.window_periods * 2.0 * std::numbers::pi / d.libration_frequency();
    std::vector<char> in_band(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = windowed_speed(traj, traj.times[i], w);
        in_band[i] = std::abs(v - d.Omega_tilde) <= opt.band_tol * d.Omega_tilde;
    }

    std::size_t i = 0;
    while (i < n) {
        if (!in_band[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && in_band[j + 1]) ++j;
        const PhaseInterval iv{traj.times[i], traj.times[j]};
        if (iv.end - iv.start >= opt.min_duration) {
            out.downconversion.push_back(iv);
            for (std::size_t k = i; k <= j; ++k) out.labels[k] = PhaseLabel::Downconversion;
            out.net_lz_drop += traj.states[i].lz - traj.states[j].lz;
        } else {
            out.perturbations.push_back(iv);
        }
        i = j + 1;
    }
    return out;
}

/// Writes the labels into the trajectory diagnostics.
inline void apply_labels(FullTrajectory& traj, const PhaseClassification& c) {
    for (std::size_t i = 0; i < traj.size() && i < c.labels.size(); ++i) traj.diagnostics[i].label = c.labels[i];
}

} // namespace hdaemon
