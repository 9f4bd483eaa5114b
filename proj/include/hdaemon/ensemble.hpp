#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hdaemon/classical.hpp"
#include "hdaemon/numerics.hpp"

namespace hdaemon {

enum class PhiSampling { UniformGrid, SeededUniform };

struct EnsembleSpec {
    std::size_t n_traj = 1000;
    std::uint64_t seed = 0;
    FullClassicalState base_state{0.0, 0.6, 0.0, std::sqrt(5.0 / 6.0)};
    PhiSampling phi_sampling = PhiSampling::UniformGrid;
    /// Added to every sampled phase.
    double phi_offset = 0.0;
};

struct EnsembleOptions {
    /// Stored samples per trajectory (uniform in tau, with derivatives for Hermite interpolation).
    std::size_t n_samples = 2049;
    IntegrationOptions integration{};
    ClassifyOptions classify{};
    unsigned threads = 1;
};

struct EnsembleMember {
    double phi0 = 0.0;
    bool ok = true;
    std::string failure;
    std::vector<double> q, p, dq, dp, lz;
    bool downconverts = false;
    std::vector<PhaseInterval> downconversion;
};

struct TrajectoryCollection {
    TimeSpan span;
    std::vector<double> times;
    std::vector<EnsembleMember> members;

    [[nodiscard]] std::size_t n_ok() const {
        return static_cast<std::size_t>(std::count_if(members.begin(), members.end(), [](const auto& m) { return m.ok; }));
    }
    [[nodiscard]] std::size_t n_failed() const { return members.size() - n_ok(); }
};

inline std::vector<double> initial_phases(const EnsembleSpec& spec) {
    if (spec.n_traj < 1) throw DomainError("n_traj must be at least 1");
    std::vector<double> phases(spec.n_traj);
    const double two_pi = 2.0 * std::numbers::pi;
    if (spec.phi_sampling == PhiSampling::UniformGrid) {
        for (std::size_t j = 0; j < spec.n_traj; ++j) {
            phases[j] = two_pi * static_cast<double>(j) / static_cast<double>(spec.n_traj);
        }
    } else {
        std::mt19937_64 rng(spec.seed);
        std::uniform_real_distribution<double> u(0.0, two_pi);
        for (auto& ph : phases) ph = u(rng);
    }
    for (auto& ph : phases) ph += spec.phi_offset;
    return phases;
}

inline TrajectoryCollection run_ensemble(const DimensionlessParams& d, const EnsembleSpec& spec, TimeSpan span,
                                         const EnsembleOptions& opt = {}) {
    const auto phases = initial_phases(spec);
    if (opt.n_samples < 2) throw DomainError("need at least two samples per trajectory");
    TrajectoryCollection out;
    out.span = span;
    out.times = linspace(span.t0, span.t1, opt.n_samples);
    out.members.resize(phases.size());

    parallel_for(phases.size(), resolve_threads(opt.threads), [&](std::size_t j) {
        EnsembleMember& m = out.members[j];
        m.phi0 = phases[j];
        FullClassicalState s0 = spec.base_state;
        s0.phi = phases[j];
        try {
            const FullTrajectory tr = integrate_full(d, s0, span, opt.integration);
            const std::size_t n = out.times.size();
            m.q.resize(n);
            m.p.resize(n);
            m.dq.resize(n);
            m.dp.resize(n);
            m.lz.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const FullClassicalState s = tr.at(out.times[i]);
                const FullClassicalState r = full_derivatives(d, s);
                m.q[i] = s.q;
                m.p[i] = s.p;
                m.lz[i] = s.lz;
                m.dq[i] = r.q;
                m.dp[i] = r.p;
            }
            const PhaseClassification c = classify_trajectory(d, tr, opt.classify);
            m.downconverts = c.downconverts();
            m.downconversion = c.downconversion;
        } catch (const DaemonError& e) {
            m.ok = false;
            m.failure = e.what();
        }
    });
    return out;
}

inline double downconversion_fraction(const TrajectoryCollection& c) {
    std::size_t n = 0, k = 0;
    for (const auto& m : c.members) {
        if (!m.ok) continue;
        ++n;
        if (m.downconverts) ++k;
    }
    return n ? static_cast<double>(k) / static_cast<double>(n) : 0.0;
}

enum class Axis { Q, P };

inline const char* to_string(Axis a) { return a == Axis::Q ? "Q" : "P"; }

struct DensityHistogram {
    Axis axis = Axis::Q;
    std::vector<double> bin_edges;
    std::vector<double> time_samples;
    /// counts[t * n_bins + b]
    std::vector<std::uint32_t> counts;
    std::vector<std::uint32_t> underflow;
    std::vector<std::uint32_t> overflow;
    std::size_t n_traj = 0;

    [[nodiscard]] std::size_t n_bins() const { return bin_edges.empty() ? 0 : bin_edges.size() - 1; }
    [[nodiscard]] std::uint32_t at(std::size_t t, std::size_t b) const { return counts[t * n_bins() + b]; }
    [[nodiscard]] std::vector<double> bin_centers() const {
        std::vector<double> c(n_bins());
        for (std::size_t b = 0; b < c.size(); ++b) c[b] = 0.5 * (bin_edges[b] + bin_edges[b + 1]);
        return c;
    }
};

struct BinRange {
    double lo;
    double hi;
};

/// Interpolated coordinate of one member at time t.
inline double member_value(const TrajectoryCollection& c, const EnsembleMember& m, Axis axis, double t) {
    const std::size_t i = bracket_index(c.times, t);
    const auto& y = axis == Axis::Q ? m.q : m.p;
    const auto& dy = axis == Axis::Q ? m.dq : m.dp;
    return hermite(c.times[i], c.times[i + 1], y[i], y[i + 1], dy[i], dy[i + 1], t);
}

inline DensityHistogram bin_density(const TrajectoryCollection& c, Axis axis, std::size_t n_bins, std::size_t n_times,
                                    std::optional<BinRange> range = std::nullopt) {
    if (c.n_ok() == 0) throw DomainError("cannot bin an empty trajectory collection");
    if (n_bins < 1 || n_times < 1) throw DomainError("need at least one bin and one time sample");

    DensityHistogram h;
    h.axis = axis;
    h.n_traj = c.n_ok();
    h.time_samples = linspace(c.span.t0, c.span.t1, n_times);

    std::vector<double> values(n_times * c.members.size(), std::numeric_limits<double>::quiet_NaN());
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t j = 0; j < c.members.size(); ++j) {
        const auto& m = c.members[j];
        if (!m.ok) continue;
        for (std::size_t t = 0; t < n_times; ++t) {
            const double v = member_value(c, m, axis, h.time_samples[t]);
            values[t * c.members.size() + j] = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (range) {
        lo = range->lo;
        hi = range->hi;
    } else {
        const double pad = 1e-9 * std::max(1.0, hi - lo);
        lo -= pad;
        hi += pad;
    }
    if (!(hi > lo)) throw DomainError("degenerate histogram range");
    h.bin_edges = linspace(lo, hi, n_bins + 1);
    h.counts.assign(n_times * n_bins, 0);
    h.underflow.assign(n_times, 0);
    h.overflow.assign(n_times, 0);
    const double width = (hi - lo) / static_cast<double>(n_bins);
    for (std::size_t t = 0; t < n_times; ++t) {
        for (std::size_t j = 0; j < c.members.size(); ++j) {
            const double v = values[t * c.members.size() + j];
            if (std::isnan(v)) continue;
            if (v < lo) {
                ++h.underflow[t];
            } else if (v >= hi) {
                ++h.overflow[t];
            } else {
                const auto b = std::min(n_bins - 1, static_cast<std::size_t>((v - lo) / width));
                ++h.counts[t * n_bins + b];
            }
        }
    }
    return h;
}

} // namespace hdaemon
