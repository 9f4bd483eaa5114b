#pragma once

// Landau-Zener treatment of the order-1 avoided crossings.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "hdaemon/errors.hpp"
#include "hdaemon/model.hpp"
#include "hdaemon/spectrum.hpp"

namespace hdaemon {

namespace detail {

inline double ladder_factor(Spin spin, double m) {
    if (m - 1.0 < -spin.l() - 1e-9 || m > spin.l() + 1e-9) {
        throw DomainError("m and m-1 must both lie on the ladder");
    }
    (void)spin.index_of(m);
    return spin.casimir() - m * (m - 1.0);
}

} // namespace detail

/// Diabatic (stay-on-m) probability at the crossing of m and m-1.
inline double lz_probability(Spin spin, const DimensionlessParams& d, double m) {
    const double x = detail::ladder_factor(spin, m);
    return std::exp(-std::numbers::pi * d.gamma_tilde * d.gamma_tilde * d.M_tilde * x / 2.0);
}

/// H = slope * delta_sigma * sz - gap_half * sx in the (m, m-1) subspace, plus offset terms.
struct TwoLevelModel {
    double m = 0.0;
    double slope = 0.0;
    double gap_half = 0.0;
    /// Centre of the crossing in sigma.
    double sigma_cross = 0.0;
    /// Identity-term coefficients: offset0 + offset1 * delta_sigma.
    double offset0 = 0.0;
    double offset1 = 0.0;

    [[nodiscard]] double gap_width() const { return slope > 0.0 ? gap_half / slope : 0.0; }
};

inline TwoLevelModel project_two_level(Spin spin, const DimensionlessParams& d_in, double m) {
    const DimensionlessParams d = with_spin(d_in, spin);
    const double x = detail::ladder_factor(spin, m);
    const ReducedHamiltonian h(spin, d);
    TwoLevelModel t;
    t.m = m;
    t.slope = 1.0 / (2.0 * d.M_tilde);
    t.gap_half = 0.5 * d.gamma_tilde * std::sqrt(std::max(0.0, x));
    t.sigma_cross = h.diabatic_crossing(m, m - 1.0);
    t.offset0 = 0.5 * (h.diagonal(m, t.sigma_cross) + h.diagonal(m - 1.0, t.sigma_cross));
    t.offset1 = (m - 0.5) / d.M_tilde;
    return t;
}

struct SweepOptions {
    /// Half-width of the sweep in gap widths gap_half/slope.
    double window = 100.0;
    double tol = 1e-11;
};

/// Diabatic probability from integrating the two-level Schrodinger equation across the sweep,
/// starting and ending in adiabatic eigenstates.
inline double two_level_sweep(const TwoLevelModel& t, const SweepOptions& opt = {}) {
    if (t.gap_half == 0.0) return 1.0;
    using namespace boost::numeric::odeint;
    using state = std::array<double, 4>;
    const double a = t.slope;
    const double g = t.gap_half;
    const double T = opt.window * t.gap_width();

    auto adiabatic_ground = [&](double x) {
        // Lower eigenvector of [[a x, -g], [-g, -a x]].
        const double th = 0.5 * std::atan2(g, a * x);
        return std::array<double, 2>{std::sin(th), std::cos(th)};
    };

    const auto v0 = adiabatic_ground(-T);
    state y{v0[0], 0.0, v0[1], 0.0};
    auto rhs = [&](const state& s, state& ds, double x) {
        // i d(c)/dx = H c, c = (s0 + i s1, s2 + i s3)
        const double hd = a * x;
        const double re1 = hd * s[0] - g * s[2], im1 = hd * s[1] - g * s[3];
        const double re2 = -g * s[0] - hd * s[2], im2 = -g * s[1] - hd * s[3];
        ds = {im1, -re1, im2, -re2};
    };
    integrate_adaptive(make_controlled<runge_kutta_fehlberg78<state>>(opt.tol, opt.tol), rhs, y, -T, T,
                       0.1 / (a * T));
    const auto v1 = adiabatic_ground(T);
    const std::complex<double> c0(y[0], y[1]), c1(y[2], y[3]);
    const double stay_adiabatic = std::norm(v1[0] * c0 + v1[1] * c1);
    return 1.0 - stay_adiabatic;
}

// ---------------------------------------------------------------------------
// Cascade

struct BranchNode {
    /// Index of the crossing that created the node (-1 for the root), in sweep order.
    int crossing = -1;
    double m = 0.0;
    double probability = 1.0;
    /// Momentum kick relative to free fall, (m0 - m) hbar/L.
    double momentum_offset = 0.0;
    int parent = -1;
    std::vector<int> children;
};

struct BranchTree {
    Spin spin;
    double m0 = 0.0;
    std::vector<BranchNode> nodes;
    /// Upper diabatic label of each order-1 crossing, in sweep order (l down to -l+1).
    std::vector<double> crossing_m;
    /// Diabatic probability at each crossing.
    std::vector<double> crossing_pr;

    [[nodiscard]] std::vector<int> leaves() const {
        std::vector<int> out;
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].children.empty()) out.push_back(static_cast<int>(i));
        return out;
    }

    /// Final-m distribution indexed like Spin::index_of.
    [[nodiscard]] std::vector<double> leaf_distribution() const { return distribution_after(static_cast<int>(crossing_m.size()) - 1); }

    /// Distribution over m of the branches existing after crossing k (k = -1: initial).
    [[nodiscard]] std::vector<double> distribution_after(int k) const {
        std::vector<double> p(spin.dim(), 0.0);
        for (const auto& n : nodes) {
            if (n.crossing > k) continue;
            const bool live = std::none_of(n.children.begin(), n.children.end(),
                                           [&](int c) { return nodes[c].crossing <= k; });
            if (live) p[spin.index_of(n.m)] += n.probability;
        }
        return p;
    }
};

/// Sequential independent-crossing model over the 2l order-1 crossings.
inline BranchTree cascade_tree(Spin spin, const DimensionlessParams& d_in, double m0) {
    const DimensionlessParams d = with_spin(d_in, spin);
    (void)spin.index_of(m0);
    BranchTree t;
    t.spin = spin;
    t.m0 = m0;
    for (int i = spin.dim() - 1; i >= 1; --i) {
        const double m = spin.m(i);
        t.crossing_m.push_back(m);
        t.crossing_pr.push_back(lz_probability(spin, d, m));
    }
    t.nodes.push_back(BranchNode{-1, m0, 1.0, 0.0, -1, {}});
    std::vector<int> live{0};
    for (std::size_t k = 0; k < t.crossing_m.size(); ++k) {
        const double j = t.crossing_m[k];
        const double pr = t.crossing_pr[k];
        std::vector<int> next;
        for (int idx : live) {
            const BranchNode cur = t.nodes[idx];
            if (cur.m != j && cur.m != j - 1.0) {
                next.push_back(idx);
                continue;
            }
            if (pr >= 1.0) {
                next.push_back(idx);
                continue;
            }
            const double swapped = cur.m == j ? j - 1.0 : j;
            const std::array<std::pair<double, double>, 2> outs{{{cur.m, pr}, {swapped, 1.0 - pr}}};
            for (const auto& [m, w] : outs) {
                if (w <= 0.0) continue;
                BranchNode n;
                n.crossing = static_cast<int>(k);
                n.m = m;
                n.probability = cur.probability * w;
                n.momentum_offset = (m0 - m) * d.hbar_over_L();
                n.parent = idx;
                t.nodes.push_back(n);
                const int id = static_cast<int>(t.nodes.size()) - 1;
                t.nodes[idx].children.push_back(id);
                next.push_back(id);
            }
        }
        live = std::move(next);
    }
    return t;
}

/// Entropy in nats of a probability vector, with 0 ln 0 = 0.
inline double shannon_entropy(const std::vector<double>& p) {
    double s = 0.0;
    for (double x : p)
        if (x > 0.0) s -= x * std::log(x);
    return s;
}

struct StepCurve {
    /// Value values[0] before breaks[0], values[k+1] after breaks[k].
    std::vector<double> breaks;
    std::vector<double> values;

    [[nodiscard]] double at(double tau) const {
        const auto it = std::upper_bound(breaks.begin(), breaks.end(), tau);
        return values[static_cast<std::size_t>(it - breaks.begin())];
    }
};

/// Entropy after each crossing, with crossing k occurring at crossing_times[k].
inline StepCurve step_entropy(const BranchTree& tree, const std::vector<double>& crossing_times) {
    if (crossing_times.size() != tree.crossing_m.size()) {
        throw DomainError("need one crossing time per order-1 crossing");
    }
    if (!std::is_sorted(crossing_times.begin(), crossing_times.end())) throw DomainError("crossing times must be ordered");
    StepCurve c;
    c.breaks = crossing_times;
    c.values.push_back(shannon_entropy(tree.distribution_after(-1)));
    for (std::size_t k = 0; k < crossing_times.size(); ++k) {
        c.values.push_back(shannon_entropy(tree.distribution_after(static_cast<int>(k))));
    }
    return c;
}

/// Converts lowest-arc sigma* values into tau for a packet with sigma = tau + offset.
inline std::vector<double> crossing_times(const std::vector<AvoidedCrossing>& lowest_arc, double sigma_offset) {
    std::vector<double> t;
    t.reserve(lowest_arc.size());
    for (const auto& c : lowest_arc) t.push_back(c.sigma_star - sigma_offset);
    return t;
}

/// Analytic diabatic crossing times of the lowest arc for sigma = tau + offset.
inline std::vector<double> diabatic_crossing_times(Spin spin, const DimensionlessParams& d, double sigma_offset) {
    const ReducedHamiltonian h(spin, d);
    std::vector<double> t;
    for (int i = spin.dim() - 1; i >= 1; --i) t.push_back(h.diabatic_crossing(spin.m(i), spin.m(i) - 1.0) - sigma_offset);
    return t;
}

struct CascadeStatistics {
    /// Probability of joining the lowest arc when it is first met (1 for m0 = l).
    double ignition = 0.0;
    /// Probability of stalling at the first crossing met on the lowest arc.
    double first_stall = 0.0;
    /// Probability that every available quantum is converted.
    double full_conversion = 0.0;
    /// Expected quanta converted over quanta available (m0 + l).
    double mean_efficiency = 0.0;
    double mean_final_m = 0.0;
};

inline CascadeStatistics cascade_statistics(const BranchTree& tree) {
    CascadeStatistics s;
    const Spin spin = tree.spin;
    const int top = static_cast<int>(std::lround(spin.l() - tree.m0));
    // Crossing k has upper label l - k; the lowest arc is met at crossing (m0 + 1, m0).
    s.ignition = top == 0 ? 1.0 : tree.distribution_after(top - 1)[spin.index_of(tree.m0)];
    if (top < static_cast<int>(tree.crossing_pr.size())) {
        s.first_stall = tree.crossing_pr[top];
    }
    const auto dist = tree.leaf_distribution();
    const double available = tree.m0 + spin.l();
    double converted = 0.0;
    for (int i = 0; i < spin.dim(); ++i) {
        const double m = spin.m(i);
        s.mean_final_m += m * dist[i];
        if (m < tree.m0) converted += (tree.m0 - m) * dist[i];
    }
    s.full_conversion = dist[0];
    s.mean_efficiency = available > 0.0 ? converted / available : 1.0;
    return s;
}

} // namespace hdaemon
