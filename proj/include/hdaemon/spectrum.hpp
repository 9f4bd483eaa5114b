#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include "hdaemon/errors.hpp"
#include "hdaemon/model.hpp"
#include "hdaemon/numerics.hpp"

namespace hdaemon {

/// The reduced generator h(sigma) on the ladder m = -l ... +l.
struct ReducedHamiltonian {
    Spin spin;
    DimensionlessParams d;

    ReducedHamiltonian(Spin s, const DimensionlessParams& params) : spin(s), d(with_spin(params, s)) {}

    [[nodiscard]] double hbar_over_L() const { return d.hbar_over_L(); }

    /// Diagonal entry h_m(sigma) = ((hbar/2L) m^2 + sigma m)/M~.
    [[nodiscard]] double diagonal(double m, double sigma) const {
        return (0.5 * hbar_over_L() * m * m + sigma * m) / d.M_tilde;
    }

    /// Coupling w between m and m+1: (gamma~/2) sqrt(l(l+1) - m(m+1)).
    [[nodiscard]] double coupling(double m) const {
        return 0.5 * d.gamma_tilde * std::sqrt(std::max(0.0, spin.casimir() - m * (m + 1.0)));
    }

    [[nodiscard]] Eigen::VectorXd diagonal_vector(double sigma) const {
        Eigen::VectorXd v(spin.dim());
        for (int i = 0; i < spin.dim(); ++i) v(i) = diagonal(spin.m(i), sigma);
        return v;
    }

    /// Sub-diagonal entries -w between indices i and i+1.
    [[nodiscard]] Eigen::VectorXd offdiagonal_vector() const {
        Eigen::VectorXd v(std::max(spin.dim() - 1, 0));
        for (int i = 0; i + 1 < spin.dim(); ++i) v(i) = -coupling(spin.m(i));
        return v;
    }

    [[nodiscard]] Eigen::MatrixXd matrix(double sigma) const {
        const int n = spin.dim();
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
        h.diagonal() = diagonal_vector(sigma);
        const Eigen::VectorXd off = offdiagonal_vector();
        for (int i = 0; i + 1 < n; ++i) {
            h(i, i + 1) = off(i);
            h(i + 1, i) = off(i);
        }
        return h;
    }

    /// Diabatic crossing sigma where h_a = h_b.
    [[nodiscard]] double diabatic_crossing(double ma, double mb) const { return -0.5 * hbar_over_L() * (ma + mb); }
};

inline Eigen::MatrixXd build_h(Spin spin, const DimensionlessParams& d, double sigma) {
    return ReducedHamiltonian(spin, d).matrix(sigma);
}

struct Eigensystem {
    Eigen::VectorXd values;   ///< ascending
    Eigen::MatrixXd vectors;  ///< columns
};

inline Eigensystem eigensystem(const ReducedHamiltonian& h, double sigma, bool vectors = true) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    if (h.spin.dim() == 1) {
        Eigensystem r;
        r.values = h.diagonal_vector(sigma);
        r.vectors = Eigen::MatrixXd::Identity(1, 1);
        return r;
    }
    es.computeFromTridiagonal(h.diagonal_vector(sigma), h.offdiagonal_vector(),
                              vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    Eigensystem r;
    r.values = es.eigenvalues();
    if (vectors) r.vectors = es.eigenvectors();
    return r;
}

struct LevelDiagram {
    Spin spin;
    std::vector<double> sigmas;
    /// eigenvalues[k] sorted ascending at sigmas[k].
    std::vector<std::vector<double>> eigenvalues;
    /// Dominant diabatic m of each sorted eigenvector.
    std::vector<std::vector<double>> labels;
    /// track[k][i]: sorted index at sigmas[k] continuing track i.
    std::vector<std::vector<int>> track;
    /// ambiguous[k]: tracking from k-1 to k had a best overlap below the ambiguity threshold.
    std::vector<char> ambiguous;
    double min_overlap = 1.0;

    [[nodiscard]] bool any_ambiguous() const {
        return std::any_of(ambiguous.begin(), ambiguous.end(), [](char c) { return c != 0; });
    }
};

struct SpectrumOptions {
    double target_overlap = 0.9;
    double ambiguity_overlap = 0.5;
    int max_refinement_depth = 40;
};

inline LevelDiagram instantaneous_spectrum(Spin spin, const DimensionlessParams& d, const std::vector<double>& sigma_grid,
                                           const SpectrumOptions& opt = {}) {
    if (!std::is_sorted(sigma_grid.begin(), sigma_grid.end())) throw DomainError("sigma grid must be ordered");
    const ReducedHamiltonian h(spin, d);
    const int n = spin.dim();
    LevelDiagram diag;
    diag.spin = spin;
    if (sigma_grid.empty()) return diag;

    auto label_of = [&](const Eigensystem& es) {
        std::vector<double> lab(n);
        for (int i = 0; i < n; ++i) {
            int best = 0;
            es.vectors.col(i).cwiseAbs().maxCoeff(&best);
            lab[i] = spin.m(best);
        }
        return lab;
    };
    auto push = [&](double s, const Eigensystem& es, std::vector<int> tr, bool amb) {
        diag.sigmas.push_back(s);
        diag.eigenvalues.emplace_back(es.values.data(), es.values.data() + n);
        diag.labels.push_back(label_of(es));
        diag.track.push_back(std::move(tr));
        diag.ambiguous.push_back(amb ? 1 : 0);
    };

    Eigensystem prev = eigensystem(h, sigma_grid.front());
    std::vector<int> identity(n);
    std::iota(identity.begin(), identity.end(), 0);
    push(sigma_grid.front(), prev, identity, false);

    // Continues tracks from (sa, prev) to sb, refining the interval until overlaps reach the target.
    auto advance = [&](auto&& self, double sa, const Eigensystem& a, double sb, int depth) -> Eigensystem {
        Eigensystem b = eigensystem(h, sb);
        const Eigen::MatrixXd ov = (a.vectors.transpose() * b.vectors).cwiseAbs();
        double worst = 1.0;
        for (int i = 0; i < n; ++i) worst = std::min(worst, ov.row(i).maxCoeff());
        if (worst < opt.target_overlap && depth < opt.max_refinement_depth) {
            const double mid = 0.5 * (sa + sb);
            const Eigensystem m = self(self, sa, a, mid, depth + 1);
            return self(self, mid, m, sb, depth + 1);
        }
        const auto& last = diag.track.back();
        std::vector<int> tr(n, -1);
        std::vector<char> used(n, 0);
        bool amb = worst < opt.ambiguity_overlap;
        for (int t = 0; t < n; ++t) {
            int best = 0;
            ov.row(last[t]).maxCoeff(&best);
            if (used[best]) amb = true;
            used[best] = 1;
            tr[t] = best;
        }
        diag.min_overlap = std::min(diag.min_overlap, worst);
        push(sb, b, tr, amb);
        return b;
    };

    for (std::size_t k = 1; k < sigma_grid.size(); ++k) {
        if (sigma_grid[k] == sigma_grid[k - 1]) continue;
        prev = advance(advance, sigma_grid[k - 1], prev, sigma_grid[k], 0);
    }
    return diag;
}

struct AvoidedCrossing {
    double m_upper = 0.0;
    double m_lower = 0.0;
    double sigma_star = 0.0;
    double min_gap = 0.0;
    int order = 1;
    /// Sorted index i of the pair (i, i+1); 0 is the lowest arc.
    int pair_index = 0;
    bool true_crossing = false;
};

/// Adjacent-level gap at sigma.
inline double level_gap(const ReducedHamiltonian& h, double sigma, int pair) {
    const Eigensystem es = eigensystem(h, sigma, false);
    return es.values(pair + 1) - es.values(pair);
}

inline std::vector<AvoidedCrossing> find_avoided_crossings(const LevelDiagram& diagram, const DimensionlessParams& d) {
    std::vector<AvoidedCrossing> out;
    const Spin spin = diagram.spin;
    const ReducedHamiltonian h(spin, d);
    const int n = spin.dim();
    const std::size_t K = diagram.sigmas.size();
    if (K < 3 || n < 2) return out;

    for (int pair = 0; pair + 1 < n; ++pair) {
        std::vector<double> gap(K);
        for (std::size_t k = 0; k < K; ++k) gap[k] = diagram.eigenvalues[k][pair + 1] - diagram.eigenvalues[k][pair];
        for (std::size_t k = 1; k + 1 < K; ++k) {
            if (!(gap[k] <= gap[k - 1] && gap[k] < gap[k + 1])) continue;
            const double a = diagram.sigmas[k - 1];
            const double b = diagram.sigmas[k + 1];
            std::uintmax_t iters = 200;
            const auto r = boost::math::tools::brent_find_minima(
                [&](double s) { return level_gap(h, s, pair); }, a, b, std::numeric_limits<double>::digits / 2 + 8, iters);
            const double s_star = r.first;
            const Eigensystem es = eigensystem(h, s_star);
            std::vector<std::pair<double, int>> weight(n);
            for (int i = 0; i < n; ++i) {
                weight[i] = {es.vectors(i, pair) * es.vectors(i, pair) + es.vectors(i, pair + 1) * es.vectors(i, pair + 1), i};
            }
            std::sort(weight.begin(), weight.end(), std::greater<>());
            const double ma = spin.m(weight[0].second);
            const double mb = spin.m(weight[1].second);
            AvoidedCrossing c;
            c.m_upper = std::max(ma, mb);
            c.m_lower = std::min(ma, mb);
            c.order = static_cast<int>(std::lround(c.m_upper - c.m_lower));
            c.sigma_star = s_star;
            c.min_gap = std::max(0.0, r.second);
            c.pair_index = pair;
            const double scale = std::max(1.0, std::abs(es.values(pair)));
            const double s_diabatic = h.diabatic_crossing(ma, mb);
            if (s_diabatic > a && s_diabatic < b) {
                const double g = level_gap(h, s_diabatic, pair);
                if (g <= std::min(c.min_gap, 1e-10 * scale)) {
                    c.sigma_star = s_diabatic;
                    c.min_gap = std::max(0.0, g);
                }
            }
            c.true_crossing = c.min_gap <= 1e-10 * scale;
            if (std::abs(s_star - h.diabatic_crossing(ma, mb)) > 0.25 * h.hbar_over_L()) continue;
            const bool seen = std::any_of(out.begin(), out.end(), [&](const AvoidedCrossing& o) {
                return o.pair_index == pair && o.m_upper == c.m_upper && o.m_lower == c.m_lower &&
                       std::abs(o.sigma_star - s_star) < 1e-6;
            });
            if (!seen) out.push_back(c);
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
        return x.sigma_star < y.sigma_star || (x.sigma_star == y.sigma_star && x.pair_index < y.pair_index);
    });
    return out;
}

/// Order-1 crossings of the lowest arc, in sweep order (increasing sigma, m = l down to -l+1).
inline std::vector<AvoidedCrossing> lowest_arc_crossings(const std::vector<AvoidedCrossing>& all) {
    std::vector<AvoidedCrossing> out;
    for (const auto& c : all)
        if (c.pair_index == 0 && c.order == 1) out.push_back(c);
    return out;
}

/// Default sigma grid covering all adjacent diabatic crossings with margin.
inline std::vector<double> default_sigma_grid(Spin spin, const DimensionlessParams& d, std::size_t points = 2001) {
    const double reach = spin.l() * with_spin(d, spin).hbar_over_L() + 0.25;
    return linspace(-reach, reach, points);
}

} // namespace hdaemon
