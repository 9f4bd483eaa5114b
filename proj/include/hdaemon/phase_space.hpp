#pragma once

// Geometry of the reduced Hamiltonian
//
//   H(phi, lz; sigma) = (lz^2/2 + sigma lz)/M~ - gamma~ sqrt(1 - lz^2) cos(phi)
//
// at a frozen reduced time sigma. At fixed phi, H is convex in lz on a central
// interval and concave near the poles when cos(phi) < 0. Contours are traced
// slice by slice as the first crossing outward from the valley minimum.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "hdaemon/classical.hpp"
#include "hdaemon/errors.hpp"
#include "hdaemon/model.hpp"

namespace hdaemon {

enum class Stability { Stable, Unstable };

inline const char* to_string(Stability s) { return s == Stability::Stable ? "stable" : "unstable"; }

struct FixedPoint {
    double phi = 0.0;
    double lz = 0.0;
    double energy = 0.0;
    Stability stability = Stability::Stable;
};

namespace detail {

inline double root_in(const auto& f, double a, double b) {
    double fa = f(a);
    double fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0.0) == (fb > 0.0)) {
        return std::abs(fa) < std::abs(fb) ? a : b;
    }
    std::uintmax_t iters = 200;
    auto tol = [](double x, double y) { return std::abs(x - y) <= 4e-16 * (1.0 + std::abs(x)); };
    const auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb, tol, iters);
    return 0.5 * (r.first + r.second);
}

constexpr double kBelowOne = 1.0 - 1e-16;

} // namespace detail

/// One phi = const slice of the reduced Hamiltonian.
class HamiltonianSlice {
public:
    HamiltonianSlice(const DimensionlessParams& d, double sigma, double phi)
        : M_(d.M_tilde), gamma_(d.gamma_tilde), sigma_(sigma), c_(std::cos(phi)) {
        if (gamma_ > 0.0 && c_ < 0.0) {
            const double x = std::cbrt(M_ * gamma_ * -c_);
            hi_edge_ = std::sqrt(std::max(0.0, 1.0 - x * x));
            lo_edge_ = -hi_edge_;
        }
        locate_valley();
    }

    [[nodiscard]] double energy(double l) const {
        const double r = std::sqrt(std::max(0.0, 1.0 - l * l));
        return (0.5 * l * l + sigma_ * l) / M_ - gamma_ * r * c_;
    }
    [[nodiscard]] double slope(double l) const {
        const double r = std::sqrt(std::max(1e-300, 1.0 - l * l));
        return (l + sigma_) / M_ + gamma_ * l * c_ / r;
    }
    [[nodiscard]] double valley() const noexcept { return l_min_; }
    [[nodiscard]] double valley_energy() const noexcept { return e_min_; }
    [[nodiscard]] bool valley_interior() const noexcept { return interior_; }

    /// First crossing of H = E going up from the valley; 1 when H stays below E up to the pole.
    [[nodiscard]] double upper(double E) const { return crossing(E, +1); }
    /// First crossing of H = E going down from the valley; -1 when H stays below E down to the pole.
    [[nodiscard]] double lower(double E) const { return crossing(E, -1); }

private:
    void locate_valley() {
        const double a = std::max(lo_edge_, -detail::kBelowOne);
        const double b = std::min(hi_edge_, detail::kBelowOne);
        const double sa = slope(a);
        const double sb = slope(b);
        if (sa < 0.0 && sb > 0.0) {
            l_min_ = detail::root_in([this](double l) { return slope(l); }, a, b);
            interior_ = true;
        } else if (sa >= 0.0 && sb > 0.0) {
            l_min_ = -1.0;
        } else if (sa < 0.0 && sb <= 0.0) {
            l_min_ = 1.0;
        } else {
            l_min_ = 0.5 * (a + b);
            interior_ = true;
        }
        e_min_ = energy(l_min_);
    }

    [[nodiscard]] double crossing(double E, int dir) const {
        const double l0 = l_min_;
        const double pole = dir > 0 ? 1.0 : -1.0;
        if (l0 == pole) return pole;
        auto g = [this, E](double l) { return energy(l) - E; };
        if (g(l0) >= 0.0) return l0;
        const double edge = dir > 0 ? hi_edge_ : lo_edge_;
        const bool concave_tail = gamma_ > 0.0 && c_ < 0.0 && std::abs(edge) < 1.0;
        if (!concave_tail) {
            if (g(pole) <= 0.0) return pole;
            return detail::root_in(g, std::min(l0, pole), std::max(l0, pole));
        }
        if ((edge - l0) * dir > 0.0 && g(edge) >= 0.0) {
            return detail::root_in(g, std::min(l0, edge), std::max(l0, edge));
        }
        const double start = (edge - l0) * dir > 0.0 ? edge : l0;
        if (g(pole) >= 0.0) return detail::root_in(g, std::min(start, pole), std::max(start, pole));
        const double inner = dir > 0 ? detail::kBelowOne : -detail::kBelowOne;
        double top = start;
        if (slope(start) * dir > 0.0) {
            top = detail::root_in([this](double l) { return slope(l); }, std::min(start, inner), std::max(start, inner));
        }
        if (g(top) >= 0.0) return detail::root_in(g, std::min(start, top), std::max(start, top));
        return pole;
    }

    double M_, gamma_, sigma_, c_;
    double lo_edge_ = -1.0;
    double hi_edge_ = 1.0;
    double l_min_ = 0.0;
    double e_min_ = 0.0;
    bool interior_ = false;
};

/// Hessian entries of the reduced Hamiltonian on the lines phi = 0 and phi = pi.
inline double reduced_hess_phiphi(const DimensionlessParams& d, double phi, double lz) {
    return d.gamma_tilde * std::sqrt(std::max(0.0, 1.0 - lz * lz)) * std::cos(phi);
}
inline double reduced_hess_lzlz(const DimensionlessParams& d, double phi, double lz) {
    return 1.0 / d.M_tilde + d.gamma_tilde * std::cos(phi) / std::pow(1.0 - lz * lz, 1.5);
}

/// All roots of dH/dlz = 0 on phi = 0 and phi = pi at reduced time sigma.
inline std::vector<FixedPoint> instantaneous_fixed_points(const DimensionlessParams& d, double sigma,
                                                          int scan_points = 4000) {
    std::vector<FixedPoint> out;
    for (double phi : {0.0, std::numbers::pi}) {
        HamiltonianSlice s(d, sigma, phi);
        auto f = [&](double l) { return s.slope(l); };
        std::vector<double> grid(scan_points + 1);
        for (int i = 0; i <= scan_points; ++i) {
            const double th = -0.5 * std::numbers::pi + std::numbers::pi * (i + 0.5) / (scan_points + 1);
            grid[i] = std::sin(th);
        }
        std::vector<double> roots;
        for (int i = 0; i < scan_points; ++i) {
            const double fa = f(grid[i]);
            const double fb = f(grid[i + 1]);
            if (fa == 0.0) {
                roots.push_back(grid[i]);
            } else if ((fa < 0.0) != (fb < 0.0) && fb != 0.0) {
                roots.push_back(detail::root_in(f, grid[i], grid[i + 1]));
            }
        }
        if (f(grid.back()) == 0.0) roots.push_back(grid.back());
        for (double l : roots) {
            FixedPoint fp;
            fp.phi = phi;
            fp.lz = l;
            fp.energy = s.energy(l);
            const double det = reduced_hess_phiphi(d, phi, l) * reduced_hess_lzlz(d, phi, l);
            fp.stability = det < 0.0 ? Stability::Unstable : Stability::Stable;
            out.push_back(fp);
        }
    }
    return out;
}

inline std::optional<FixedPoint> unstable_point(const DimensionlessParams& d, double sigma) {
    if (!(d.gamma_tilde > 0.0)) return std::nullopt;
    HamiltonianSlice s(d, sigma, std::numbers::pi);
    if (!s.valley_interior()) return std::nullopt;
    const double l = s.valley();
    if (reduced_hess_phiphi(d, std::numbers::pi, l) * reduced_hess_lzlz(d, std::numbers::pi, l) >= 0.0) {
        return std::nullopt;
    }
    return FixedPoint{std::numbers::pi, l, s.energy(l), Stability::Unstable};
}

/// Point (phi, lz) of a sampled curve.
struct CurvePoint {
    double phi;
    double lz;
};

struct Separatrix {
    double sigma = 0.0;
    double energy = 0.0;
    FixedPoint unstable_point;
    std::vector<CurvePoint> upper_branch;
    std::vector<CurvePoint> lower_branch;
    /// Enclosed area in units of L (integral of dlz dphi over the resonance).
    double area = 0.0;
    /// Enclosed area in units of 2 pi hbar; NaN for classical parameters.
    double area_2pi_hbar = std::numeric_limits<double>::quiet_NaN();
};

struct PhaseSpaceOptions {
    int n_phi = 256;
    double quad_tol = 1e-12;
};

namespace detail {

inline double integrate_smooth(const auto& f, double a, double b, double tol) {
    if (!(b > a)) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, tol);
}

/// Integral with a square-root zero of the integrand at the upper end.
inline double integrate_to_turning_point(const auto& f, double a, double b, double tol) {
    if (!(b > a)) return 0.0;
    const double h = b - a;
    auto g = [&](double u) { return 2.0 * u * h * f(b - h * u * u); };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, 0.0, 1.0, 20, tol);
}

} // namespace detail

/// Largest phi in [0, pi] where the valley energy is below E.
inline double turning_phi(const DimensionlessParams& d, double sigma, double E) {
    auto g = [&](double phi) { return HamiltonianSlice(d, sigma, phi).valley_energy() - E; };
    if (g(std::numbers::pi) <= 0.0) return std::numbers::pi;
    if (g(0.0) >= 0.0) return 0.0;
    double a = 0.0, b = std::numbers::pi;
    for (int i = 0; i < 200 && b - a > 1e-15; ++i) {
        const double m = 0.5 * (a + b);
        (g(m) < 0.0 ? a : b) = m;
    }
    return 0.5 * (a + b);
}

/// Area of the sublevel component {H < E} around the valley, in units of L.
inline double enclosed_action(const DimensionlessParams& d, double sigma, double E, double tol = 1e-12) {
    const double phi_max = turning_phi(d, sigma, E);
    auto width = [&](double phi) {
        HamiltonianSlice s(d, sigma, phi);
        return s.valley_energy() >= E ? 0.0 : s.upper(E) - s.lower(E);
    };
    if (phi_max >= std::numbers::pi) return 2.0 * detail::integrate_smooth(width, 0.0, std::numbers::pi, tol);
    return 2.0 * detail::integrate_to_turning_point(width, 0.0, phi_max, tol);
}

/// Area between the upper crossing curve at energy E and the north pole.
inline double action_above(const DimensionlessParams& d, double sigma, double E, double tol = 1e-12) {
    auto f = [&](double phi) { return 1.0 - HamiltonianSlice(d, sigma, phi).upper(E); };
    return 2.0 * detail::integrate_smooth(f, 0.0, std::numbers::pi, tol);
}

/// Area between the lower crossing curve at energy E and the north pole.
inline double action_below(const DimensionlessParams& d, double sigma, double E, double tol = 1e-12) {
    auto f = [&](double phi) { return 1.0 - HamiltonianSlice(d, sigma, phi).lower(E); };
    return 2.0 * detail::integrate_smooth(f, 0.0, std::numbers::pi, tol);
}

inline Separatrix separatrix(const DimensionlessParams& d, double sigma, const PhaseSpaceOptions& opt = {}) {
    const auto up = unstable_point(d, sigma);
    if (!up) throw NoSeparatrixError("no unstable fixed point at sigma = " + std::to_string(sigma));
    Separatrix s;
    s.sigma = sigma;
    s.unstable_point = *up;
    s.energy = up->energy;
    for (int k = 0; k <= opt.n_phi; ++k) {
        const double phi = -std::numbers::pi + 2.0 * std::numbers::pi * k / opt.n_phi;
        if (k == 0 || k == opt.n_phi) {
            s.upper_branch.push_back({phi, up->lz});
            s.lower_branch.push_back({phi, up->lz});
            continue;
        }
        HamiltonianSlice sl(d, sigma, phi);
        s.upper_branch.push_back({phi, sl.upper(s.energy)});
        s.lower_branch.push_back({phi, sl.lower(s.energy)});
    }
    s.area = enclosed_action(d, sigma, s.energy, opt.quad_tol);
    if (d.is_quantum()) s.area_2pi_hbar = s.area * d.L_over_hbar / (2.0 * std::numbers::pi);
    return s;
}

/// Small-coupling estimate 16 sqrt(M~ gamma~) of the largest separatrix area, in units of L.
inline double separatrix_area_estimate(const DimensionlessParams& d) {
    return 16.0 * std::sqrt(d.M_tilde * d.gamma_tilde);
}

inline bool separatrix_estimate_reliable(const DimensionlessParams& d) { return d.M_tilde * d.gamma_tilde <= 0.05; }

// ---------------------------------------------------------------------------
// Contours

enum class ContourRegion { Above, Inside, Below, Winding, Closed };

inline const char* to_string(ContourRegion r) {
    switch (r) {
        case ContourRegion::Above: return "above";
        case ContourRegion::Inside: return "inside";
        case ContourRegion::Below: return "below";
        case ContourRegion::Winding: return "winding";
        case ContourRegion::Closed: return "closed";
    }
    return "?";
}

struct Contour {
    double energy = 0.0;
    ContourRegion region = ContourRegion::Winding;
    bool closed = false;
    std::vector<CurvePoint> points;
};

struct ContourSet {
    double sigma = 0.0;
    std::optional<double> separatrix_energy;
    std::vector<Contour> contours;
    std::vector<std::string> notes;
};

inline ContourSet energy_contours(const DimensionlessParams& d, double sigma, const std::vector<double>& energies,
                                  const PhaseSpaceOptions& opt = {}) {
    ContourSet out;
    out.sigma = sigma;
    const auto up = unstable_point(d, sigma);
    if (up) out.separatrix_energy = up->energy;

    std::vector<double> phis(opt.n_phi + 1);
    std::vector<HamiltonianSlice> slices;
    slices.reserve(phis.size());
    for (int k = 0; k <= opt.n_phi; ++k) {
        phis[k] = -std::numbers::pi + 2.0 * std::numbers::pi * k / opt.n_phi;
        slices.emplace_back(d, sigma, phis[k]);
    }

    for (double E : energies) {
        const std::size_t before = out.contours.size();
        const bool below_sep = up && E < up->energy;

        std::vector<CurvePoint> upper, lower;
        bool all_defined = true;
        bool upper_reaches_pole = false, lower_reaches_pole = false;
        for (std::size_t k = 0; k < phis.size(); ++k) {
            const auto& s = slices[k];
            if (s.valley_energy() >= E) {
                all_defined = false;
                continue;
            }
            const double u = s.upper(E);
            const double lo = s.lower(E);
            upper_reaches_pole = upper_reaches_pole || u >= 1.0;
            lower_reaches_pole = lower_reaches_pole || lo <= -1.0;
            upper.push_back({phis[k], u});
            lower.push_back({phis[k], lo});
        }

        if (upper.empty()) {
            out.notes.push_back("energy " + std::to_string(E) + " below the attainable range; skipped");
            continue;
        }
        if (!all_defined || below_sep) {
            if (!all_defined) {
                const double pm = turning_phi(d, sigma, E);
                HamiltonianSlice tip(d, sigma, pm);
                upper.insert(upper.begin(), {-pm, tip.valley()});
                upper.push_back({pm, tip.valley()});
            }
            Contour c;
            c.energy = E;
            c.region = up ? ContourRegion::Inside : ContourRegion::Closed;
            c.closed = true;
            c.points = upper;
            for (auto it = lower.rbegin(); it != lower.rend(); ++it) c.points.push_back(*it);
            if (!all_defined) c.points.push_back(c.points.front());
            out.contours.push_back(std::move(c));
        } else {
            if (!upper_reaches_pole) {
                out.contours.push_back({E, up ? ContourRegion::Above : ContourRegion::Winding, false, upper});
            }
            if (!lower_reaches_pole) {
                out.contours.push_back({E, up ? ContourRegion::Below : ContourRegion::Winding, false, lower});
            }
        }
        if (out.contours.size() == before) {
            out.notes.push_back("energy " + std::to_string(E) + " above the attainable range; skipped");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bohr-Sommerfeld quantization

struct BSLevel {
    int n = 0;
    double energy = 0.0;
    /// Action in units of L; equals 2 pi (hbar/L)(n + 1/2) at convergence.
    double action = 0.0;
    ContourRegion region = ContourRegion::Winding;
};

namespace detail {

/// Solves action(E) = target on [Ea, Eb] where action is monotone; bisection on E.
inline double solve_action(const auto& action, double Ea, double Eb, double Aa, double Ab, double target) {
    const bool increasing = Ab > Aa;
    double lo = Ea, hi = Eb;
    double Alo = Aa, Ahi = Ab;
    for (int it = 0; it < 300; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double Am = action(mid);
        const bool between = increasing ? (Am >= Alo && Am <= Ahi) : (Am <= Alo && Am >= Ahi);
        if (!between) throw QuadratureError("action is not monotone in energy within a region");
        if (std::abs(Am - target) <= 1e-10 * std::abs(target)) return mid;
        if ((Am < target) == increasing) {
            lo = mid;
            Alo = Am;
        } else {
            hi = mid;
            Ahi = Am;
        }
    }
    return 0.5 * (lo + hi);
}

inline void levels_in_region(std::vector<BSLevel>& out, const auto& action, double Ea, double Eb,
                             ContourRegion region, double quantum) {
    if (!(Eb > Ea)) return;
    const double Aa = action(Ea);
    const double Ab = action(Eb);
    const double amin = std::min(Aa, Ab), amax = std::max(Aa, Ab);
    const int n0 = std::max(0, static_cast<int>(std::ceil(amin / quantum - 0.5)));
    for (int n = n0;; ++n) {
        const double target = quantum * (n + 0.5);
        if (target >= amax) break;
        if (target <= amin) continue;
        const double E = solve_action(action, Ea, Eb, Aa, Ab, target);
        out.push_back({n, E, action(E), region});
    }
}

} // namespace detail

/// Energy levels whose contours enclose (n + 1/2) 2 pi hbar, region by region.
/// Winding contours are measured from the north pole lz = +1.
inline std::vector<BSLevel> bohr_sommerfeld_levels(const DimensionlessParams& d, double sigma,
                                                   const PhaseSpaceOptions& opt = {}) {
    if (!d.is_quantum()) throw UnsupportedModeError("Bohr-Sommerfeld levels need a finite L/hbar");
    const double quantum = 2.0 * std::numbers::pi * d.hbar_over_L();
    const double tol = opt.quad_tol;
    const double E_north = (0.5 + sigma) / d.M_tilde;
    const double E_south = (0.5 - sigma) / d.M_tilde;
    std::vector<BSLevel> out;

    std::optional<double> E0;
    double E_floor = 0.0;
    if (auto up = unstable_point(d, sigma)) {
        E0 = up->energy;
        E_floor = HamiltonianSlice(d, sigma, 0.0).valley_energy();
    } else if (d.gamma_tilde == 0.0 && std::abs(sigma) < 1.0) {
        E0 = -0.5 * sigma * sigma / d.M_tilde;
        E_floor = *E0;
    }

    if (E0) {
        auto inside = [&](double E) { return enclosed_action(d, sigma, E, tol); };
        auto above = [&](double E) { return action_above(d, sigma, E, tol); };
        auto below = [&](double E) { return action_below(d, sigma, E, tol); };
        detail::levels_in_region(out, inside, E_floor, *E0, ContourRegion::Inside, quantum);
        detail::levels_in_region(out, above, *E0, E_north, ContourRegion::Above, quantum);
        detail::levels_in_region(out, below, *E0, E_south, ContourRegion::Below, quantum);
    } else {
        double E_lo = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= opt.n_phi; ++k) {
            const double phi = std::numbers::pi * k / opt.n_phi;
            E_lo = std::min(E_lo, HamiltonianSlice(d, sigma, phi).valley_energy());
        }
        const double E_hi = std::max(E_north, E_south) + d.gamma_tilde;
        auto single = [&](double E) { return enclosed_action(d, sigma, E, tol); };
        detail::levels_in_region(out, single, E_lo, E_hi, ContourRegion::Winding, quantum);
    }
    std::sort(out.begin(), out.end(), [](const BSLevel& a, const BSLevel& b) { return a.energy < b.energy; });
    return out;
}

} // namespace hdaemon
