#pragma once

// Run orchestration: one configuration in, one artifact directory out.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/version.hpp>

#include "hdaemon/classical.hpp"
#include "hdaemon/config.hpp"
#include "hdaemon/ensemble.hpp"
#include "hdaemon/entropy.hpp"
#include "hdaemon/io.hpp"
#include "hdaemon/lz.hpp"
#include "hdaemon/phase_space.hpp"
#include "hdaemon/quantum.hpp"
#include "hdaemon/spectrum.hpp"

namespace hdaemon::cli {

namespace fs = std::filesystem;
using config::json;
using config::RunConfig;

inline constexpr const char* kVersion = "1.0.0";

struct Check {
    std::string name;
    bool passed = true;
    double value = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct RunOptions {
    /// Overrides output.directory when set.
    std::optional<fs::path> out;
    unsigned threads = 0;
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
    std::string command_line;
};

struct RunResult {
    fs::path directory;
    std::string task;
    std::vector<Check> checks;
    json summary = json::object();
    std::vector<std::string> files;
    std::optional<std::string> failure;
    std::string failure_type;
    double wall_time = 0.0;

    [[nodiscard]] bool checks_passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
    }
    /// 0 on success, 1 when an invariant check failed, 2 on a failed run.
    [[nodiscard]] int exit_code() const {
        if (failure) return 2;
        return checks_passed() ? 0 : 1;
    }
};

struct Context {
    const RunConfig& cfg;
    const RunOptions& opt;
    fs::path dir;
    RunResult& res;

    void check(const std::string& name, bool passed, double value, double tolerance, std::string detail = {}) {
        res.checks.push_back(Check{name, passed, value, tolerance, std::move(detail)});
    }
    /// value <= tolerance
    void check_le(const std::string& name, double value, double tolerance, std::string detail = {}) {
        check(name, value <= tolerance, value, tolerance, std::move(detail));
    }
    void save(const std::string& name, const io::CsvWriter& w) {
        if (!cfg.output.csv) return;
        w.save(dir / name);
        res.files.push_back(name);
    }
    void save(const std::string& name, const json& j) {
        if (!cfg.output.json) return;
        io::write_atomic(dir / name, j.dump(2) + "\n");
        res.files.push_back(name);
    }
    [[nodiscard]] unsigned threads() const { return resolve_threads(opt.threads); }
};

inline std::vector<std::string> numbered(const std::string& prefix, std::size_t n, int first = 0) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(first + static_cast<int>(i)));
    return out;
}

inline std::string m_name(double m) {
    const long twice = std::lround(2.0 * m);
    if (twice % 2 == 0) return std::to_string(twice / 2);
    return std::to_string(twice) + "/2";
}

inline std::vector<std::string> header(std::initializer_list<std::string> head, const std::vector<std::string>& tail = {}) {
    std::vector<std::string> h(head);
    h.insert(h.end(), tail.begin(), tail.end());
    return h;
}

inline std::vector<std::string> level_columns(Spin spin, const std::string& prefix) {
    std::vector<std::string> c;
    for (int i = 0; i < spin.dim(); ++i) c.push_back(prefix + m_name(spin.m(i)));
    return c;
}

inline double label_code(PhaseLabel l) { return static_cast<double>(static_cast<int>(l)); }

// ---------------------------------------------------------------------------
// classical

inline FullClassicalState classical_start(const RunConfig& cfg, double phi0) {
    return {cfg.get("q0", 0.0), cfg.get("p0", 0.6), phi0, cfg.get("lz0", std::sqrt(5.0 / 6.0))};
}

inline void run_classical(Context& c) {
    const RunConfig& cfg = c.cfg;
    const DimensionlessParams& d = cfg.params();
    const auto phis = cfg.numbers("phi0", {0.0, std::numbers::pi / 2.0});
    const TimeSpan span{cfg.get("t0", 0.0), cfg.get("t1", 3.0)};
    IntegrationOptions io;
    io.tol = c.opt.tol.value_or(cfg.get("tol", 1e-12));
    const ClassifyOptions co{cfg.get("band_tol", 0.1), cfg.get("window_periods", 2.0), cfg.get("min_duration", 0.1)};
    const auto n_out = cfg.get<std::int64_t>("output_samples", 0);

    io::CsvWriter phases({"run", "phi0", "kind", "start", "end"});
    json runs = json::array();
    std::optional<std::string> failure;
    for (std::size_t k = 0; k < phis.size(); ++k) {
        const FullClassicalState s0 = classical_start(cfg, phis[k]);
        FullTrajectory tr;
        try {
            tr = integrate_full(d, s0, span, io);
        } catch (const IntegrationFailure<FullClassicalState>& e) {
            tr = e.partial();
            failure = e.what();
        }
        const PhaseClassification pc = classify_trajectory(d, tr, co);
        apply_labels(tr, pc);

        io::CsvWriter w({"tau", "q", "p", "phi", "lz", "energy", "J", "label"});
        const double E0 = tr.diagnostics.front().energy;
        const double J0 = tr.diagnostics.front().J;
        double dE = 0.0, dJ = 0.0;
        for (const auto& g : tr.diagnostics) {
            dE = std::max(dE, std::abs(g.energy - E0) / std::max(1.0, std::abs(E0)));
            dJ = std::max(dJ, std::abs(g.J - J0) / std::max(1.0, std::abs(J0)));
        }
        auto label_at = [&](double t) {
            if (!pc.conclusive) return PhaseLabel::Inconclusive;
            for (const auto& iv : pc.downconversion)
                if (t >= iv.start && t <= iv.end) return PhaseLabel::Downconversion;
            return PhaseLabel::Decoupling;
        };
        if (n_out > 1 && !failure) {
            for (double t : linspace(span.t0, span.t1, static_cast<std::size_t>(n_out))) {
                const FullClassicalState s = tr.at(t);
                w.row({t, s.q, s.p, s.phi, s.lz, full_hamiltonian(d, s), noether_J(s, t), label_code(label_at(t))});
            }
        } else {
            for (std::size_t i = 0; i < tr.size(); ++i) {
                const auto& s = tr.states[i];
                const auto& g = tr.diagnostics[i];
                w.row({tr.times[i], s.q, s.p, s.phi, s.lz, g.energy, g.J, label_code(g.label)});
            }
        }
        c.save("classical_" + std::to_string(k) + ".csv", w);
        for (const auto& iv : pc.downconversion) phases.row({double(k), phis[k], 1.0, iv.start, iv.end});
        for (const auto& iv : pc.perturbations) phases.row({double(k), phis[k], 0.0, iv.start, iv.end});

        c.check_le("energy_drift_run" + std::to_string(k), dE, 1e-8, "max |E - E0| / max(1, |E0|)");
        c.check_le("J_drift_run" + std::to_string(k), dJ, 1e-8, "max |J - J0| / max(1, |J0|)");
        json r;
        r["phi0"] = phis[k];
        r["steps"] = tr.size();
        r["downconverts"] = pc.downconverts();
        r["conclusive"] = pc.conclusive;
        r["final_lz"] = tr.states.back().lz;
        r["net_lz_drop"] = pc.net_lz_drop;
        r["energy_drift"] = dE;
        r["J_drift"] = dJ;
        json ivs = json::array();
        for (const auto& iv : pc.downconversion) ivs.push_back({iv.start, iv.end});
        r["downconversion"] = ivs;
        runs.push_back(r);
        if (failure) break;
    }
    c.save("classical_phases.csv", phases);
    c.res.summary["runs"] = runs;
    if (failure) throw DaemonError("integration failed: " + *failure);
}

// ---------------------------------------------------------------------------
// reduced

inline void run_reduced(Context& c) {
    const RunConfig& cfg = c.cfg;
    const DimensionlessParams& d = cfg.params();
    const auto phis = cfg.numbers("phi0", {0.0, std::numbers::pi / 2.0});
    const TimeSpan span{cfg.get("t0", 0.0), cfg.get("t1", 3.0)};
    IntegrationOptions io;
    io.tol = c.opt.tol.value_or(cfg.get("tol", 1e-12));
    const auto n_out = cfg.get<std::int64_t>("output_samples", 0);
    json runs = json::array();
    for (std::size_t k = 0; k < phis.size(); ++k) {
        const FullClassicalState full0 = classical_start(cfg, phis[k]);
        const bool derived = !cfg.has("sigma_offset");
        const double offset = derived ? reduced_sigma_offset(d, noether_J(full0, span.t0)) : cfg.get("sigma_offset", 0.0);
        const ReducedTrajectory tr = integrate_reduced(d, full_to_reduced(full0), span, offset, io);

        io::CsvWriter w({"tau", "sigma", "phi", "lz", "energy", "x", "y", "z"});
        auto emit = [&](double t, const ReducedClassicalState& s) {
            const SpherePoint p = to_sphere(s.phi, s.lz);
            w.row({t, t + offset, wrap_angle(s.phi), s.lz, reduced_hamiltonian(d, t + offset, s.phi, s.lz), p.x, p.y, p.z});
        };
        if (n_out > 1) {
            for (double t : linspace(span.t0, span.t1, static_cast<std::size_t>(n_out))) emit(t, tr.at(t));
        } else {
            for (std::size_t i = 0; i < tr.size(); ++i) emit(tr.times[i], tr.states[i]);
        }
        c.save("reduced_" + std::to_string(k) + ".csv", w);

        json r;
        r["phi0"] = phis[k];
        r["sigma_offset"] = offset;
        r["final_lz"] = tr.states.back().lz;
        if (derived) {
            // The reduction is exact: lz must agree with the full system.
            const FullTrajectory full = integrate_full(d, full0, span, io);
            double diff = 0.0;
            for (std::size_t i = 0; i < tr.size(); ++i) diff = std::max(diff, std::abs(tr.states[i].lz - full.at(tr.times[i]).lz));
            c.check_le("reduction_matches_full_run" + std::to_string(k), diff, 1e-5,
                       "max |lz_reduced - lz_full|, limited by dense output of the full run");
            r["max_lz_difference"] = diff;
        }
        runs.push_back(r);
    }
    c.res.summary["runs"] = runs;
}

// ---------------------------------------------------------------------------
// ensemble

inline void run_ensemble_task(Context& c) {
    const RunConfig& cfg = c.cfg;
    const DimensionlessParams& d = cfg.params();
    EnsembleSpec spec;
    spec.n_traj = static_cast<std::size_t>(cfg.get<std::int64_t>("n_traj", 1000));
    spec.seed = c.opt.seed.value_or(static_cast<std::uint64_t>(cfg.get<std::int64_t>("seed", 0)));
    const std::string sampling = cfg.get<std::string>("sampling", "grid");
    if (sampling != "grid" && sampling != "random") throw ValidationError("ensemble.sampling: expected grid or random");
    spec.phi_sampling = sampling == "grid" ? PhiSampling::UniformGrid : PhiSampling::SeededUniform;
    spec.base_state = classical_start(cfg, 0.0);
    spec.phi_offset = cfg.get("phi_offset", 0.0);
    const TimeSpan span{cfg.get("t0", 0.0), cfg.get("t1", 3.0)};
    EnsembleOptions eo;
    eo.n_samples = static_cast<std::size_t>(cfg.get<std::int64_t>("n_samples", 2049));
    eo.integration.tol = c.opt.tol.value_or(cfg.get("tol", 1e-10));
    eo.threads = c.threads();
    const TrajectoryCollection col = run_ensemble(d, spec, span, eo);

    io::CsvWriter members({"index", "phi0", "ok", "downconverts", "start", "end"});
    for (std::size_t j = 0; j < col.members.size(); ++j) {
        const auto& m = col.members[j];
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const double a = m.downconversion.empty() ? nan : m.downconversion.front().start;
        const double b = m.downconversion.empty() ? nan : m.downconversion.back().end;
        members.row({double(j), m.phi0, m.ok ? 1.0 : 0.0, m.downconverts ? 1.0 : 0.0, a, b});
    }
    c.save("ensemble_members.csv", members);

    const auto bins = static_cast<std::size_t>(cfg.get<std::int64_t>("bins", 200));
    const auto n_times = static_cast<std::size_t>(cfg.get<std::int64_t>("time_samples", 301));
    const auto axes = cfg.has("axes") ? cfg.block.at("axes").get<std::vector<std::string>>() : std::vector<std::string>{"Q", "P"};
    for (const auto& name : axes) {
        if (name != "Q" && name != "P") throw ValidationError("ensemble.axes: expected Q or P, got " + name);
        const Axis axis = name == "Q" ? Axis::Q : Axis::P;
        const DensityHistogram h = bin_density(col, axis, bins, n_times);
        std::vector<std::string> head{"tau"};
        for (double x : h.bin_centers()) head.push_back(io::format_double(x));
        head.push_back("underflow");
        head.push_back("overflow");
        io::CsvWriter w(head);
        const double width = h.bin_edges[1] - h.bin_edges[0];
        bool conserved = true;
        for (std::size_t t = 0; t < n_times; ++t) {
            std::vector<double> row{h.time_samples[t]};
            std::size_t total = h.underflow[t] + h.overflow[t];
            for (std::size_t b = 0; b < bins; ++b) {
                row.push_back(h.at(t, b) / (static_cast<double>(h.n_traj) * width));
                total += h.at(t, b);
            }
            row.push_back(h.underflow[t]);
            row.push_back(h.overflow[t]);
            w.row(row);
            conserved = conserved && total == h.n_traj;
        }
        c.save("ensemble_density_" + name + ".csv", w);
        c.check("histogram_counts_" + name, conserved, conserved ? 0.0 : 1.0, 0.0, "every sample lands in a bin or an overflow counter");
    }
    c.check("ensemble_failures", col.n_failed() == 0, static_cast<double>(col.n_failed()), 0.0);
    c.res.summary["n_traj"] = col.members.size();
    c.res.summary["n_failed"] = col.n_failed();
    c.res.summary["downconversion_fraction"] = downconversion_fraction(col);
    c.res.summary["seed"] = spec.seed;
}

// ---------------------------------------------------------------------------
// spectrum

inline void run_spectrum(Context& c) {
    const RunConfig& cfg = c.cfg;
    const Spin spin = cfg.require_spin();
    const DimensionlessParams d = with_spin(cfg.params(), spin);
    const ReducedHamiltonian h(spin, d);
    const auto def = default_sigma_grid(spin, d, 2);
    const auto grid = linspace(cfg.get("sigma_min", def.front()), cfg.get("sigma_max", def.back()),
                               static_cast<std::size_t>(cfg.get<std::int64_t>("points", 2001)));
    const LevelDiagram diag = instantaneous_spectrum(spin, d, grid);
    const auto crossings = find_avoided_crossings(diag, d);
    const auto lowest = lowest_arc_crossings(crossings);

    io::CsvWriter levels(header({"sigma"}, numbered("E", spin.dim())));
    io::CsvWriter labels(header({"sigma"}, numbered("m_of_E", spin.dim())));
    double trace_err = 0.0;
    for (std::size_t k = 0; k < diag.sigmas.size(); ++k) {
        std::vector<double> row{diag.sigmas[k]};
        row.insert(row.end(), diag.eigenvalues[k].begin(), diag.eigenvalues[k].end());
        levels.row(row);
        std::vector<double> lab{diag.sigmas[k]};
        lab.insert(lab.end(), diag.labels[k].begin(), diag.labels[k].end());
        labels.row(lab);
        double tr = 0.0, sum = 0.0, scale = 1.0;
        for (int i = 0; i < spin.dim(); ++i) {
            tr += h.diagonal(spin.m(i), diag.sigmas[k]);
            sum += diag.eigenvalues[k][i];
            scale = std::max(scale, std::abs(diag.eigenvalues[k][i]));
        }
        trace_err = std::max(trace_err, std::abs(tr - sum) / scale);
    }
    c.save("spectrum_levels.csv", levels);
    c.save("spectrum_labels.csv", labels);

    io::CsvWriter diabatic(header({"sigma"}, level_columns(spin, "h_")));
    for (double s : grid) {
        std::vector<double> row{s};
        for (int i = 0; i < spin.dim(); ++i) row.push_back(h.diagonal(spin.m(i), s));
        diabatic.row(row);
    }
    c.save("spectrum_diabatic.csv", diabatic);

    io::CsvWriter cw({"sigma_star", "m_upper", "m_lower", "order", "pair_index", "min_gap", "true_crossing", "two_level_gap"});
    double worst = 0.0;
    for (const auto& x : crossings) {
        double tl = std::numeric_limits<double>::quiet_NaN();
        if (x.order == 1) {
            tl = 2.0 * project_two_level(spin, d, x.m_upper).gap_half;
            if (x.pair_index == 0) worst = std::max(worst, std::abs(x.min_gap - tl) / tl);
        }
        cw.row({x.sigma_star, x.m_upper, x.m_lower, double(x.order), double(x.pair_index), x.min_gap,
                x.true_crossing ? 1.0 : 0.0, tl});
    }
    c.save("spectrum_crossings.csv", cw);

    c.check_le("trace_identity", trace_err, 1e-9, "|tr h - sum of eigenvalues| / max |E|");
    c.check("lowest_arc_crossings", static_cast<int>(lowest.size()) == spin.two_l(), static_cast<double>(lowest.size()),
            spin.two_l(), "one order-1 crossing per adjacent pair");
    const auto rr = classify_regime(d);
    if (rr.is_strong_quantum && d.gamma_tilde > 0.0) {
        c.check_le("two_level_gap_agreement", worst, 0.01, "max relative deviation of lowest-arc gaps from 2 gap_half");
    }
    c.res.summary["lowest_arc_crossings"] = lowest.size();
    c.res.summary["crossings"] = crossings.size();
    c.res.summary["min_overlap"] = diag.min_overlap;
    c.res.summary["ambiguous_tracking"] = diag.any_ambiguous();
    c.res.summary["max_two_level_gap_deviation"] = worst;
}

// ---------------------------------------------------------------------------
// phase space

inline std::vector<double> default_snapshot_sigmas() { return {-1.2, -0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9, 1.2}; }

inline void run_phase_space(Context& c) {
    const RunConfig& cfg = c.cfg;
    const DimensionlessParams& d = cfg.params();
    const auto sigmas = cfg.numbers("sigmas", default_snapshot_sigmas());
    PhaseSpaceOptions po;
    po.n_phi = static_cast<int>(cfg.get<std::int64_t>("n_phi", 256));
    if (c.opt.tol) po.quad_tol = *c.opt.tol;
    const std::string mode = cfg.get<std::string>("levels", d.is_quantum() ? "bohr_sommerfeld" : "uniform");
    if (mode != "bohr_sommerfeld" && mode != "uniform") throw ValidationError("phase_space.levels: expected bohr_sommerfeld or uniform");
    const auto n_uniform = static_cast<std::size_t>(cfg.get<std::int64_t>("n_contours", 21));

    io::CsvWriter cw({"sigma", "contour", "energy", "region", "closed", "phi", "lz"});
    io::CsvWriter sw({"sigma", "branch", "phi", "lz"});
    json snaps = json::array();
    double worst = 0.0;
    for (double s : sigmas) {
        std::vector<double> energies;
        if (mode == "bohr_sommerfeld") {
            for (const auto& lv : bohr_sommerfeld_levels(d, s, po)) energies.push_back(lv.energy);
        } else {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (double phi : linspace(-std::numbers::pi, std::numbers::pi, 257))
                for (double lz : linspace(-1.0, 1.0, 257)) {
                    const double e = reduced_hamiltonian(d, s, phi, lz);
                    lo = std::min(lo, e);
                    hi = std::max(hi, e);
                }
            const auto e = linspace(lo, hi, n_uniform + 2);
            energies.assign(e.begin() + 1, e.end() - 1);
        }
        const ContourSet set = energy_contours(d, s, energies, po);
        for (std::size_t k = 0; k < set.contours.size(); ++k) {
            const auto& ct = set.contours[k];
            for (const auto& p : ct.points) {
                cw.row({s, double(k), ct.energy, double(static_cast<int>(ct.region)), ct.closed ? 1.0 : 0.0, p.phi, p.lz});
                const double err = std::abs(reduced_hamiltonian(d, s, p.phi, p.lz) - ct.energy) / std::max(1.0, std::abs(ct.energy));
                worst = std::max(worst, err);
            }
        }
        json snap;
        snap["sigma"] = s;
        snap["contours"] = set.contours.size();
        if (set.separatrix_energy) {
            const Separatrix sep = separatrix(d, s, po);
            for (const auto& p : sep.upper_branch) sw.row({s, 0.0, p.phi, p.lz});
            for (const auto& p : sep.lower_branch) sw.row({s, 1.0, p.phi, p.lz});
            snap["separatrix_energy"] = sep.energy;
            snap["separatrix_area"] = sep.area;
        }
        snaps.push_back(snap);
    }
    c.save("phase_space_contours.csv", cw);
    c.save("phase_space_separatrix.csv", sw);
    c.check_le("contour_energy_residual", worst, 1e-8, "max |H(point) - E| / max(1, |E|)");
    c.res.summary["snapshots"] = snaps;
}

inline void run_bohr_sommerfeld(Context& c) {
    const RunConfig& cfg = c.cfg;
    const Spin spin = cfg.require_spin();
    const DimensionlessParams d = with_spin(cfg.params(), spin);
    PhaseSpaceOptions po;
    if (c.opt.tol) po.quad_tol = *c.opt.tol;
    const auto sigmas = cfg.numbers("sigmas", default_snapshot_sigmas());
    io::CsvWriter w({"sigma", "n", "energy", "action", "region"});
    json counts = json::array();
    const double quantum = 2.0 * std::numbers::pi * d.hbar_over_L();
    double residual = 0.0;
    long worst_count = 0;
    for (double s : sigmas) {
        const auto levels = bohr_sommerfeld_levels(d, s, po);
        for (const auto& lv : levels) {
            w.row({s, double(lv.n), lv.energy, lv.action, double(static_cast<int>(lv.region))});
            residual = std::max(residual, std::abs(lv.action - quantum * (lv.n + 0.5)) / quantum);
        }
        counts.push_back({{"sigma", s}, {"levels", levels.size()}});
        worst_count = std::max(worst_count, std::abs(static_cast<long>(levels.size()) - spin.dim()));
    }
    c.save("bohr_sommerfeld_levels.csv", w);
    // Rounding in up to three regions can move the total by at most one level.
    c.check_le("level_count_deviation", static_cast<double>(worst_count), 1.0, "max |levels - (2l+1)| over snapshots");
    c.check_le("action_residual", residual, 1e-6, "max |action - 2 pi (hbar/L)(n + 1/2)| in quanta");
    c.res.summary["counts"] = counts;
}

inline void run_separatrix_scan(Context& c) {
    const RunConfig& cfg = c.cfg;
    const DimensionlessParams& d = cfg.params();
    PhaseSpaceOptions po;
    if (c.opt.tol) po.quad_tol = *c.opt.tol;
    const auto grid = linspace(cfg.get("sigma_min", -1.2), cfg.get("sigma_max", 1.2),
                               static_cast<std::size_t>(cfg.get<std::int64_t>("points", 241)));
    io::CsvWriter w({"sigma", "has_separatrix", "energy", "unstable_lz", "area", "area_pi_hbar"});
    const double nan = std::numeric_limits<double>::quiet_NaN();
    double best = 0.0, best_sigma = nan;
    bool sane = true;
    for (double s : grid) {
        if (!unstable_point(d, s)) {
            w.row({s, 0.0, nan, nan, nan, nan});
            continue;
        }
        const Separatrix sep = separatrix(d, s, po);
        const double api = d.is_quantum() ? sep.area / (std::numbers::pi * d.hbar_over_L()) : nan;
        w.row({s, 1.0, sep.energy, sep.unstable_point.lz, sep.area, api});
        sane = sane && std::isfinite(sep.area) && sep.area >= 0.0;
        if (sep.area > best) {
            best = sep.area;
            best_sigma = s;
        }
    }
    c.save("separatrix_scan.csv", w);
    c.check("areas_finite_nonnegative", sane, sane ? 0.0 : 1.0, 0.0);
    c.res.summary["max_area"] = best;
    c.res.summary["max_area_sigma"] = best_sigma;
    c.res.summary["estimate"] = separatrix_area_estimate(d);
    if (d.is_quantum()) c.res.summary["max_area_pi_hbar"] = best / (std::numbers::pi * d.hbar_over_L());
}

// ---------------------------------------------------------------------------
// quantum

inline PacketSpec packet_from(const RunConfig& cfg) {
    PacketSpec p;
    p.p0 = cfg.get("p0", p.p0);
    p.width_d = cfg.get("width_d", p.width_d);
    if (cfg.has("m0")) p.m0 = cfg.get("m0", 0.0);
    p.q0 = cfg.get("q0", p.q0);
    return p;
}

/// Bins a fine uniform density (origin, step) into [lo, hi) as a density per unit length.
inline std::vector<double> rebin(double origin, double step, const std::vector<double>& fine, double lo, double hi,
                                 std::size_t bins) {
    std::vector<double> out(bins, 0.0);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t i = 0; i < fine.size(); ++i) {
        const double x = origin + step * static_cast<double>(i);
        if (x < lo || x >= hi) continue;
        const auto b = std::min(bins - 1, static_cast<std::size_t>((x - lo) / width));
        out[b] += fine[i] * step;
    }
    for (auto& v : out) v /= width;
    return out;
}

inline void run_quantum(Context& c) {
    const RunConfig& cfg = c.cfg;
    const Spin spin = cfg.require_spin();
    const DimensionlessParams d = with_spin(cfg.params(), spin);
    const PacketSpec packet = packet_from(cfg);
    GridOptions go;
    go.n_points = static_cast<std::size_t>(cfg.get<std::int64_t>("grid_points", 2048));
    const double t1 = cfg.get("t1", 3.0);
    const double sample = cfg.get("sample_dtau", 0.01);
    const auto pos_every = static_cast<std::size_t>(cfg.get<std::int64_t>("position_every", 10));
    PositionWindowOptions pw;
    pw.pad = static_cast<int>(cfg.get<std::int64_t>("pad", 4));
    StepControl sc;
    sc.max_dtau = cfg.get("max_dtau", sc.max_dtau);
    sc.observable_tol = c.opt.tol.value_or(cfg.get("observable_tol", sc.observable_tol));
    sc.substeps = static_cast<int>(cfg.get<std::int64_t>("substeps", 0));

    const ReducedWavefunction psi0 = init_packet(spin, d, packet, go);
    const SubstepChoice steps = choose_substeps(psi0, d, t1, sc);
    PropagatorOptions po;
    po.threads = c.threads();
    GridPropagator prop(d, psi0, steps.substeps, po);

    const double sp = packet_sigma(d, packet);
    const double p_lo = packet.p0 - t1 - 12.0 * sp;
    const double p_hi = packet.p0 + 12.0 * sp;
    const std::size_t p_bins = 1200;
    const std::vector<double> p_edges = linspace(p_lo, p_hi, p_bins + 1);
    std::vector<std::string> p_head{"tau"};
    for (std::size_t b = 0; b < p_bins; ++b) p_head.push_back(io::format_double(0.5 * (p_edges[b] + p_edges[b + 1])));
    io::CsvWriter pr_p(p_head);
    io::CsvWriter occ(header({"tau"}, level_columns(spin, "p_")));
    io::CsvWriter occ_c(header({"tau"}, level_columns(spin, "p_")));
    io::CsvWriter energy({"tau", "kinetic", "internal", "position", "total", "mean_q"});

    const auto norms0 = point_norms(psi0);
    const double peak0 = *std::max_element(norms0.begin(), norms0.end());
    const std::size_t jc = psi0.grid.size / 2;
    const double E0 = mean_energy(prop, d, packet.q0).total();
    double worst_norm = 0.0, worst_point = 0.0, worst_energy = 0.0, worst_density = 0.0;
    bool aliasing = false;
    struct Snapshot {
        double tau;
        PositionDensity density;
    };
    std::vector<Snapshot> snaps;
    std::size_t sample_index = 0;

    auto observe = [&](const GridPropagator& g) {
        const ReducedWavefunction& psi = g.state();
        const auto o = occupation_probabilities(psi);
        std::vector<double> row{psi.tau};
        row.insert(row.end(), o.begin(), o.end());
        occ.row(row);
        double rc = 0.0;
        for (int i = 0; i < spin.dim(); ++i) rc += std::norm(psi(jc, i));
        std::vector<double> rowc{psi.tau};
        for (int i = 0; i < spin.dim(); ++i) rowc.push_back(std::norm(psi(jc, i)) / rc);
        occ_c.row(rowc);

        worst_norm = std::max(worst_norm, std::abs(total_norm(psi) - 1.0));
        const auto pn = point_norms(psi);
        for (std::size_t j = 0; j < pn.size(); ++j) worst_point = std::max(worst_point, std::abs(pn[j] - norms0[j]) / peak0);

        const EnergyBreakdown e = mean_energy(g, d, packet.q0);
        worst_energy = std::max(worst_energy, std::abs(e.total() - E0) / std::abs(E0));
        energy.row({psi.tau, e.kinetic, e.internal, e.position, e.total(), e.position});

        const MomentumDensity md = reconstruct_momentum_density(psi);
        double mass = 0.0;
        for (double v : md.density) mass += v * md.step;
        worst_density = std::max(worst_density, std::abs(mass - 1.0));
        std::vector<double> prow{psi.tau};
        const auto binned = rebin(md.origin, md.step, md.density, p_lo, p_hi, p_bins);
        prow.insert(prow.end(), binned.begin(), binned.end());
        pr_p.row(prow);

        if (sample_index % std::max<std::size_t>(pos_every, 1) == 0) {
            PositionWindowOptions w = pw;
            w.q_center = e.position;
            PositionDensity qd = reconstruct_position_density(psi, d, w);
            double qmass = 0.0;
            for (double v : qd.density) qmass += v * qd.step;
            worst_density = std::max(worst_density, std::abs(qmass - 1.0));
            aliasing = aliasing || qd.aliasing_warning;
            qd.per_channel.clear();
            snaps.push_back({psi.tau, std::move(qd)});
        }
        ++sample_index;
    };

    observe(prop);
    const long total = std::lround((t1 - psi0.tau) / prop.dt());
    const long stride = std::max(1L, std::lround(sample / prop.dt()));
    while (prop.step_index() < total) {
        prop.advance(static_cast<std::size_t>(std::min(stride, total - prop.step_index())));
        observe(prop);
    }

    // Position densities on one common grid spanning every snapshot's significant mass.
    double q_lo = std::numeric_limits<double>::infinity(), q_hi = -q_lo;
    for (const auto& s : snaps) {
        const double peak = *std::max_element(s.density.density.begin(), s.density.density.end());
        for (std::size_t k = 0; k < s.density.density.size(); ++k) {
            if (s.density.density[k] > 1e-8 * peak) {
                q_lo = std::min(q_lo, s.density.at(k));
                q_hi = std::max(q_hi, s.density.at(k));
            }
        }
    }
    const std::size_t q_bins = 1600;
    const double q_pad = 0.02 * (q_hi - q_lo);
    q_lo -= q_pad;
    q_hi += q_pad;
    const std::vector<double> q_edges = linspace(q_lo, q_hi, q_bins + 1);
    std::vector<std::string> q_head{"tau"};
    for (std::size_t b = 0; b < q_bins; ++b) q_head.push_back(io::format_double(0.5 * (q_edges[b] + q_edges[b + 1])));
    io::CsvWriter pr_q(q_head);
    for (const auto& s : snaps) {
        std::vector<double> row{s.tau};
        const auto binned = rebin(s.density.origin, s.density.step, s.density.density, q_lo, q_hi, q_bins);
        row.insert(row.end(), binned.begin(), binned.end());
        pr_q.row(row);
    }

    c.save("quantum_pr_p.csv", pr_p);
    c.save("quantum_pr_q.csv", pr_q);
    c.save("quantum_occupations.csv", occ);
    c.save("quantum_occupations_center.csv", occ_c);
    c.save("quantum_energy.csv", energy);

    c.check_le("total_norm", worst_norm, 1e-8, "max |norm - 1|");
    c.check_le("per_point_norm", worst_point, 1e-8, "max per-grid-point norm change relative to the peak");
    c.check_le("energy_bookkeeping", worst_energy, 1e-6, "max relative change of the mean physical energy");
    c.check_le("density_normalization", worst_density, 1e-6, "max |integral of pr(P) or pr(Q) - 1|");
    c.check("position_window", !aliasing, aliasing ? 1.0 : 0.0, 0.0, "no mass near the edges of the position window");

    const auto final_occ = occupation_probabilities(prop.state());
    std::size_t branches = 0;
    for (double v : final_occ)
        if (v > 1e-4) ++branches;
    c.res.summary["substeps"] = steps.substeps;
    c.res.summary["dtau"] = prop.dt();
    c.res.summary["grid_points"] = psi0.grid.size;
    c.res.summary["grid_step"] = psi0.grid.step;
    c.res.summary["final_occupations"] = final_occ;
    c.res.summary["branches_above_1e-4"] = branches;
    c.res.summary["max_energy_change"] = worst_energy;
}

// ---------------------------------------------------------------------------
// lz

inline void run_lz(Context& c) {
    const RunConfig& cfg = c.cfg;
    const Spin spin = cfg.require_spin();
    const DimensionlessParams d = with_spin(cfg.params(), spin);
    const double m0 = cfg.get("m0", spin.l());
    SweepOptions so;
    so.window = cfg.get("sweep_window", so.window);

    io::CsvWriter pw({"m", "pr_analytic", "pr_sweep", "gap_half", "sigma_cross"});
    double worst = 0.0, asym = 0.0;
    for (int i = spin.dim() - 1; i >= 1; --i) {
        const double m = spin.m(i);
        const TwoLevelModel t = project_two_level(spin, d, m);
        const double pa = lz_probability(spin, d, m);
        const double ps = two_level_sweep(t, so);
        worst = std::max(worst, std::abs(pa - ps));
        asym = std::max(asym, std::abs(pa - lz_probability(spin, d, 1.0 - m)));
        pw.row({m, pa, ps, t.gap_half, t.sigma_cross});
    }
    c.save("lz_probabilities.csv", pw);

    const BranchTree tree = cascade_tree(spin, d, m0);
    json nodes = json::array();
    for (const auto& n : tree.nodes) {
        nodes.push_back({{"crossing", n.crossing},
                         {"m", n.m},
                         {"probability", n.probability},
                         {"momentum_offset", n.momentum_offset},
                         {"parent", n.parent},
                         {"children", n.children}});
    }
    const auto dist = tree.leaf_distribution();
    json tj;
    tj["l"] = spin.l();
    tj["m0"] = m0;
    tj["crossing_m"] = tree.crossing_m;
    tj["crossing_pr"] = tree.crossing_pr;
    tj["nodes"] = nodes;
    tj["leaf_distribution"] = dist;
    c.save("lz_tree.json", tj);

    io::CsvWriter lw({"m", "probability"});
    double sum = 0.0;
    std::size_t nonzero = 0;
    for (int i = 0; i < spin.dim(); ++i) {
        lw.row({spin.m(i), dist[i]});
        sum += dist[i];
        if (dist[i] > 0.0) ++nonzero;
    }
    c.save("lz_leaves.csv", lw);

    // Step entropy on the spectrum's crossing times for the configured packet.
    const LevelDiagram diag = instantaneous_spectrum(spin, d, default_sigma_grid(spin, d));
    const auto lowest = lowest_arc_crossings(find_avoided_crossings(diag, d));
    PacketSpec packet;
    packet.m0 = m0;
    const double offset = packet_sigma_at(spin, d, packet, 0.0);
    if (lowest.size() == tree.crossing_m.size()) {
        const StepCurve st = step_entropy(tree, crossing_times(lowest, offset));
        io::CsvWriter sw({"tau", "S"});
        sw.row({0.0, st.values.front()});
        for (std::size_t k = 0; k < st.breaks.size(); ++k) sw.row({st.breaks[k], st.values[k + 1]});
        c.save("lz_step_entropy.csv", sw);
        c.check_le("step_entropy_bound", st.values.back(), std::log(static_cast<double>(spin.dim())) + 1e-12);
    }

    const CascadeStatistics stats = cascade_statistics(tree);
    c.check_le("sweep_vs_analytic", worst, 1e-3, "max |two-level sweep - analytic| over the ladder");
    c.check_le("pr_symmetry", asym, 1e-15, "max |pr_m - pr_(1-m)|");
    c.check_le("leaf_normalization", std::abs(sum - 1.0), 1e-12);
    if (m0 == spin.l()) {
        c.check("leaf_count", static_cast<int>(nonzero) == spin.dim(), static_cast<double>(nonzero), spin.dim());
    }
    if (spin.dim() >= 2) {
        const CascadeStatistics below = cascade_statistics(cascade_tree(spin, d, spin.l() - 1.0));
        const CascadeStatistics top = cascade_statistics(cascade_tree(spin, d, spin.l()));
        c.check("fussiness_identity", below.ignition == top.first_stall, std::abs(below.ignition - top.first_stall), 0.0,
                "ignition from l-1 equals the stall probability at the first crossing from l");
    }
    c.res.summary["ignition"] = stats.ignition;
    c.res.summary["full_conversion"] = stats.full_conversion;
    c.res.summary["mean_efficiency"] = stats.mean_efficiency;
    c.res.summary["mean_final_m"] = stats.mean_final_m;
    c.res.summary["max_sweep_deviation"] = worst;
}

// ---------------------------------------------------------------------------
// entropy

inline void run_entropy(Context& c) {
    const RunConfig& cfg = c.cfg;
    const Spin spin = cfg.require_spin();
    const DimensionlessParams d = with_spin(cfg.params(), spin);
    const PacketSpec packet = packet_from(cfg);
    GridOptions go;
    go.n_points = static_cast<std::size_t>(cfg.get<std::int64_t>("grid_points", 1024));
    const double t1 = cfg.get("t1", 3.0);
    const double sample = cfg.get("sample_dtau", 0.02);
    StepControl sc;
    sc.observable_tol = c.opt.tol.value_or(cfg.get("observable_tol", sc.observable_tol));
    const bool with_rm = cfg.get("rm", true);
    RmOptions ro;
    if (cfg.has("start_offset_hbar_k")) ro.start_offset_hbar_k = cfg.get("start_offset_hbar_k", 0.0);
    ro.nodes = static_cast<std::size_t>(cfg.get<std::int64_t>("nodes", 41));
    ro.max_nodes = static_cast<std::size_t>(cfg.get<std::int64_t>("max_nodes", 5248));
    ro.dressed_start = cfg.get("dressed_start", true);

    const ReducedWavefunction psi0 = init_packet(spin, d, packet, go);
    const SubstepChoice steps = choose_substeps(psi0, d, t1, sc);
    PropagatorOptions po;
    po.threads = c.threads();
    GridPropagator prop(d, psi0, steps.substeps, po);
    std::optional<RmQuadrature> rm;
    if (with_rm) rm.emplace(r_m_quadrature(spin, d, packet, t1, ro));

    const BranchTree tree = cascade_tree(spin, d, packet.level(spin));
    const LevelDiagram diag = instantaneous_spectrum(spin, d, default_sigma_grid(spin, d));
    const auto lowest = lowest_arc_crossings(find_avoided_crossings(diag, d));
    const double offset = packet_sigma_at(spin, d, packet, 0.0);
    std::optional<StepCurve> step;
    if (lowest.size() == tree.crossing_m.size()) step = step_entropy(tree, crossing_times(lowest, offset));

    const double nan = std::numeric_limits<double>::quiet_NaN();
    io::CsvWriter w({"tau", "S_exact", "S_step", "S_diagonal", "S_rm", "trace"});
    io::CsvWriter rw(header({"tau"}, level_columns(spin, "rho_")));
    io::CsvWriter rmw(header({"tau"}, level_columns(spin, "R_")));
    double worst_trace = 0.0, worst_herm = 0.0, min_eig = 0.0, worst_full_diag = 0.0, worst_rm = 0.0, worst_rm_sum = 0.0;
    double s_max = 0.0, s0 = nan;
    auto observe = [&](const GridPropagator& g) {
        const FastDensityMatrix rho = reduced_density_fast(g.state(), d);
        const double tau = g.state().tau;
        const double s_exact = von_neumann_entropy(rho);
        const auto diagv = rho.diagonal();
        const double s_diag = shannon_entropy(diagv);
        double s_rm = nan;
        if (rm) {
            const auto r = (*rm)(tau);
            s_rm = shannon_entropy(r);
            double sum = 0.0;
            for (int i = 0; i < spin.dim(); ++i) {
                worst_rm = std::max(worst_rm, std::abs(r[i] - diagv[i]));
                sum += r[i];
            }
            worst_rm_sum = std::max(worst_rm_sum, std::abs(sum - 1.0));
            std::vector<double> row{tau};
            row.insert(row.end(), r.begin(), r.end());
            rmw.row(row);
        }
        const double tr = rho.rho.trace().real();
        worst_trace = std::max(worst_trace, std::abs(tr - 1.0));
        worst_herm = std::max(worst_herm, (rho.rho - rho.rho.adjoint()).cwiseAbs().maxCoeff());
        const auto ev = density_eigenvalues(rho.rho);
        min_eig = std::min(min_eig, ev.front());
        worst_full_diag = std::max(worst_full_diag, std::abs(s_exact - s_diag));
        s_max = std::max(s_max, s_exact);
        if (std::isnan(s0)) s0 = s_exact;
        w.row({tau, s_exact, step ? step->at(tau) : nan, s_diag, s_rm, tr});
        std::vector<double> row{tau};
        row.insert(row.end(), diagv.begin(), diagv.end());
        rw.row(row);
    };
    observe(prop);
    const long total = std::lround((t1 - psi0.tau) / prop.dt());
    const long stride = std::max(1L, std::lround(sample / prop.dt()));
    while (prop.step_index() < total) {
        prop.advance(static_cast<std::size_t>(std::min(stride, total - prop.step_index())));
        observe(prop);
    }
    c.save("entropy.csv", w);
    c.save("entropy_rho_diagonal.csv", rw);
    if (rm) c.save("entropy_rm.csv", rmw);

    c.check_le("trace", worst_trace, 1e-10, "max |tr rho - 1|");
    c.check_le("hermiticity", worst_herm, 1e-12, "max |rho - rho^dagger|");
    c.check("eigenvalues_nonnegative", min_eig >= -1e-12, min_eig, -1e-12, "smallest eigenvalue of rho");
    c.check_le("full_vs_diagonal_entropy", worst_full_diag, 1e-6, "max |S(rho) - S(diag rho)|");
    c.check_le("initial_entropy", s0, 1e-6);
    c.check_le("entropy_bound", s_max, std::log(static_cast<double>(spin.dim())), "max S <= ln(2l+1)");
    if (rm) {
        c.check_le("rm_normalization", worst_rm_sum, 1e-10, "max |sum R_m - 1|");
        c.check_le("rm_vs_rho_diagonal", worst_rm, 1e-3, "max |R_m - rho_mm|");
    }
    c.res.summary["max_entropy"] = s_max;
    c.res.summary["substeps"] = steps.substeps;
    if (step) c.res.summary["final_step_entropy"] = step->values.back();
}

// ---------------------------------------------------------------------------
// dispatch and manifest

inline const std::vector<std::pair<std::string, std::string>>& subcommands() {
    static const std::vector<std::pair<std::string, std::string>> s = {
        {"classical", "classical"},         {"reduced", "reduced"},
        {"ensemble", "ensemble"},           {"spectrum", "spectrum"},
        {"phase-space", "phase_space"},     {"bohr-sommerfeld", "bohr_sommerfeld"},
        {"separatrix-scan", "separatrix_scan"}, {"quantum", "quantum"},
        {"lz-cascade", "lz"},               {"entropy", "entropy"},
    };
    return s;
}

inline std::function<void(Context&)> runner_for(const std::string& task) {
    if (task == "classical") return run_classical;
    if (task == "reduced") return run_reduced;
    if (task == "ensemble") return run_ensemble_task;
    if (task == "spectrum") return run_spectrum;
    if (task == "phase_space") return run_phase_space;
    if (task == "bohr_sommerfeld") return run_bohr_sommerfeld;
    if (task == "separatrix_scan") return run_separatrix_scan;
    if (task == "quantum") return run_quantum;
    if (task == "lz") return run_lz;
    if (task == "entropy") return run_entropy;
    throw ValidationError("unknown task '" + task + "'");
}

inline json versions() {
    json v;
    v["hdaemon"] = kVersion;
    v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    v["boost"] = BOOST_LIB_VERSION;
    v["json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                std::to_string(NLOHMANN_JSON_VERSION_PATCH);
#if defined(__clang__)
    v["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
    v["compiler"] = std::string("gcc ") + __VERSION__;
#endif
    v["cxx"] = static_cast<long>(__cplusplus);
    return v;
}

inline json model_json(const DimensionlessParams& d, const std::optional<Spin>& spin) {
    json m;
    m["M_tilde"] = d.M_tilde;
    m["Omega_tilde"] = d.Omega_tilde;
    m["gamma_tilde"] = d.gamma_tilde;
    if (d.is_quantum()) m["L_over_hbar"] = d.L_over_hbar;
    else m["L_over_hbar"] = nullptr;
    if (spin) m["l"] = spin->l();
    return m;
}

inline void write_manifest(const RunResult& r, const json& config_echo, const json& model, const RunOptions& opt) {
    json m;
    m["task"] = r.task;
    m["command"] = opt.command_line;
    m["config"] = config_echo;
    m["model"] = model;
    json ov = json::object();
    if (opt.seed) ov["seed"] = *opt.seed;
    if (opt.tol) ov["tol"] = *opt.tol;
    ov["threads"] = resolve_threads(opt.threads);
    m["overrides"] = ov;
    m["versions"] = versions();
    m["wall_time_s"] = r.wall_time;
    m["files"] = r.files;
    json checks = json::array();
    for (const auto& c : r.checks) {
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"tolerance", c.tolerance}, {"detail", c.detail}});
    }
    m["checks"] = checks;
    m["all_checks_passed"] = r.checks_passed();
    m["summary"] = r.summary;
    if (r.failure) m["failure"] = {{"type", r.failure_type}, {"message", *r.failure}};
    else m["failure"] = nullptr;
    m["exit_code"] = r.exit_code();
    io::write_atomic(r.directory / "manifest.json", m.dump(2) + "\n");
}

/// Runs a validated configuration; always writes manifest.json.
inline RunResult run(const RunConfig& cfg, const RunOptions& opt = {}) {
    RunResult res;
    res.task = cfg.task;
    res.directory = opt.out.value_or(fs::path(cfg.output.directory));
    fs::create_directories(res.directory);
    const auto t0 = std::chrono::steady_clock::now();
    Context ctx{cfg, opt, res.directory, res};
    try {
        runner_for(cfg.task)(ctx);
    } catch (const ValidationError& e) {
        res.failure = e.what();
        res.failure_type = "validation";
    } catch (const DaemonError& e) {
        res.failure = e.what();
        res.failure_type = "numerical";
    } catch (const std::exception& e) {
        res.failure = e.what();
        res.failure_type = "internal";
    }
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(res, cfg.raw, model_json(cfg.model, cfg.spin), opt);
    return res;
}

/// Manifest for a configuration that failed validation.
inline RunResult validation_failure(const std::string& task, const std::string& message, const json& raw,
                                    const fs::path& dir, const RunOptions& opt) {
    RunResult res;
    res.task = task;
    res.directory = dir;
    res.failure = message;
    res.failure_type = "validation";
    fs::create_directories(dir);
    write_manifest(res, raw, nullptr, opt);
    return res;
}

// ---------------------------------------------------------------------------
// figure recipes

struct FigureRun {
    std::string name;
    json config;
};

inline std::vector<FigureRun> figure_configs(int n) {
    const json classical_model = {{"M_tilde", 1.0 / 3000.0}, {"Omega_tilde", 600.0}, {"gamma_tilde", 15.0}};
    json quantum_model = classical_model;
    quantum_model["l"] = 5;
    json bs_model = classical_model;
    bs_model["l"] = 25;
    const json phis = json::array({0.0, std::numbers::pi / 2.0});
    switch (n) {
        case 1:
        case 2:
            return {{"classical", {{"model", classical_model},
                                   {"classical", {{"p0", 0.6}, {"lz0", std::sqrt(5.0 / 6.0)}, {"phi0", phis}, {"t1", 3.0}, {"output_samples", 3001}}}}}};
        case 3:
            return {{"phase_space", {{"model", bs_model},
                                     {"phase_space", {{"sigmas", default_snapshot_sigmas()}, {"levels", "bohr_sommerfeld"}}}}}};
        case 4:
            return {{"reduced", {{"model", classical_model},
                                 {"reduced", {{"p0", 0.6}, {"lz0", std::sqrt(5.0 / 6.0)}, {"phi0", phis}, {"t1", 3.0}, {"output_samples", 3001}}}}}};
        case 5:
        case 6:
            return {{"quantum", {{"model", quantum_model},
                                 {"quantum", {{"p0", 0.6}, {"width_d", 20.0}, {"grid_points", 2048}, {"t1", 3.0}, {"sample_dtau", 0.01}}}}},
                    {"ensemble", {{"model", classical_model},
                                  {"ensemble", {{"n_traj", 1000}, {"p0", 0.6}, {"lz0", std::sqrt(5.0 / 6.0)}, {"t1", 3.0}, {"axes", json::array({"Q", "P"})}}}}}};
        case 7:
            return {{"spectrum", {{"model", quantum_model}, {"spectrum", {{"points", 2001}}}}}};
        case 8:
            return {{"quantum", {{"model", quantum_model},
                                 {"quantum", {{"p0", 0.6}, {"width_d", 20.0}, {"grid_points", 1024}, {"t1", 3.0}, {"sample_dtau", 0.005}, {"position_every", 1000000}}}}}};
        case 9:
            return {{"entropy", {{"model", quantum_model},
                                 {"entropy", {{"p0", 0.6}, {"width_d", 20.0}, {"grid_points", 1024}, {"t1", 3.0}, {"sample_dtau", 0.01}}}}}};
        default:
            throw ValidationError("no recipe for figure " + std::to_string(n) + " (expected 1-9)");
    }
}

struct FigureResult {
    std::vector<RunResult> runs;
    [[nodiscard]] int exit_code() const {
        int code = 0;
        for (const auto& r : runs) code = std::max(code, r.exit_code());
        return code;
    }
};

inline FigureResult run_figure(int n, const fs::path& out, const RunOptions& opt) {
    FigureResult fr;
    for (const auto& f : figure_configs(n)) {
        RunOptions o = opt;
        o.out = out / f.name;
        fr.runs.push_back(run(config::parse(f.config), o));
    }
    json top;
    top["figure"] = n;
    json subs = json::array();
    for (const auto& r : fr.runs) subs.push_back({{"task", r.task}, {"directory", r.directory.filename().string()}, {"exit_code", r.exit_code()}});
    top["runs"] = subs;
    top["exit_code"] = fr.exit_code();
    top["versions"] = versions();
    io::write_atomic(out / "manifest.json", top.dump(2) + "\n");
    return fr;
}

} // namespace hdaemon::cli
