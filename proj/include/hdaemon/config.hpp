#pragma once

// Run configuration: JSON with one model block, one task block and an optional output block.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdaemon/errors.hpp"
#include "hdaemon/model.hpp"

namespace hdaemon::config {

using json = nlohmann::ordered_json;

enum class KeyType { Number, Integer, Boolean, String, NumberOrArray, NumberArray, StringArray, Object };

struct KeySpec {
    std::string name;
    KeyType type;
    std::string description;
};

struct BlockSpec {
    std::string name;
    std::string description;
    std::vector<KeySpec> keys;
};

inline const std::vector<BlockSpec>& task_blocks() {
    using K = KeyType;
    static const std::vector<BlockSpec> blocks = {
        {"classical", "full four-dimensional trajectories",
         {{"q0", K::Number, "initial q"},
          {"p0", K::Number, "initial p"},
          {"lz0", K::Number, "initial lz"},
          {"phi0", K::NumberOrArray, "initial phase(s); one trajectory each"},
          {"t0", K::Number, "start time"},
          {"t1", K::Number, "end time"},
          {"tol", K::Number, "absolute error tolerance per step"},
          {"output_samples", K::Integer, "uniform output samples (0: accepted steps)"},
          {"band_tol", K::Number, "relative speed band around Omega~"},
          {"window_periods", K::Number, "speed averaging window in libration periods"},
          {"min_duration", K::Number, "shortest in-band stretch counted as downconversion"}}},
        {"reduced", "reduced dynamics on the sphere",
         {{"q0", K::Number, "initial q of the full system"},
          {"p0", K::Number, "initial p of the full system"},
          {"lz0", K::Number, "initial lz"},
          {"phi0", K::NumberOrArray, "initial phase(s) of the full system"},
          {"sigma_offset", K::Number, "sigma - tau; derived from J~ when absent"},
          {"t0", K::Number, "start time"},
          {"t1", K::Number, "end time"},
          {"tol", K::Number, "absolute error tolerance per step"},
          {"output_samples", K::Integer, "uniform output samples (0: accepted steps)"}}},
        {"ensemble", "classical ensemble over initial phases",
         {{"n_traj", K::Integer, "number of trajectories"},
          {"seed", K::Integer, "seed for random phase sampling"},
          {"sampling", K::String, "grid or random"},
          {"q0", K::Number, "initial q"},
          {"p0", K::Number, "initial p"},
          {"lz0", K::Number, "initial lz"},
          {"phi_offset", K::Number, "added to every sampled phase"},
          {"t0", K::Number, "start time"},
          {"t1", K::Number, "end time"},
          {"tol", K::Number, "absolute error tolerance per step"},
          {"n_samples", K::Integer, "stored samples per trajectory"},
          {"bins", K::Integer, "histogram bins"},
          {"time_samples", K::Integer, "histogram time samples"},
          {"axes", K::StringArray, "histogram axes, Q and/or P"}}},
        {"spectrum", "instantaneous eigenvalues and avoided crossings",
         {{"sigma_min", K::Number, "first sigma"},
          {"sigma_max", K::Number, "last sigma"},
          {"points", K::Integer, "grid points"}}},
        {"phase_space", "energy contours of the reduced Hamiltonian",
         {{"sigmas", K::NumberArray, "snapshot sigmas"},
          {"n_phi", K::Integer, "phase samples per contour"},
          {"levels", K::String, "bohr_sommerfeld or uniform"},
          {"n_contours", K::Integer, "contour count for uniform levels"}}},
        {"bohr_sommerfeld", "semiclassical levels",
         {{"sigmas", K::NumberArray, "snapshot sigmas"}}},
        {"separatrix_scan", "separatrix energy and area against sigma",
         {{"sigma_min", K::Number, "first sigma"},
          {"sigma_max", K::Number, "last sigma"},
          {"points", K::Integer, "scan points"}}},
        {"quantum", "exact reduced quantum propagation",
         {{"p0", K::Number, "mean physical momentum"},
          {"width_d", K::Number, "position width D in units of 1/k"},
          {"m0", K::Number, "initial level (default l)"},
          {"q0", K::Number, "mean position"},
          {"grid_points", K::Integer, "momentum grid points"},
          {"t1", K::Number, "end time"},
          {"sample_dtau", K::Number, "output interval"},
          {"position_every", K::Integer, "position density every n output samples"},
          {"pad", K::Integer, "zero-padding factor of the position transform"},
          {"max_dtau", K::Number, "largest propagation step"},
          {"observable_tol", K::Number, "step halving stops below this occupation change"},
          {"substeps", K::Integer, "fixed steps per grid spacing (0: automatic)"}}},
        {"lz", "Landau-Zener probabilities and cascade",
         {{"m0", K::Number, "initial level (default l)"},
          {"sweep_window", K::Number, "two-level sweep half-width in gap widths"}}},
        {"entropy", "fast-sector entropy from the exact propagation",
         {{"p0", K::Number, "mean physical momentum"},
          {"width_d", K::Number, "position width D in units of 1/k"},
          {"m0", K::Number, "initial level (default l)"},
          {"q0", K::Number, "mean position"},
          {"grid_points", K::Integer, "momentum grid points"},
          {"t1", K::Number, "end time"},
          {"sample_dtau", K::Number, "output interval"},
          {"observable_tol", K::Number, "step halving stops below this occupation change"},
          {"rm", K::Boolean, "also evaluate the R_m quadrature"},
          {"start_offset_hbar_k", K::Number, "R_m start sigma in units of -hbar/L (default: from packet)"},
          {"nodes", K::Integer, "initial Gauss-Hermite nodes"},
          {"max_nodes", K::Integer, "largest Gauss-Hermite rule"},
          {"dressed_start", K::Boolean, "start Phi in the adiabatic state connected to m0"}}},
    };
    return blocks;
}

inline const BlockSpec& model_block() {
    using K = KeyType;
    static const BlockSpec b{"model", "Hamiltonian parameters",
                             {{"M_tilde", K::Number, "dimensionless mass"},
                              {"Omega_tilde", K::Number, "dimensionless fast frequency"},
                              {"gamma_tilde", K::Number, "dimensionless coupling"},
                              {"l", K::Number, "spin quantum number; omit for classical runs"},
                              {"physical", K::Object, "physical parameters M, g, k, Omega, gamma, L, hbar"},
                              {"derive", K::Boolean, "derive the dimensionless set from physical"}}};
    return b;
}

inline const BlockSpec& output_block() {
    using K = KeyType;
    static const BlockSpec b{"output", "where results go",
                             {{"directory", K::String, "run directory"},
                              {"formats", K::StringArray, "csv and/or json"}}};
    return b;
}

inline const BlockSpec* find_task(const std::string& name) {
    for (const auto& b : task_blocks())
        if (b.name == name) return &b;
    return nullptr;
}

inline std::string type_name(KeyType t) {
    switch (t) {
        case KeyType::Number: return "number";
        case KeyType::Integer: return "integer";
        case KeyType::Boolean: return "boolean";
        case KeyType::String: return "string";
        case KeyType::NumberOrArray: return "number or array of numbers";
        case KeyType::NumberArray: return "array of numbers";
        case KeyType::StringArray: return "array of strings";
        case KeyType::Object: return "object";
    }
    return "?";
}

inline bool type_matches(const json& v, KeyType t) {
    auto all = [&](auto pred) { return v.is_array() && std::all_of(v.begin(), v.end(), pred); };
    switch (t) {
        case KeyType::Number: return v.is_number();
        case KeyType::Integer: return v.is_number_integer() || (v.is_number() && std::floor(v.get<double>()) == v.get<double>());
        case KeyType::Boolean: return v.is_boolean();
        case KeyType::String: return v.is_string();
        case KeyType::NumberOrArray: return v.is_number() || (all([](const json& x) { return x.is_number(); }) && !v.empty());
        case KeyType::NumberArray: return all([](const json& x) { return x.is_number(); });
        case KeyType::StringArray: return all([](const json& x) { return x.is_string(); });
        case KeyType::Object: return v.is_object();
    }
    return false;
}

/// JSON Schema (draft-07) for the configuration file.
inline json schema() {
    auto key_schema = [](const KeySpec& k) {
        json s;
        switch (k.type) {
            case KeyType::Number: s["type"] = "number"; break;
            case KeyType::Integer: s["type"] = "integer"; break;
            case KeyType::Boolean: s["type"] = "boolean"; break;
            case KeyType::String: s["type"] = "string"; break;
            case KeyType::NumberOrArray:
                s["oneOf"] = json::array({json{{"type", "number"}},
                                          json{{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 1}}});
                break;
            case KeyType::NumberArray: s["type"] = "array"; s["items"] = {{"type", "number"}}; break;
            case KeyType::StringArray: s["type"] = "array"; s["items"] = {{"type", "string"}}; break;
            case KeyType::Object: s["type"] = "object"; break;
        }
        s["description"] = k.description;
        return s;
    };
    auto block_schema = [&](const BlockSpec& b, bool non_empty) {
        json s;
        s["type"] = "object";
        s["description"] = b.description;
        s["additionalProperties"] = false;
        if (non_empty) s["minProperties"] = 1;
        json props = json::object();
        for (const auto& k : b.keys) props[k.name] = key_schema(k);
        s["properties"] = props;
        return s;
    };
    json s;
    s["$schema"] = "http://json-schema.org/draft-07/schema#";
    s["title"] = "hdaemon run configuration";
    s["type"] = "object";
    s["additionalProperties"] = false;
    json props = json::object();
    props["model"] = block_schema(model_block(), false);
    props["output"] = block_schema(output_block(), false);
    json one_of = json::array();
    for (const auto& b : task_blocks()) {
        props[b.name] = block_schema(b, true);
        one_of.push_back(json{{"required", json::array({b.name})}});
    }
    s["properties"] = props;
    s["oneOf"] = one_of;
    return s;
}

struct OutputSpec {
    std::string directory = "out";
    bool csv = true;
    bool json = true;
};

struct RunConfig {
    DimensionlessParams model;
    std::optional<Spin> spin;
    std::string task;
    json block = json::object();
    OutputSpec output;
    json raw = json::object();

    template <class T>
    [[nodiscard]] T get(const std::string& key, T fallback) const {
        return block.contains(key) ? block.at(key).get<T>() : fallback;
    }
    [[nodiscard]] bool has(const std::string& key) const { return block.contains(key); }

    /// Numbers from a number-or-array key.
    [[nodiscard]] std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
        if (!block.contains(key)) return fallback;
        const auto& v = block.at(key);
        if (v.is_number()) return {v.get<double>()};
        return v.get<std::vector<double>>();
    }

    [[nodiscard]] const DimensionlessParams& params() const { return model; }

    /// Model quantized with the configured spin; throws when none is configured.
    [[nodiscard]] Spin require_spin() const {
        if (!spin) throw UnsupportedModeError("this task needs a quantum model: set model.l");
        return *spin;
    }
};

namespace detail {

inline void check_block(const json& obj, const BlockSpec& spec, std::vector<std::string>& problems) {
    if (!obj.is_object()) {
        problems.push_back(spec.name + ": must be an object");
        return;
    }
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const auto k = std::find_if(spec.keys.begin(), spec.keys.end(), [&](const KeySpec& s) { return s.name == it.key(); });
        if (k == spec.keys.end()) {
            problems.push_back(spec.name + "." + it.key() + ": unknown key");
        } else if (!type_matches(it.value(), k->type)) {
            problems.push_back(spec.name + "." + it.key() + ": expected " + type_name(k->type));
        }
    }
}

inline std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
    return s;
}

} // namespace detail

/// Validates and resolves a configuration. expected_task, when given, must match the task block
/// present; a config without any task block then runs that task with defaults.
inline RunConfig parse(const json& j, const std::optional<std::string>& expected_task = std::nullopt) {
    std::vector<std::string> problems;
    if (!j.is_object()) throw ValidationError("configuration must be a JSON object");
    std::vector<std::string> tasks;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k == "model") {
            detail::check_block(it.value(), model_block(), problems);
        } else if (k == "output") {
            detail::check_block(it.value(), output_block(), problems);
        } else if (const BlockSpec* b = find_task(k)) {
            tasks.push_back(k);
            detail::check_block(it.value(), *b, problems);
            if (it.value().is_object() && it.value().empty()) problems.push_back(k + ": empty task block");
        } else {
            problems.push_back(k + ": unknown top-level key");
        }
    }
    if (tasks.size() > 1) problems.push_back("exactly one task block allowed, found " + std::to_string(tasks.size()));
    if (tasks.empty() && !expected_task) problems.push_back("no task block");
    if (expected_task && !tasks.empty() && tasks.front() != *expected_task) {
        problems.push_back("task block '" + tasks.front() + "' does not match subcommand '" + *expected_task + "'");
    }
    if (!problems.empty()) throw ValidationError("invalid configuration: " + detail::join(problems));

    RunConfig c;
    c.raw = j;
    c.task = tasks.empty() ? *expected_task : tasks.front();
    if (!find_task(c.task)) throw ValidationError("unknown task '" + c.task + "'");
    if (!tasks.empty()) c.block = j.at(c.task);

    const json m = j.value("model", json::object());
    if (m.contains("physical")) {
        for (const char* k : {"M_tilde", "Omega_tilde", "gamma_tilde"}) {
            if (m.contains(k)) problems.push_back(std::string("model.") + k + ": not allowed together with model.physical");
        }
        if (!m.value("derive", true)) problems.push_back("model.derive: physical parameters given but derive is false");
        const json& p = m.at("physical");
        const std::vector<std::string> names{"M", "g", "k", "Omega", "gamma", "L", "hbar"};
        for (auto it = p.begin(); it != p.end(); ++it) {
            if (std::find(names.begin(), names.end(), it.key()) == names.end()) {
                problems.push_back("model.physical." + it.key() + ": unknown key");
            } else if (!it.value().is_number()) {
                problems.push_back("model.physical." + it.key() + ": expected number");
            }
        }
        for (const auto& n : names)
            if (!p.contains(n)) problems.push_back("model.physical." + n + ": missing");
        if (!problems.empty()) throw ValidationError("invalid configuration: " + detail::join(problems));
        PhysicalParams pp{p.at("M").get<double>(), p.at("g").get<double>(), p.at("k").get<double>(),
                          p.at("Omega").get<double>(), p.at("gamma").get<double>(), p.at("L").get<double>(),
                          p.at("hbar").get<double>()};
        c.model = nondimensionalize(pp);
        if (m.contains("l")) {
            const Spin s = Spin::from_l(m.at("l").get<double>());
            if (std::abs(s.L_over_hbar() - c.model.L_over_hbar) > 1e-9 * s.L_over_hbar()) {
                throw ValidationError("model.l: inconsistent with physical L/hbar");
            }
            c.spin = s;
        }
    } else {
        c.model.M_tilde = m.value("M_tilde", c.model.M_tilde);
        c.model.Omega_tilde = m.value("Omega_tilde", c.model.Omega_tilde);
        c.model.gamma_tilde = m.value("gamma_tilde", c.model.gamma_tilde);
        if (!(c.model.M_tilde > 0.0)) problems.push_back("model.M_tilde: must be positive");
        if (!(c.model.Omega_tilde >= 0.0)) problems.push_back("model.Omega_tilde: must be non-negative");
        if (!(c.model.gamma_tilde >= 0.0)) problems.push_back("model.gamma_tilde: must be non-negative");
        if (!problems.empty()) throw ValidationError("invalid configuration: " + detail::join(problems));
        if (m.contains("l")) {
            try {
                c.spin = Spin::from_l(m.at("l").get<double>());
            } catch (const DomainError& e) {
                throw ValidationError(std::string("model.l: ") + e.what());
            }
            c.model = with_spin(c.model, *c.spin);
        }
    }

    const json o = j.value("output", json::object());
    c.output.directory = o.value("directory", c.output.directory);
    if (o.contains("formats")) {
        const auto f = o.at("formats").get<std::vector<std::string>>();
        for (const auto& x : f)
            if (x != "csv" && x != "json") throw ValidationError("output.formats: unknown format '" + x + "'");
        c.output.csv = std::find(f.begin(), f.end(), "csv") != f.end();
        c.output.json = std::find(f.begin(), f.end(), "json") != f.end();
    }
    return c;
}

inline json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open configuration " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("configuration " + path.string() + " is not valid JSON: " + e.what());
    }
}

} // namespace hdaemon::config
