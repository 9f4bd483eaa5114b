#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hdaemon/cli.hpp"

namespace {

using namespace hdaemon;

struct Common {
    std::string config;
    std::string out;
    unsigned threads = 0;
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
};

void add_common(CLI::App* sub, Common& c, bool with_config) {
    if (with_config) sub->add_option("-c,--config", c.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", c.out, "Output directory (overrides output.directory)");
    sub->add_option("-j,--threads", c.threads, "Worker thread cap (0 = all cores)");
    sub->add_option("--seed", c.seed, "Override ensemble.seed");
    sub->add_option("--tol", c.tol, "Override the task tolerance");
}

cli::RunOptions options_from(const Common& c, const std::string& command_line) {
    cli::RunOptions o;
    if (!c.out.empty()) o.out = c.out;
    o.threads = c.threads;
    o.seed = c.seed;
    o.tol = c.tol;
    o.command_line = command_line;
    return o;
}

void report(const cli::RunResult& r) {
    std::cout << r.task << " -> " << r.directory.string() << "\n";
    for (const auto& c : r.checks) {
        std::cout << "  [" << (c.passed ? "ok" : "FAIL") << "] " << c.name << " = " << io::format_double(c.value)
                  << " (limit " << io::format_double(c.tolerance) << ")\n";
    }
    if (r.failure) std::cerr << "  " << r.failure_type << " failure: " << *r.failure << "\n";
}

int run_task(const std::string& task, const Common& c, const std::string& command_line) {
    const cli::RunOptions opt = options_from(c, command_line);
    config::json raw;
    try {
        raw = config::load_json(c.config);
        const config::RunConfig cfg = config::parse(raw, task);
        const cli::RunResult r = cli::run(cfg, opt);
        report(r);
        return r.exit_code();
    } catch (const ValidationError& e) {
        std::string dir = c.out;
        if (dir.empty()) {
            dir = "out";
            if (raw.is_object() && raw.contains("output") && raw["output"].is_object() && raw["output"].contains("directory") &&
                raw["output"]["directory"].is_string())
                dir = raw["output"]["directory"].get<std::string>();
        }
        const cli::RunResult r = cli::validation_failure(task, e.what(), raw, dir, opt);
        report(r);
        return r.exit_code();
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation toolkit for a spin coupled to a falling rotor"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(hdaemon::cli::kVersion));

    std::string command_line;
    for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

    Common common;
    std::string chosen;
    const std::vector<std::pair<std::string, std::string>> help = {
        {"classical", "Full classical trajectories"},
        {"reduced", "Reduced dynamics on the sphere"},
        {"ensemble", "Classical ensemble over the initial internal phase"},
        {"spectrum", "Instantaneous spectrum and avoided crossings"},
        {"phase-space", "Energy contours of the reduced Hamiltonian"},
        {"bohr-sommerfeld", "Semiclassical quantization levels"},
        {"separatrix-scan", "Separatrix area against sigma"},
        {"quantum", "Wave-packet propagation"},
        {"lz-cascade", "Landau-Zener probabilities and branch tree"},
        {"entropy", "Entanglement entropy against time"},
    };
    for (const auto& [cmd, task] : hdaemon::cli::subcommands()) {
        std::string text;
        for (const auto& [c, h] : help)
            if (c == cmd) text = h;
        CLI::App* sub = app.add_subcommand(cmd, text);
        add_common(sub, common, true);
        sub->callback([&chosen, t = task] { chosen = t; });
    }

    int figure = 0;
    CLI::App* fig = app.add_subcommand("reproduce-figure", "Run a built-in figure recipe");
    fig->add_option("figure", figure, "Figure number")->required()->check(CLI::Range(1, 9));
    add_common(fig, common, false);

    bool pretty = true;
    CLI::App* sch = app.add_subcommand("schema", "Print the configuration JSON Schema");
    sch->add_flag("!--compact", pretty, "Single-line output");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sch->parsed()) {
            std::cout << hdaemon::config::schema().dump(pretty ? 2 : -1) << "\n";
            return 0;
        }
        if (fig->parsed()) {
            const std::string out = common.out.empty() ? "figures/fig" + std::to_string(figure) : common.out;
            Common c = common;
            c.out.clear();
            const auto fr = hdaemon::cli::run_figure(figure, out, options_from(c, command_line));
            for (const auto& r : fr.runs) report(r);
            return fr.exit_code();
        }
        return run_task(chosen, common, command_line);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
