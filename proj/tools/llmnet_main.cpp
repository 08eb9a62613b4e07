#include "llmnet/config.hpp"
#include "llmnet/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

struct RunFlags {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    unsigned jobs = 0;
    bool quiet = false;
    bool print_config = false;
    bool no_plotdata = false;
};

int run(llmnet::ExperimentKind kind, const RunFlags& flags, CLI::App& sub) {
    using namespace llmnet;
    auto log = [&](const std::string& msg) {
        if (!flags.quiet) std::cerr << msg << '\n';
    };
    ExperimentConfig cfg;
    try {
        std::string text;
        std::string origin = "<defaults>";
        if (!flags.config.empty()) {
            std::ifstream is(flags.config);
            if (!is) throw ConfigError("cannot open config file '" + flags.config + "'");
            std::ostringstream ss;
            ss << is.rdbuf();
            text = ss.str();
            origin = flags.config;
        }
        auto env = llmnet_environment();
        env.erase("LLMNET_EXPERIMENT");
        cfg = parse_config_with_env(text, env, origin);
        if (!flags.config.empty() && cfg.kind != kind && text.find("experiment:") != std::string::npos)
            log("note: config names experiment '" + to_string(cfg.kind) + "'; running '" + to_string(kind) + "'");
        cfg.kind = kind;
        if (sub.count("--seed")) cfg.seed = flags.seed;
        if (sub.count("--out")) cfg.output = flags.out;
        if (sub.count("--jobs")) cfg.jobs = flags.jobs;
        cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config_error;
    }
    if (flags.print_config) {
        std::cout << to_yaml(cfg);
        return exit_ok;
    }
    const RunResult r = run_experiment(cfg, cfg.output, log);
    if (r.exit_code != exit_ok) {
        std::cerr << (r.exit_code == exit_config_error ? "config error: " : "error: ") << r.error << '\n';
        return r.exit_code;
    }
    if (!flags.no_plotdata) {
        try {
            for (const auto& f : emit_plotdata(cfg.output)) log("wrote " + cfg.output + "/" + f);
        } catch (const std::exception& e) {
            std::cerr << "error: plot data: " << e.what() << '\n';
            return exit_runtime_error;
        }
    }
    log(to_string(kind) + ": " + std::to_string(r.artifacts.size()) + " artifacts in " + cfg.output + " (" +
        std::to_string(r.wall_seconds) + " s)");
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    using namespace llmnet;
    CLI::App app{"Information diffusion in networks of language-model agents"};
    app.require_subcommand(1);

    RunFlags flags;
    std::vector<std::pair<ExperimentKind, CLI::App*>> kinds;
    for (ExperimentKind k : all_experiment_kinds()) {
        CLI::App* sub = app.add_subcommand(to_string(k), "Run the " + to_string(k) + " experiment");
        sub->add_option("--config", flags.config, "YAML configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", flags.seed, "Master seed (overrides the config)");
        sub->add_option("--out", flags.out, "Output directory (overrides the config)");
        sub->add_option("--jobs", flags.jobs, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
        sub->add_flag("--quiet", flags.quiet, "Only report errors");
        sub->add_flag("--print-config", flags.print_config, "Print the effective configuration and exit");
        sub->add_flag("--no-plotdata", flags.no_plotdata, "Skip the plot_*.csv tables");
        kinds.emplace_back(k, sub);
    }

    std::string plot_dir;
    CLI::App* plot = app.add_subcommand("plotdata", "Write tidy plot tables for a finished run");
    plot->add_option("run_dir", plot_dir, "Run directory containing manifest.json")->required();

    app.add_subcommand("reference", "Print every configuration key with its default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config_error;
    }

    if (app.got_subcommand("reference")) {
        std::cout << config_reference();
        return exit_ok;
    }
    if (app.got_subcommand(plot)) {
        try {
            for (const auto& f : emit_plotdata(plot_dir)) std::cout << plot_dir << "/" << f << '\n';
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return exit_runtime_error;
        }
        return exit_ok;
    }
    for (auto& [k, sub] : kinds)
        if (sub->parsed()) return run(k, flags, *sub);
    return exit_config_error;
}
