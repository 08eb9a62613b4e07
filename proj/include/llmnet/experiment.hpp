#pragma once

#include "llmnet/config.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace llmnet {

enum ExitCode : int { exit_ok = 0, exit_config_error = 2, exit_runtime_error = 3 };

// Failure inside a running experiment, tagged with the kind and stage.
class ExperimentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Artifact {
    std::string file;  // relative to the run directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunResult {
    int exit_code = exit_ok;
    std::string error;
    std::vector<Artifact> artifacts;
    double wall_seconds = 0.0;
};

using LogFn = std::function<void(const std::string&)>;

/// Logistic kernel from the parameters, or a table kernel when tables are configured.
std::unique_ptr<TransitionKernel> make_kernel(const ExperimentConfig& config);

/// Validates the config, runs the selected experiment into out_dir and
/// writes the CSV artifacts, config.yaml (the effective config) and
/// manifest.json (config echo, seed, wall time, SHA-256 per artifact).
/// Config problems return exit_config_error before anything runs; failures
/// during the run return exit_runtime_error. Never throws.
RunResult run_experiment(const ExperimentConfig& config, const std::string& out_dir, const LogFn& log = {});

/// Tidy plot tables (series,x,y,y_lo,y_hi) for the run in run_dir, one
/// plot_*.csv per figure. Bands are trial quantiles (10%, 90%) where the run
/// has trials and empty otherwise. Returns the files written; throws
/// ExperimentError when the manifest is missing or unreadable.
std::vector<std::string> emit_plotdata(const std::string& run_dir);

std::string sha256_file(const std::string& path);

} // namespace llmnet
