#pragma once

#include "llmnet/abm.hpp"
#include "llmnet/control.hpp"
#include "llmnet/errors.hpp"
#include "llmnet/graph.hpp"
#include "llmnet/kernel.hpp"
#include "llmnet/reconfig.hpp"
#include "llmnet/twoscale.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace llmnet {

enum class ExperimentKind {
    simulate,
    meanfield,
    reduce,
    epsilon_scan,
    reconfig_bench,
    prop1,
    sweep,
    optimize,
    concentration,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& s);
const std::vector<ExperimentKind>& all_experiment_kinds();

// Parse or validation failure in a configuration; `line` is 1-based, 0 if unknown.
class ConfigError : public ValidationError {
public:
    ConfigError(const std::string& message, int line = 0);
    int line() const { return line_; }

private:
    int line_;
};

/// One explicit kernel table: CSV (l,i,j,z1,z2,prob) valid at control u.
struct KernelTableSource {
    double u = 0.0;
    std::string path;
};

struct SimulateSection {
    std::size_t rounds = 200;
};

struct MeanfieldSection {
    double t_end = 100.0;
    double dt = 0.1;
    std::size_t sample_every = 10;
};

struct TwoScaleSection {
    double epsilon = 0.01;
    double t_end = 5.0;
    double dt_slow = 0.05;
    double dt_fast = 0.0;  // 0 = epsilon * dt_slow
    std::vector<double> q0;  // empty = in-degree distribution of the generated network
    BirthDeathParams slow;
};

struct EpsilonScanSection {
    std::vector<double> epsilons{0.1, 0.03, 0.01, 0.003};
    double t_end = 4.0;
    double dt_slow = 0.05;
    double boundary_layer = 5.0;
};

struct BenchSection {
    std::size_t rounds = 3000;
    std::size_t period = 200;
    std::size_t trials = 50;
    double target = 0.9;
    std::size_t equilibrium_window = 500;
};

struct Prop1Section {
    std::size_t trials = 1000;
    bool cap_floor = false;
    double floor_cap = 0.25;
};

struct SweepSection {
    std::vector<double> grid{5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60};
    std::size_t trials = 10;
};

struct OptimizeSection {
    double u0 = 45.0;
    SpsaSchedule schedule;
    std::size_t train_scenarios = 10;
    std::size_t eval_scenarios = 10;
};

struct ConcentrationSection {
    std::vector<std::size_t> n_list{100, 400, 1600};
    std::size_t horizon = 200;
    std::size_t trials = 30;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::simulate;
    std::uint64_t seed = 42;
    std::string output = "runs/latest";
    unsigned jobs = 1;

    NetworkSpec network;
    LogisticKernelParams kernel;
    std::vector<KernelTableSource> kernel_tables;  // non-empty = table kernel
    double u = 20.0;
    InitialMix initial;
    ActivationPolicy activation;

    GradingModel grading;
    ReadjustConfig readjust;

    CostWeights cost;
    std::vector<double> comm_slope;   // empty = c_c(l, u) = l u
    std::vector<double> comm_offset;
    std::size_t episode_rounds = 1000;

    SimulateSection simulate;
    MeanfieldSection meanfield;
    TwoScaleSection twoscale;
    EpsilonScanSection epsilon_scan;
    BenchSection bench;
    Prop1Section prop1;
    SweepSection sweep;
    OptimizeSection optimize;
    ConcentrationSection concentration;

    /// Every sub-configuration against its module invariants, plus the
    /// preconditions of the selected experiment kind.
    void validate() const;
};

/// YAML text -> config. Unknown keys, type errors and invariant violations
/// raise ConfigError with the offending line where known. `origin` prefixes
/// messages (usually the file name).
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::string& path);

/// Applies LLMNET_<SECTION>__<KEY>=value overrides (values parsed as YAML
/// scalars or flow sequences) on top of the YAML text, then parses it.
/// Top-level keys use a single name: LLMNET_SEED, LLMNET_EXPERIMENT.
ExperimentConfig parse_config_with_env(const std::string& text, const std::map<std::string, std::string>& env,
                                       const std::string& origin = "<config>");

// LLMNET_* variables of the current process.
std::map<std::string, std::string> llmnet_environment();

/// Effective configuration as YAML; parse_config(to_yaml(c)) reproduces c.
std::string to_yaml(const ExperimentConfig& config);

/// Every key with its default value and a one-line description.
std::string config_reference();

} // namespace llmnet
