#pragma once

#include "llmnet/abm.hpp"
#include "llmnet/graph.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace llmnet {

struct CostWeights {
    double xi_c = 1e-6;
    double xi_a = 1.0;
    // Minimise xi_c comm - xi_a (1 - rho_T) instead of the penalising "+" form.
    bool subtract_accuracy = false;

    void validate() const;
};

/// Per-round token cost of an agent with l sources under control u.
class CommCostFn {
public:
    virtual ~CommCostFn() = default;
    virtual double eval(int l, double u) const = 0;
};

/// c_c(l, u) = l * u: l messages of u tokens each.
class LinearCommCost final : public CommCostFn {
public:
    double eval(int l, double u) const override { return static_cast<double>(l) * u; }
};

/// c_c(l, u) = slope[l] * u + offset[l]; degrees past the table use its last entry.
class TableCommCost final : public CommCostFn {
public:
    TableCommCost(std::vector<double> slope, std::vector<double> offset = {});
    double eval(int l, double u) const override;

private:
    std::vector<double> slope_;
    std::vector<double> offset_;
};

// sum_k sum_l q_k[l] c_c(l, u)
double communication_cost(const std::vector<DegreeDistribution>& q_traj, double u, const CommCostFn& comm);

/// xi_c sum_k E_{q_k}[c_c(l, u)] + xi_a (1 - rho_T_final), or with the
/// accuracy term subtracted when subtract_accuracy is set.
double evaluate_cost(const std::vector<DegreeDistribution>& q_traj, double rho_T_final, double u,
                     const CostWeights& weights, const CommCostFn& comm);
double combine_cost(double token_cost, double rho_T_final, const CostWeights& weights);

struct SpsaSchedule {
    double a0 = 300.0;
    double c0 = 2.0;
    double alpha = 0.602;
    double gamma = 0.101;
    std::size_t steps = 50;
    double u_min = 5.0;
    double u_max = 60.0;

    void validate() const;
    double a(std::size_t k) const;
    double c(std::size_t k) const;
    double clip(double u) const;
};

/// Stochastic cost at control u; `seed` fixes the simulation randomness.
using CostOracle = std::function<double(double u, std::uint64_t seed)>;

struct SpsaStep {
    double u = 0.0;       // u_k
    double u_next = 0.0;  // u_{k+1}
    int delta = 1;
    double y_plus = 0.0;
    double y_minus = 0.0;
    double g_hat = 0.0;
    double a_k = 0.0;
    double c_k = 0.0;
    bool failed = false;
    std::string error;
};

/// One SPSA update. Delta is Rademacher from (seed, k) unless forced; both
/// evaluations share the simulation seed derived from (seed, k). An oracle
/// exception leaves u unchanged and is logged.
SpsaStep spsa_step(double u_k, std::size_t k, const SpsaSchedule& schedule, const CostOracle& oracle,
                   std::uint64_t seed, int forced_delta = 0,
                   const std::function<void(const std::string&)>& log = {});

/// Episode cost of one scenario: (u, scenario seed, simulation seed) -> cost.
using EpisodeFn = std::function<double(double u, std::uint64_t scenario_seed, std::uint64_t sim_seed)>;

struct TraceRow {
    std::size_t step = 0;
    double u = 0.0;
    long token_limit = 0;
    double train_cost = 0.0;
    double eval_cost = 0.0;
    double g_hat = 0.0;
    double a_k = 0.0;
    double c_k = 0.0;
};

struct OptimizationTrace {
    std::vector<TraceRow> rows;  // steps 0..schedule.steps
};

/// SPSA over u. Oracle calls average the episode cost over the train
/// scenarios with fresh simulation seeds per step. Each trace row reports
/// the train and eval costs of the deployed token limit round(u_k), each
/// scenario replayed with its own fixed simulation seed.
OptimizationTrace optimize(double u0, const SpsaSchedule& schedule, const EpisodeFn& episode,
                           const std::vector<std::uint64_t>& train_scenarios,
                           const std::vector<std::uint64_t>& eval_scenarios, std::uint64_t seed, unsigned jobs = 1,
                           const std::function<void(const std::string&)>& log = {});

// CSV: step,u,train_cost,eval_cost,g_hat,a_k,c_k
void write_trace_csv(const OptimizationTrace& trace, std::ostream& os);

/// Simulated episode on a static network built from the scenario seed.
struct ControlScenario {
    AbmScenario abm;
    std::size_t rounds = 1000;
    CostWeights weights;

    void validate() const;
};

struct EpisodeOutcome {
    double rho_T = 0.0;
    double rho_H = 0.0;
    double token_cost = 0.0;  // sum over rounds of E_q[c_c(l, u)]
    double cost = 0.0;
};

EpisodeOutcome run_episode(const ControlScenario& scenario, const CommCostFn& comm, double u,
                           std::uint64_t scenario_seed, std::uint64_t sim_seed);

// EpisodeFn bound to a scenario; the cost function object must outlive the result.
EpisodeFn make_episode(const ControlScenario& scenario, std::shared_ptr<const CommCostFn> comm);

struct SweepRow {
    double u = 0.0;
    double rho_T_mean = 0.0;
    double rho_H_mean = 0.0;
    double token_cost_mean = 0.0;
    std::size_t n_trials = 0;
    std::vector<double> rho_T;  // per trial
    std::vector<double> rho_H;
    std::vector<double> token_cost;
};

/// Final densities and token cost per control value, averaged over trials
/// (trial t uses the same network and initial states at every u).
std::vector<SweepRow> control_sweep(const std::vector<double>& u_grid, const ControlScenario& scenario,
                                    const CommCostFn& comm, std::size_t trials, std::uint64_t seed,
                                    unsigned jobs = 1);

// CSV: u,rho_T_mean,rho_H_mean,token_cost_mean,n_trials
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os);

} // namespace llmnet
