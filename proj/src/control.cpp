#include "llmnet/control.hpp"

#include "llmnet/errors.hpp"
#include "llmnet/parallel.hpp"
#include "llmnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace llmnet {

namespace {

constexpr std::size_t T = idx(LatentState::T);
constexpr std::size_t H = idx(LatentState::H);

} // namespace

void CostWeights::validate() const {
    if (!(xi_c > 0.0) || !(xi_a > 0.0)) throw ValidationError("cost weights xi_c and xi_a must be > 0");
}

TableCommCost::TableCommCost(std::vector<double> slope, std::vector<double> offset)
    : slope_(std::move(slope)), offset_(std::move(offset)) {
    if (slope_.empty()) throw ValidationError("communication cost table is empty");
    if (!offset_.empty() && offset_.size() != slope_.size())
        throw ValidationError("communication cost offsets must match the slope table length");
    for (double s : slope_)
        if (!(s >= 0.0)) throw ValidationError("communication cost slopes must be >= 0");
    for (double o : offset_)
        if (!(o >= 0.0)) throw ValidationError("communication cost offsets must be >= 0");
}

double TableCommCost::eval(int l, double u) const {
    if (l < 0) throw ValidationError("communication cost: negative degree");
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(l), slope_.size() - 1);
    return slope_[k] * u + (offset_.empty() ? 0.0 : offset_[k]);
}

double communication_cost(const std::vector<DegreeDistribution>& q_traj, double u, const CommCostFn& comm) {
    double total = 0.0;
    for (const auto& q : q_traj)
        for (std::size_t l = 0; l < q.probs.size(); ++l)
            if (q.probs[l] != 0.0) total += q.probs[l] * comm.eval(static_cast<int>(l), u);
    return total;
}

double combine_cost(double token_cost, double rho_T_final, const CostWeights& w) {
    const double accuracy = w.xi_a * (1.0 - rho_T_final);
    return w.xi_c * token_cost + (w.subtract_accuracy ? -accuracy : accuracy);
}

double evaluate_cost(const std::vector<DegreeDistribution>& q_traj, double rho_T_final, double u,
                     const CostWeights& weights, const CommCostFn& comm) {
    if (!(rho_T_final >= 0.0 && rho_T_final <= 1.0)) throw ValidationError("evaluate_cost: rho_T must lie in [0, 1]");
    if (!(weights.xi_c >= 0.0) || !(weights.xi_a >= 0.0)) throw ValidationError("evaluate_cost: negative weight");
    return combine_cost(communication_cost(q_traj, u, comm), rho_T_final, weights);
}

void SpsaSchedule::validate() const {
    if (!(a0 > 0.0) || !(c0 > 0.0)) throw ValidationError("SPSA gains a0 and c0 must be > 0");
    if (!(alpha > 0.5 && alpha <= 1.0)) throw ValidationError("SPSA alpha must lie in (0.5, 1]");
    if (!(gamma > 0.0 && gamma < alpha / 2.0 + 0.5)) throw ValidationError("SPSA gamma must lie in (0, alpha/2 + 1/2)");
    if (!(u_min < u_max)) throw ValidationError("SPSA bounds must satisfy u_min < u_max");
}

double SpsaSchedule::a(std::size_t k) const { return a0 / std::pow(static_cast<double>(k) + 1.0, alpha); }
double SpsaSchedule::c(std::size_t k) const { return c0 / std::pow(static_cast<double>(k) + 1.0, gamma); }
double SpsaSchedule::clip(double u) const { return std::clamp(u, u_min, u_max); }

SpsaStep spsa_step(double u_k, std::size_t k, const SpsaSchedule& schedule, const CostOracle& oracle,
                   std::uint64_t seed, int forced_delta, const std::function<void(const std::string&)>& log) {
    schedule.validate();
    if (!(u_k >= schedule.u_min && u_k <= schedule.u_max))
        throw ValidationError("spsa_step: u_k outside the control bounds");
    SpsaStep s;
    s.u = u_k;
    s.u_next = u_k;
    s.a_k = schedule.a(k);
    s.c_k = schedule.c(k);
    if (forced_delta != 0)
        s.delta = forced_delta > 0 ? 1 : -1;
    else
        s.delta = counter_uniform(seed, {tag(StreamTag::spsa), k}) < 0.5 ? -1 : 1;
    const std::uint64_t sim_seed = derive_seed(seed, {tag(StreamTag::episode), k});
    try {
        s.y_plus = oracle(u_k + s.c_k * s.delta, sim_seed);
        s.y_minus = oracle(u_k - s.c_k * s.delta, sim_seed);
    } catch (const std::exception& e) {
        s.failed = true;
        s.error = e.what();
        if (log) log("spsa step " + std::to_string(k) + ": oracle failed: " + s.error);
        return s;
    }
    s.g_hat = (s.y_plus - s.y_minus) / (2.0 * s.c_k * s.delta);
    s.u_next = schedule.clip(u_k - s.a_k * s.g_hat);
    return s;
}

OptimizationTrace optimize(double u0, const SpsaSchedule& schedule, const EpisodeFn& episode,
                           const std::vector<std::uint64_t>& train, const std::vector<std::uint64_t>& eval,
                           std::uint64_t seed, unsigned jobs, const std::function<void(const std::string&)>& log) {
    schedule.validate();
    if (train.empty() || eval.empty()) throw ValidationError("optimize: train and eval scenario sets must be non-empty");
    if (!(u0 >= schedule.u_min && u0 <= schedule.u_max)) throw ValidationError("optimize: u0 outside the control bounds");

    auto average = [&](const std::vector<std::uint64_t>& scenarios, double u, auto sim_seed_of) {
        std::vector<double> costs(scenarios.size());
        parallel_for(scenarios.size(), jobs, [&](std::size_t s) { costs[s] = episode(u, scenarios[s], sim_seed_of(s)); });
        double m = 0.0;
        for (double c : costs) m += c;
        return m / static_cast<double>(costs.size());
    };
    // Fixed replay seeds for the reported costs.
    auto fixed = [&](const std::vector<std::uint64_t>& scenarios) {
        return [&scenarios, seed](std::size_t s) { return derive_seed(seed, {tag(StreamTag::scenario), scenarios[s]}); };
    };
    auto report = [&](TraceRow& row) {
        const double deployed = std::round(row.u);
        row.token_limit = static_cast<long>(deployed);
        row.train_cost = average(train, deployed, fixed(train));
        row.eval_cost = average(eval, deployed, fixed(eval));
    };

    OptimizationTrace trace;
    double u = u0;
    for (std::size_t k = 0; k <= schedule.steps; ++k) {
        TraceRow row;
        row.step = k;
        row.u = u;
        report(row);
        if (k < schedule.steps) {
            const CostOracle oracle = [&](double uu, std::uint64_t sim) {
                return average(train, uu, [&](std::size_t s) { return derive_seed(sim, {s}); });
            };
            const SpsaStep st = spsa_step(u, k, schedule, oracle, seed, 0, log);
            row.g_hat = st.g_hat;
            row.a_k = st.a_k;
            row.c_k = st.c_k;
            u = st.u_next;
        }
        trace.rows.push_back(row);
    }
    return trace;
}

void write_trace_csv(const OptimizationTrace& trace, std::ostream& os) {
    os << "step,u,train_cost,eval_cost,g_hat,a_k,c_k\n" << std::setprecision(12);
    for (const auto& r : trace.rows)
        os << r.step << ',' << r.u << ',' << r.train_cost << ',' << r.eval_cost << ',' << r.g_hat << ',' << r.a_k
           << ',' << r.c_k << '\n';
}

void ControlScenario::validate() const {
    abm.validate();
    weights.validate();
    if (rounds < 1) throw ValidationError("control scenario: rounds must be >= 1");
}

EpisodeOutcome run_episode(const ControlScenario& sc, const CommCostFn& comm, double u, std::uint64_t scenario_seed,
                           std::uint64_t sim_seed) {
    const AgentPopulation pop0 = sc.abm.make_population(scenario_seed);
    const LogisticKernel kernel(sc.abm.kernel);
    const KernelTable table(kernel, u, static_cast<int>(pop0.net.max_in_degree()));
    AgentPopulation pop = pop0;
    for (std::size_t k = 0; k < sc.rounds; ++k) step_round(pop, table, sc.abm.policy, sim_seed);
    // The network is static, so every round has the same degree distribution.
    const DegreeDistribution q = in_degree_distribution(pop.net);
    double per_round = 0.0;
    for (std::size_t l = 0; l < q.probs.size(); ++l) per_round += q.probs[l] * comm.eval(static_cast<int>(l), u);
    EpisodeOutcome out;
    const SimplexDensity d = aggregate_density(pop.states);
    out.rho_T = d[T];
    out.rho_H = d[H];
    out.token_cost = per_round * static_cast<double>(sc.rounds);
    out.cost = combine_cost(out.token_cost, out.rho_T, sc.weights);
    return out;
}

EpisodeFn make_episode(const ControlScenario& scenario, std::shared_ptr<const CommCostFn> comm) {
    scenario.validate();
    if (!comm) comm = std::make_shared<LinearCommCost>();
    return [scenario, comm](double u, std::uint64_t scenario_seed, std::uint64_t sim_seed) {
        return run_episode(scenario, *comm, u, scenario_seed, sim_seed).cost;
    };
}

std::vector<SweepRow> control_sweep(const std::vector<double>& u_grid, const ControlScenario& scenario,
                                    const CommCostFn& comm, std::size_t trials, std::uint64_t seed, unsigned jobs) {
    scenario.validate();
    if (u_grid.empty()) throw ValidationError("control_sweep: empty control grid");
    if (trials < 5) throw ValidationError("control_sweep: at least 5 trials are required");
    std::vector<EpisodeOutcome> out(u_grid.size() * trials);
    parallel_for(out.size(), jobs, [&](std::size_t task) {
        const std::size_t g = task / trials, t = task % trials;
        const std::uint64_t ts = derive_seed(seed, {tag(StreamTag::trial), t});
        out[task] = run_episode(scenario, comm, u_grid[g], ts, derive_seed(ts, {tag(StreamTag::episode)}));
    });
    std::vector<SweepRow> rows;
    for (std::size_t g = 0; g < u_grid.size(); ++g) {
        SweepRow r;
        r.u = u_grid[g];
        r.n_trials = trials;
        for (std::size_t t = 0; t < trials; ++t) {
            const auto& o = out[g * trials + t];
            r.rho_T.push_back(o.rho_T);
            r.rho_H.push_back(o.rho_H);
            r.token_cost.push_back(o.token_cost);
            r.rho_T_mean += o.rho_T / static_cast<double>(trials);
            r.rho_H_mean += o.rho_H / static_cast<double>(trials);
            r.token_cost_mean += o.token_cost / static_cast<double>(trials);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os) {
    os << "u,rho_T_mean,rho_H_mean,token_cost_mean,n_trials\n" << std::setprecision(12);
    for (const auto& r : rows)
        os << r.u << ',' << r.rho_T_mean << ',' << r.rho_H_mean << ',' << r.token_cost_mean << ',' << r.n_trials << '\n';
}

} // namespace llmnet
