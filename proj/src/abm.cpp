#include "llmnet/abm.hpp"

#include "llmnet/errors.hpp"
#include "llmnet/parallel.hpp"
#include "llmnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>

namespace llmnet {

void AgentPopulation::validate() const {
    if (states.size() != net.size())
        throw ValidationError("population has " + std::to_string(states.size()) + " states for " +
                              std::to_string(net.size()) + " agents");
    if (!transcripts.empty() && transcripts.size() != states.size())
        throw ValidationError("population transcripts length mismatch");
}

void ActivationPolicy::validate() const {
    if (mode == Mode::uniform_subset && !(fraction > 0.0 && fraction <= 1.0))
        throw ValidationError("activation fraction must lie in (0, 1]");
}

bool ActivationPolicy::is_active(NodeId agent, std::uint64_t round, std::uint64_t seed) const {
    switch (mode) {
    case Mode::all: return true;
    case Mode::uniform_subset:
        return fraction >= 1.0 || counter_uniform(seed, {tag(StreamTag::activation), round, agent}) < fraction;
    case Mode::fixed_set: return std::find(fixed.begin(), fixed.end(), agent) != fixed.end();
    }
    return true;
}

void InitialMix::validate() const {
    if (!(T >= 0.0 && H >= 0.0 && T + H <= 1.0 + 1e-12))
        throw ValidationError("initial mix needs T, H >= 0 and T + H <= 1");
}

std::vector<LatentState> initialize_states(std::size_t n, const InitialMix& mix, std::uint64_t seed) {
    mix.validate();
    const auto nT = static_cast<std::size_t>(std::llround(mix.T * static_cast<double>(n)));
    const auto nH = std::min(n - std::min(n, nT), static_cast<std::size_t>(std::llround(mix.H * static_cast<double>(n))));
    std::vector<LatentState> states(n, LatentState::D);
    std::fill_n(states.begin(), std::min(n, nT), LatentState::T);
    std::fill_n(states.begin() + static_cast<std::ptrdiff_t>(std::min(n, nT)), nH, LatentState::H);
    std::mt19937_64 rng(derive_seed(seed, {tag(StreamTag::initial_states)}));
    std::shuffle(states.begin(), states.end(), rng);
    return states;
}

LatentState sample_row(const Mat3& K, LatentState own, double uniform) {
    const auto& row = K[idx(own)];
    if (uniform < row[0]) return LatentState::T;
    if (uniform < row[0] + row[1]) return LatentState::H;
    return LatentState::D;
}

AgentResponse SyntheticBehavior::respond(const AgentView& v) const {
    return {sample_row(table_.at(v.degree, v.truthful, v.hallucinating), v.own, v.uniform), {}};
}

void step_round(AgentPopulation& pop, const AgentBehavior& behavior, double u, const ActivationPolicy& policy,
                std::uint64_t seed) {
    pop.validate();
    const bool text = behavior.produces_text();
    if (text && pop.transcripts.empty()) pop.transcripts.assign(pop.states.size(), "");
    // pop stays at round k while agents respond; the new round is committed at the end.
    std::vector<LatentState> next = pop.states;
    std::vector<std::string> next_text = text ? pop.transcripts : std::vector<std::string>{};
    for (NodeId i = 0; i < pop.states.size(); ++i) {
        if (!policy.is_active(i, pop.round, seed)) continue;
        AgentView v;
        v.id = i;
        v.own = pop.states[i];
        v.sources = pop.net.sources(i);
        v.degree = static_cast<int>(v.sources.size());
        for (NodeId j : v.sources) {
            if (pop.states[j] == LatentState::T) ++v.truthful;
            else if (pop.states[j] == LatentState::H) ++v.hallucinating;
        }
        v.u = u;
        v.uniform = counter_uniform(seed, {tag(StreamTag::transition), pop.round, i});
        v.population = &pop;
        AgentResponse r = behavior.respond(v);
        next[i] = r.state;
        if (text) next_text[i] = std::move(r.text);
    }
    pop.states = std::move(next);
    if (text) pop.transcripts = std::move(next_text);
    ++pop.round;
}

void step_round(AgentPopulation& pop, const KernelTable& table, const ActivationPolicy& policy, std::uint64_t seed) {
    if (static_cast<int>(pop.net.max_in_degree()) > table.l_max())
        throw ValidationError("step_round: kernel table does not cover the network's max in-degree");
    step_round(pop, SyntheticBehavior(table), table.control(), policy, seed);
}

void step_round(AgentPopulation& pop, const TransitionKernel& kernel, double u, const ActivationPolicy& policy,
                std::uint64_t seed) {
    step_round(pop, KernelTable(kernel, u, static_cast<int>(pop.net.max_in_degree())), policy, seed);
}

SimplexDensity aggregate_density(std::span<const LatentState> states) {
    SimplexDensity agg{0.0, 0.0, 0.0};
    if (states.empty()) return agg;
    std::size_t c[3] = {0, 0, 0};
    for (LatentState z : states) ++c[idx(z)];
    const double n = static_cast<double>(states.size());
    for (std::size_t z = 0; z < kStates; ++z) agg[z] = static_cast<double>(c[z]) / n;
    return agg;
}

EmpiricalDensities empirical_densities(const AgentPopulation& pop) {
    pop.validate();
    EmpiricalDensities out;
    const std::size_t lmax = pop.net.size() ? pop.net.max_in_degree() : 0;
    std::vector<std::array<std::size_t, 3>> counts(lmax + 1, {0, 0, 0});
    out.class_sizes.assign(lmax + 1, 0);
    for (NodeId i = 0; i < pop.states.size(); ++i) {
        const auto l = pop.net.in_degree(i);
        ++counts[l][idx(pop.states[i])];
        ++out.class_sizes[l];
    }
    out.classes.resize(lmax + 1);
    for (std::size_t l = 0; l <= lmax; ++l) {
        if (out.class_sizes[l] == 0) continue;
        const double n = static_cast<double>(out.class_sizes[l]);
        out.classes[l] = SimplexDensity{counts[l][0] / n, counts[l][1] / n, counts[l][2] / n};
    }
    out.aggregate = aggregate_density(pop.states);
    return out;
}

MeanFieldState matched_mean_field_state(const AgentPopulation& pop) {
    const EmpiricalDensities emp = empirical_densities(pop);
    MeanFieldState state;
    state.classes.reserve(emp.classes.size());
    for (const auto& c : emp.classes) state.classes.push_back(c ? *c : emp.aggregate);
    return state;
}

AbmTrajectory run_trajectory(const AgentPopulation& pop0, const TransitionKernel& kernel, double u,
                             const ActivationPolicy& policy, std::size_t rounds, std::uint64_t seed) {
    policy.validate();
    AbmTrajectory traj;
    traj.final_population = pop0;
    auto& pop = traj.final_population;
    pop.validate();
    const KernelTable table(kernel, u, static_cast<int>(pop.net.max_in_degree()));
    traj.aggregate.reserve(rounds + 1);
    traj.aggregate.push_back(aggregate_density(pop.states));
    for (std::size_t k = 0; k < rounds; ++k) {
        step_round(pop, table, policy, seed);
        traj.aggregate.push_back(aggregate_density(pop.states));
    }
    return traj;
}

void write_abm_trajectory_csv(const std::vector<SimplexDensity>& series, std::ostream& os) {
    os << "round,rho_T_hat,rho_H_hat,rho_D_hat\n" << std::setprecision(12);
    for (std::size_t k = 0; k < series.size(); ++k)
        os << k << ',' << series[k][0] << ',' << series[k][1] << ',' << series[k][2] << '\n';
}

void AbmScenario::validate() const {
    network.validate();
    kernel.validate();
    initial.validate();
    policy.validate();
}

AgentPopulation AbmScenario::make_population(std::uint64_t seed) const {
    AgentPopulation pop;
    pop.net = network.build(derive_seed(seed, {tag(StreamTag::network)}));
    pop.states = initialize_states(network.n, initial, seed);
    return pop;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw ValidationError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return (1.0 - w) * values[lo] + w * values[hi];
}

std::vector<ConcentrationRow> concentration_experiment(const std::vector<std::size_t>& n_list, std::size_t horizon,
                                                       std::size_t trials, const AbmScenario& scenario,
                                                       std::uint64_t seed, unsigned jobs) {
    if (trials < 30) throw ValidationError("concentration_experiment: needs at least 30 trials");
    if (n_list.empty() || !std::is_sorted(n_list.begin(), n_list.end()) ||
        std::adjacent_find(n_list.begin(), n_list.end()) != n_list.end())
        throw ValidationError("concentration_experiment: N list must be strictly increasing");
    scenario.validate();
    const LogisticKernel kernel(scenario.kernel);
    std::vector<ConcentrationRow> rows;
    for (std::size_t n : n_list) {
        AbmScenario sc = scenario;
        sc.network.n = n;
        ConcentrationRow row;
        row.n = n;
        row.deviations.assign(trials, 0.0);
        parallel_for(trials, jobs, [&](std::size_t t) {
            const std::uint64_t trial_seed = derive_seed(seed, {tag(StreamTag::trial), n, t});
            const AgentPopulation pop = sc.make_population(trial_seed);
            const auto abm = run_trajectory(pop, kernel, sc.u, sc.policy, horizon, trial_seed);
            const DegreeDistribution q = in_degree_distribution(pop.net);
            constexpr std::size_t substeps = 4;
            const auto mf = integrate_fast(matched_mean_field_state(pop), q, sc.u, kernel,
                                           static_cast<double>(horizon), 1.0 / substeps, substeps);
            double dev = 0.0;
            for (std::size_t k = 0; k <= horizon; ++k)
                dev = std::max(dev, std::abs(abm.aggregate[k][0] - mf.states[k].aggregate(q)[0]));
            row.deviations[t] = dev;
        });
        row.median = quantile(row.deviations, 0.5);
        row.p90 = quantile(row.deviations, 0.9);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace llmnet
