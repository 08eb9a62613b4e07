#pragma once

#include "llmnet/graph.hpp"
#include "llmnet/kernel.hpp"
#include "llmnet/meanfield.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace llmnet {

struct AgentPopulation {
    DirectedNetwork net;
    std::vector<LatentState> states;
    std::uint64_t round = 0;
    // Last answer text per agent; only filled by text-producing behaviours.
    std::vector<std::string> transcripts;

    void validate() const;
};

/// Which agents update in a round (the interacting set G_k).
struct ActivationPolicy {
    enum class Mode { all, uniform_subset, fixed_set };
    Mode mode = Mode::all;
    double fraction = 1.0;
    std::vector<NodeId> fixed;

    void validate() const;
    bool is_active(NodeId agent, std::uint64_t round, std::uint64_t seed) const;
};

/// Initial latent mix. Exactly round(T * n) truthful and round(H * n)
/// hallucinating agents are placed uniformly at random; the rest start in D.
struct InitialMix {
    double T = 0.3;
    double H = 0.0;

    void validate() const;
};

std::vector<LatentState> initialize_states(std::size_t n, const InitialMix& mix, std::uint64_t seed);

/// What an agent sees when it updates.
struct AgentView {
    NodeId id = 0;
    LatentState own = LatentState::D;
    int degree = 0;
    int truthful = 0;
    int hallucinating = 0;
    double u = 0.0;
    double uniform = 0.0;  // the agent's transition draw for this round
    std::span<const NodeId> sources;
    const AgentPopulation* population = nullptr;
};

struct AgentResponse {
    LatentState state = LatentState::D;
    std::string text;
};

class AgentBehavior {
public:
    virtual ~AgentBehavior() = default;
    virtual AgentResponse respond(const AgentView& view) const = 0;
    virtual bool produces_text() const { return false; }
};

/// Samples the next state from row `own` of kappa(u, l, i, j) using the
/// view's uniform draw. The table must cover the population's max degree.
class SyntheticBehavior final : public AgentBehavior {
public:
    explicit SyntheticBehavior(const KernelTable& table) : table_(table) {}
    AgentResponse respond(const AgentView& view) const override;

private:
    const KernelTable& table_;
};

LatentState sample_row(const Mat3& K, LatentState own, double uniform);

/// Synchronous round: every active agent reads the round-k states of its
/// sources and moves; inactive agents keep their state.
void step_round(AgentPopulation& pop, const AgentBehavior& behavior, double u, const ActivationPolicy& policy,
                std::uint64_t seed);
void step_round(AgentPopulation& pop, const KernelTable& table, const ActivationPolicy& policy, std::uint64_t seed);
void step_round(AgentPopulation& pop, const TransitionKernel& kernel, double u, const ActivationPolicy& policy,
                std::uint64_t seed);

struct EmpiricalDensities {
    // Indexed by in-degree 0..max degree; empty optional = no agents of that degree.
    std::vector<std::optional<SimplexDensity>> classes;
    std::vector<std::size_t> class_sizes;
    SimplexDensity aggregate{0.0, 0.0, 0.0};
};

EmpiricalDensities empirical_densities(const AgentPopulation& pop);
SimplexDensity aggregate_density(std::span<const LatentState> states);

/// Mean-field initial condition matching a population: present classes take
/// their empirical densities, absent ones the aggregate.
MeanFieldState matched_mean_field_state(const AgentPopulation& pop);

struct AbmTrajectory {
    std::vector<SimplexDensity> aggregate;  // rounds 0..K
    AgentPopulation final_population;
};

AbmTrajectory run_trajectory(const AgentPopulation& pop0, const TransitionKernel& kernel, double u,
                             const ActivationPolicy& policy, std::size_t rounds, std::uint64_t seed);

// Trajectory CSV: round,rho_T_hat,rho_H_hat,rho_D_hat
void write_abm_trajectory_csv(const std::vector<SimplexDensity>& series, std::ostream& os);

struct AbmScenario {
    NetworkSpec network;
    LogisticKernelParams kernel;
    double u = 20.0;
    InitialMix initial;
    ActivationPolicy policy;

    void validate() const;
    AgentPopulation make_population(std::uint64_t seed) const;
};

struct ConcentrationRow {
    std::size_t n = 0;
    double median = 0.0;
    double p90 = 0.0;
    std::vector<double> deviations;  // one sup-horizon |rho_T_hat - rho_T| per trial
};

/// For each N: matched ABM and mean-field runs (one round = one unit of fast
/// time) and the sup-horizon aggregate deviation per trial.
std::vector<ConcentrationRow> concentration_experiment(const std::vector<std::size_t>& n_list, std::size_t horizon,
                                                       std::size_t trials, const AbmScenario& scenario,
                                                       std::uint64_t seed, unsigned jobs = 1);

double quantile(std::vector<double> values, double p);

/// Latent map for a free-text estimate: the true answer -> T, the "-1"
/// abstention sentinel -> D, anything else -> H.
LatentState classify_answer(const std::string& estimate, const std::string& true_answer);

struct ExternalAgentConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string path = "/v1/chat";
    std::string system_prompt = "You answer questions from a private document and your neighbours' answers. "
                                "Reply with the answer only, or -1 if you do not know.";
    // Placeholders: {question} {observation} {neighbors} {round}
    std::string user_template = "Question: {question}\nYour document: {observation}\n"
                                "Previous answers of your neighbours:\n{neighbors}\nAnswer:";
    std::string question;
    std::string true_answer;
    std::vector<std::string> observations;  // private observation per agent
    int token_overhead = 16;                // hard limit = overhead + round(u)
    double timeout_seconds = 10.0;
};

/// Agent behaviour backed by a JSON-over-HTTP completion endpoint. Request
/// {"system", "user", "max_tokens"}, response {"text"}. Any transport or
/// format failure yields D for that round and is reported to the log sink.
class ExternalAgentAdapter final : public AgentBehavior {
public:
    using Classifier = std::function<LatentState(const std::string& text)>;
    using LogSink = std::function<void(const std::string&)>;

    explicit ExternalAgentAdapter(ExternalAgentConfig config, Classifier classifier = {}, LogSink log = {});

    AgentResponse respond(const AgentView& view) const override;
    bool produces_text() const override { return true; }

    std::string render_prompt(const AgentView& view) const;
    int max_tokens(double u) const;

private:
    ExternalAgentConfig config_;
    Classifier classifier_;
    LogSink log_;
};

} // namespace llmnet
