#pragma once

#include "llmnet/abm.hpp"
#include "llmnet/graph.hpp"
#include "llmnet/kernel.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace llmnet {

/// Expected grade per latent state on [0, 1] plus bounded additive noise,
/// uniform on [-noise_width/2, noise_width/2]. Grades are clipped to [0, 1].
struct GradingModel {
    double mu_T = 0.665;
    double mu_D = 0.550;
    double mu_H = 0.498;
    double noise_width = 0.1;

    // Requires 1 >= mu_T > mu_D > mu_H >= 0 and 0 <= noise_width <= 1.
    void validate() const;
    double mean(LatentState z) const;
    double add_threshold() const { return 0.5 * (mu_T + mu_D); }
    double remove_threshold() const { return 0.5 * (mu_D + mu_H); }
};

struct ReputationVector {
    std::vector<double> r;
    std::vector<std::size_t> grade_count;
};

/// r_i is the mean of clip(mu_{z_i} + noise) over the |N(i)| sources of i,
/// one independent noise draw per grader. Agents nobody grades get mu_D.
ReputationVector grade_population(const AgentPopulation& pop, const GradingModel& grading, std::uint64_t seed);

struct ReadjustConfig {
    // Confidence floors are min(4 ln(2N) / gap^2, floor_cap * N) when capped.
    bool cap_floor = true;
    double floor_cap = 0.25;

    void validate() const;
};

struct NeighborhoodFloors {
    double add = 0.0;
    double remove = 0.0;
};

// Raw Hoeffding floor 4 ln(2N) / gap^2.
double hoeffding_floor(std::size_t n, double gap);
NeighborhoodFloors neighborhood_floors(std::size_t n, const GradingModel& grading, const ReadjustConfig& cfg);

std::size_t readjust_iterations(std::size_t n);  // ceil(ln N)

struct AuditEntry {
    std::size_t iteration = 0;
    std::string action;  // add | remove | skip
    long long i = -1;
    long long j = -1;
    double r_j = std::numeric_limits<double>::quiet_NaN();
    double threshold = 0.0;
    std::size_t neighborhood_size = 0;
};

struct CandidateCounts {
    std::size_t add = 0;
    std::size_t remove = 0;
};

// Sizes of the add and remove candidate sets on the given network.
CandidateCounts candidate_counts(const DirectedNetwork& net, const ReputationVector& r, const GradingModel& grading,
                                 const ReadjustConfig& cfg);

/// Preferential-attachment readjustment. Runs ceil(ln N) iterations; each
/// samples one pair uniformly from
///   add:    r_j > (mu_T + mu_D)/2, A_ij = 0, i != j, |N(j)| >= add floor
///   remove: r_j < (mu_D + mu_H)/2, A_ij = 1,         |N(j)| >= remove floor
/// and applies it. Empty sets are skipped. Returns the modified copy.
DirectedNetwork algorithm1_readjust(const DirectedNetwork& net, const ReputationVector& r,
                                    const GradingModel& grading, const ReadjustConfig& cfg, std::uint64_t seed,
                                    std::vector<AuditEntry>* audit = nullptr);

// CSV: iteration,action,i,j,r_j,threshold,neighborhood_size
void write_audit_csv(const std::vector<AuditEntry>& audit, std::ostream& os);

/// Baseline: ceil(ln N) iterations of one uniformly random edge insertion
/// and one uniformly random edge deletion.
DirectedNetwork random_rewire(const DirectedNetwork& net, std::uint64_t seed);

/// delta_1 = exp(-(1 - 1/N)^2 ln N / (2 (max(1/(N p_T), 1/(N p_H)) - 1)^2)).
double delta1_bound(std::size_t n, double p_T, double p_H);

/// p_z = sum over l >= 4 ln(2N)/gap^2 of q_l d^l_z.
double compute_p_z(const DegreeDistribution& q, const std::vector<SimplexDensity>& d, LatentState z,
                   double mu_gap, std::size_t n);

struct WilsonInterval {
    double lo = 0.0;
    double hi = 1.0;
};

WilsonInterval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

struct Prop1Scenario {
    NetworkSpec network;
    InitialMix initial{0.3, 0.3};
    GradingModel grading;
    ReadjustConfig readjust{false, 0.25};

    void validate() const;
};

struct Prop1Report {
    std::size_t trials = 0;
    std::size_t b2_violations = 0;  // trials excluded because a candidate set was empty
    std::size_t used = 0;
    std::size_t successes = 0;
    double frequency = 0.0;
    double p_T = 0.0;  // averaged over trials
    double p_H = 0.0;
    double delta1 = 1.0;
    double bound = 0.0;  // 1 - delta1
    WilsonInterval wilson;
    bool misconfigured = false;  // more than half of the trials violated B2
    bool pass = false;
    NeighborhoodFloors floors;
};

/// Monte Carlo check of the one-run readjustment bound: the frequency of
/// "edges into truthful nodes strictly increase" against 1 - delta_1.
Prop1Report prop1_verify(const Prop1Scenario& scenario, std::size_t trials, std::uint64_t seed, unsigned jobs = 1);

// CSV: one key,value row per report field.
void write_prop1_csv(const Prop1Report& report, std::ostream& os);

enum class RewireArm { algorithm1, static_network, random };
std::string to_string(RewireArm arm);

struct ReconfigBenchConfig {
    AbmScenario scenario;
    GradingModel grading;
    ReadjustConfig readjust;
    std::size_t rounds = 3000;
    std::size_t period = 200;
    std::size_t trials = 50;
    double target = 0.9;
    // Equilibrium level = mean of the median curve over the last `equilibrium_window` rounds.
    std::size_t equilibrium_window = 500;

    void validate() const;
};

struct ArmResult {
    RewireArm arm = RewireArm::static_network;
    std::vector<double> median;  // per round, across trials
    std::vector<double> q10;
    std::vector<double> q90;
    // First round whose median reaches the target; nullopt-like max() if never.
    std::size_t time_to_target = std::numeric_limits<std::size_t>::max();
    double equilibrium = 0.0;
};

struct ReconfigBenchResult {
    std::vector<ArmResult> arms;  // algorithm1, static, random
    std::vector<AuditEntry> audit;  // first trial of the algorithm1 arm
};

/// Runs the three arms on identical populations and transition streams.
/// Every `period` rounds the algorithm1 arm grades and readjusts and the
/// random arm rewires at random.
ReconfigBenchResult reconfig_benchmark(const ReconfigBenchConfig& cfg, std::uint64_t seed, unsigned jobs = 1);

// CSV: round,arm,median,q10,q90
void write_bench_csv(const ReconfigBenchResult& result, std::ostream& os);
// CSV: arm,time_to_target,equilibrium  (time_to_target empty when never reached)
void write_bench_summary_csv(const ReconfigBenchResult& result, std::ostream& os);

} // namespace llmnet
