#include "llmnet/reconfig.hpp"

#include "llmnet/errors.hpp"
#include "llmnet/parallel.hpp"
#include "llmnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <ostream>
#include <stdexcept>

namespace llmnet {

namespace {

constexpr std::size_t T = idx(LatentState::T);

std::size_t pick(std::uint64_t seed, std::initializer_list<std::uint64_t> counters, std::size_t count) {
    const auto k = static_cast<std::size_t>(counter_uniform(seed, counters) * static_cast<double>(count));
    return std::min(k, count - 1);
}

bool meets_floor(std::size_t size, double floor) { return static_cast<double>(size) >= floor; }

std::vector<NodeId> add_targets(const DirectedNetwork& net, const ReputationVector& r, double thr, double floor) {
    std::vector<NodeId> out;
    for (NodeId j = 0; j < net.size(); ++j)
        if (r.r[j] > thr && meets_floor(net.in_degree(j), floor) && net.influence_count(j) + 1 < net.size())
            out.push_back(j);
    return out;
}

std::vector<NodeId> remove_targets(const DirectedNetwork& net, const ReputationVector& r, double thr, double floor) {
    std::vector<NodeId> out;
    for (NodeId j = 0; j < net.size(); ++j)
        if (r.r[j] < thr && meets_floor(net.in_degree(j), floor) && net.influence_count(j) > 0) out.push_back(j);
    return out;
}

std::size_t edges_into(const DirectedNetwork& net, const std::vector<LatentState>& states, LatentState z) {
    std::size_t total = 0;
    for (NodeId j = 0; j < net.size(); ++j)
        if (states[j] == z) total += net.influence_count(j);
    return total;
}

void check_reputation(const DirectedNetwork& net, const ReputationVector& r) {
    if (r.r.size() != net.size()) throw ValidationError("reputation vector length does not match the network");
}

} // namespace

void GradingModel::validate() const {
    if (!(mu_T <= 1.0 && mu_T > mu_D && mu_D > mu_H && mu_H >= 0.0))
        throw ValidationError("grading model violates the ordering 1 >= mu_T > mu_D > mu_H >= 0");
    if (!(noise_width >= 0.0 && noise_width <= 1.0))
        throw ValidationError("grading noise width must lie in [0, 1]");
}

double GradingModel::mean(LatentState z) const {
    switch (z) {
    case LatentState::T: return mu_T;
    case LatentState::H: return mu_H;
    case LatentState::D: return mu_D;
    }
    return mu_D;
}

ReputationVector grade_population(const AgentPopulation& pop, const GradingModel& grading, std::uint64_t seed) {
    grading.validate();
    pop.validate();
    const std::size_t n = pop.net.size();
    ReputationVector rep;
    rep.r.assign(n, grading.mu_D);
    rep.grade_count.assign(n, 0);
    for (NodeId i = 0; i < n; ++i) {
        const auto graders = pop.net.sources(i);
        if (graders.empty()) continue;
        const double mu = grading.mean(pop.states[i]);
        double sum = 0.0;
        for (NodeId j : graders) {
            const double noise =
                grading.noise_width * (counter_uniform(seed, {tag(StreamTag::grading), i, j}) - 0.5);
            sum += std::clamp(mu + noise, 0.0, 1.0);
        }
        rep.r[i] = sum / static_cast<double>(graders.size());
        rep.grade_count[i] = graders.size();
    }
    return rep;
}

void ReadjustConfig::validate() const {
    if (cap_floor && !(floor_cap > 0.0 && floor_cap <= 1.0))
        throw ValidationError("readjust floor_cap must lie in (0, 1]");
}

double hoeffding_floor(std::size_t n, double gap) {
    if (!(std::abs(gap) > 0.0)) throw ValidationError("hoeffding_floor: grade gap must be non-zero");
    return 4.0 * std::log(2.0 * static_cast<double>(n)) / (gap * gap);
}

NeighborhoodFloors neighborhood_floors(std::size_t n, const GradingModel& grading, const ReadjustConfig& cfg) {
    NeighborhoodFloors f{hoeffding_floor(n, grading.mu_T - grading.mu_D),
                         hoeffding_floor(n, grading.mu_D - grading.mu_H)};
    if (cfg.cap_floor) {
        const double cap = cfg.floor_cap * static_cast<double>(n);
        f.add = std::min(f.add, cap);
        f.remove = std::min(f.remove, cap);
    }
    return f;
}

std::size_t readjust_iterations(std::size_t n) {
    if (n < 2) return 0;
    return static_cast<std::size_t>(std::ceil(std::log(static_cast<double>(n)) - 1e-12));
}

CandidateCounts candidate_counts(const DirectedNetwork& net, const ReputationVector& r, const GradingModel& grading,
                                 const ReadjustConfig& cfg) {
    check_reputation(net, r);
    const NeighborhoodFloors floors = neighborhood_floors(net.size(), grading, cfg);
    CandidateCounts c;
    for (NodeId j : add_targets(net, r, grading.add_threshold(), floors.add))
        c.add += net.size() - 1 - net.influence_count(j);
    for (NodeId j : remove_targets(net, r, grading.remove_threshold(), floors.remove)) c.remove += net.influence_count(j);
    return c;
}

DirectedNetwork algorithm1_readjust(const DirectedNetwork& net0, const ReputationVector& r,
                                    const GradingModel& grading, const ReadjustConfig& cfg, std::uint64_t seed,
                                    std::vector<AuditEntry>* audit) {
    grading.validate();
    cfg.validate();
    check_reputation(net0, r);
    DirectedNetwork net = net0;
    const std::size_t n = net.size();
    const NeighborhoodFloors floors = neighborhood_floors(n, grading, cfg);
    const double thr_add = grading.add_threshold();
    const double thr_rem = grading.remove_threshold();
    const std::size_t iterations = readjust_iterations(n);

    auto log = [&](AuditEntry e) {
        if (audit) audit->push_back(std::move(e));
    };

    for (std::size_t it = 1; it <= iterations; ++it) {
        // Add step.
        {
            const auto targets = add_targets(net, r, thr_add, floors.add);
            std::size_t count = 0;
            for (NodeId j : targets) count += n - 1 - net.influence_count(j);
            if (count == 0) {
                log({it, "skip", -1, -1, std::nan(""), thr_add, 0});
            } else {
                std::size_t k = pick(seed, {tag(StreamTag::readjust), it, 0}, count);
                NodeId j = 0;
                for (NodeId cand : targets) {
                    const std::size_t c = n - 1 - net.influence_count(cand);
                    if (k < c) {
                        j = cand;
                        break;
                    }
                    k -= c;
                }
                // k-th node that is neither j nor already reading j.
                const auto readers = net.influenced(j);
                NodeId i = 0;
                std::size_t pos = 0;
                for (NodeId cand = 0; cand < n; ++cand) {
                    while (pos < readers.size() && readers[pos] < cand) ++pos;
                    if (cand == j || (pos < readers.size() && readers[pos] == cand)) continue;
                    if (k == 0) {
                        i = cand;
                        break;
                    }
                    --k;
                }
                if (!(r.r[j] > thr_add)) throw std::logic_error("algorithm1_readjust: add target below threshold");
                net.add_edge(i, j);
                log({it, "add", i, j, r.r[j], thr_add, net.in_degree(j)});
            }
        }
        // Remove step.
        {
            const auto targets = remove_targets(net, r, thr_rem, floors.remove);
            std::size_t count = 0;
            for (NodeId j : targets) count += net.influence_count(j);
            if (count == 0) {
                log({it, "skip", -1, -1, std::nan(""), thr_rem, 0});
            } else {
                std::size_t k = pick(seed, {tag(StreamTag::readjust), it, 1}, count);
                NodeId j = 0;
                for (NodeId cand : targets) {
                    const std::size_t c = net.influence_count(cand);
                    if (k < c) {
                        j = cand;
                        break;
                    }
                    k -= c;
                }
                const NodeId i = net.influenced(j)[k];
                if (!(r.r[j] < thr_rem)) throw std::logic_error("algorithm1_readjust: remove target above threshold");
                net.remove_edge(i, j);
                log({it, "remove", i, j, r.r[j], thr_rem, net.in_degree(j)});
            }
        }
    }
    return net;
}

void write_audit_csv(const std::vector<AuditEntry>& audit, std::ostream& os) {
    os << "iteration,action,i,j,r_j,threshold,neighborhood_size\n" << std::setprecision(12);
    for (const auto& e : audit) {
        os << e.iteration << ',' << e.action << ',';
        if (e.action == "skip")
            os << ",,";
        else
            os << e.i << ',' << e.j << ',' << e.r_j;
        os << ',' << e.threshold << ',' << e.neighborhood_size << '\n';
    }
}

DirectedNetwork random_rewire(const DirectedNetwork& net0, std::uint64_t seed) {
    DirectedNetwork net = net0;
    const std::size_t n = net.size();
    const std::size_t iterations = readjust_iterations(n);
    for (std::size_t it = 1; it <= iterations; ++it) {
        const std::size_t absent = n * (n - 1) - net.edge_count();
        if (absent > 0) {
            std::size_t k = pick(seed, {tag(StreamTag::rewire), it, 0}, absent);
            for (NodeId i = 0; i < n; ++i) {
                const std::size_t free = n - 1 - net.in_degree(i);
                if (k >= free) {
                    k -= free;
                    continue;
                }
                const auto src = net.sources(i);
                std::size_t pos = 0;
                for (NodeId j = 0; j < n; ++j) {
                    while (pos < src.size() && src[pos] < j) ++pos;
                    if (j == i || (pos < src.size() && src[pos] == j)) continue;
                    if (k-- == 0) {
                        net.add_edge(i, j);
                        break;
                    }
                }
                break;
            }
        }
        if (net.edge_count() > 0) {
            std::size_t k = pick(seed, {tag(StreamTag::rewire), it, 1}, net.edge_count());
            for (NodeId i = 0; i < n; ++i) {
                const std::size_t d = net.in_degree(i);
                if (k < d) {
                    net.remove_edge(i, net.sources(i)[k]);
                    break;
                }
                k -= d;
            }
        }
    }
    return net;
}

double delta1_bound(std::size_t n, double p_T, double p_H) {
    if (n < 2) throw ValidationError("delta1_bound: N must be >= 2");
    if (!(p_T > 0.0 && p_T <= 1.0) || !(p_H > 0.0 && p_H <= 1.0))
        throw ValidationError("delta1_bound: p_T and p_H must lie in (0, 1]");
    const double N = static_cast<double>(n);
    const double x = std::max(1.0 / (N * p_T), 1.0 / (N * p_H)) - 1.0;
    const double a = 1.0 - 1.0 / N;
    if (x == 0.0) return 0.0;
    return std::exp(-a * a * std::log(N) / (2.0 * x * x));
}

double compute_p_z(const DegreeDistribution& q, const std::vector<SimplexDensity>& d, LatentState z, double mu_gap,
                   std::size_t n) {
    if (d.size() != q.probs.size()) throw ValidationError("compute_p_z: density and degree lengths differ");
    const double floor = hoeffding_floor(n, mu_gap);
    double p = 0.0;
    for (std::size_t l = 0; l < q.probs.size(); ++l)
        if (static_cast<double>(l) >= floor) p += q.probs[l] * d[l][idx(z)];
    return p;
}

WilsonInterval wilson_interval(std::size_t successes, std::size_t trials, double z) {
    if (trials == 0) return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

void Prop1Scenario::validate() const {
    network.validate();
    initial.validate();
    grading.validate();
    readjust.validate();
}

Prop1Report prop1_verify(const Prop1Scenario& sc, std::size_t trials, std::uint64_t seed, unsigned jobs) {
    sc.validate();
    if (trials < 500) throw ValidationError("prop1_verify: at least 500 trials are required");
    const std::size_t n = sc.network.n;

    struct Outcome {
        bool b2 = false;
        bool success = false;
        double p_T = 0.0;
        double p_H = 0.0;
    };
    std::vector<Outcome> out(trials);
    parallel_for(trials, jobs, [&](std::size_t t) {
        const std::uint64_t ts = derive_seed(seed, {tag(StreamTag::trial), t});
        AgentPopulation pop;
        pop.net = sc.network.build(derive_seed(ts, {tag(StreamTag::network)}));
        pop.states = initialize_states(n, sc.initial, ts);
        const EmpiricalDensities emp = empirical_densities(pop);
        DegreeDistribution q = in_degree_distribution(pop.net);
        std::vector<SimplexDensity> d(q.probs.size(), SimplexDensity{0.0, 0.0, 0.0});
        for (std::size_t l = 0; l < d.size() && l < emp.classes.size(); ++l)
            if (emp.classes[l]) d[l] = *emp.classes[l];
        Outcome o;
        o.p_T = compute_p_z(q, d, LatentState::T, sc.grading.mu_T - sc.grading.mu_D, n);
        o.p_H = compute_p_z(q, d, LatentState::H, sc.grading.mu_H - sc.grading.mu_D, n);

        const ReputationVector r = grade_population(pop, sc.grading, derive_seed(ts, {tag(StreamTag::grading)}));
        const CandidateCounts cc = candidate_counts(pop.net, r, sc.grading, sc.readjust);
        o.b2 = cc.add > 0 && cc.remove > 0;
        if (o.b2) {
            const std::size_t before = edges_into(pop.net, pop.states, LatentState::T);
            const DirectedNetwork after = algorithm1_readjust(pop.net, r, sc.grading, sc.readjust,
                                                              derive_seed(ts, {tag(StreamTag::readjust)}));
            o.success = edges_into(after, pop.states, LatentState::T) > before;
        }
        out[t] = o;
    });

    Prop1Report rep;
    rep.trials = trials;
    rep.floors = neighborhood_floors(n, sc.grading, sc.readjust);
    for (const auto& o : out) {
        rep.p_T += o.p_T / static_cast<double>(trials);
        rep.p_H += o.p_H / static_cast<double>(trials);
        if (!o.b2) {
            ++rep.b2_violations;
            continue;
        }
        ++rep.used;
        if (o.success) ++rep.successes;
    }
    rep.misconfigured = 2 * rep.b2_violations > trials;
    rep.frequency = rep.used ? static_cast<double>(rep.successes) / static_cast<double>(rep.used) : 0.0;
    rep.wilson = wilson_interval(rep.successes, rep.used);
    if (rep.p_T > 0.0 && rep.p_H > 0.0) {
        rep.delta1 = delta1_bound(n, std::min(rep.p_T, 1.0), std::min(rep.p_H, 1.0));
    } else {
        rep.delta1 = 1.0;  // bound undefined: no class reaches the floor
    }
    rep.bound = 1.0 - rep.delta1;
    rep.pass = !rep.misconfigured && rep.used > 0 && rep.p_T > 0.0 && rep.p_H > 0.0 && rep.wilson.hi >= rep.bound;
    return rep;
}

void write_prop1_csv(const Prop1Report& r, std::ostream& os) {
    os << "key,value\n" << std::setprecision(12);
    os << "trials," << r.trials << '\n'
       << "b2_violations," << r.b2_violations << '\n'
       << "used," << r.used << '\n'
       << "successes," << r.successes << '\n'
       << "frequency," << r.frequency << '\n'
       << "p_T," << r.p_T << '\n'
       << "p_H," << r.p_H << '\n'
       << "add_floor," << r.floors.add << '\n'
       << "remove_floor," << r.floors.remove << '\n'
       << "delta1," << r.delta1 << '\n'
       << "bound," << r.bound << '\n'
       << "wilson_lo," << r.wilson.lo << '\n'
       << "wilson_hi," << r.wilson.hi << '\n'
       << "misconfigured," << (r.misconfigured ? 1 : 0) << '\n'
       << "pass," << (r.pass ? 1 : 0) << '\n';
}

std::string to_string(RewireArm arm) {
    switch (arm) {
    case RewireArm::algorithm1: return "algorithm1";
    case RewireArm::static_network: return "static";
    case RewireArm::random: return "random";
    }
    return "static";
}

void ReconfigBenchConfig::validate() const {
    scenario.validate();
    grading.validate();
    readjust.validate();
    if (rounds < 1) throw ValidationError("reconfig benchmark: rounds must be >= 1");
    if (period < 1) throw ValidationError("reconfig benchmark: period must be >= 1");
    if (trials < 1) throw ValidationError("reconfig benchmark: trials must be >= 1");
    if (!(target > 0.0 && target <= 1.0)) throw ValidationError("reconfig benchmark: target must lie in (0, 1]");
    if (equilibrium_window < 1 || equilibrium_window > rounds + 1)
        throw ValidationError("reconfig benchmark: equilibrium_window must lie in [1, rounds + 1]");
}

ReconfigBenchResult reconfig_benchmark(const ReconfigBenchConfig& cfg, std::uint64_t seed, unsigned jobs) {
    cfg.validate();
    const std::array<RewireArm, 3> arms{RewireArm::algorithm1, RewireArm::static_network, RewireArm::random};
    const LogisticKernel kernel(cfg.scenario.kernel);
    const std::size_t R = cfg.rounds;
    // series[arm][trial][round]
    std::vector<std::vector<std::vector<double>>> series(3, std::vector<std::vector<double>>(cfg.trials));
    ReconfigBenchResult result;

    parallel_for(3 * cfg.trials, jobs, [&](std::size_t task) {
        const std::size_t a = task / cfg.trials, t = task % cfg.trials;
        const std::uint64_t ts = derive_seed(seed, {tag(StreamTag::trial), t});
        AgentPopulation pop = cfg.scenario.make_population(ts);
        const std::uint64_t step_seed = derive_seed(ts, {tag(StreamTag::transition)});
        auto table = std::make_unique<KernelTable>(kernel, cfg.scenario.u, static_cast<int>(pop.net.max_in_degree()));
        std::vector<AuditEntry> audit;
        auto& out = series[a][t];
        out.reserve(R + 1);
        out.push_back(aggregate_density(pop.states)[T]);
        for (std::size_t k = 1; k <= R; ++k) {
            step_round(pop, *table, cfg.scenario.policy, step_seed);
            if (k % cfg.period == 0 && k < R) {
                const std::uint64_t ks = derive_seed(ts, {tag(StreamTag::readjust), k});
                if (arms[a] == RewireArm::algorithm1) {
                    const ReputationVector r =
                        grade_population(pop, cfg.grading, derive_seed(ts, {tag(StreamTag::grading), k}));
                    pop.net = algorithm1_readjust(pop.net, r, cfg.grading, cfg.readjust, ks,
                                                  t == 0 ? &audit : nullptr);
                } else if (arms[a] == RewireArm::random) {
                    pop.net = random_rewire(pop.net, derive_seed(ts, {tag(StreamTag::rewire), k}));
                }
                const int need = static_cast<int>(pop.net.max_in_degree());
                if (need > table->l_max())
                    table = std::make_unique<KernelTable>(kernel, cfg.scenario.u, need + 4);
            }
            out.push_back(aggregate_density(pop.states)[T]);
        }
        if (a == 0 && t == 0) result.audit = std::move(audit);
    });

    for (std::size_t a = 0; a < 3; ++a) {
        ArmResult ar;
        ar.arm = arms[a];
        std::vector<double> col(cfg.trials);
        for (std::size_t k = 0; k <= R; ++k) {
            for (std::size_t t = 0; t < cfg.trials; ++t) col[t] = series[a][t][k];
            ar.median.push_back(quantile(col, 0.5));
            ar.q10.push_back(quantile(col, 0.1));
            ar.q90.push_back(quantile(col, 0.9));
            if (ar.time_to_target == std::numeric_limits<std::size_t>::max() && ar.median.back() >= cfg.target)
                ar.time_to_target = k;
        }
        double s = 0.0;
        for (std::size_t k = R + 1 - cfg.equilibrium_window; k <= R; ++k) s += ar.median[k];
        ar.equilibrium = s / static_cast<double>(cfg.equilibrium_window);
        result.arms.push_back(std::move(ar));
    }
    return result;
}

void write_bench_csv(const ReconfigBenchResult& result, std::ostream& os) {
    os << "round,arm,median,q10,q90\n" << std::setprecision(12);
    for (const auto& a : result.arms)
        for (std::size_t k = 0; k < a.median.size(); ++k)
            os << k << ',' << to_string(a.arm) << ',' << a.median[k] << ',' << a.q10[k] << ',' << a.q90[k] << '\n';
}

void write_bench_summary_csv(const ReconfigBenchResult& result, std::ostream& os) {
    os << "arm,time_to_target,equilibrium\n" << std::setprecision(12);
    for (const auto& a : result.arms) {
        os << to_string(a.arm) << ',';
        if (a.time_to_target != std::numeric_limits<std::size_t>::max()) os << a.time_to_target;
        os << ',' << a.equilibrium << '\n';
    }
}

} // namespace llmnet
