#include "llmnet/experiment.hpp"

#include "llmnet/abm.hpp"
#include "llmnet/control.hpp"
#include "llmnet/meanfield.hpp"
#include "llmnet/reconfig.hpp"
#include "llmnet/rng.hpp"
#include "llmnet/twoscale.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace llmnet {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Collects the artifact files of one run.
class RunDir {
public:
    explicit RunDir(fs::path dir) : dir_(std::move(dir)) {}

    template <class Fn>
    void write(const std::string& name, Fn&& body) {
        std::ofstream os(dir_ / name, std::ios::binary);
        if (!os) throw ExperimentError("cannot open '" + (dir_ / name).string() + "' for writing");
        body(os);
        os.close();
        if (!os) throw ExperimentError("write to '" + (dir_ / name).string() + "' failed");
        files_.push_back(name);
    }

    const fs::path& path() const { return dir_; }
    const std::vector<std::string>& files() const { return files_; }

private:
    fs::path dir_;
    std::vector<std::string> files_;
};

template <class Fn>
auto stage(const ExperimentConfig& cfg, const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const ExperimentError&) {
        throw;
    } catch (const std::exception& e) {
        throw ExperimentError(to_string(cfg.kind) + " [" + name + "]: " + e.what());
    }
}

AbmScenario abm_scenario(const ExperimentConfig& cfg) {
    AbmScenario sc;
    sc.network = cfg.network;
    sc.kernel = cfg.kernel;
    sc.u = cfg.u;
    sc.initial = cfg.initial;
    sc.policy = cfg.activation;
    return sc;
}

std::shared_ptr<const CommCostFn> comm_cost(const ExperimentConfig& cfg) {
    if (cfg.comm_slope.empty()) return std::make_shared<LinearCommCost>();
    return std::make_shared<TableCommCost>(cfg.comm_slope, cfg.comm_offset);
}

DegreeDistribution initial_q(const ExperimentConfig& cfg) {
    if (!cfg.twoscale.q0.empty()) return DegreeDistribution{cfg.twoscale.q0};
    return in_degree_distribution(cfg.network.build(derive_seed(cfg.seed, {tag(StreamTag::network)})));
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(12) << v;
    return ss.str();
}

void run_simulate(const ExperimentConfig& cfg, RunDir& out) {
    const auto kernel = make_kernel(cfg);
    const AbmScenario sc = abm_scenario(cfg);
    const AgentPopulation pop = stage(cfg, "population", [&] { return sc.make_population(cfg.seed); });
    const AbmTrajectory traj = stage(cfg, "rounds", [&] {
        return run_trajectory(pop, *kernel, cfg.u, cfg.activation, cfg.simulate.rounds, cfg.seed);
    });
    out.write("trajectory.csv", [&](std::ostream& os) { write_abm_trajectory_csv(traj.aggregate, os); });
    out.write("final_classes.csv", [&](std::ostream& os) {
        const EmpiricalDensities d = empirical_densities(traj.final_population);
        os << "l,size,rho_T,rho_H,rho_D\n";
        for (std::size_t l = 0; l < d.classes.size(); ++l) {
            if (!d.classes[l]) continue;
            const auto& c = *d.classes[l];
            os << l << ',' << d.class_sizes[l] << ',' << fmt(c[0]) << ',' << fmt(c[1]) << ',' << fmt(c[2]) << '\n';
        }
    });
    out.write("network.txt", [&](std::ostream& os) { save_edge_list(pop.net, os); });
}

void run_meanfield(const ExperimentConfig& cfg, RunDir& out) {
    const auto kernel = make_kernel(cfg);
    const AbmScenario sc = abm_scenario(cfg);
    const AgentPopulation pop = stage(cfg, "population", [&] { return sc.make_population(cfg.seed); });
    const DegreeDistribution q = in_degree_distribution(pop.net);
    const auto& mf = cfg.meanfield;
    const FastTrajectory traj = stage(cfg, "integrate", [&] {
        return integrate_fast(matched_mean_field_state(pop), q, cfg.u, *kernel, mf.t_end, mf.dt, mf.sample_every);
    });
    out.write("meanfield.csv", [&](std::ostream& os) { write_fast_trajectory_csv(traj, q, os); });

    const int l_max = static_cast<int>(q.max_degree());
    out.write("assumptions.csv", [&](std::ostream& os) {
        const AssumptionReport a1 = check_truthful_absorbing(*kernel, cfg.u, l_max);
        const AssumptionReport a2 = check_recovery_positive(*kernel, cfg.u, l_max, 1);
        const LinkConcentrationReport a3 =
            check_link_concentration(q, 0.05, derive_seed(cfg.seed, {tag(StreamTag::trial)}));
        os << "check,ok,violations\n";
        os << "truthful_absorbing," << a1.ok << ',' << a1.violations.size() << '\n';
        os << "recovery_positive," << a2.ok << ',' << a2.violations.size() << '\n';
        os << "link_concentration," << a3.ok << ',' << a3.counterexamples << '\n';
    });
    out.write("quasi_steady.csv", [&](std::ostream& os) {
        os << "l,rho_T,rho_H,rho_D\n";
        try {
            const QuasiSteadyResult psi = solve_quasi_steady(q, cfg.u, *kernel);
            for (std::size_t l = 0; l < psi.state.size(); ++l) {
                const auto& c = psi.state.classes[l];
                os << l << ',' << fmt(c[0]) << ',' << fmt(c[1]) << ',' << fmt(c[2]) << '\n';
            }
            const StabilityReport st = jacobian_stability_check(q, cfg.u, *kernel, psi.state);
            os << "# residual," << fmt(psi.residual) << '\n';
            os << "# stable," << st.stable << '\n';
            os << "# max_real_part," << fmt(st.max_real_part) << '\n';
        } catch (const NumericalError& e) {
            os << "# not converged," << e.what() << '\n';
        }
    });
}

void run_reduce(const ExperimentConfig& cfg, RunDir& out) {
    const auto kernel = make_kernel(cfg);
    const DegreeDistribution q0 = stage(cfg, "degree distribution", [&] { return initial_q(cfg); });
    const BirthDeathDynamics slow(cfg.twoscale.slow);
    const auto& ts = cfg.twoscale;
    const TwoScaleTrajectory reduced = stage(cfg, "reduced system", [&] {
        return integrate_reduced(q0, cfg.u, *kernel, slow, ts.t_end, ts.dt_slow);
    });
    const TwoScaleTrajectory coupled = stage(cfg, "coupled system", [&] {
        const TwoScaleConfig tc{ts.epsilon, ts.t_end, ts.dt_slow, ts.dt_fast};
        return integrate_coupled(reduced.rho.front(), q0, cfg.u, *kernel, slow, tc);
    });
    out.write("reduced.csv", [&](std::ostream& os) { write_twoscale_csv(reduced, os); });
    out.write("coupled.csv", [&](std::ostream& os) { write_twoscale_csv(coupled, os); });
}

void run_epsilon_scan(const ExperimentConfig& cfg, RunDir& out) {
    TwoScaleScenario sc;
    sc.q0 = stage(cfg, "degree distribution", [&] { return initial_q(cfg); });
    sc.u = cfg.u;
    sc.kernel = cfg.kernel;
    sc.slow = cfg.twoscale.slow;
    sc.t_end = cfg.epsilon_scan.t_end;
    sc.dt_slow = cfg.epsilon_scan.dt_slow;
    sc.boundary_layer = cfg.epsilon_scan.boundary_layer;
    const ScalingResult r =
        stage(cfg, "scaling", [&] { return epsilon_scaling_experiment(cfg.epsilon_scan.epsilons, sc, cfg.jobs); });
    out.write("scaling.csv", [&](std::ostream& os) { write_scaling_csv(r, os); });
}

void run_bench(const ExperimentConfig& cfg, RunDir& out) {
    ReconfigBenchConfig b;
    b.scenario = abm_scenario(cfg);
    b.grading = cfg.grading;
    b.readjust = cfg.readjust;
    b.rounds = cfg.bench.rounds;
    b.period = cfg.bench.period;
    b.trials = cfg.bench.trials;
    b.target = cfg.bench.target;
    b.equilibrium_window = cfg.bench.equilibrium_window;
    const ReconfigBenchResult r = stage(cfg, "benchmark", [&] { return reconfig_benchmark(b, cfg.seed, cfg.jobs); });
    out.write("bench.csv", [&](std::ostream& os) { write_bench_csv(r, os); });
    out.write("bench_summary.csv", [&](std::ostream& os) { write_bench_summary_csv(r, os); });
    out.write("audit.csv", [&](std::ostream& os) { write_audit_csv(r.audit, os); });
}

void run_prop1(const ExperimentConfig& cfg, RunDir& out) {
    Prop1Scenario sc;
    sc.network = cfg.network;
    sc.initial = cfg.initial;
    sc.grading = cfg.grading;
    sc.readjust = {cfg.prop1.cap_floor, cfg.prop1.floor_cap};
    const Prop1Report r = stage(cfg, "monte carlo", [&] { return prop1_verify(sc, cfg.prop1.trials, cfg.seed, cfg.jobs); });
    out.write("prop1.csv", [&](std::ostream& os) { write_prop1_csv(r, os); });
}

ControlScenario control_scenario(const ExperimentConfig& cfg) {
    ControlScenario sc;
    sc.abm = abm_scenario(cfg);
    sc.rounds = cfg.episode_rounds;
    sc.weights = cfg.cost;
    return sc;
}

void run_sweep(const ExperimentConfig& cfg, RunDir& out) {
    const auto comm = comm_cost(cfg);
    const auto rows = stage(cfg, "sweep", [&] {
        return control_sweep(cfg.sweep.grid, control_scenario(cfg), *comm, cfg.sweep.trials, cfg.seed, cfg.jobs);
    });
    out.write("sweep.csv", [&](std::ostream& os) { write_sweep_csv(rows, os); });
    out.write("sweep_trials.csv", [&](std::ostream& os) {
        os << "u,trial,rho_T,rho_H,token_cost\n";
        for (const auto& r : rows)
            for (std::size_t t = 0; t < r.n_trials; ++t)
                os << fmt(r.u) << ',' << t << ',' << fmt(r.rho_T[t]) << ',' << fmt(r.rho_H[t]) << ','
                   << fmt(r.token_cost[t]) << '\n';
    });
}

void run_optimize(const ExperimentConfig& cfg, RunDir& out, const LogFn& log) {
    const auto& o = cfg.optimize;
    std::vector<std::uint64_t> train, eval;
    for (std::size_t s = 0; s < o.train_scenarios; ++s) train.push_back(s);
    for (std::size_t s = 0; s < o.eval_scenarios; ++s) eval.push_back(o.train_scenarios + s);
    const EpisodeFn episode = make_episode(control_scenario(cfg), comm_cost(cfg));
    const OptimizationTrace trace =
        stage(cfg, "spsa", [&] { return optimize(o.u0, o.schedule, episode, train, eval, cfg.seed, cfg.jobs, log); });
    out.write("trace.csv", [&](std::ostream& os) { write_trace_csv(trace, os); });
}

void run_concentration(const ExperimentConfig& cfg, RunDir& out) {
    const auto& c = cfg.concentration;
    const auto rows = stage(cfg, "concentration", [&] {
        return concentration_experiment(c.n_list, c.horizon, c.trials, abm_scenario(cfg), cfg.seed, cfg.jobs);
    });
    out.write("concentration.csv", [&](std::ostream& os) {
        os << "n,median,p90\n";
        for (const auto& r : rows) os << r.n << ',' << fmt(r.median) << ',' << fmt(r.p90) << '\n';
    });
    out.write("concentration_trials.csv", [&](std::ostream& os) {
        os << "n,trial,deviation\n";
        for (const auto& r : rows)
            for (std::size_t t = 0; t < r.deviations.size(); ++t) os << r.n << ',' << t << ',' << fmt(r.deviations[t]) << '\n';
    });
}

// ---- plot data --------------------------------------------------------------

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t col(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ExperimentError("column '" + name + "' missing");
        return static_cast<std::size_t>(it - header.begin());
    }
};

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

Csv read_csv(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ExperimentError("cannot read '" + path.string() + "'");
    Csv csv;
    std::string line;
    if (std::getline(is, line)) csv.header = split(line);
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        csv.rows.push_back(split(line));
    }
    return csv;
}

double num(const std::string& s) { return std::stod(s); }

class Tidy {
public:
    void add(const std::string& series, double x, double y) { rows_.push_back({series, fmt(x), fmt(y), "", ""}); }
    void add(const std::string& series, double x, double y, double lo, double hi) {
        rows_.push_back({series, fmt(x), fmt(y), fmt(lo), fmt(hi)});
    }
    void write(const fs::path& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw ExperimentError("cannot write '" + path.string() + "'");
        os << "series,x,y,y_lo,y_hi\n";
        for (const auto& r : rows_) os << r[0] << ',' << r[1] << ',' << r[2] << ',' << r[3] << ',' << r[4] << '\n';
    }

private:
    std::vector<std::array<std::string, 5>> rows_;
};

// Per-sample aggregates of a t,l,q,rho_T,... two-scale trajectory.
void add_twoscale(Tidy& tidy, const Csv& csv, const std::string& suffix) {
    const auto ct = csv.col("t"), cl = csv.col("l"), cq = csv.col("q"), crt = csv.col("rho_T");
    std::map<double, std::pair<double, double>> agg;  // t -> (mean degree, rho_T)
    for (const auto& r : csv.rows) {
        auto& a = agg[num(r[ct])];
        a.first += num(r[cl]) * num(r[cq]);
        a.second += num(r[cq]) * num(r[crt]);
    }
    for (const auto& [t, a] : agg) tidy.add("mean_degree_" + suffix, t, a.first);
    for (const auto& [t, a] : agg) tidy.add("rho_T_" + suffix, t, a.second);
}

} // namespace

std::unique_ptr<TransitionKernel> make_kernel(const ExperimentConfig& config) {
    if (config.kernel_tables.empty()) return std::make_unique<LogisticKernel>(config.kernel);
    auto kernel = std::make_unique<TableKernel>();
    for (const auto& t : config.kernel_tables) {
        std::ifstream is(t.path);
        if (!is) throw ValidationError("cannot open kernel table '" + t.path + "'");
        kernel->set_table(t.u, TableKernel::read_csv(is));
    }
    return kernel;
}

std::string sha256_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ExperimentError("cannot read '" + path + "' for hashing");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw ExperimentError("sha256 init failed");
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof buf);
        if (is.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(is.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    std::ostringstream hex;
    for (unsigned int k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[k]);
    return hex.str();
}

RunResult run_experiment(const ExperimentConfig& config, const std::string& out_dir, const LogFn& log) {
    RunResult result;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        config.validate();
    } catch (const std::exception& e) {
        result.exit_code = exit_config_error;
        result.error = e.what();
        return result;
    }
    try {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) throw ExperimentError("cannot create output directory '" + out_dir + "': " + ec.message());
        RunDir dir(out_dir);
        if (log) log(to_string(config.kind) + ": seed " + std::to_string(config.seed) + ", output " + out_dir);
        dir.write("config.yaml", [&](std::ostream& os) { os << to_yaml(config); });
        switch (config.kind) {
        case ExperimentKind::simulate: run_simulate(config, dir); break;
        case ExperimentKind::meanfield: run_meanfield(config, dir); break;
        case ExperimentKind::reduce: run_reduce(config, dir); break;
        case ExperimentKind::epsilon_scan: run_epsilon_scan(config, dir); break;
        case ExperimentKind::reconfig_bench: run_bench(config, dir); break;
        case ExperimentKind::prop1: run_prop1(config, dir); break;
        case ExperimentKind::sweep: run_sweep(config, dir); break;
        case ExperimentKind::optimize: run_optimize(config, dir, log); break;
        case ExperimentKind::concentration: run_concentration(config, dir); break;
        }
        for (const auto& f : dir.files()) {
            const fs::path p = dir.path() / f;
            result.artifacts.push_back({f, sha256_file(p.string()), fs::file_size(p)});
        }
        result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        json manifest;
        manifest["experiment"] = to_string(config.kind);
        manifest["seed"] = config.seed;
        manifest["config"] = to_yaml(config);
        manifest["wall_time_seconds"] = result.wall_seconds;
        manifest["artifacts"] = json::array();
        for (const auto& a : result.artifacts)
            manifest["artifacts"].push_back({{"file", a.file}, {"sha256", a.sha256}, {"bytes", a.bytes}});
        std::ofstream os(dir.path() / "manifest.json", std::ios::binary);
        os << manifest.dump(2) << '\n';
        if (!os) throw ExperimentError("cannot write manifest.json");
    } catch (const std::exception& e) {
        result.exit_code = exit_runtime_error;
        result.error = e.what();
        if (result.error.rfind(to_string(config.kind), 0) != 0) result.error = to_string(config.kind) + ": " + result.error;
    }
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::vector<std::string> emit_plotdata(const std::string& run_dir) {
    const fs::path dir(run_dir);
    std::ifstream is(dir / "manifest.json");
    if (!is) throw ExperimentError("no manifest.json in '" + run_dir + "'");
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        throw ExperimentError("unreadable manifest.json: " + std::string(e.what()));
    }
    const ExperimentKind kind = experiment_kind_from_string(manifest.at("experiment").get<std::string>());

    Tidy tidy;
    std::string name;
    auto quantile_bands = [](std::map<double, std::vector<double>>& groups, Tidy& t, const std::string& series) {
        for (auto& [x, v] : groups) {
            double mean = 0.0;
            for (double y : v) mean += y / static_cast<double>(v.size());
            t.add(series, x, mean, quantile(v, 0.1), quantile(v, 0.9));
        }
    };

    switch (kind) {
    case ExperimentKind::simulate: {
        name = "plot_trajectory.csv";
        const Csv c = read_csv(dir / "trajectory.csv");
        for (const std::string s : {"rho_T_hat", "rho_H_hat", "rho_D_hat"}) {
            const auto k = c.col(s);
            for (const auto& r : c.rows) tidy.add(s, num(r[0]), num(r[k]));
        }
        break;
    }
    case ExperimentKind::meanfield: {
        name = "plot_meanfield.csv";
        const Csv c = read_csv(dir / "meanfield.csv");
        const auto ct = c.col("t"), cl = c.col("l"), ca = c.col("rho_T_agg"), cv = c.col("V");
        for (const std::string s : {"rho_T_agg", "V"})
            for (const auto& r : c.rows)
                if (r[cl] == "0") tidy.add(s, num(r[ct]), num(r[s == "V" ? cv : ca]));
        break;
    }
    case ExperimentKind::reduce: {
        name = "plot_reduce.csv";
        add_twoscale(tidy, read_csv(dir / "reduced.csv"), "reduced");
        add_twoscale(tidy, read_csv(dir / "coupled.csv"), "coupled");
        break;
    }
    case ExperimentKind::epsilon_scan: {
        name = "plot_scaling.csv";
        const Csv c = read_csv(dir / "scaling.csv");
        for (const std::string s : {"e_q", "e_rho"}) {
            const auto k = c.col(s);
            for (const auto& r : c.rows)
                if (r[0] != "slope") tidy.add(s, num(r[0]), num(r[k]));
        }
        break;
    }
    case ExperimentKind::reconfig_bench: {
        name = "plot_fig2.csv";
        const Csv c = read_csv(dir / "bench.csv");
        const auto cr = c.col("round"), ca = c.col("arm"), cm = c.col("median"), lo = c.col("q10"), hi = c.col("q90");
        for (const auto& r : c.rows) tidy.add(r[ca], num(r[cr]), num(r[cm]), num(r[lo]), num(r[hi]));
        break;
    }
    case ExperimentKind::prop1: {
        name = "plot_prop1.csv";
        const Csv c = read_csv(dir / "prop1.csv");
        std::map<std::string, std::string> kv;
        for (const auto& r : c.rows)
            if (r.size() >= 2) kv[r[0]] = r[1];
        auto get = [&](const std::string& k) {
            const auto it = kv.find(k);
            if (it == kv.end()) throw ExperimentError("prop1.csv lacks '" + k + "'");
            return num(it->second);
        };
        tidy.add("frequency", 0.0, get("frequency"), get("wilson_lo"), get("wilson_hi"));
        tidy.add("bound", 0.0, get("bound"));
        break;
    }
    case ExperimentKind::sweep: {
        name = "plot_fig3.csv";
        const Csv c = read_csv(dir / "sweep_trials.csv");
        for (const std::string s : {"rho_T", "rho_H", "token_cost"}) {
            const auto k = c.col(s);
            std::map<double, std::vector<double>> groups;
            for (const auto& r : c.rows) groups[num(r[0])].push_back(num(r[k]));
            quantile_bands(groups, tidy, s);
        }
        break;
    }
    case ExperimentKind::optimize: {
        name = "plot_fig4.csv";
        const Csv c = read_csv(dir / "trace.csv");
        for (const std::string s : {"train_cost", "eval_cost", "u"}) {
            const auto k = c.col(s);
            for (const auto& r : c.rows) tidy.add(s, num(r[0]), num(r[k]));
        }
        break;
    }
    case ExperimentKind::concentration: {
        name = "plot_concentration.csv";
        const Csv c = read_csv(dir / "concentration_trials.csv");
        std::map<double, std::vector<double>> groups;
        for (const auto& r : c.rows) groups[num(r[0])].push_back(num(r[2]));
        for (auto& [n, v] : groups) tidy.add("deviation", n, quantile(v, 0.5), quantile(v, 0.1), quantile(v, 0.9));
        break;
    }
    }
    tidy.write(dir / name);
    return {name};
}

} // namespace llmnet
