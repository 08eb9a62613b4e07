#include "helpers.hpp"

#include "llmnet/experiment.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <set>

using namespace llmnet;
namespace fs = std::filesystem;

namespace {

// Every experiment kind at a size that runs in seconds.
ExperimentConfig small_config(ExperimentKind kind) {
    ExperimentConfig c;
    c.kind = kind;
    c.seed = 11;
    c.network.n = 40;
    c.initial.T = 0.3;
    c.simulate.rounds = 30;
    c.meanfield.t_end = 5.0;
    c.meanfield.dt = 0.1;
    c.twoscale.q0 = {0.1, 0.4, 0.25, 0.15, 0.1, 0.0, 0.0};
    c.twoscale.epsilon = 0.05;
    c.twoscale.t_end = 0.5;
    c.epsilon_scan.epsilons = {0.1, 0.05};
    c.epsilon_scan.t_end = 0.5;
    c.bench.rounds = 60;
    c.bench.period = 20;
    c.bench.trials = 3;
    c.bench.equilibrium_window = 20;
    c.episode_rounds = 20;
    c.sweep.grid = {5, 30};
    c.sweep.trials = 5;
    c.optimize.schedule.steps = 3;
    c.optimize.train_scenarios = 2;
    c.optimize.eval_scenarios = 2;
    c.concentration.n_list = {20, 40};
    c.concentration.horizon = 10;
    c.concentration.trials = 30;
    if (kind == ExperimentKind::prop1) {
        c.network.kind = NetworkSpec::Kind::erdos_renyi;
        c.network.n = 100;
        c.network.p = 0.95;
        c.initial.H = 0.3;
        c.grading.mu_T = 1.0;
        c.grading.mu_D = 0.5;
        c.grading.mu_H = 0.0;
        c.grading.noise_width = 0.5;
        c.prop1.trials = 500;
    }
    return c;
}

nlohmann::json read_manifest(const fs::path& dir) {
    return nlohmann::json::parse(test::slurp((dir / "manifest.json").string()));
}

std::set<std::string> series_of(const fs::path& file) {
    std::istringstream is(test::slurp(file.string()));
    std::string line;
    std::getline(is, line);
    REQUIRE(line == "series,x,y,y_lo,y_hi");
    std::set<std::string> out;
    while (std::getline(is, line)) out.insert(line.substr(0, line.find(',')));
    return out;
}

} // namespace

TEST_CASE("every kind writes a manifest whose checksums match its artifacts") {
    const fs::path root = test::scratch_dir("experiment_kinds");
    for (auto kind : all_experiment_kinds()) {
        CAPTURE(to_string(kind));
        const fs::path dir = root / to_string(kind);
        const auto r = run_experiment(small_config(kind), dir.string());
        REQUIRE_MESSAGE(r.exit_code == exit_ok, r.error);
        const auto m = read_manifest(dir);
        CHECK(m["experiment"] == to_string(kind));
        CHECK(m["seed"] == 11);
        CHECK(m["wall_time_seconds"].get<double>() >= 0.0);
        CHECK(parse_config(m["config"].get<std::string>()).kind == kind);
        CHECK(fs::exists(dir / "config.yaml"));
        REQUIRE(m["artifacts"].size() >= 2);
        for (const auto& a : m["artifacts"]) {
            const fs::path p = dir / a["file"].get<std::string>();
            CHECK(sha256_file(p.string()) == a["sha256"]);
            CHECK(fs::file_size(p) == a["bytes"].get<std::uintmax_t>());
        }
        const auto files = emit_plotdata(dir.string());
        REQUIRE(files.size() == 1);
        CHECK(fs::exists(dir / files[0]));
        CHECK_FALSE(series_of(dir / files[0]).empty());
    }
}

TEST_CASE("plot tables name their series") {
    const fs::path root = test::scratch_dir("experiment_plots");
    const auto run = [&](ExperimentKind kind) {
        const fs::path dir = root / to_string(kind);
        REQUIRE(run_experiment(small_config(kind), dir.string()).exit_code == exit_ok);
        return dir / emit_plotdata(dir.string())[0];
    };
    CHECK(series_of(run(ExperimentKind::reconfig_bench)) == std::set<std::string>{"algorithm1", "random", "static"});
    CHECK(series_of(run(ExperimentKind::sweep)) == std::set<std::string>{"rho_H", "rho_T", "token_cost"});
    CHECK(series_of(run(ExperimentKind::optimize)) == std::set<std::string>{"eval_cost", "train_cost", "u"});
    CHECK(series_of(run(ExperimentKind::simulate)) == std::set<std::string>{"rho_D_hat", "rho_H_hat", "rho_T_hat"});
}

TEST_CASE("outputs do not depend on the worker count") {
    const fs::path root = test::scratch_dir("experiment_jobs");
    for (auto kind : {ExperimentKind::simulate, ExperimentKind::reconfig_bench, ExperimentKind::sweep,
                      ExperimentKind::optimize, ExperimentKind::concentration, ExperimentKind::epsilon_scan}) {
        CAPTURE(to_string(kind));
        auto one = small_config(kind), four = small_config(kind);
        four.jobs = 4;
        REQUIRE(run_experiment(one, (root / "one").string()).exit_code == exit_ok);
        REQUIRE(run_experiment(four, (root / "four").string()).exit_code == exit_ok);
        const auto a = read_manifest(root / "one")["artifacts"];
        const auto b = read_manifest(root / "four")["artifacts"];
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            if (a[k]["file"] == "config.yaml") continue;  // echoes jobs
            CAPTURE(a[k]["file"].get<std::string>());
            CHECK(a[k]["sha256"] == b[k]["sha256"]);
        }
        fs::remove_all(root / "one");
        fs::remove_all(root / "four");
    }
}

TEST_CASE("simulate is reproducible from the seed") {
    const fs::path root = test::scratch_dir("experiment_seed");
    auto c = small_config(ExperimentKind::simulate);
    REQUIRE(run_experiment(c, (root / "a").string()).exit_code == exit_ok);
    REQUIRE(run_experiment(c, (root / "b").string()).exit_code == exit_ok);
    c.seed = 12;
    REQUIRE(run_experiment(c, (root / "c").string()).exit_code == exit_ok);
    const auto traj = [&](const char* d) { return test::slurp((root / d / "trajectory.csv").string()); };
    CHECK(traj("a") == traj("b"));
    CHECK(traj("a") != traj("c"));
}

TEST_CASE("runtime failures return the runtime exit code") {
    const fs::path root = test::scratch_dir("experiment_runtime");
    auto c = small_config(ExperimentKind::simulate);
    c.kernel_tables = {{20.0, (root / "missing.csv").string()}};
    const auto r = run_experiment(c, (root / "run").string());
    CHECK(r.exit_code != exit_ok);
    CHECK(r.error.find("missing.csv") != std::string::npos);
}

TEST_CASE("plot data needs a manifest") {
    const fs::path root = test::scratch_dir("experiment_noplot");
    CHECK_THROWS_AS(emit_plotdata(root.string()), ExperimentError);
    std::ofstream(root / "manifest.json") << "{ not json";
    CHECK_THROWS_AS(emit_plotdata(root.string()), ExperimentError);
}
