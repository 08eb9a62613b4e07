#include "helpers.hpp"

#include "llmnet/config.hpp"
#include "llmnet/experiment.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>

using namespace llmnet;
namespace fs = std::filesystem;

namespace {

std::string config_path(const std::string& name) { return (fs::path(test::source_dir()) / "configs" / name).string(); }

int error_line(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.line();
    }
    return -1;
}

} // namespace

TEST_CASE("empty document gives the defaults") {
    const ExperimentConfig c = parse_config("");
    const ExperimentConfig d;
    CHECK(c.kind == ExperimentKind::simulate);
    CHECK(c.seed == d.seed);
    CHECK(c.network.n == d.network.n);
    CHECK(c.kernel.beta0 == d.kernel.beta0);
    CHECK(c.optimize.schedule.a0 == d.optimize.schedule.a0);
    CHECK(to_yaml(c) == to_yaml(d));
}

TEST_CASE("values are read into their fields") {
    const auto c = parse_config("experiment: sweep\n"
                                "seed: 7\n"
                                "network:\n  kind: erdos_renyi\n  n: 50\n  p: 0.2\n"
                                "kernel:\n  bias: [1, -1, -2]\n  absorbing_when_unanimous: true\n"
                                "sweep:\n  grid: [5, 25]\n  trials: 6\n");
    CHECK(c.kind == ExperimentKind::sweep);
    CHECK(c.seed == 7);
    CHECK(c.network.kind == NetworkSpec::Kind::erdos_renyi);
    CHECK(c.network.n == 50);
    CHECK(c.network.p == 0.2);
    CHECK(c.kernel.bias[1] == -1.0);
    CHECK(c.kernel.absorbing_when_unanimous);
    CHECK(c.sweep.grid == std::vector<double>{5, 25});
    CHECK(c.sweep.trials == 6);
}

TEST_CASE("effective config round-trips through YAML") {
    for (const auto& entry : fs::directory_iterator(fs::path(test::source_dir()) / "configs")) {
        CAPTURE(entry.path().string());
        const auto c = load_config(entry.path().string());
        const std::string y = to_yaml(c);
        CHECK(to_yaml(parse_config(y)) == y);
    }
    ExperimentConfig odd;
    odd.kernel.activity = 0.1234567890123;
    odd.u = 1.0 / 3.0;
    odd.twoscale.q0 = {0.2, 0.8};
    const auto back = parse_config(to_yaml(odd));
    CHECK(back.kernel.activity == odd.kernel.activity);
    CHECK(back.u == odd.u);
    CHECK(back.twoscale.q0 == odd.twoscale.q0);
}

TEST_CASE("unknown keys and bad values report the line") {
    CHECK(error_line("seed: 1\nnetwork:\n  n: 10\n  colour: red\n") == 4);
    CHECK(error_line("seed: 1\nbogus: 2\n") == 2);
    CHECK(error_line("network:\n  n: many\n") == 2);
    CHECK(error_line("kernel: [1, 2]\n") == 1);
    CHECK(error_line("seed: [1\n") > 0);
    CHECK_THROWS_WITH_AS(parse_config("experiment: nonsense\n"), doctest::Contains("nonsense"), ConfigError);
}

TEST_CASE("invariant violations are config errors") {
    CHECK_THROWS_WITH_AS(parse_config("grading:\n  mu_t: 0.4\n  mu_d: 0.5\n"), doctest::Contains("mu_T > mu_D"), ConfigError);
    CHECK_THROWS_AS(parse_config("initial:\n  truthful: 0.8\n  hallucinating: 0.4\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("experiment: sweep\nsweep:\n  trials: 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("experiment: optimize\noptimize:\n  alpha: 0.4\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("experiment: prop1\nprop1:\n  trials: 100\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("jobs: 0\n"), ConfigError);
}

TEST_CASE("environment overrides") {
    const std::string text = "seed: 1\nkernel:\n  beta0: 2\n";
    const auto c = parse_config_with_env(
        text, {{"LLMNET_SEED", "9"}, {"LLMNET_KERNEL__BETA0", "3.5"}, {"LLMNET_SWEEP__GRID", "[5, 10]"}, {"HOME", "/x"}});
    CHECK(c.seed == 9);
    CHECK(c.kernel.beta0 == 3.5);
    CHECK(c.sweep.grid == std::vector<double>{5, 10});
    CHECK_THROWS_WITH_AS(parse_config_with_env(text, {{"LLMNET_KERNEL__NOPE", "1"}}), doctest::Contains("LLMNET_KERNEL__NOPE"),
                         ConfigError);
    try {
        parse_config_with_env(text, {{"LLMNET_NETWORK__N", "ten"}});
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("LLMNET_NETWORK__N") != std::string::npos);
        CHECK(e.line() == 0);
    }
}

TEST_CASE("shipped configs parse and validate") {
    std::size_t n = 0;
    for (const auto& entry : fs::directory_iterator(fs::path(test::source_dir()) / "configs")) {
        CAPTURE(entry.path().string());
        CHECK_NOTHROW(load_config(entry.path().string()));
        ++n;
    }
    CHECK(n >= 9);
    CHECK_THROWS_AS(load_config(config_path("does_not_exist.yaml")), ConfigError);
}

TEST_CASE("invalid configs fail before any output is written") {
    const std::vector<std::pair<std::string, std::string>> mutations{
        {"LLMNET_NETWORK__N", "0"},
        {"LLMNET_KERNEL__ACTIVITY", "1.5"},
        {"LLMNET_INITIAL__TRUTHFUL", "-0.1"},
        {"LLMNET_GRADING__MU_H", "0.99"},
        {"LLMNET_JOBS", "0"},
    };
    const fs::path root = test::scratch_dir("config_failfast");
    for (const auto& entry : fs::directory_iterator(fs::path(test::source_dir()) / "configs")) {
        const std::string text = test::slurp(entry.path().string());
        for (const auto& [key, value] : mutations) {
            CAPTURE(entry.path().string());
            CAPTURE(key);
            CHECK_THROWS_AS(parse_config_with_env(text, {{key, value}}), ConfigError);
            // The same invalid config handed straight to the runner.
            ExperimentConfig c = load_config(entry.path().string());
            if (key == "LLMNET_NETWORK__N") c.network.n = 0;
            if (key == "LLMNET_KERNEL__ACTIVITY") c.kernel.activity = 1.5;
            if (key == "LLMNET_INITIAL__TRUTHFUL") c.initial.T = -0.1;
            if (key == "LLMNET_GRADING__MU_H") c.grading.mu_H = 0.99;
            if (key == "LLMNET_JOBS") c.jobs = 0;
            const fs::path out = root / (entry.path().stem().string() + key);
            const auto r = run_experiment(c, out.string());
            CHECK(r.exit_code == exit_config_error);
            CHECK_FALSE(r.error.empty());
            CHECK_FALSE(fs::exists(out));
        }
    }
}

TEST_CASE("reference lists every key with its default") {
    const std::string ref = config_reference();
    const std::string y = to_yaml(ExperimentConfig{});
    std::istringstream is(y);
    std::string line;
    std::size_t keys = 0;
    const std::regex key_re(R"(^\s*([a-z0-9_]+):)");
    while (std::getline(is, line)) {
        std::smatch m;
        REQUIRE(std::regex_search(line, m, key_re));
        CAPTURE(line);
        CHECK(ref.find(line) != std::string::npos);
        ++keys;
    }
    CHECK(keys > 60);
    CHECK(ref.find("LLMNET_") != std::string::npos);
}

TEST_CASE("experiment kind names") {
    for (auto k : all_experiment_kinds()) CHECK(experiment_kind_from_string(to_string(k)) == k);
    CHECK(all_experiment_kinds().size() == 9);
    CHECK(to_string(ExperimentKind::reconfig_bench) == "reconfig-bench");
}
