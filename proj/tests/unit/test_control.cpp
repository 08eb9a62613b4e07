#include "helpers.hpp"

#include "llmnet/control.hpp"
#include "llmnet/errors.hpp"
#include "llmnet/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace llmnet;

namespace {

double quadratic(double u, std::uint64_t) { return (u - 20.0) * (u - 20.0); }

// Smooth quality curve peaking at u = 20 plus per-episode noise.
double synthetic_episode(double u, std::uint64_t scenario, std::uint64_t sim) {
    const double d = (u - 20.0) / 15.0;
    const double rho_T = 0.85 * std::exp(-0.5 * d * d) + 0.02 * counter_uniform(scenario, {1});
    const double noise = 0.01 * (counter_uniform(sim, {2}) - 0.5);
    return combine_cost(3.0 * u * 1000.0, rho_T, CostWeights{}) + noise;
}

double moving_average(const std::vector<TraceRow>& rows, std::size_t end, std::size_t w) {
    double s = 0.0;
    for (std::size_t k = end + 1 - w; k <= end; ++k) s += rows[k].train_cost;
    return s / static_cast<double>(w);
}

} // namespace

TEST_CASE("cost examples") {
    const LinearCommCost lin;
    CostWeights w;
    w.xi_c = 0.0;
    CHECK(evaluate_cost({DegreeDistribution{{0.2, 0.8}}}, 1.0, 20.0, w, lin) == 0.0);
    w.xi_c = 1.0;
    w.xi_a = 0.0;
    CHECK(evaluate_cost({DegreeDistribution{{0, 0, 0, 1}}}, 0.5, 10.0, w, lin) == 30.0);
}

TEST_CASE("cost is linear in each weight") {
    const LinearCommCost lin;
    const std::vector<DegreeDistribution> traj{test::power_law_q(2.5, 6), test::power_law_q(2.0, 6)};
    CostWeights base;
    base.xi_c = 2e-6;
    base.xi_a = 0.7;
    const double c0 = evaluate_cost(traj, 0.8, 25.0, base, lin);
    const double comm = communication_cost(traj, 25.0, lin);
    CHECK(c0 == doctest::Approx(2e-6 * comm + 0.7 * 0.2));
    for (double s : {0.5, 2.0, 7.0}) {
        CostWeights scaled_c = base, scaled_a = base;
        scaled_c.xi_c *= s;
        scaled_a.xi_a *= s;
        const double dc = evaluate_cost(traj, 0.8, 25.0, scaled_c, lin) - c0;
        const double da = evaluate_cost(traj, 0.8, 25.0, scaled_a, lin) - c0;
        CHECK(dc == doctest::Approx((s - 1) * 2e-6 * comm));
        CHECK(da == doctest::Approx((s - 1) * 0.7 * 0.2));
    }
    CostWeights flipped = base;
    flipped.subtract_accuracy = true;
    CHECK(evaluate_cost(traj, 0.8, 25.0, flipped, lin) == doctest::Approx(2e-6 * comm - 0.7 * 0.2));
}

TEST_CASE("accuracy dominates until token cost reaches a million times the shortfall") {
    // With xi_c / xi_a = 1e-6 the two terms balance when tokens = 1e6 * (1 - rho_T).
    const CostWeights w;
    CHECK(w.xi_c / w.xi_a == doctest::Approx(1e-6));
    const double shortfall = 0.1;
    CHECK(combine_cost(0.5e6 * shortfall, 0.9, w) < 2 * w.xi_a * shortfall);
    CHECK(combine_cost(1e6 * shortfall, 0.9, w) == doctest::Approx(2 * w.xi_a * shortfall));
}

TEST_CASE("table communication cost") {
    const TableCommCost tab({0.0, 1.0, 1.5}, {0.0, 2.0, 0.0});
    CHECK(tab.eval(1, 10.0) == 12.0);
    CHECK(tab.eval(2, 10.0) == 15.0);
    CHECK(tab.eval(3, 10.0) == 15.0);
    CHECK_THROWS_AS(tab.eval(-1, 10.0), ValidationError);
    CHECK_THROWS_AS(TableCommCost({1.0}, {1.0, 2.0}), ValidationError);
}

TEST_CASE("weights and schedule validation") {
    CostWeights w;
    w.xi_a = 0.0;
    CHECK_THROWS_AS(w.validate(), ValidationError);
    SpsaSchedule s;
    s.alpha = 0.5;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = {};
    s.gamma = 0.9;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = {};
    CHECK_NOTHROW(s.validate());
}

TEST_CASE("SPSA converges on a noiseless quadratic") {
    SpsaSchedule s;
    s.a0 = 0.3;
    double u = 45.0;
    for (std::size_t k = 0; k < 50; ++k) u = spsa_step(u, k, s, quadratic, 1).u_next;
    CHECK(std::abs(u - 20.0) <= 0.5);
}

TEST_CASE("default schedule approaches the minimum monotonically") {
    // Quadratic on the cost scale of the calibration landscape.
    const SpsaSchedule s;
    const auto scaled = [](double u, std::uint64_t) { return 1e-4 * (u - 20.0) * (u - 20.0); };
    double u = 45.0, prev = std::abs(u - 20.0);
    for (std::size_t k = 0; k < 50; ++k) {
        u = spsa_step(u, k, s, scaled, 2).u_next;
        if (k >= 5) CHECK(std::abs(u - 20.0) <= prev);
        prev = std::abs(u - 20.0);
    }
}

TEST_CASE("flat oracle leaves u unchanged") {
    const SpsaSchedule s;
    const auto step = spsa_step(33.0, 4, s, [](double, std::uint64_t) { return 1.5; }, 3);
    CHECK(step.u_next == 33.0);
    CHECK(step.g_hat == 0.0);
}

TEST_CASE("updates are clipped to the control bounds") {
    const SpsaSchedule s;
    const auto step = spsa_step(6.0, 0, s, [](double u, std::uint64_t) { return 100.0 * u; }, 3);
    CHECK(step.u_next == s.u_min);
    const auto up = spsa_step(59.0, 0, s, [](double u, std::uint64_t) { return -100.0 * u; }, 3);
    CHECK(up.u_next == s.u_max);
}

TEST_CASE("forced positive perturbation is a finite-difference descent") {
    SpsaSchedule s;
    s.a0 = 0.2;
    double u = 45.0, hand = 45.0;
    for (std::size_t k = 0; k < 20; ++k) {
        u = spsa_step(u, k, s, quadratic, 4, +1).u_next;
        const double a = s.a0 / std::pow(k + 1.0, s.alpha), c = s.c0 / std::pow(k + 1.0, s.gamma);
        const double g = (quadratic(hand + c, 0) - quadratic(hand - c, 0)) / (2 * c);
        hand = std::clamp(hand - a * g, s.u_min, s.u_max);
        CHECK(u == doctest::Approx(hand).epsilon(1e-14));
    }
}

TEST_CASE("both evaluations share one simulation seed") {
    std::vector<std::uint64_t> seeds;
    const auto rec = [&](double, std::uint64_t sim) {
        seeds.push_back(sim);
        return 0.0;
    };
    const SpsaSchedule s;
    spsa_step(30.0, 3, s, rec, 9);
    spsa_step(30.0, 4, s, rec, 9);
    REQUIRE(seeds.size() == 4);
    CHECK(seeds[0] == seeds[1]);
    CHECK(seeds[2] == seeds[3]);
    CHECK(seeds[0] != seeds[2]);
}

TEST_CASE("oracle failure keeps u and is logged") {
    std::vector<std::string> log;
    const SpsaSchedule s;
    const auto step = spsa_step(
        30.0, 0, s, [](double, std::uint64_t) -> double { throw std::runtime_error("episode crashed"); }, 1, 0,
        [&](const std::string& m) { log.push_back(m); });
    CHECK(step.failed);
    CHECK(step.u_next == 30.0);
    REQUIRE(log.size() == 1);
    CHECK(log[0].find("episode crashed") != std::string::npos);
}

TEST_CASE("optimizer on a synthetic landscape peaking near 20") {
    const std::vector<std::uint64_t> train{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    const std::vector<std::uint64_t> eval{10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
    // Grid search of the mean eval cost locates the minimiser first.
    double best_u = 0.0, best = 1e9;
    for (double u = 5.0; u <= 60.0; u += 1.0) {
        double c = 0.0;
        for (auto s : eval) c += synthetic_episode(u, s, 0);
        if (c < best) best = c, best_u = u;
    }
    CHECK(std::abs(best_u - 20.0) <= 2.0);

    const SpsaSchedule sched;
    const auto trace = optimize(45.0, sched, synthetic_episode, train, eval, 5, 2);
    REQUIRE(trace.rows.size() == 51);
    CHECK(trace.rows[0].u == 45.0);
    CHECK(trace.rows[0].token_limit == 45);
    const double u50 = trace.rows.back().u;
    CHECK(u50 >= 14.0);
    CHECK(u50 <= 26.0);
    for (std::size_t k = 10; k < trace.rows.size(); ++k)
        CHECK(moving_average(trace.rows, k, 10) <= moving_average(trace.rows, k - 1, 10));
    CHECK(trace.rows.back().eval_cost <= trace.rows.front().eval_cost);

    const auto again = optimize(45.0, sched, synthetic_episode, train, eval, 5, 1);
    for (std::size_t k = 0; k < trace.rows.size(); ++k) {
        CHECK(again.rows[k].u == trace.rows[k].u);
        CHECK(again.rows[k].train_cost == trace.rows[k].train_cost);
    }
    std::stringstream ss;
    write_trace_csv(trace, ss);
    std::string header;
    std::getline(ss, header);
    CHECK(header.rfind("step,u,", 0) == 0);
    CHECK(header.find("train_cost,eval_cost,g_hat,a_k,c_k") != std::string::npos);
}

TEST_CASE("optimizer rejects empty scenario sets") {
    CHECK_THROWS_AS(optimize(45.0, {}, synthetic_episode, {}, {1}, 1), ValidationError);
    CHECK_THROWS_AS(optimize(70.0, {}, synthetic_episode, {1}, {1}, 1), ValidationError);
}

TEST_CASE("control sweep on a small network") {
    ControlScenario sc;
    sc.abm.network.n = 60;
    sc.rounds = 100;
    const LinearCommCost lin;
    const auto rows = control_sweep({5, 20, 40}, sc, lin, 5, 3, 2);
    REQUIRE(rows.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(rows[r].n_trials == 5);
        CHECK(rows[r].rho_T.size() == 5);
        CHECK(rows[r].token_cost.size() == 5);
        if (r) CHECK(rows[r].token_cost_mean > rows[r - 1].token_cost_mean);
    }
    const auto again = control_sweep({5, 20, 40}, sc, lin, 5, 3, 1);
    for (std::size_t r = 0; r < 3; ++r) CHECK(again[r].rho_T == rows[r].rho_T);
    std::stringstream ss;
    write_sweep_csv(rows, ss);
    std::string header;
    std::getline(ss, header);
    CHECK(header == "u,rho_T_mean,rho_H_mean,token_cost_mean,n_trials");
    CHECK_THROWS_AS(control_sweep({20}, sc, lin, 2, 3), ValidationError);
}

TEST_CASE("episode outcome is consistent with its cost") {
    ControlScenario sc;
    sc.abm.network.n = 50;
    sc.rounds = 50;
    const LinearCommCost lin;
    const auto o = run_episode(sc, lin, 20.0, 1, 2);
    CHECK(o.cost == doctest::Approx(combine_cost(o.token_cost, o.rho_T, sc.weights)));
    CHECK(o.token_cost > 0.0);
    const auto fn = make_episode(sc, std::make_shared<LinearCommCost>());
    CHECK(fn(20.0, 1, 2) == o.cost);
}
