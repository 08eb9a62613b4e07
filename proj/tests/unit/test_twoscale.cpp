#include "helpers.hpp"

#include "llmnet/errors.hpp"
#include "llmnet/twoscale.hpp"

#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>
#include <sstream>

using namespace llmnet;

namespace {

DegreeDistribution scan_q0() { return {{0.1, 0.4, 0.25, 0.15, 0.1, 0.0, 0.0}}; }

Eigen::MatrixXd random_generator(std::mt19937_64& rng, Eigen::Index n) {
    std::uniform_real_distribution<double> rate(0.0, 0.6);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index c = 0; c < n; ++c)
        for (Eigen::Index r = 0; r < n; ++r)
            if (r != c) H(r, c) = rate(rng), H(c, c) -= H(r, c);
    return H;
}

double max_gap(const DegreeDistribution& a, const DegreeDistribution& b) {
    double g = 0.0;
    for (std::size_t l = 0; l < a.probs.size(); ++l) g = std::max(g, std::abs(a.probs[l] - b.probs[l]));
    return g;
}

} // namespace

TEST_CASE("frozen degree distribution reduces to the fast system on the stretched clock") {
    const LogisticKernel k(LogisticKernelParams{});
    const auto q0 = scan_q0();
    std::mt19937_64 rng(1);
    const auto rho0 = test::random_state(rng, 7);
    const TableSlowDynamics none(Eigen::MatrixXd::Zero(7, 7));
    TwoScaleConfig cfg;
    cfg.epsilon = 0.1;
    cfg.t_end = 1.0;
    cfg.dt_slow = 0.05;
    const auto coupled = integrate_coupled(rho0, q0, 20.0, k, none, cfg);
    const double h = cfg.fast_step() / cfg.epsilon;
    const auto per = static_cast<std::size_t>(std::llround(cfg.dt_slow / cfg.fast_step()));
    const auto fast = integrate_fast(rho0, q0, 20.0, k, cfg.t_end / cfg.epsilon, h, per);
    REQUIRE(fast.states.size() == coupled.rho.size());
    for (std::size_t s = 0; s < coupled.rho.size(); ++s) {
        CHECK(coupled.q[s].probs == q0.probs);
        for (std::size_t l = 0; l < 7; ++l)
            for (std::size_t z = 0; z < 3; ++z)
                CHECK(std::abs(coupled.rho[s].classes[l][z] - fast.states[s].classes[l][z]) <= 1e-10);
    }
}

TEST_CASE("frozen latent state gives the matrix exponential for q") {
    // Identity kernel: F = 0, so q(t) = exp(H t) q0 on five classes.
    const FunctionKernel identity([](double, int, int, int) {
        return Mat3{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    });
    std::mt19937_64 rng(2);
    const Eigen::MatrixXd H = random_generator(rng, 5);
    const TableSlowDynamics slow(H);
    const DegreeDistribution q0{{0.3, 0.1, 0.2, 0.25, 0.15}};
    const auto rho0 = test::random_state(rng, 5);
    TwoScaleConfig cfg;
    cfg.epsilon = 0.05;
    cfg.t_end = 3.0;
    cfg.dt_slow = 0.01;
    const auto traj = integrate_coupled(rho0, q0, 20.0, identity, slow, cfg);
    Eigen::VectorXd v0(5);
    for (int l = 0; l < 5; ++l) v0[l] = q0.probs[static_cast<std::size_t>(l)];
    for (std::size_t s = 0; s < traj.times.size(); s += 10) {
        const Eigen::VectorXd expect = (H * traj.times[s]).exp() * v0;
        for (int l = 0; l < 5; ++l)
            CHECK(std::abs(traj.q[s].probs[static_cast<std::size_t>(l)] - expect[l]) <= 1e-9);
        for (std::size_t l = 0; l < 5; ++l)
            for (std::size_t z = 0; z < 3; ++z) CHECK(std::abs(traj.rho[s].classes[l][z] - rho0.classes[l][z]) <= 1e-14);
    }
}

TEST_CASE("birth-death generator conserves mass") {
    std::mt19937_64 rng(3);
    const BirthDeathDynamics bd({0.7, 0.4});
    for (int draw = 0; draw < 20; ++draw) {
        const auto q = test::random_q(rng, 6);
        const auto s = test::random_state(rng, 7);
        const Eigen::MatrixXd H = bd.eval(s, q);
        CHECK_NOTHROW(validate_generator(H));
        CHECK((H.colwise().sum()).cwiseAbs().maxCoeff() <= 1e-12);
    }
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 3);
    bad(1, 0) = 0.5;
    CHECK_THROWS_AS(validate_generator(bad), ValidationError);
    bad(0, 0) = -0.5;
    bad(2, 1) = -0.1;
    bad(1, 1) = 0.1;
    CHECK_THROWS_AS(validate_generator(bad), ValidationError);
    CHECK_THROWS_AS(BirthDeathDynamics({-1.0, 0.5}), ValidationError);
}

TEST_CASE("two-scale config validation") {
    TwoScaleConfig cfg;
    cfg.epsilon = 0.01;
    cfg.dt_slow = 0.05;
    cfg.dt_fast = 0.001;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.dt_fast = 0.0;
    CHECK(cfg.fast_step() == doctest::Approx(0.0005));
    cfg.epsilon = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("reduced system with frozen q stays at the quasi-steady state") {
    const LogisticKernel k(LogisticKernelParams{});
    const auto q0 = scan_q0();
    const TableSlowDynamics none(Eigen::MatrixXd::Zero(7, 7));
    const auto traj = integrate_reduced(q0, 20.0, k, none, 1.0, 0.1);
    const auto psi = solve_quasi_steady(q0, 20.0, k);
    for (std::size_t s = 0; s < traj.times.size(); ++s) {
        CHECK(traj.q[s].probs == q0.probs);
        for (std::size_t l = 0; l < 7; ++l)
            for (std::size_t z = 0; z < 3; ++z)
                CHECK(std::abs(traj.rho[s].classes[l][z] - psi.state.classes[l][z]) <= 1e-11);
    }
}

TEST_CASE("reduced trajectory is quasi-steady at every sample") {
    LogisticKernelParams p;
    p.activity = 0.3;
    const LogisticKernel k(p);
    const BirthDeathDynamics bd({0.5, 0.5});
    const auto traj = integrate_reduced(scan_q0(), 20.0, k, bd, 4.0, 0.05, 1e-12);
    for (std::size_t s = 0; s < traj.times.size(); ++s) {
        const FastField field(traj.q[s], k, 20.0);
        CHECK(quasi_steady_residual(field, traj.rho[s]) <= 1e-12);
        double mass = 0.0;
        for (double v : traj.q[s].probs) mass += v;
        CHECK(std::abs(mass - 1.0) <= 1e-9);
    }
}

TEST_CASE("coupled trajectory tracks the reduced one within two epsilon") {
    const LogisticKernel k(test::absorbing_params(0.3));
    const BirthDeathDynamics bd({0.5, 0.5});
    const auto q0 = scan_q0();
    const double eps = 0.01;
    const auto psi0 = solve_quasi_steady(q0, 20.0, k);
    TwoScaleConfig cfg;
    cfg.epsilon = eps;
    cfg.t_end = 4.0;
    cfg.dt_slow = 0.05;
    const auto coupled = integrate_coupled(psi0.state, q0, 20.0, k, bd, cfg);
    const auto reduced = integrate_reduced(q0, 20.0, k, bd, 4.0, 0.05);
    REQUIRE(coupled.q.size() == reduced.q.size());
    for (std::size_t s = 0; s < coupled.q.size(); ++s) CHECK(max_gap(coupled.q[s], reduced.q[s]) <= 2 * eps);
}

TEST_CASE("coupled start at O(epsilon) from the slow manifold") {
    LogisticKernelParams p;
    p.activity = 0.3;
    const LogisticKernel k(p);
    const BirthDeathDynamics bd({0.5, 0.5});
    const auto q0 = scan_q0();
    const auto reduced = integrate_reduced(q0, 20.0, k, bd, 4.0, 0.05);
    for (double eps : {0.03, 0.01}) {
        auto rho0 = solve_quasi_steady(q0, 20.0, k).state;
        for (auto& c : rho0.classes) {
            const double shift = std::min(eps, c[0]);
            c[0] -= shift;
            c[1] += shift;
        }
        TwoScaleConfig cfg;
        cfg.epsilon = eps;
        cfg.t_end = 4.0;
        cfg.dt_slow = 0.05;
        const auto coupled = integrate_coupled(rho0, q0, 20.0, k, bd, cfg);
        double gap = 0.0;
        for (std::size_t s = 0; s < coupled.q.size(); ++s) gap = std::max(gap, max_gap(coupled.q[s], reduced.q[s]));
        CHECK(gap <= eps);
    }
}

TEST_CASE("epsilon scan at large epsilon still reports finite errors") {
    TwoScaleScenario sc;
    sc.q0 = scan_q0();
    sc.kernel.activity = 0.3;
    sc.t_end = 2.0;
    const auto res = epsilon_scaling_experiment({1.0, 0.1}, sc);
    REQUIRE(res.rows.size() == 2);
    for (const auto& r : res.rows) {
        CHECK(std::isfinite(r.e_q));
        CHECK(std::isfinite(r.e_rho));
    }
    std::stringstream ss;
    write_scaling_csv(res, ss);
    std::string line, last;
    std::getline(ss, line);
    CHECK(line == "epsilon,e_q,e_rho");
    while (std::getline(ss, line)) last = line;
    CHECK(last.rfind("slope,", 0) == 0);
}

TEST_CASE("epsilon scan is independent of the worker count") {
    TwoScaleScenario sc;
    sc.q0 = scan_q0();
    sc.kernel.activity = 0.3;
    sc.t_end = 1.0;
    const auto a = epsilon_scaling_experiment({0.1, 0.03, 0.01}, sc, 1);
    const auto b = epsilon_scaling_experiment({0.1, 0.03, 0.01}, sc, 3);
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(a.rows[r].e_q == b.rows[r].e_q);
        CHECK(a.rows[r].e_rho == b.rows[r].e_rho);
    }
    CHECK(a.slope == b.slope);
}

TEST_CASE("log-log slope of an exact power") {
    const std::vector<double> x{0.1, 0.03, 0.01, 0.003};
    std::vector<double> y;
    for (double v : x) y.push_back(3.0 * std::pow(v, 1.5));
    CHECK(loglog_slope(x, y) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK_THROWS_AS(loglog_slope({0.1}, {0.2}), ValidationError);
}
