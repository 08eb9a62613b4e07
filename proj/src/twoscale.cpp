#include "llmnet/twoscale.hpp"

#include "llmnet/errors.hpp"
#include "llmnet/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>

namespace llmnet {

namespace {

constexpr std::size_t T = idx(LatentState::T);
constexpr std::size_t H = idx(LatentState::H);

Eigen::VectorXd to_vector(const DegreeDistribution& q) {
    return Eigen::Map<const Eigen::VectorXd>(q.probs.data(), static_cast<Eigen::Index>(q.probs.size()));
}

DegreeDistribution from_vector(const Eigen::VectorXd& v) {
    return DegreeDistribution{std::vector<double>(v.data(), v.data() + v.size())};
}

Eigen::VectorXd slow_rhs(const SlowDynamics& slow, const MeanFieldState& rho, const Eigen::VectorXd& q) {
    const DegreeDistribution qd = from_vector(q);
    const Eigen::MatrixXd Hm = slow.eval(rho, qd);
    if (Hm.rows() != q.size() || Hm.cols() != q.size())
        throw ValidationError("slow dynamics returned a " + std::to_string(Hm.rows()) + "x" +
                              std::to_string(Hm.cols()) + " matrix for " + std::to_string(q.size()) + " classes");
    return Hm * q;
}

// Clip and divide; returns the pre-renormalisation drift.
double renormalize_q(Eigen::VectorXd& q) {
    const double drift = std::abs(q.sum() - 1.0);
    const double lowest = q.minCoeff();
    q = q.cwiseMax(0.0);
    const double s = q.sum();
    if (s <= 0.0) throw NumericalError("degree distribution collapsed to zero");
    q /= s;
    return std::max(drift, -lowest);
}

void check_q_drift(double drift, double t) {
    if (drift > 1e-9)
        throw NumericalError("slow step rejected at t=" + std::to_string(t) + ": simplex drift " +
                             std::to_string(drift) + " exceeds 1e-9");
}

} // namespace

void BirthDeathParams::validate() const {
    if (!(lambda_add >= 0.0) || !(lambda_remove >= 0.0))
        throw ValidationError("birth-death rates must be >= 0");
}

BirthDeathDynamics::BirthDeathDynamics(BirthDeathParams params) : params_(params) { params_.validate(); }

Eigen::MatrixXd BirthDeathDynamics::eval(const MeanFieldState& state, const DegreeDistribution& q) const {
    const auto n = static_cast<Eigen::Index>(q.probs.size());
    if (static_cast<Eigen::Index>(state.size()) != n)
        throw ValidationError("birth-death dynamics: state and degree distribution lengths differ");
    const double rho_T = std::clamp(state.aggregate(q)[T], 0.0, 1.0);
    const double theta_H = std::clamp(compute_theta(q, state).H, 0.0, 1.0);
    const double up = params_.lambda_add * rho_T;
    const double down = params_.lambda_remove * theta_H;
    Eigen::MatrixXd Hm = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index l = 0; l < n; ++l) {
        if (l + 1 < n) {
            Hm(l + 1, l) += up;
            Hm(l, l) -= up;
        }
        if (l > 0) {
            Hm(l - 1, l) += down;
            Hm(l, l) -= down;
        }
    }
    return Hm;
}

TableSlowDynamics::TableSlowDynamics(Eigen::MatrixXd H) : H_(std::move(H)) {
    if (H_.rows() != H_.cols()) throw ValidationError("slow generator must be square");
    validate_generator(H_);
}

void validate_generator(const Eigen::MatrixXd& Hm, double tol) {
    for (Eigen::Index c = 0; c < Hm.cols(); ++c) {
        for (Eigen::Index r = 0; r < Hm.rows(); ++r)
            if (r != c && Hm(r, c) < 0.0)
                throw ValidationError("slow generator has a negative off-diagonal entry at (" + std::to_string(r) +
                                      "," + std::to_string(c) + ")");
        if (std::abs(Hm.col(c).sum()) > tol)
            throw ValidationError("slow generator column " + std::to_string(c) + " does not sum to 0");
    }
}

void TwoScaleConfig::validate() const {
    if (!(epsilon > 0.0)) throw ValidationError("two-scale config: epsilon must be > 0");
    if (!(t_end >= 0.0)) throw ValidationError("two-scale config: t_end must be >= 0");
    if (!(dt_slow > 0.0)) throw ValidationError("two-scale config: dt_slow must be > 0");
    if (dt_fast < 0.0) throw ValidationError("two-scale config: dt_fast must be >= 0");
    if (dt_fast > epsilon * dt_slow * (1.0 + 1e-12))
        throw ValidationError("two-scale config: dt_fast must not exceed epsilon * dt_slow");
}

double TwoScaleConfig::fast_step() const {
    const double target = dt_fast > 0.0 ? dt_fast : epsilon * dt_slow;
    // Whole number of fast steps per slow sample.
    const double per = std::ceil(dt_slow / target - 1e-9);
    return dt_slow / per;
}

TwoScaleTrajectory integrate_coupled(const MeanFieldState& rho0, const DegreeDistribution& q0, double u,
                                     const TransitionKernel& kernel, const SlowDynamics& slow,
                                     const TwoScaleConfig& cfg) {
    cfg.validate();
    q0.validate();
    rho0.validate();
    if (rho0.size() != q0.probs.size())
        throw ValidationError("integrate_coupled: rho0 and q0 have different numbers of classes");

    FastField field(q0, kernel, u);
    const double h = cfg.fast_step();
    const auto per_sample = static_cast<std::size_t>(std::llround(cfg.dt_slow / h));
    const auto samples = static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt_slow));
    const double inv_eps = 1.0 / cfg.epsilon;
    const std::size_t n = rho0.size();

    TwoScaleTrajectory traj;
    MeanFieldState rho = rho0;
    Eigen::VectorXd q = to_vector(q0);
    traj.times.push_back(0.0);
    traj.q.push_back(q0);
    traj.rho.push_back(rho);

    MeanFieldState kr[4], tmp;
    Eigen::VectorXd kq[4];
    auto stage = [&](const MeanFieldState& r, const Eigen::VectorXd& qq, int s) {
        field.set_degree_distribution(from_vector(qq));
        field.evaluate(r, kr[s]);
        for (auto& d : kr[s].classes)
            for (double& v : d) v *= inv_eps;
        kq[s] = slow_rhs(slow, r, qq);
    };
    auto shifted = [&](int s, double c, Eigen::VectorXd& qq) {
        tmp = rho;
        for (std::size_t l = 0; l < n; ++l)
            for (std::size_t z = 0; z < kStates; ++z) tmp.classes[l][z] += c * kr[s].classes[l][z];
        qq = q + c * kq[s];
    };

    std::size_t step = 0;
    for (std::size_t k = 1; k <= samples; ++k) {
        for (std::size_t m = 0; m < per_sample; ++m, ++step) {
            Eigen::VectorXd qq;
            stage(rho, q, 0);
            shifted(0, 0.5 * h, qq);
            stage(tmp, qq, 1);
            shifted(1, 0.5 * h, qq);
            stage(tmp, qq, 2);
            shifted(2, h, qq);
            stage(tmp, qq, 3);
            double drift = 0.0;
            for (std::size_t l = 0; l < n; ++l) {
                auto& d = rho.classes[l];
                for (std::size_t z = 0; z < kStates; ++z)
                    d[z] += h / 6.0 *
                            (kr[0].classes[l][z] + 2.0 * kr[1].classes[l][z] + 2.0 * kr[2].classes[l][z] +
                             kr[3].classes[l][z]);
                drift = std::max(drift, renormalize(d));
            }
            const double t = static_cast<double>(step + 1) * h;
            if (drift > 1e-6)
                throw NumericalError("fast step rejected at t=" + std::to_string(t) + ": simplex drift " +
                                     std::to_string(drift) + " exceeds 1e-6");
            q += h / 6.0 * (kq[0] + 2.0 * kq[1] + 2.0 * kq[2] + kq[3]);
            check_q_drift(renormalize_q(q), t);
        }
        traj.times.push_back(static_cast<double>(k) * cfg.dt_slow);
        traj.q.push_back(from_vector(q));
        traj.rho.push_back(rho);
    }
    return traj;
}

TwoScaleTrajectory integrate_reduced(const DegreeDistribution& q0, double u, const TransitionKernel& kernel,
                                     const SlowDynamics& slow, double t_end, double dt, double tol) {
    if (!(dt > 0.0)) throw ValidationError("integrate_reduced: dt must be > 0");
    if (!(t_end >= 0.0)) throw ValidationError("integrate_reduced: t_end must be >= 0");
    q0.validate();
    FastField field(q0, kernel, u);
    MeanFieldState warm;
    bool have_warm = false;

    auto psi = [&](const Eigen::VectorXd& q, double t) {
        field.set_degree_distribution(from_vector(q));
        try {
            QuasiSteadyResult r = solve_quasi_steady(field, tol, 10000, have_warm ? &warm : nullptr);
            warm = r.state;
            have_warm = true;
            return r.state;
        } catch (const NumericalError&) {
            if (!have_warm) throw NumericalError("quasi-steady solve failed at t=" + std::to_string(t));
        }
        try {
            QuasiSteadyResult r = solve_quasi_steady(field, tol, 10000, nullptr);
            warm = r.state;
            return r.state;
        } catch (const NumericalError& e) {
            throw NumericalError("quasi-steady solve failed at t=" + std::to_string(t) + ": " + e.what());
        }
    };

    const auto steps = static_cast<std::size_t>(std::llround(t_end / dt));
    Eigen::VectorXd q = to_vector(q0);
    TwoScaleTrajectory traj;
    MeanFieldState rho = psi(q, 0.0);
    traj.times.push_back(0.0);
    traj.q.push_back(q0);
    traj.rho.push_back(rho);
    for (std::size_t s = 1; s <= steps; ++s) {
        const double t = static_cast<double>(s - 1) * dt;
        const Eigen::VectorXd k1 = slow_rhs(slow, rho, q);
        Eigen::VectorXd qq = q + 0.5 * dt * k1;
        const Eigen::VectorXd k2 = slow_rhs(slow, psi(qq, t + 0.5 * dt), qq);
        qq = q + 0.5 * dt * k2;
        const Eigen::VectorXd k3 = slow_rhs(slow, psi(qq, t + 0.5 * dt), qq);
        qq = q + dt * k3;
        const Eigen::VectorXd k4 = slow_rhs(slow, psi(qq, t + dt), qq);
        q += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        check_q_drift(renormalize_q(q), t + dt);
        rho = psi(q, t + dt);
        traj.times.push_back(static_cast<double>(s) * dt);
        traj.q.push_back(from_vector(q));
        traj.rho.push_back(rho);
    }
    return traj;
}

void TwoScaleScenario::validate() const {
    q0.validate();
    kernel.validate();
    slow.validate();
    if (!(t_end > 0.0)) throw ValidationError("two-scale scenario: t_end must be > 0");
    if (!(dt_slow > 0.0)) throw ValidationError("two-scale scenario: dt_slow must be > 0");
    if (!(boundary_layer >= 0.0)) throw ValidationError("two-scale scenario: boundary_layer must be >= 0");
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("loglog_slope: need at least two paired points");
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw ValidationError("loglog_slope: values must be > 0");
        mx += std::log(x[k]);
        my += std::log(y[k]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double dx = std::log(x[k]) - mx;
        sxy += dx * (std::log(y[k]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0.0) throw ValidationError("loglog_slope: x values are all equal");
    return sxy / sxx;
}

ScalingResult epsilon_scaling_experiment(const std::vector<double>& eps_list, const TwoScaleScenario& scenario,
                                         unsigned jobs) {
    scenario.validate();
    if (eps_list.empty()) throw ValidationError("epsilon_scaling_experiment: empty epsilon list");
    for (std::size_t k = 0; k < eps_list.size(); ++k) {
        if (!(eps_list[k] > 0.0)) throw ValidationError("epsilon_scaling_experiment: epsilons must be > 0");
        if (k > 0 && !(eps_list[k] < eps_list[k - 1]))
            throw ValidationError("epsilon_scaling_experiment: epsilons must be sorted descending");
    }
    const LogisticKernel kernel(scenario.kernel);
    const BirthDeathDynamics slow(scenario.slow);
    const TwoScaleTrajectory reduced =
        integrate_reduced(scenario.q0, scenario.u, kernel, slow, scenario.t_end, scenario.dt_slow);

    ScalingResult result;
    result.rows.resize(eps_list.size());
    parallel_for(eps_list.size(), jobs, [&](std::size_t k) {
        TwoScaleConfig cfg;
        cfg.epsilon = eps_list[k];
        cfg.t_end = scenario.t_end;
        cfg.dt_slow = scenario.dt_slow;
        const TwoScaleTrajectory coupled =
            integrate_coupled(reduced.rho.front(), scenario.q0, scenario.u, kernel, slow, cfg);
        ScalingRow row;
        row.epsilon = cfg.epsilon;
        const double t0 = scenario.boundary_layer * cfg.epsilon;
        for (std::size_t s = 0; s < coupled.times.size(); ++s) {
            if (coupled.times[s] < t0 - 1e-12) continue;
            for (std::size_t l = 0; l < scenario.q0.probs.size(); ++l) {
                row.e_q = std::max(row.e_q, std::abs(coupled.q[s].probs[l] - reduced.q[s].probs[l]));
                for (std::size_t z = 0; z < kStates; ++z)
                    row.e_rho = std::max(row.e_rho, std::abs(coupled.rho[s].classes[l][z] - reduced.rho[s].classes[l][z]));
            }
        }
        result.rows[k] = row;
    });
    if (result.rows.size() >= 2) {
        std::vector<double> x, y;
        for (const auto& r : result.rows)
            if (r.e_q > 0.0) {
                x.push_back(r.epsilon);
                y.push_back(r.e_q);
            }
        result.slope = x.size() >= 2 ? loglog_slope(x, y) : std::nan("");
    } else {
        result.slope = std::nan("");
    }
    return result;
}

void write_scaling_csv(const ScalingResult& result, std::ostream& os) {
    os << "epsilon,e_q,e_rho\n" << std::setprecision(12);
    for (const auto& r : result.rows) os << r.epsilon << ',' << r.e_q << ',' << r.e_rho << '\n';
    os << "slope," << result.slope << ",\n";
}

void write_twoscale_csv(const TwoScaleTrajectory& traj, std::ostream& os) {
    os << "t,l,q,rho_T,rho_H,rho_D\n" << std::setprecision(12);
    for (std::size_t s = 0; s < traj.times.size(); ++s)
        for (std::size_t l = 0; l < traj.q[s].probs.size(); ++l) {
            const auto& d = traj.rho[s].classes[l];
            os << traj.times[s] << ',' << l << ',' << traj.q[s].probs[l] << ',' << d[T] << ',' << d[H] << ','
               << d[2] << '\n';
        }
}

} // namespace llmnet
