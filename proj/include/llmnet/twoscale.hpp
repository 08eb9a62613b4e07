#pragma once

#include "llmnet/graph.hpp"
#include "llmnet/kernel.hpp"
#include "llmnet/meanfield.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace llmnet {

/// Slow dynamics of the degree distribution, dq/dt = H(rho, q) q. H is a
/// generator with non-negative off-diagonals and zero column sums, so the
/// flow conserves sum_l q_l.
class SlowDynamics {
public:
    virtual ~SlowDynamics() = default;
    virtual Eigen::MatrixXd eval(const MeanFieldState& state, const DegreeDistribution& q) const = 0;
};

struct BirthDeathParams {
    double lambda_add = 0.5;
    double lambda_remove = 0.5;

    void validate() const;
};

/// Mean-field shadow of the reputation-driven rewiring. A node in class l
/// gains a source at rate lambda_add * rho_T (the share of nodes that would
/// pass the add threshold) and, for l > 0, loses one at rate
/// lambda_remove * theta_H (the share of its links that point at
/// hallucinating nodes). Classes are capped at the length of q.
class BirthDeathDynamics final : public SlowDynamics {
public:
    explicit BirthDeathDynamics(BirthDeathParams params);
    const BirthDeathParams& params() const { return params_; }
    Eigen::MatrixXd eval(const MeanFieldState& state, const DegreeDistribution& q) const override;

private:
    BirthDeathParams params_;
};

/// A fixed user-supplied generator.
class TableSlowDynamics final : public SlowDynamics {
public:
    explicit TableSlowDynamics(Eigen::MatrixXd H);
    Eigen::MatrixXd eval(const MeanFieldState&, const DegreeDistribution&) const override { return H_; }

private:
    Eigen::MatrixXd H_;
};

class FunctionSlowDynamics final : public SlowDynamics {
public:
    using Fn = std::function<Eigen::MatrixXd(const MeanFieldState&, const DegreeDistribution&)>;
    explicit FunctionSlowDynamics(Fn fn) : fn_(std::move(fn)) {}
    Eigen::MatrixXd eval(const MeanFieldState& s, const DegreeDistribution& q) const override { return fn_(s, q); }

private:
    Fn fn_;
};

// Throws ValidationError unless off-diagonals are >= 0 and every column sums to 0 within tol.
void validate_generator(const Eigen::MatrixXd& H, double tol = 1e-12);

struct TwoScaleConfig {
    double epsilon = 0.01;
    double t_end = 5.0;
    double dt_slow = 0.05;
    double dt_fast = 0.0;  // 0 selects epsilon * dt_slow

    void validate() const;
    double fast_step() const;
};

/// Both integrators emit samples on the slow grid t = 0, dt_slow, ...
struct TwoScaleTrajectory {
    std::vector<double> times;
    std::vector<DegreeDistribution> q;
    std::vector<MeanFieldState> rho;
};

/// RK4 on the stacked system eps drho/dt = F(q)^T rho, dq/dt = H(rho, q) q.
/// rho is renormalised per class after every step; q is renormalised and a
/// drift above 1e-9 raises NumericalError.
TwoScaleTrajectory integrate_coupled(const MeanFieldState& rho0, const DegreeDistribution& q0, double u,
                                     const TransitionKernel& kernel, const SlowDynamics& slow,
                                     const TwoScaleConfig& cfg);

/// RK4 on dq/dt = H(Psi(q), q) q with rho*(t) = Psi(q*(t)); the quasi-steady
/// solve is warm-started from the previous stage. A failed solve is reported
/// with its time stamp.
TwoScaleTrajectory integrate_reduced(const DegreeDistribution& q0, double u, const TransitionKernel& kernel,
                                     const SlowDynamics& slow, double t_end, double dt, double tol = 1e-12);

struct TwoScaleScenario {
    DegreeDistribution q0;
    double u = 20.0;
    LogisticKernelParams kernel;
    BirthDeathParams slow;
    double t_end = 4.0;
    double dt_slow = 0.05;
    // Discard t < boundary_layer * epsilon before taking sup norms.
    double boundary_layer = 5.0;

    void validate() const;
};

struct ScalingRow {
    double epsilon = 0.0;
    double e_q = 0.0;
    double e_rho = 0.0;
};

struct ScalingResult {
    std::vector<ScalingRow> rows;
    double slope = 0.0;  // least-squares slope of log e_q against log epsilon
};

/// Runs the coupled system from rho(0) = Psi(q(0)) for every epsilon and the
/// reduced system once, and records sup-norm gaps over [t0, t_end].
ScalingResult epsilon_scaling_experiment(const std::vector<double>& eps_list, const TwoScaleScenario& scenario,
                                         unsigned jobs = 1);

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// CSV: epsilon,e_q,e_rho rows, then a trailing "slope,<value>," row.
void write_scaling_csv(const ScalingResult& result, std::ostream& os);

// CSV: t,l,q,rho_T,rho_H,rho_D (one row per class per sample).
void write_twoscale_csv(const TwoScaleTrajectory& traj, std::ostream& os);

} // namespace llmnet
