#pragma once

#include "llmnet/graph.hpp"
#include "llmnet/kernel.hpp"

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

namespace llmnet {

// (rho_T, rho_H, rho_D), indexed by LatentState.
using SimplexDensity = std::array<double, 3>;

/// Per-in-degree latent densities rho^l for l = 0..L_max.
struct MeanFieldState {
    std::vector<SimplexDensity> classes;

    static MeanFieldState uniform(std::size_t num_classes, SimplexDensity d);

    std::size_t size() const { return classes.size(); }
    // Every class on the simplex within tol.
    void validate(double tol = 1e-9) const;
    // Sum_l q_l rho^l.
    SimplexDensity aggregate(const DegreeDistribution& q) const;
};

/// Probability that a uniformly sampled link ends at a node in each state.
struct LinkProbabilities {
    double T = 0.0;
    double H = 0.0;
    double D = 1.0;
};

/// Configuration-model edge sampling:
/// theta_z = sum_l l q_l rho^l_z / sum_l l q_l, and (0, 0, 1) for an edgeless q.
LinkProbabilities compute_theta(const DegreeDistribution& q, const MeanFieldState& state);

/// Multinomial weights C(l; i, j) tT^i tH^j tD^(l-i-j), laid out as w[i][j].
std::vector<std::vector<double>> multinomial_weights(int l, const LinkProbabilities& theta);

/// Average one-round transition matrix G^l: the kernel averaged over the
/// number of truthful / hallucinating sources under independent link sampling.
Mat3 transition_matrix_G(int l, const LinkProbabilities& theta, const KernelTable& table);
Mat3 transition_matrix_G(int l, const LinkProbabilities& theta, double u, const TransitionKernel& kernel);

/// Generator F^l: off-diagonal entries of G, diagonal = -(sum of the row's off-diagonals).
Mat3 generator_F(const Mat3& G);
Mat3 generator_F(int l, const LinkProbabilities& theta, const KernelTable& table);

/// Right-hand side of the fast system d rho^l/dt = (F^l)^T rho^l with theta
/// recomputed from the state at every evaluation.
class FastField {
public:
    using ThetaFn = std::function<LinkProbabilities(const DegreeDistribution&, const MeanFieldState&)>;

    FastField(DegreeDistribution q, const TransitionKernel& kernel, double u);
    FastField(DegreeDistribution q, KernelTable table);

    const DegreeDistribution& q() const { return q_; }
    const KernelTable& table() const { return table_; }
    void set_degree_distribution(DegreeDistribution q);

    MeanFieldState operator()(const MeanFieldState& state) const;
    void evaluate(const MeanFieldState& state, MeanFieldState& out) const;

private:
    DegreeDistribution q_;
    KernelTable table_;
};

struct FastTrajectory {
    std::vector<double> times;
    std::vector<MeanFieldState> states;
};

/// Classic RK4 with simplex renormalisation (clip then divide) after every
/// step. A step whose pre-renormalisation drift exceeds 1e-6 is rejected with
/// a NumericalError. Samples are taken every `sample_every` steps (t = 0 included).
FastTrajectory integrate_fast(const MeanFieldState& state0, const DegreeDistribution& q, double u,
                              const TransitionKernel& kernel, double t_end, double dt,
                              std::size_t sample_every = 1);
FastTrajectory integrate_fast(const MeanFieldState& state0, const FastField& field, double t_end, double dt,
                              std::size_t sample_every = 1);

// One renormalised RK4 step, shared with the two-time-scale integrator.
void rk4_fast_step(const FastField& field, MeanFieldState& state, double dt);
// Clip to [0, 1] and divide by the sum; returns the pre-renormalisation drift.
double renormalize(SimplexDensity& d);

/// V = sum_l q_l (rho^l_H + rho^l_D).
double lyapunov_V(const MeanFieldState& state, const DegreeDistribution& q);
/// dV/dt along the fast dynamics.
double lyapunov_Vdot(const MeanFieldState& state, const DegreeDistribution& q, double u,
                     const TransitionKernel& kernel);
double lyapunov_Vdot(const MeanFieldState& state, const FastField& field);

struct LinkConcentrationReport {
    bool ok = true;
    std::size_t samples = 0;
    std::size_t counterexamples = 0;
};

/// Randomised counterexample search for: rho^l_H, rho^l_D < eps/2 for all l
/// implies theta_T > 1 - eps and theta_H < eps/2. theta_fn defaults to compute_theta.
LinkConcentrationReport check_link_concentration(const DegreeDistribution& q, double epsilon,
                                                 std::uint64_t seed, std::size_t samples = 10000,
                                                 const FastField::ThetaFn& theta_fn = {});

/// Stationary law of a 3-state generator (rows = source state), from the
/// Markov chain tree formula. Returns false if every spanning-tree weight is 0.
bool stationary_density(const Mat3& F, SimplexDensity& out);

struct QuasiSteadyResult {
    MeanFieldState state;
    LinkProbabilities theta;
    double residual = 0.0;
    std::size_t iterations = 0;
};

/// Psi(q): the latent profile with F^l(theta(rho), u)^T rho^l = 0 for every l.
/// Damped (0.5) fixed-point iteration on theta; each sweep takes the
/// per-class stationary densities of F^l(theta). Default starting point is
/// the all-truthful profile. Throws NumericalError after max_iter.
QuasiSteadyResult solve_quasi_steady(const DegreeDistribution& q, double u, const TransitionKernel& kernel,
                                     double tol = 1e-12, std::size_t max_iter = 10000,
                                     const MeanFieldState* warm_start = nullptr);
QuasiSteadyResult solve_quasi_steady(const FastField& field, double tol = 1e-12, std::size_t max_iter = 10000,
                                     const MeanFieldState* warm_start = nullptr);

// max_l || (F^l)^T rho^l ||_inf with theta taken from rho itself.
double quasi_steady_residual(const FastField& field, const MeanFieldState& state);

/// Jacobian of the fast field in reduced coordinates x = (rho^l_H, rho^l_D)_l,
/// rho^l_T = 1 - rho^l_H - rho^l_D. This removes the per-class zero modes
/// that the simplex constraint puts into the full 3(L+1) Jacobian.
Eigen::MatrixXd fast_jacobian(const FastField& field, const MeanFieldState& state, double h = 1e-6);

struct StabilityReport {
    bool stable = false;
    bool ambiguous = false;
    double max_real_part = 0.0;
    std::vector<std::complex<double>> eigenvalues;
};

StabilityReport jacobian_stability_check(const DegreeDistribution& q, double u, const TransitionKernel& kernel,
                                         const MeanFieldState& rho_star);
StabilityReport jacobian_stability_check(const FastField& field, const MeanFieldState& rho_star);

/// CSV: t,l,rho_T,rho_H,rho_D,rho_T_agg,V (one row per class per sample).
void write_fast_trajectory_csv(const FastTrajectory& traj, const DegreeDistribution& q, std::ostream& os);

} // namespace llmnet
