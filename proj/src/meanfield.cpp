#include "llmnet/meanfield.hpp"

#include "llmnet/errors.hpp"
#include "llmnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace llmnet {

namespace {

constexpr std::size_t T = idx(LatentState::T);
constexpr std::size_t H = idx(LatentState::H);
constexpr std::size_t D = idx(LatentState::D);

void check_lengths(const DegreeDistribution& q, const MeanFieldState& state) {
    if (q.probs.size() != state.size())
        throw ValidationError("degree distribution has " + std::to_string(q.probs.size()) +
                              " classes but the state has " + std::to_string(state.size()));
}

// Integer powers by repeated multiplication; 0^0 = 1 and negative bases (from
// finite-difference probes just outside the simplex) are fine.
std::vector<double> powers(double x, int n) {
    std::vector<double> p(static_cast<std::size_t>(n) + 1);
    p[0] = 1.0;
    for (int k = 1; k <= n; ++k) p[k] = p[k - 1] * x;
    return p;
}

double binomial(int n, int k) {
    double c = 1.0;
    for (int m = 1; m <= k; ++m) c = c * (n - k + m) / m;
    return c;
}

} // namespace

MeanFieldState MeanFieldState::uniform(std::size_t num_classes, SimplexDensity d) {
    MeanFieldState s;
    s.classes.assign(num_classes, d);
    return s;
}

void MeanFieldState::validate(double tol) const {
    if (classes.empty()) throw ValidationError("mean-field state has no degree classes");
    for (std::size_t l = 0; l < classes.size(); ++l) {
        const auto& d = classes[l];
        for (double v : d)
            if (!(v >= -tol && v <= 1.0 + tol))
                throw ValidationError("density of class " + std::to_string(l) + " outside [0, 1]");
        if (std::abs(d[0] + d[1] + d[2] - 1.0) > tol)
            throw ValidationError("density of class " + std::to_string(l) + " is off the simplex");
    }
}

SimplexDensity MeanFieldState::aggregate(const DegreeDistribution& q) const {
    check_lengths(q, *this);
    SimplexDensity agg{0.0, 0.0, 0.0};
    for (std::size_t l = 0; l < classes.size(); ++l)
        for (std::size_t z = 0; z < kStates; ++z) agg[z] += q.probs[l] * classes[l][z];
    return agg;
}

LinkProbabilities compute_theta(const DegreeDistribution& q, const MeanFieldState& state) {
    check_lengths(q, state);
    double norm = 0.0, tT = 0.0, tH = 0.0;
    for (std::size_t l = 1; l < q.probs.size(); ++l) {
        const double w = static_cast<double>(l) * q.probs[l];
        norm += w;
        tT += w * state.classes[l][T];
        tH += w * state.classes[l][H];
    }
    if (norm <= 0.0) return {0.0, 0.0, 1.0};
    LinkProbabilities theta;
    theta.T = tT / norm;
    theta.H = tH / norm;
    theta.D = 1.0 - theta.T - theta.H;
    return theta;
}

std::vector<std::vector<double>> multinomial_weights(int l, const LinkProbabilities& theta) {
    if (l < 0) throw ValidationError("multinomial_weights: l must be >= 0");
    const double tD = 1.0 - theta.T - theta.H;
    const auto pT = powers(theta.T, l), pH = powers(theta.H, l), pD = powers(tD, l);
    std::vector<std::vector<double>> w(static_cast<std::size_t>(l) + 1);
    const double lgl = std::lgamma(l + 1.0);
    for (int i = 0; i <= l; ++i) {
        w[i].resize(static_cast<std::size_t>(l - i) + 1);
        const double ci = l <= 20 ? binomial(l, i) : 0.0;
        for (int j = 0; i + j <= l; ++j) {
            const int k = l - i - j;
            const double coeff = l <= 20
                ? ci * binomial(l - i, j)
                : std::exp(lgl - std::lgamma(i + 1.0) - std::lgamma(j + 1.0) - std::lgamma(k + 1.0));
            w[i][j] = coeff * pT[i] * pH[j] * pD[k];
        }
    }
    return w;
}

Mat3 transition_matrix_G(int l, const LinkProbabilities& theta, const KernelTable& table) {
    if (l < 0 || l > table.l_max()) throw ValidationError("transition_matrix_G: degree outside kernel table");
    const auto w = multinomial_weights(l, theta);
    Mat3 G{};
    for (int i = 0; i <= l; ++i)
        for (int j = 0; i + j <= l; ++j) {
            const double wij = w[i][j];
            if (wij == 0.0) continue;
            const Mat3& K = table.at(l, i, j);
            for (std::size_t a = 0; a < kStates; ++a)
                for (std::size_t b = 0; b < kStates; ++b) G[a][b] += wij * K[a][b];
        }
    return G;
}

Mat3 transition_matrix_G(int l, const LinkProbabilities& theta, double u, const TransitionKernel& kernel) {
    return transition_matrix_G(l, theta, KernelTable(kernel, u, l));
}

Mat3 generator_F(const Mat3& G) {
    Mat3 F{};
    for (std::size_t a = 0; a < kStates; ++a) {
        double out = 0.0;
        for (std::size_t b = 0; b < kStates; ++b)
            if (b != a) {
                F[a][b] = G[a][b];
                out += G[a][b];
            }
        F[a][a] = -out;
    }
    return F;
}

Mat3 generator_F(int l, const LinkProbabilities& theta, const KernelTable& table) {
    return generator_F(transition_matrix_G(l, theta, table));
}

FastField::FastField(DegreeDistribution q, const TransitionKernel& kernel, double u)
    : q_(std::move(q)), table_(kernel, u, static_cast<int>(q_.max_degree())) {
    q_.validate();
}

FastField::FastField(DegreeDistribution q, KernelTable table) : q_(std::move(q)), table_(std::move(table)) {
    q_.validate();
    if (static_cast<int>(q_.max_degree()) > table_.l_max())
        throw ValidationError("FastField: kernel table shorter than the degree distribution");
}

void FastField::set_degree_distribution(DegreeDistribution q) {
    if (q.probs.size() != q_.probs.size())
        throw ValidationError("FastField: degree distribution length changed");
    q_ = std::move(q);
}

void FastField::evaluate(const MeanFieldState& state, MeanFieldState& out) const {
    check_lengths(q_, state);
    const LinkProbabilities theta = compute_theta(q_, state);
    out.classes.resize(state.size());
    for (std::size_t l = 0; l < state.size(); ++l) {
        const Mat3 F = generator_F(static_cast<int>(l), theta, table_);
        const auto& rho = state.classes[l];
        auto& d = out.classes[l];
        for (std::size_t b = 0; b < kStates; ++b)
            d[b] = rho[0] * F[0][b] + rho[1] * F[1][b] + rho[2] * F[2][b];
    }
}

MeanFieldState FastField::operator()(const MeanFieldState& state) const {
    MeanFieldState out;
    evaluate(state, out);
    return out;
}

double renormalize(SimplexDensity& d) {
    const double drift = std::abs(d[0] + d[1] + d[2] - 1.0);
    double lowest = std::min({d[0], d[1], d[2]});
    for (double& v : d) v = std::clamp(v, 0.0, 1.0);
    const double s = d[0] + d[1] + d[2];
    if (s <= 0.0) throw NumericalError("density collapsed to zero during integration");
    for (double& v : d) v /= s;
    return std::max(drift, -lowest);
}

void rk4_fast_step(const FastField& field, MeanFieldState& state, double dt) {
    MeanFieldState k1, k2, k3, k4, tmp = state;
    const std::size_t n = state.size();
    auto axpy = [&](const MeanFieldState& k, double h) {
        for (std::size_t l = 0; l < n; ++l)
            for (std::size_t z = 0; z < kStates; ++z) tmp.classes[l][z] = state.classes[l][z] + h * k.classes[l][z];
    };
    field.evaluate(state, k1);
    axpy(k1, 0.5 * dt);
    field.evaluate(tmp, k2);
    axpy(k2, 0.5 * dt);
    field.evaluate(tmp, k3);
    axpy(k3, dt);
    field.evaluate(tmp, k4);
    double drift = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        auto& d = state.classes[l];
        for (std::size_t z = 0; z < kStates; ++z)
            d[z] += dt / 6.0 * (k1.classes[l][z] + 2.0 * k2.classes[l][z] + 2.0 * k3.classes[l][z] + k4.classes[l][z]);
        drift = std::max(drift, renormalize(d));
    }
    if (drift > 1e-6)
        throw NumericalError("fast step rejected: simplex drift " + std::to_string(drift) + " exceeds 1e-6 (dt too large)");
}

FastTrajectory integrate_fast(const MeanFieldState& state0, const DegreeDistribution& q, double u,
                              const TransitionKernel& kernel, double t_end, double dt, std::size_t sample_every) {
    return integrate_fast(state0, FastField(q, kernel, u), t_end, dt, sample_every);
}

FastTrajectory integrate_fast(const MeanFieldState& state0, const FastField& field, double t_end, double dt,
                              std::size_t sample_every) {
    if (!(dt > 0.0)) throw ValidationError("integrate_fast: dt must be > 0");
    if (!(t_end >= 0.0)) throw ValidationError("integrate_fast: t_end must be >= 0");
    if (sample_every == 0) throw ValidationError("integrate_fast: sample_every must be >= 1");
    state0.validate();
    check_lengths(field.q(), state0);
    const auto steps = static_cast<std::size_t>(std::llround(t_end / dt));
    FastTrajectory traj;
    traj.times.push_back(0.0);
    traj.states.push_back(state0);
    MeanFieldState state = state0;
    for (std::size_t s = 1; s <= steps; ++s) {
        rk4_fast_step(field, state, dt);
        if (s % sample_every == 0 || s == steps) {
            traj.times.push_back(static_cast<double>(s) * dt);
            traj.states.push_back(state);
        }
    }
    return traj;
}

double lyapunov_V(const MeanFieldState& state, const DegreeDistribution& q) {
    check_lengths(q, state);
    double v = 0.0;
    for (std::size_t l = 0; l < state.size(); ++l) v += q.probs[l] * (state.classes[l][H] + state.classes[l][D]);
    return v;
}

double lyapunov_Vdot(const MeanFieldState& state, const FastField& field) {
    const MeanFieldState d = field(state);
    double v = 0.0;
    for (std::size_t l = 0; l < state.size(); ++l) v += field.q().probs[l] * (d.classes[l][H] + d.classes[l][D]);
    return v;
}

double lyapunov_Vdot(const MeanFieldState& state, const DegreeDistribution& q, double u,
                     const TransitionKernel& kernel) {
    return lyapunov_Vdot(state, FastField(q, kernel, u));
}

LinkConcentrationReport check_link_concentration(const DegreeDistribution& q, double epsilon, std::uint64_t seed,
                                                 std::size_t samples, const FastField::ThetaFn& theta_fn) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("check_link_concentration: epsilon must lie in (0, 1)");
    q.validate();
    LinkConcentrationReport report;
    report.samples = samples;
    MeanFieldState state = MeanFieldState::uniform(q.probs.size(), {1.0, 0.0, 0.0});
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t l = 0; l < state.size(); ++l) {
            const double h = 0.5 * epsilon * counter_uniform(seed, {s, l, 0});
            const double d = 0.5 * epsilon * counter_uniform(seed, {s, l, 1});
            state.classes[l] = {1.0 - h - d, h, d};
        }
        const LinkProbabilities th = theta_fn ? theta_fn(q, state) : compute_theta(q, state);
        if (!(th.T > 1.0 - epsilon && th.H < 0.5 * epsilon)) ++report.counterexamples;
    }
    report.ok = report.counterexamples == 0;
    return report;
}

bool stationary_density(const Mat3& F, SimplexDensity& out) {
    const double r_TH = F[T][H], r_TD = F[T][D], r_HT = F[H][T], r_HD = F[H][D], r_DT = F[D][T], r_DH = F[D][H];
    const double wT = r_HT * r_DT + r_HD * r_DT + r_DH * r_HT;
    const double wH = r_TH * r_DH + r_TD * r_DH + r_DT * r_TH;
    const double wD = r_TD * r_HD + r_TH * r_HD + r_HT * r_TD;
    const double s = wT + wH + wD;
    if (!(s > 0.0)) return false;
    out = {wT / s, wH / s, wD / s};
    return true;
}

double quasi_steady_residual(const FastField& field, const MeanFieldState& state) {
    const MeanFieldState d = field(state);
    double r = 0.0;
    for (const auto& c : d.classes)
        for (double v : c) r = std::max(r, std::abs(v));
    return r;
}

QuasiSteadyResult solve_quasi_steady(const DegreeDistribution& q, double u, const TransitionKernel& kernel,
                                     double tol, std::size_t max_iter, const MeanFieldState* warm_start) {
    return solve_quasi_steady(FastField(q, kernel, u), tol, max_iter, warm_start);
}

QuasiSteadyResult solve_quasi_steady(const FastField& field, double tol, std::size_t max_iter,
                                     const MeanFieldState* warm_start) {
    if (!(tol > 0.0)) throw ValidationError("solve_quasi_steady: tol must be > 0");
    const auto& q = field.q();
    MeanFieldState state = warm_start ? *warm_start : MeanFieldState::uniform(q.probs.size(), {1.0, 0.0, 0.0});
    check_lengths(q, state);
    LinkProbabilities theta = compute_theta(q, state);
    double residual = 0.0;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        for (std::size_t l = 0; l < state.size(); ++l) {
            SimplexDensity pi;
            if (stationary_density(generator_F(static_cast<int>(l), theta, field.table()), pi)) state.classes[l] = pi;
        }
        const LinkProbabilities next = compute_theta(q, state);
        const double change = std::max(std::abs(next.T - theta.T), std::abs(next.H - theta.H));
        theta.T = 0.5 * theta.T + 0.5 * next.T;
        theta.H = 0.5 * theta.H + 0.5 * next.H;
        theta.D = 1.0 - theta.T - theta.H;
        if (change < tol) {
            residual = quasi_steady_residual(field, state);
            if (residual <= tol) return {state, compute_theta(q, state), residual, it};
        }
    }
    residual = quasi_steady_residual(field, state);
    throw NumericalError("solve_quasi_steady: no convergence after " + std::to_string(max_iter) +
                         " iterations (residual " + std::to_string(residual) +
                         "); the equilibrium may be unstable or non-unique");
}

Eigen::MatrixXd fast_jacobian(const FastField& field, const MeanFieldState& state, double h) {
    const std::size_t n = state.size();
    const auto dim = static_cast<Eigen::Index>(2 * n);
    Eigen::MatrixXd J(dim, dim);
    MeanFieldState probe = state;
    for (std::size_t l = 0; l < n; ++l)
        for (std::size_t c = 0; c < 2; ++c) {
            const std::size_t z = c == 0 ? H : D;
            auto shifted = [&](double delta) {
                probe.classes[l] = state.classes[l];
                probe.classes[l][z] += delta;
                probe.classes[l][T] -= delta;
                return field(probe);
            };
            const MeanFieldState fp = shifted(h);
            const MeanFieldState fm = shifted(-h);
            probe.classes[l] = state.classes[l];
            const auto col = static_cast<Eigen::Index>(2 * l + c);
            for (std::size_t m = 0; m < n; ++m) {
                J(static_cast<Eigen::Index>(2 * m), col) = (fp.classes[m][H] - fm.classes[m][H]) / (2.0 * h);
                J(static_cast<Eigen::Index>(2 * m + 1), col) = (fp.classes[m][D] - fm.classes[m][D]) / (2.0 * h);
            }
        }
    return J;
}

StabilityReport jacobian_stability_check(const DegreeDistribution& q, double u, const TransitionKernel& kernel,
                                         const MeanFieldState& rho_star) {
    return jacobian_stability_check(FastField(q, kernel, u), rho_star);
}

StabilityReport jacobian_stability_check(const FastField& field, const MeanFieldState& rho_star) {
    check_lengths(field.q(), rho_star);
    const Eigen::MatrixXd J = fast_jacobian(field, rho_star);
    Eigen::EigenSolver<Eigen::MatrixXd> solver(J, false);
    if (solver.info() != Eigen::Success) throw NumericalError("jacobian_stability_check: eigen solver failed");
    StabilityReport report;
    report.max_real_part = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < solver.eigenvalues().size(); ++k) {
        const std::complex<double> ev = solver.eigenvalues()[k];
        report.eigenvalues.push_back(ev);
        report.max_real_part = std::max(report.max_real_part, ev.real());
        if (std::abs(ev.real()) < 1e-9) report.ambiguous = true;
    }
    std::sort(report.eigenvalues.begin(), report.eigenvalues.end(),
              [](auto a, auto b) { return a.real() > b.real(); });
    report.stable = !report.ambiguous && report.max_real_part < -1e-9;
    return report;
}

void write_fast_trajectory_csv(const FastTrajectory& traj, const DegreeDistribution& q, std::ostream& os) {
    os << "t,l,rho_T,rho_H,rho_D,rho_T_agg,V\n" << std::setprecision(12);
    for (std::size_t s = 0; s < traj.states.size(); ++s) {
        const auto& st = traj.states[s];
        const double agg = st.aggregate(q)[T];
        const double v = lyapunov_V(st, q);
        for (std::size_t l = 0; l < st.size(); ++l)
            os << traj.times[s] << ',' << l << ',' << st.classes[l][T] << ',' << st.classes[l][H] << ','
               << st.classes[l][D] << ',' << agg << ',' << v << '\n';
    }
}

} // namespace llmnet
