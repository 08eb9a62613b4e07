#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace llmnet {

// Latent answer state of an agent. The enum value is the array index used by
// every 3x3 matrix in the library; to_code/from_code give the serialized
// encoding T=1, H=0, D=-1.
enum class LatentState : int { T = 0, H = 1, D = 2 };

inline constexpr std::size_t kStates = 3;
inline constexpr std::size_t idx(LatentState z) { return static_cast<std::size_t>(z); }

int to_code(LatentState z);
LatentState from_code(int code);
char to_char(LatentState z);

using Mat3 = std::array<std::array<double, 3>, 3>;

/// kappa_{z1,z2}(u, l, i, j): one-round transition law of an agent that reads
/// l sources, i of them truthful and j hallucinating. Rows are indexed by the
/// current state, columns by the next state.
class TransitionKernel {
public:
    virtual ~TransitionKernel() = default;

    // Checks 0 <= i, 0 <= j, i + j <= l, then calls evaluate().
    Mat3 eval(double u, int l, int i, int j) const;

protected:
    virtual Mat3 evaluate(double u, int l, int i, int j) const = 0;
};

/// Parameters of the built-in logistic family.
///
/// With f_T = i/max(l,1), f_H = j/max(l,1) and the source row z1:
///   s      = beta(u) (f_T - f_H) + bias[z1] - pen(u)
///   beta(u)= beta0 * u / (u_half + u)
///   pen(u) = verbosity_penalty * sigmoid((u - verbosity_midpoint) / verbosity_width)
///   p_T    = sigmoid(s)
///   h(u)   = clamp(halluc_share_base + halluc_share_bump * exp(-((u - halluc_peak_u)/halluc_width)^2 / 2))
///   h      = h(u) + (1 - h(u)) * halluc_contagion * f_H
///   row    = (1 - activity) e_z1 + activity * (p_T, (1-p_T) h, (1-p_T)(1-h))
/// With absorbing_when_unanimous, the T row at (i = l, j = 0) is forced to (1, 0, 0).
struct LogisticKernelParams {
    double activity = 0.05;
    double beta0 = 2.8;
    double u_half = 22.0;
    std::array<double, 3> bias{1.35, 0.27, -0.09};
    double verbosity_penalty = 2.3;
    double verbosity_midpoint = 55.0;
    double verbosity_width = 15.7;
    double halluc_share_base = 0.21;
    double halluc_share_bump = 0.48;
    double halluc_peak_u = 42.0;
    double halluc_width = 13.5;
    double halluc_contagion = 0.0;
    bool absorbing_when_unanimous = false;

    void validate() const;
};

class LogisticKernel final : public TransitionKernel {
public:
    explicit LogisticKernel(LogisticKernelParams params);
    const LogisticKernelParams& params() const { return params_; }

    double strength(double u) const;
    double penalty(double u) const;
    double halluc_share(double u) const;

protected:
    Mat3 evaluate(double u, int l, int i, int j) const override;

private:
    LogisticKernelParams params_;
};

/// Explicit kernel tables keyed by (l, i, j), one per control grid point.
/// Between grid points rows are linearly interpolated in u (a convex
/// combination of stochastic rows stays stochastic); outside the grid the
/// nearest table is used.
class TableKernel final : public TransitionKernel {
public:
    using Table = std::map<std::array<int, 3>, Mat3>;

    void set_table(double u, Table table);
    const std::map<double, Table>& tables() const { return tables_; }

    // CSV with header l,i,j,z1,z2,prob (z as T/H/D or 1/0/-1); every (l,i,j)
    // present must list all nine entries.
    static Table read_csv(std::istream& is);
    static void write_csv(const Table& table, std::ostream& os);

protected:
    Mat3 evaluate(double u, int l, int i, int j) const override;

private:
    std::map<double, Table> tables_;
};

class FunctionKernel final : public TransitionKernel {
public:
    using Fn = std::function<Mat3(double u, int l, int i, int j)>;
    explicit FunctionKernel(Fn fn) : fn_(std::move(fn)) {}

protected:
    Mat3 evaluate(double u, int l, int i, int j) const override { return fn_(u, l, i, j); }

private:
    Fn fn_;
};

/// kappa evaluated once for a fixed control over every (l, i, j) with l <= l_max.
class KernelTable {
public:
    KernelTable(const TransitionKernel& kernel, double u, int l_max);

    const Mat3& at(int l, int i, int j) const { return data_[offset(l) + tri(l, i) + j]; }
    int l_max() const { return l_max_; }
    double control() const { return u_; }

private:
    static std::size_t offset(int l) {
        const auto n = static_cast<std::size_t>(l);
        return n * (n + 1) * (n + 2) / 6;
    }
    // Position of (i, 0) within degree block l.
    static std::size_t tri(int l, int i) {
        const auto L = static_cast<std::size_t>(l), I = static_cast<std::size_t>(i);
        return I * (L + 1) - I * (I - 1) / 2;
    }

    int l_max_;
    double u_;
    std::vector<Mat3> data_;
};

struct AssumptionViolation {
    int l = 0;
    int i = 0;
    int j = 0;
    double value = 0.0;
    std::string entry;
};

struct AssumptionReport {
    bool ok = true;
    std::vector<AssumptionViolation> violations;
};

/// Truthful-absorbing check: kappa_TH(u,l,l,0) and kappa_TD(u,l,l,0) are
/// <= 1e-12 for every 1 <= l <= l_max (vacuous for l_max = 0).
AssumptionReport check_truthful_absorbing(const TransitionKernel& kernel, double u, int l_max);

/// Recovery check: kappa_HT and kappa_DT are >= floor for every (l, i, j)
/// with 0 <= l <= l_max, i >= l - delta_l, i + j <= l.
AssumptionReport check_recovery_positive(const TransitionKernel& kernel, double u, int l_max,
                                         int delta_l, double floor = 1e-9);

struct ControlAdmissibility {
    double u = 0.0;
    bool absorbing = false;
    bool recovery = false;
    bool admissible() const { return absorbing && recovery; }
};

std::vector<ControlAdmissibility> scan_controls(const TransitionKernel& kernel,
                                                const std::vector<double>& u_grid, int l_max,
                                                int delta_l);

} // namespace llmnet
