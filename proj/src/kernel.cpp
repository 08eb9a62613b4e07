#include "llmnet/kernel.hpp"

#include "llmnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace llmnet {

int to_code(LatentState z) {
    switch (z) {
    case LatentState::T: return 1;
    case LatentState::H: return 0;
    case LatentState::D: return -1;
    }
    return -1;
}

LatentState from_code(int code) {
    switch (code) {
    case 1: return LatentState::T;
    case 0: return LatentState::H;
    case -1: return LatentState::D;
    default: throw ValidationError("latent state code must be 1, 0 or -1");
    }
}

char to_char(LatentState z) { return "THD"[idx(z)]; }

namespace {

LatentState parse_state(const std::string& s) {
    if (s == "T" || s == "1") return LatentState::T;
    if (s == "H" || s == "0") return LatentState::H;
    if (s == "D" || s == "-1") return LatentState::D;
    throw ValidationError("unknown latent state '" + s + "'");
}

double sigmoid(double s) {
    return s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
}

} // namespace

Mat3 TransitionKernel::eval(double u, int l, int i, int j) const {
    if (i < 0 || j < 0 || l < 0 || i + j > l)
        throw ValidationError("kappa(u, l=" + std::to_string(l) + ", i=" + std::to_string(i) +
                              ", j=" + std::to_string(j) + "): need i, j >= 0 and i + j <= l");
    return evaluate(u, l, i, j);
}

void LogisticKernelParams::validate() const {
    if (!(activity > 0.0 && activity <= 1.0)) throw ValidationError("kernel.activity must lie in (0, 1]");
    if (!(beta0 >= 0.0)) throw ValidationError("kernel.beta0 must be >= 0");
    if (!(u_half > 0.0)) throw ValidationError("kernel.u_half must be > 0");
    if (!(halluc_width > 0.0)) throw ValidationError("kernel.halluc_width must be > 0");
    for (double b : bias)
        if (!std::isfinite(b)) throw ValidationError("kernel bias must be finite");
    if (!std::isfinite(verbosity_penalty)) throw ValidationError("kernel.verbosity_penalty must be finite");
    if (!(verbosity_width > 0.0)) throw ValidationError("kernel.verbosity_width must be > 0");
    if (!(halluc_contagion >= 0.0 && halluc_contagion <= 1.0))
        throw ValidationError("kernel.halluc_contagion must lie in [0, 1]");
}

LogisticKernel::LogisticKernel(LogisticKernelParams params) : params_(params) { params_.validate(); }

double LogisticKernel::strength(double u) const {
    return params_.beta0 * u / (params_.u_half + u);
}

double LogisticKernel::penalty(double u) const {
    return params_.verbosity_penalty * sigmoid((u - params_.verbosity_midpoint) / params_.verbosity_width);
}

double LogisticKernel::halluc_share(double u) const {
    const double d = (u - params_.halluc_peak_u) / params_.halluc_width;
    const double h = params_.halluc_share_base + params_.halluc_share_bump * std::exp(-0.5 * d * d);
    return std::clamp(h, 0.0, 1.0);
}

Mat3 LogisticKernel::evaluate(double u, int l, int i, int j) const {
    const double denom = std::max(l, 1);
    const double fT = i / denom;
    const double fH = j / denom;
    const double beta = strength(u);
    const double base_share = halluc_share(u);
    // Hallucinating sources pull the non-truthful mass towards H.
    const double share = base_share + (1.0 - base_share) * params_.halluc_contagion * fH;
    const double pen = penalty(u);
    const double a = params_.activity;
    Mat3 K{};
    for (std::size_t z = 0; z < kStates; ++z) {
        const double s = beta * (fT - fH) + params_.bias[z] - pen;
        const double pT = sigmoid(s);
        const double pH = (1.0 - pT) * share;
        const double pD = 1.0 - pT - pH;
        K[z] = {a * pT, a * pH, a * pD};
        K[z][z] += 1.0 - a;
    }
    if (params_.absorbing_when_unanimous && i == l && j == 0)
        K[idx(LatentState::T)] = {1.0, 0.0, 0.0};
    return K;
}

void TableKernel::set_table(double u, Table table) {
    for (const auto& [key, m] : table) {
        const auto [l, i, j] = key;
        if (i < 0 || j < 0 || i + j > l)
            throw ValidationError("kernel table key (" + std::to_string(l) + "," + std::to_string(i) + "," +
                                  std::to_string(j) + ") violates i + j <= l");
        for (const auto& row : m) {
            double sum = 0.0;
            for (double p : row) {
                if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("kernel table entry outside [0, 1]");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("kernel table row does not sum to 1");
        }
    }
    tables_[u] = std::move(table);
}

Mat3 TableKernel::evaluate(double u, int l, int i, int j) const {
    if (tables_.empty()) throw ValidationError("table kernel has no tables");
    const std::array<int, 3> key{l, i, j};
    auto lookup = [&](const Table& t) -> const Mat3& {
        auto it = t.find(key);
        if (it == t.end())
            throw ValidationError("kernel table has no entry for (l=" + std::to_string(l) + ", i=" +
                                  std::to_string(i) + ", j=" + std::to_string(j) + ")");
        return it->second;
    };
    auto hi = tables_.lower_bound(u);
    if (hi == tables_.end()) return lookup(std::prev(hi)->second);
    if (hi->first == u || hi == tables_.begin()) return lookup(hi->second);
    auto lo = std::prev(hi);
    const double w = (u - lo->first) / (hi->first - lo->first);
    const Mat3& A = lookup(lo->second);
    const Mat3& B = lookup(hi->second);
    Mat3 K{};
    for (std::size_t a = 0; a < kStates; ++a)
        for (std::size_t b = 0; b < kStates; ++b) K[a][b] = (1.0 - w) * A[a][b] + w * B[a][b];
    return K;
}

TableKernel::Table TableKernel::read_csv(std::istream& is) {
    Table table;
    std::map<std::array<int, 3>, int> filled;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!header) {
            if (line != "l,i,j,z1,z2,prob")
                throw ValidationError("kernel table line 1: expected header 'l,i,j,z1,z2,prob'");
            header = true;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 6)
            throw ValidationError("kernel table line " + std::to_string(lineno) + ": expected 6 fields");
        try {
            const std::array<int, 3> key{std::stoi(f[0]), std::stoi(f[1]), std::stoi(f[2])};
            const auto z1 = idx(parse_state(f[3]));
            const auto z2 = idx(parse_state(f[4]));
            table[key][z1][z2] = std::stod(f[5]);
            ++filled[key];
        } catch (const std::logic_error& e) {
            throw ValidationError("kernel table line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    for (const auto& [key, count] : filled)
        if (count != 9)
            throw ValidationError("kernel table entry (" + std::to_string(key[0]) + "," + std::to_string(key[1]) +
                                  "," + std::to_string(key[2]) + ") has " + std::to_string(count) +
                                  " of 9 probabilities");
    return table;
}

void TableKernel::write_csv(const Table& table, std::ostream& os) {
    os << "l,i,j,z1,z2,prob\n" << std::setprecision(17);
    for (const auto& [key, m] : table)
        for (std::size_t a = 0; a < kStates; ++a)
            for (std::size_t b = 0; b < kStates; ++b)
                os << key[0] << ',' << key[1] << ',' << key[2] << ',' << "THD"[a] << ',' << "THD"[b] << ','
                   << m[a][b] << '\n';
}

KernelTable::KernelTable(const TransitionKernel& kernel, double u, int l_max) : l_max_(l_max), u_(u) {
    if (l_max < 0) throw ValidationError("KernelTable: l_max must be >= 0");
    data_.resize(offset(l_max + 1));
    for (int l = 0; l <= l_max; ++l)
        for (int i = 0; i <= l; ++i)
            for (int j = 0; i + j <= l; ++j) data_[offset(l) + tri(l, i) + j] = kernel.eval(u, l, i, j);
}

AssumptionReport check_truthful_absorbing(const TransitionKernel& kernel, double u, int l_max) {
    AssumptionReport report;
    const auto T = idx(LatentState::T), H = idx(LatentState::H), D = idx(LatentState::D);
    for (int l = 1; l <= l_max; ++l) {
        const Mat3 K = kernel.eval(u, l, l, 0);
        if (K[T][H] > 1e-12) report.violations.push_back({l, l, 0, K[T][H], "TH"});
        if (K[T][D] > 1e-12) report.violations.push_back({l, l, 0, K[T][D], "TD"});
    }
    report.ok = report.violations.empty();
    return report;
}

AssumptionReport check_recovery_positive(const TransitionKernel& kernel, double u, int l_max, int delta_l,
                                         double floor) {
    if (delta_l < 0) throw ValidationError("check_recovery_positive: delta_l must be >= 0");
    AssumptionReport report;
    const auto T = idx(LatentState::T), H = idx(LatentState::H), D = idx(LatentState::D);
    for (int l = 0; l <= l_max; ++l)
        for (int i = std::max(0, l - delta_l); i <= l; ++i)
            for (int j = 0; i + j <= l; ++j) {
                const Mat3 K = kernel.eval(u, l, i, j);
                if (!(K[H][T] >= floor)) report.violations.push_back({l, i, j, K[H][T], "HT"});
                if (!(K[D][T] >= floor)) report.violations.push_back({l, i, j, K[D][T], "DT"});
            }
    report.ok = report.violations.empty();
    return report;
}

std::vector<ControlAdmissibility> scan_controls(const TransitionKernel& kernel, const std::vector<double>& u_grid,
                                                int l_max, int delta_l) {
    std::vector<ControlAdmissibility> out;
    out.reserve(u_grid.size());
    for (double u : u_grid)
        out.push_back({u, check_truthful_absorbing(kernel, u, l_max).ok,
                       check_recovery_positive(kernel, u, l_max, delta_l).ok});
    return out;
}

} // namespace llmnet
