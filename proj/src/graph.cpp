#include "llmnet/graph.hpp"

#include "llmnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace llmnet {

DirectedNetwork::DirectedNetwork(std::size_t n) : sources_(n), influenced_(n) {}

void DirectedNetwork::check_pair(NodeId i, NodeId j) const {
    if (i >= size() || j >= size())
        throw ValidationError("edge (" + std::to_string(i) + "," + std::to_string(j) +
                              ") out of range for " + std::to_string(size()) + " nodes");
    if (i == j)
        throw ValidationError("self-loop on node " + std::to_string(i));
}

bool DirectedNetwork::has_edge(NodeId i, NodeId j) const {
    if (i >= size() || j >= size()) return false;
    const auto& s = sources_[i];
    return std::binary_search(s.begin(), s.end(), j);
}

void DirectedNetwork::add_edge(NodeId i, NodeId j) {
    check_pair(i, j);
    auto& s = sources_[i];
    auto it = std::lower_bound(s.begin(), s.end(), j);
    if (it != s.end() && *it == j)
        throw ValidationError("duplicate edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
    auto& t = influenced_[j];
    auto jt = std::lower_bound(t.begin(), t.end(), i);
    s.insert(it, j);
    t.insert(jt, i);
    ++edge_count_;
}

void DirectedNetwork::remove_edge(NodeId i, NodeId j) {
    check_pair(i, j);
    auto& s = sources_[i];
    auto it = std::lower_bound(s.begin(), s.end(), j);
    if (it == s.end() || *it != j)
        throw ValidationError("missing edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
    auto& t = influenced_[j];
    auto jt = std::lower_bound(t.begin(), t.end(), i);
    s.erase(it);
    t.erase(jt);
    --edge_count_;
}

std::size_t DirectedNetwork::max_in_degree() const {
    std::size_t m = 0;
    for (const auto& s : sources_) m = std::max(m, s.size());
    return m;
}

bool DirectedNetwork::is_consistent() const {
    if (sources_.size() != influenced_.size()) return false;
    const auto n = static_cast<NodeId>(size());
    std::size_t forward = 0, backward = 0;
    for (NodeId i = 0; i < n; ++i) {
        const auto& s = sources_[i];
        if (!std::is_sorted(s.begin(), s.end())) return false;
        if (std::adjacent_find(s.begin(), s.end()) != s.end()) return false;
        for (NodeId j : s) {
            if (j >= n || j == i) return false;
            const auto& t = influenced_[j];
            if (!std::binary_search(t.begin(), t.end(), i)) return false;
        }
        forward += s.size();
        const auto& t = influenced_[i];
        if (!std::is_sorted(t.begin(), t.end())) return false;
        if (std::adjacent_find(t.begin(), t.end()) != t.end()) return false;
        for (NodeId k : t) {
            if (k >= n || k == i) return false;
            if (!std::binary_search(sources_[k].begin(), sources_[k].end(), i)) return false;
        }
        backward += t.size();
    }
    return forward == backward && forward == edge_count_;
}

std::vector<std::pair<NodeId, NodeId>> DirectedNetwork::edges() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    out.reserve(edge_count_);
    for (NodeId i = 0; i < size(); ++i)
        for (NodeId j : sources_[i]) out.emplace_back(i, j);
    return out;
}

double DegreeDistribution::mean() const {
    double m = 0.0;
    for (std::size_t l = 0; l < probs.size(); ++l) m += static_cast<double>(l) * probs[l];
    return m;
}

void DegreeDistribution::validate() const {
    if (probs.empty()) throw ValidationError("degree distribution is empty");
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw ValidationError("degree distribution has a negative or NaN entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw ValidationError("degree distribution sums to " + std::to_string(total));
}

DirectedNetwork generate_erdos_renyi(std::size_t n, double p, std::uint64_t seed) {
    if (n < 1) throw ValidationError("erdos_renyi: n must be >= 1");
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("erdos_renyi: p must lie in [0, 1]");
    DirectedNetwork net(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (NodeId i = 0; i < n; ++i)
        for (NodeId j = 0; j < n; ++j) {
            if (i == j) continue;
            if (unif(rng) < p) net.add_edge(i, j);
        }
    return net;
}

DirectedNetwork generate_power_law(std::size_t n, double exponent, std::size_t max_degree,
                                   std::uint64_t seed) {
    if (n < 2) throw ValidationError("power_law: n must be >= 2");
    if (!(exponent > 1.0)) throw ValidationError("power_law: exponent must be > 1");
    if (max_degree < 1 || max_degree >= n)
        throw ValidationError("power_law: max_degree must lie in [1, n-1]");

    std::vector<double> weights(max_degree);
    for (std::size_t l = 1; l <= max_degree; ++l)
        weights[l - 1] = std::pow(static_cast<double>(l), -exponent);

    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> degree(weights.begin(), weights.end());
    DirectedNetwork net(n);
    std::vector<NodeId> others(n - 1);
    std::vector<NodeId> picked;
    for (NodeId i = 0; i < n; ++i) {
        const std::size_t l = degree(rng) + 1;
        std::iota(others.begin(), others.begin() + i, NodeId{0});
        std::iota(others.begin() + i, others.end(), i + 1);
        picked.clear();
        std::sample(others.begin(), others.end(), std::back_inserter(picked), l, rng);
        for (NodeId j : picked) net.add_edge(i, j);
    }
    return net;
}

DegreeDistribution in_degree_distribution(const DirectedNetwork& net) {
    return in_degree_distribution(net, net.max_in_degree());
}

DegreeDistribution in_degree_distribution(const DirectedNetwork& net, std::size_t max_degree) {
    DegreeDistribution q;
    if (net.size() == 0) throw ValidationError("in_degree_distribution: empty network");
    if (net.max_in_degree() > max_degree)
        throw ValidationError("in_degree_distribution: observed degree exceeds requested L_max");
    std::vector<std::size_t> counts(max_degree + 1, 0);
    for (NodeId i = 0; i < net.size(); ++i) ++counts[net.in_degree(i)];
    q.probs.resize(max_degree + 1);
    const double n = static_cast<double>(net.size());
    for (std::size_t l = 0; l <= max_degree; ++l) q.probs[l] = static_cast<double>(counts[l]) / n;
    return q;
}

void NetworkSpec::validate() const {
    if (n < 2) throw ValidationError("network.n must be >= 2");
    if (kind == Kind::erdos_renyi) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("network.p must lie in [0, 1]");
    } else {
        if (!(exponent > 1.0)) throw ValidationError("network.exponent must be > 1");
        if (max_degree < 1 || max_degree >= n)
            throw ValidationError("network.max_degree must lie in [1, n-1]");
    }
}

DirectedNetwork NetworkSpec::build(std::uint64_t seed) const {
    validate();
    if (kind == Kind::erdos_renyi) return generate_erdos_renyi(n, p, seed);
    return generate_power_law(n, exponent, max_degree, seed);
}

std::string to_string(NetworkSpec::Kind kind) {
    return kind == NetworkSpec::Kind::erdos_renyi ? "erdos_renyi" : "power_law";
}

NetworkSpec::Kind network_kind_from_string(const std::string& s) {
    if (s == "erdos_renyi") return NetworkSpec::Kind::erdos_renyi;
    if (s == "power_law") return NetworkSpec::Kind::power_law;
    throw ValidationError("unknown network kind '" + s + "' (expected erdos_renyi or power_law)");
}

void save_edge_list(const DirectedNetwork& net, std::ostream& os) {
    os << "# nodes=" << net.size() << '\n';
    for (auto [i, j] : net.edges()) os << i << ' ' << j << '\n';
}

DirectedNetwork load_edge_list(std::istream& is) {
    std::string line;
    std::size_t lineno = 0;
    std::size_t n = 0;
    bool have_header = false;
    DirectedNetwork net;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!have_header) {
            if (line.rfind("# nodes=", 0) != 0)
                throw ValidationError("edge list line 1: expected '# nodes=N' header");
            n = std::stoul(line.substr(8));
            net = DirectedNetwork(n);
            have_header = true;
            continue;
        }
        std::istringstream ls(line);
        std::uint64_t i = 0, j = 0;
        if (!(ls >> i >> j))
            throw ValidationError("edge list line " + std::to_string(lineno) + ": expected 'i j'");
        try {
            net.add_edge(static_cast<NodeId>(i), static_cast<NodeId>(j));
        } catch (const ValidationError& e) {
            throw ValidationError("edge list line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_header) throw ValidationError("edge list: missing '# nodes=N' header");
    return net;
}

} // namespace llmnet
