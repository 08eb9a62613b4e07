#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace llmnet {

using NodeId = std::uint32_t;

/// Directed influence network over N agents.
///
/// An edge i -> j means "agent i is influenced by agent j" (A_ij = 1), so
/// sources(i) is the influencing neighbourhood N(i) and in_degree(i) = |N(i)|
/// is the number of messages agent i reads each round. influenced(j) is the
/// reverse index: the agents that read j. Both adjacency lists are kept
/// sorted and are exact transposes of each other.
class DirectedNetwork {
public:
    DirectedNetwork() = default;
    explicit DirectedNetwork(std::size_t n);

    std::size_t size() const { return sources_.size(); }
    std::size_t edge_count() const { return edge_count_; }

    bool has_edge(NodeId i, NodeId j) const;

    // Throws ValidationError on self-loops, out-of-range ids, duplicate adds
    // and missing removes.
    void add_edge(NodeId i, NodeId j);
    void remove_edge(NodeId i, NodeId j);

    std::span<const NodeId> sources(NodeId i) const { return sources_.at(i); }
    std::span<const NodeId> influenced(NodeId j) const { return influenced_.at(j); }

    std::size_t in_degree(NodeId i) const { return sources_.at(i).size(); }
    std::size_t influence_count(NodeId j) const { return influenced_.at(j).size(); }
    std::size_t max_in_degree() const;

    // Full scan of the transpose/no-self-loop/no-duplicate invariants.
    bool is_consistent() const;

    // All edges sorted by (i, j).
    std::vector<std::pair<NodeId, NodeId>> edges() const;

    bool operator==(const DirectedNetwork&) const = default;

private:
    void check_pair(NodeId i, NodeId j) const;

    std::vector<std::vector<NodeId>> sources_;
    std::vector<std::vector<NodeId>> influenced_;
    std::size_t edge_count_ = 0;
};

/// Probability vector over in-degrees 0..L_max.
struct DegreeDistribution {
    std::vector<double> probs;

    std::size_t max_degree() const { return probs.empty() ? 0 : probs.size() - 1; }
    double mean() const;
    void validate() const;
};

DirectedNetwork generate_erdos_renyi(std::size_t n, double p, std::uint64_t seed);

/// Configuration-model style power law: each node draws its in-degree from
/// P(l) ~ l^-exponent on 1..max_degree, then picks that many distinct
/// influence sources uniformly at random.
DirectedNetwork generate_power_law(std::size_t n, double exponent, std::size_t max_degree,
                                   std::uint64_t seed);

DegreeDistribution in_degree_distribution(const DirectedNetwork& net);

// Same histogram padded (or truncated, if the tail is empty) to a fixed length.
DegreeDistribution in_degree_distribution(const DirectedNetwork& net, std::size_t max_degree);

struct NetworkSpec {
    enum class Kind { erdos_renyi, power_law };
    Kind kind = Kind::power_law;
    std::size_t n = 100;
    double p = 0.05;
    double exponent = 2.5;
    std::size_t max_degree = 10;

    void validate() const;
    DirectedNetwork build(std::uint64_t seed) const;
};

std::string to_string(NetworkSpec::Kind kind);
NetworkSpec::Kind network_kind_from_string(const std::string& s);

// Edge-list text format: "# nodes=N" header, then one "i j" line per edge,
// 0-indexed and sorted by (i, j).
void save_edge_list(const DirectedNetwork& net, std::ostream& os);
DirectedNetwork load_edge_list(std::istream& is);

} // namespace llmnet
