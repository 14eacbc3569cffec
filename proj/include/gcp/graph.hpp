#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace gcp {

using NodeId = int;

struct Edge {
    NodeId u = 0;
    NodeId v = 0;
    std::optional<int> weight;

    bool operator==(const Edge&) const = default;
};

// Simple graph on nodes 0..n-1. Undirected edges are stored once with u < v;
// directed graphs may hold both u->v and v->u but never the same arc twice.
class Graph {
public:
    Graph() = default;
    Graph(int node_count, bool directed, bool weighted = false);

    int node_count() const { return node_count_; }
    bool directed() const { return directed_; }
    bool weighted() const { return weighted_; }
    int edge_count() const { return static_cast<int>(arcs_.size()); }

    // Throws DataError on self-loops, duplicates, bad ids or a weight/flag mismatch.
    void add_edge(NodeId u, NodeId v, std::optional<int> weight = std::nullopt);
    bool remove_edge(NodeId u, NodeId v);

    // Directed: arc u->v. Undirected: either orientation.
    bool has_edge(NodeId u, NodeId v) const;
    std::optional<int> weight(NodeId u, NodeId v) const;

    // Edges in ascending (u, v) order.
    std::vector<Edge> edges() const;

    // All adjacency lists are ascending. For undirected graphs all three agree.
    const std::set<NodeId>& successors(NodeId u) const { return out_.at(u); }
    const std::set<NodeId>& predecessors(NodeId u) const { return in_.at(u); }
    std::vector<NodeId> neighbors(NodeId u) const;

    bool valid_node(NodeId u) const { return u >= 0 && u < node_count_; }

    // Edge count of the undirected view (antiparallel arcs count once).
    int undirected_edge_count() const;

    bool operator==(const Graph& other) const;

private:
    int node_count_ = 0;
    bool directed_ = false;
    bool weighted_ = false;
    std::map<std::pair<NodeId, NodeId>, int> arcs_;  // weight 0 when unweighted
    std::vector<std::set<NodeId>> out_;
    std::vector<std::set<NodeId>> in_;
};

enum class GraphFamily { Random, SmallWorld, ScaleFree };
enum class SizeTier { Tiny, Small, Medium, Large };
enum class DensityTier { Low, Middle, High };

struct TierRange {
    int min_nodes;
    int max_nodes;
};

TierRange tier_range(SizeTier tier);

std::string to_string(GraphFamily family);
std::string to_string(SizeTier tier);
std::string to_string(DensityTier tier);
GraphFamily parse_family(const std::string& s);
SizeTier parse_size_tier(const std::string& s);
DensityTier parse_density_tier(const std::string& s);

struct GraphSpec {
    GraphFamily family = GraphFamily::Random;
    bool directed = false;
    SizeTier size_tier = SizeTier::Tiny;
    bool weighted = false;
    std::uint64_t seed = 0;

    // Unset means the per-tier default.
    std::optional<double> edge_probability;
    double rewire_probability = 0.3;
    int attachment = 2;
    int ring_neighbors = 4;
    // When set, only instances whose undirected view is connected are accepted.
    bool require_connected = false;
    int max_attempts = 64;
};

double default_edge_probability(SizeTier tier);

// Pure function of the spec. Throws DataError("generation-exhausted") when no
// acceptable instance appears within spec.max_attempts.
Graph generate_graph(const GraphSpec& spec);

struct DensityReport {
    double edge_density = 0;
    DensityTier tier = DensityTier::Low;
};

DensityReport density(const Graph& g);
DensityTier classify_density(double x);

bool is_connected_undirected(const Graph& g);

// "an undirected graph with edges: (0, 1), (1, 2)"
std::string render_edgelist(const Graph& g);
// Just the edge listing, plus isolated nodes when there are any.
std::string render_edge_clause(const Graph& g);

nlohmann::json graph_to_json(const Graph& g);
Graph graph_from_json(const nlohmann::json& j);

}  // namespace gcp
