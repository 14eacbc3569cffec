#include "gcp/graph.hpp"

#include <algorithm>
#include <sstream>

#include "gcp/error.hpp"
#include "gcp/random.hpp"

namespace gcp {

Graph::Graph(int node_count, bool directed, bool weighted)
    : node_count_(node_count), directed_(directed), weighted_(weighted),
      out_(static_cast<std::size_t>(std::max(node_count, 0))),
      in_(static_cast<std::size_t>(std::max(node_count, 0))) {
    if (node_count < 1) throw DataError("invalid-graph", "graph needs at least one node");
}

void Graph::add_edge(NodeId u, NodeId v, std::optional<int> weight) {
    if (!valid_node(u) || !valid_node(v)) {
        throw DataError("invalid-graph", "edge endpoint out of range: (" + std::to_string(u) + ", " +
                                             std::to_string(v) + ")");
    }
    if (u == v) throw DataError("invalid-graph", "self-loop on node " + std::to_string(u));
    if (weighted_ != weight.has_value()) {
        throw DataError("invalid-graph", weighted_ ? "weighted graph needs edge weights"
                                                   : "unweighted graph cannot carry weights");
    }
    if (weight && *weight <= 0) throw DataError("invalid-graph", "edge weights must be positive");
    if (!directed_ && u > v) std::swap(u, v);
    if (!arcs_.emplace(std::pair{u, v}, weight.value_or(0)).second) {
        throw DataError("invalid-graph", "duplicate edge (" + std::to_string(u) + ", " +
                                             std::to_string(v) + ")");
    }
    out_[u].insert(v);
    in_[v].insert(u);
    if (!directed_) {
        out_[v].insert(u);
        in_[u].insert(v);
    }
}

bool Graph::remove_edge(NodeId u, NodeId v) {
    if (!valid_node(u) || !valid_node(v)) return false;
    if (!directed_ && u > v) std::swap(u, v);
    if (arcs_.erase({u, v}) == 0) return false;
    out_[u].erase(v);
    in_[v].erase(u);
    if (!directed_) {
        out_[v].erase(u);
        in_[u].erase(v);
    }
    return true;
}

bool Graph::has_edge(NodeId u, NodeId v) const {
    if (!valid_node(u) || !valid_node(v)) return false;
    return out_[u].count(v) > 0;
}

std::optional<int> Graph::weight(NodeId u, NodeId v) const {
    if (!directed_ && u > v) std::swap(u, v);
    auto it = arcs_.find({u, v});
    if (it == arcs_.end() || !weighted_) return std::nullopt;
    return it->second;
}

std::vector<Edge> Graph::edges() const {
    std::vector<Edge> result;
    result.reserve(arcs_.size());
    for (const auto& [key, w] : arcs_) {
        result.push_back({key.first, key.second, weighted_ ? std::optional<int>(w) : std::nullopt});
    }
    return result;
}

std::vector<NodeId> Graph::neighbors(NodeId u) const {
    std::vector<NodeId> result;
    std::set_union(out_.at(u).begin(), out_.at(u).end(), in_.at(u).begin(), in_.at(u).end(),
                   std::back_inserter(result));
    return result;
}

int Graph::undirected_edge_count() const {
    if (!directed_) return edge_count();
    int count = 0;
    for (const auto& [key, w] : arcs_) {
        auto [u, v] = key;
        if (u < v || !has_edge(v, u)) ++count;
    }
    return count;
}

bool Graph::operator==(const Graph& other) const {
    return node_count_ == other.node_count_ && directed_ == other.directed_ &&
           weighted_ == other.weighted_ && arcs_ == other.arcs_;
}

TierRange tier_range(SizeTier tier) {
    switch (tier) {
        case SizeTier::Tiny: return {5, 7};
        case SizeTier::Small: return {8, 15};
        case SizeTier::Medium: return {16, 25};
        case SizeTier::Large: return {26, 35};
    }
    return {5, 7};
}

std::string to_string(GraphFamily family) {
    switch (family) {
        case GraphFamily::Random: return "random";
        case GraphFamily::SmallWorld: return "small-world";
        case GraphFamily::ScaleFree: return "scale-free";
    }
    return "random";
}

std::string to_string(SizeTier tier) {
    switch (tier) {
        case SizeTier::Tiny: return "tiny";
        case SizeTier::Small: return "small";
        case SizeTier::Medium: return "medium";
        case SizeTier::Large: return "large";
    }
    return "tiny";
}

std::string to_string(DensityTier tier) {
    switch (tier) {
        case DensityTier::Low: return "low";
        case DensityTier::Middle: return "middle";
        case DensityTier::High: return "high";
    }
    return "low";
}

GraphFamily parse_family(const std::string& s) {
    if (s == "random") return GraphFamily::Random;
    if (s == "small-world") return GraphFamily::SmallWorld;
    if (s == "scale-free") return GraphFamily::ScaleFree;
    throw DataError("bad-config", "unknown graph family: " + s);
}

SizeTier parse_size_tier(const std::string& s) {
    std::string t = s;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "tiny") return SizeTier::Tiny;
    if (t == "small") return SizeTier::Small;
    if (t == "medium") return SizeTier::Medium;
    if (t == "large") return SizeTier::Large;
    throw DataError("bad-config", "unknown size tier: " + s);
}

DensityTier parse_density_tier(const std::string& s) {
    if (s == "low") return DensityTier::Low;
    if (s == "middle") return DensityTier::Middle;
    if (s == "high") return DensityTier::High;
    throw DataError("bad-config", "unknown density tier: " + s);
}

double default_edge_probability(SizeTier tier) {
    // Each value lands the expected density inside the Middle band.
    switch (tier) {
        case SizeTier::Tiny: return 0.5;
        case SizeTier::Small: return 0.45;
        case SizeTier::Medium: return 0.4;
        case SizeTier::Large: return 0.35;
    }
    return 0.5;
}

namespace {

using EdgeSet = std::set<std::pair<NodeId, NodeId>>;  // undirected, u < v

void insert_undirected(EdgeSet& edges, NodeId a, NodeId b) {
    edges.insert({std::min(a, b), std::max(a, b)});
}

EdgeSet random_family(int n, double p, Rng& rng) {
    EdgeSet edges;
    for (NodeId i = 0; i < n; ++i) {
        for (NodeId j = i + 1; j < n; ++j) {
            if (bernoulli(rng, p)) edges.insert({i, j});
        }
    }
    return edges;
}

// Ring lattice of k nearest neighbours, then each lattice edge is rewired
// to a uniformly chosen far endpoint with probability beta.
EdgeSet small_world_family(int n, int k, double beta, Rng& rng) {
    k = std::max(2, std::min(k, n - 1));
    const int half = k / 2;
    EdgeSet edges;
    std::vector<std::pair<NodeId, NodeId>> lattice;
    for (NodeId i = 0; i < n; ++i) {
        for (int j = 1; j <= half; ++j) {
            NodeId t = (i + j) % n;
            if (edges.count({std::min(i, t), std::max(i, t)})) continue;
            insert_undirected(edges, i, t);
            lattice.emplace_back(i, t);
        }
    }
    for (auto [i, t] : lattice) {
        if (!bernoulli(rng, beta)) continue;
        std::vector<NodeId> options;
        for (NodeId w = 0; w < n; ++w) {
            if (w != i && !edges.count({std::min(i, w), std::max(i, w)})) options.push_back(w);
        }
        if (options.empty()) continue;
        NodeId w = options[static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<std::int64_t>(options.size()) - 1))];
        edges.erase({std::min(i, t), std::max(i, t)});
        insert_undirected(edges, i, w);
    }
    return edges;
}

// Preferential attachment grown from a complete seed graph on m+1 nodes.
EdgeSet scale_free_family(int n, int m, Rng& rng) {
    m = std::max(1, std::min(m, n - 1));
    EdgeSet edges;
    std::vector<double> degree(static_cast<std::size_t>(n), 0.0);
    const int seed_nodes = std::min(n, m + 1);
    for (NodeId i = 0; i < seed_nodes; ++i) {
        for (NodeId j = i + 1; j < seed_nodes; ++j) {
            edges.insert({i, j});
            degree[i] += 1;
            degree[j] += 1;
        }
    }
    for (NodeId v = seed_nodes; v < n; ++v) {
        std::vector<double> weights(degree.begin(), degree.begin() + v);
        for (int pick = 0; pick < m; ++pick) {
            std::size_t target = weighted_index(rng, weights);
            weights[target] = 0;
            insert_undirected(edges, static_cast<NodeId>(target), v);
            degree[target] += 1;
            degree[v] += 1;
        }
    }
    return edges;
}

bool connected_view(int n, const EdgeSet& edges) {
    std::vector<int> parent(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) parent[i] = i;
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    int components = n;
    for (auto [a, b] : edges) {
        int ra = find(a), rb = find(b);
        if (ra != rb) {
            parent[ra] = rb;
            --components;
        }
    }
    return components == 1;
}

}  // namespace

Graph generate_graph(const GraphSpec& spec) {
    const TierRange range = tier_range(spec.size_tier);
    const double p = spec.edge_probability.value_or(default_edge_probability(spec.size_tier));
    if (p < 0 || p > 1) throw DataError("bad-config", "edge probability outside [0, 1]");
    if (spec.attachment < 1) throw DataError("bad-config", "attachment count must be positive");

    for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
        Rng rng(hash_combine(spec.seed, static_cast<std::uint64_t>(attempt)));
        const int n = static_cast<int>(uniform_int(rng, range.min_nodes, range.max_nodes));
        EdgeSet edges;
        switch (spec.family) {
            case GraphFamily::Random: edges = random_family(n, p, rng); break;
            case GraphFamily::SmallWorld:
                edges = small_world_family(n, spec.ring_neighbors, spec.rewire_probability, rng);
                break;
            case GraphFamily::ScaleFree: edges = scale_free_family(n, spec.attachment, rng); break;
        }
        if (spec.require_connected && !connected_view(n, edges)) continue;

        Graph g(n, spec.directed, spec.weighted);
        for (auto [a, b] : edges) {
            NodeId u = a, v = b;
            if (spec.directed && bernoulli(rng, 0.5)) std::swap(u, v);
            std::optional<int> w;
            if (spec.weighted) w = static_cast<int>(uniform_int(rng, 1, 10));
            g.add_edge(u, v, w);
        }
        return g;
    }
    throw DataError("generation-exhausted",
                    "no acceptable " + to_string(spec.family) + " graph for tier " +
                        to_string(spec.size_tier) + " after " + std::to_string(spec.max_attempts) +
                        " attempts");
}

DensityTier classify_density(double x) {
    if (x <= 0.33) return DensityTier::Low;
    if (x <= 0.67) return DensityTier::Middle;
    return DensityTier::High;
}

DensityReport density(const Graph& g) {
    const int n = g.node_count();
    if (n < 2) throw DataError("undefined-density", "edge density needs at least two nodes");
    const double x = 2.0 * g.undirected_edge_count() / (static_cast<double>(n) * (n - 1));
    return {x, classify_density(x)};
}

bool is_connected_undirected(const Graph& g) {
    EdgeSet edges;
    for (const Edge& e : g.edges()) insert_undirected(edges, e.u, e.v);
    return connected_view(g.node_count(), edges);
}

std::string render_edge_clause(const Graph& g) {
    std::ostringstream out;
    bool first = true;
    for (const Edge& e : g.edges()) {
        if (!first) out << ", ";
        first = false;
        out << "(" << e.u << ", " << e.v << ")";
        if (e.weight) out << " with weight " << *e.weight;
    }
    if (first) out << "none";
    std::vector<NodeId> isolated;
    for (NodeId u = 0; u < g.node_count(); ++u) {
        if (g.successors(u).empty() && g.predecessors(u).empty()) isolated.push_back(u);
    }
    if (!isolated.empty()) {
        out << "; isolated nodes: ";
        for (std::size_t i = 0; i < isolated.size(); ++i) out << (i ? ", " : "") << isolated[i];
    }
    return out.str();
}

std::string render_edgelist(const Graph& g) {
    return std::string(g.directed() ? "a directed" : "an undirected") + " graph with edges: " +
           render_edge_clause(g);
}

nlohmann::json graph_to_json(const Graph& g) {
    nlohmann::json edges = nlohmann::json::array();
    for (const Edge& e : g.edges()) {
        if (e.weight) {
            edges.push_back({e.u, e.v, *e.weight});
        } else {
            edges.push_back({e.u, e.v});
        }
    }
    return {{"nodes", g.node_count()}, {"directed", g.directed()}, {"weighted", g.weighted()},
            {"edges", edges}};
}

Graph graph_from_json(const nlohmann::json& j) {
    try {
        Graph g(j.at("nodes").get<int>(), j.at("directed").get<bool>(),
                j.value("weighted", false));
        for (const auto& e : j.at("edges")) {
            if (e.size() == 3) {
                g.add_edge(e[0].get<int>(), e[1].get<int>(), e[2].get<int>());
            } else if (e.size() == 2) {
                g.add_edge(e[0].get<int>(), e[1].get<int>());
            } else {
                throw DataError("invalid-graph", "edge entries are pairs or triples");
            }
        }
        return g;
    } catch (const nlohmann::json::exception& ex) {
        throw DataError("invalid-graph", std::string("malformed graph json: ") + ex.what());
    }
}

}  // namespace gcp
