#include "gcp/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>

#include "gcp/error.hpp"
#include "gcp/random.hpp"

namespace gcp {

namespace {

using json = nlohmann::json;

constexpr TaskInfo kTasks[] = {
    {TaskKind::Degree, "degree", TaskLevel::Node, AnswerType::Integer, Directedness::Any, false, 1, true},
    {TaskKind::ClusteringCoefficient, "clustering_coefficient", TaskLevel::Node, AnswerType::Float,
     Directedness::Any, false, 1, true},
    {TaskKind::Neighbor, "neighbor", TaskLevel::Node, AnswerType::NodeList, Directedness::Any, false, 1,
     false},
    {TaskKind::PageRank, "page_rank", TaskLevel::Node, AnswerType::Integer, Directedness::Any, false, 0,
     true},
    {TaskKind::Predecessor, "predecessor", TaskLevel::Node, AnswerType::NodeList, Directedness::Any,
     false, 1, true},
    {TaskKind::Jaccard, "jaccard", TaskLevel::NodePair, AnswerType::Float, Directedness::Any, false, 2,
     true},
    {TaskKind::CommonNeighbor, "common_neighbor", TaskLevel::NodePair, AnswerType::Integer,
     Directedness::Any, false, 2, true},
    {TaskKind::Connectivity, "connectivity", TaskLevel::NodePair, AnswerType::Boolean, Directedness::Any,
     false, 2, true},
    {TaskKind::MaximumFlow, "maximum_flow", TaskLevel::NodePair, AnswerType::Integer,
     Directedness::DirectedOnly, true, 2, true},
    {TaskKind::BFS, "bfs", TaskLevel::Graph, AnswerType::NodeList, Directedness::Any, false, 1, false},
    {TaskKind::Cycle, "cycle", TaskLevel::Graph, AnswerType::Boolean, Directedness::Any, false, 0, false},
    {TaskKind::Diameter, "diameter", TaskLevel::Graph, AnswerType::Integer, Directedness::UndirectedOnly,
     false, 0, true},
    {TaskKind::MST, "mst", TaskLevel::Graph, AnswerType::Integer, Directedness::UndirectedOnly, true, 0,
     true},
};

constexpr std::size_t kMaxChunkedSteps = 12;

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string join_nodes(const std::vector<NodeId>& nodes) {
    std::string out = "[";
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(nodes[i]);
    }
    return out + "]";
}

// Records steps and, when a fault is armed for the step about to be
// emitted, corrupts the first value computed for it.
class Tracer {
public:
    explicit Tracer(const SolveOptions& options) : fault_(options.fault) {}

    long long calc(long long v) {
        if (!arm()) return v;
        long long d = uniform_int(rng_, 1, 2);
        if (bernoulli(rng_, 0.5)) d = -d;
        return v + d < 0 ? v - d : v + d;
    }

    double calc(double v) {
        if (!arm()) return v;
        double delta = (0.1 + 0.4 * uniform_unit(rng_)) * std::max(std::abs(v), 0.1);
        if (bernoulli(rng_, 0.5) && v - delta >= 0) return v - delta;
        return v + delta;
    }

    bool calc(bool v) { return arm() ? !v : v; }

    NodeId calc_node(NodeId v, int n) {
        if (!arm() || n < 2) return v;
        auto other = static_cast<NodeId>(uniform_int(rng_, 0, n - 2));
        return other >= v ? other + 1 : other;
    }

    // Sorted node set: drop one member or add an outsider.
    std::vector<NodeId> calc_set(std::vector<NodeId> v, int n) {
        if (!arm()) return v;
        std::vector<NodeId> outside;
        for (NodeId x = 0; x < n; ++x) {
            if (!std::binary_search(v.begin(), v.end(), x)) outside.push_back(x);
        }
        if (!outside.empty() && (v.empty() || bernoulli(rng_, 0.5))) {
            v.push_back(outside[pick(outside.size())]);
            std::sort(v.begin(), v.end());
        } else if (!v.empty()) {
            v.erase(v.begin() + static_cast<std::ptrdiff_t>(pick(v.size())));
        }
        return v;
    }

    // Visit sequence: swap two visits after the start, or append an outsider.
    std::vector<NodeId> calc_sequence(std::vector<NodeId> v, int n) {
        if (!arm()) return v;
        if (v.size() >= 3) {
            std::size_t i = 1 + pick(v.size() - 1);
            std::size_t j = 1 + pick(v.size() - 2);
            if (j >= i) ++j;
            std::swap(v[i], v[j]);
            return v;
        }
        for (NodeId x = 0; x < n; ++x) {
            if (std::find(v.begin(), v.end(), x) == v.end()) {
                v.push_back(x);
                return v;
            }
        }
        return v;
    }

    std::vector<double> calc_values(std::vector<double> v) {
        if (!arm() || v.empty()) return v;
        v[pick(v.size())] += 0.05 + 0.25 * uniform_unit(rng_);
        return v;
    }

    std::vector<long long> calc_counts(std::vector<long long> v) {
        if (!arm() || v.empty()) return v;
        std::size_t i = pick(v.size());
        v[i] += uniform_int(rng_, 1, 2);
        return v;
    }

    void emit(std::string tag, json payload, unsigned flags) {
        steps_.push_back({std::move(tag), std::move(payload), flags});
    }

    std::size_t next_index() const { return steps_.size(); }
    ExecutionTrace take() { return std::move(steps_); }

private:
    bool arm() {
        if (!fault_ || used_ || fault_->step != steps_.size()) return false;
        used_ = true;
        rng_.seed(hash_combine(fault_->seed, fault_->step));
        return true;
    }

    std::size_t pick(std::size_t size) {
        return static_cast<std::size_t>(uniform_int(rng_, 0, static_cast<std::int64_t>(size) - 1));
    }

    std::optional<CalcFault> fault_;
    bool used_ = false;
    Rng rng_;
    ExecutionTrace steps_;
};

std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(std::size_t count,
                                                              std::size_t max_chunks) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    if (count == 0) return ranges;
    const std::size_t per = (count + max_chunks - 1) / max_chunks;
    for (std::size_t begin = 0; begin < count; begin += per) {
        ranges.emplace_back(begin, std::min(count, begin + per));
    }
    return ranges;
}

std::vector<NodeId> to_vector(const std::set<NodeId>& s) { return {s.begin(), s.end()}; }

// Neighbour set used by the pairwise tasks: successors when directed.
std::vector<NodeId> pair_neighbors(const Graph& g, NodeId u) {
    return g.directed() ? to_vector(g.successors(u)) : g.neighbors(u);
}

std::vector<NodeId> reach_list(const Graph& g, NodeId u) {
    return g.directed() ? to_vector(g.successors(u)) : g.neighbors(u);
}

std::vector<NodeId> bfs_order(const Graph& g, NodeId start, std::vector<int>* depth_out = nullptr) {
    std::vector<int> depth(static_cast<std::size_t>(g.node_count()), -1);
    std::vector<NodeId> order;
    std::deque<NodeId> queue{start};
    depth[start] = 0;
    while (!queue.empty()) {
        NodeId x = queue.front();
        queue.pop_front();
        order.push_back(x);
        for (NodeId y : reach_list(g, x)) {
            if (depth[y] < 0) {
                depth[y] = depth[x] + 1;
                queue.push_back(y);
            }
        }
    }
    if (depth_out) *depth_out = std::move(depth);
    return order;
}

void emit_structure(Tracer& tr, const Graph& g, std::optional<bool> connected = std::nullopt) {
    json p = {{"directed", g.directed()}, {"weighted", g.weighted()}, {"nodes", g.node_count()}};
    if (connected) p["connected"] = *connected;
    tr.emit("structure", std::move(p), kStructureStep);
}

void emit_neighbors(Tracer& tr, NodeId u, const std::string& relation, const std::vector<NodeId>& nodes) {
    tr.emit("neighbors", {{"node", u}, {"relation", relation}, {"nodes", nodes}}, kNodeEdgeStep);
}

AnswerValue solve_degree(Tracer& tr, const Graph& g, NodeId u) {
    emit_structure(tr, g);
    long long degree;
    if (g.directed()) {
        auto in = to_vector(g.predecessors(u));
        auto out = to_vector(g.successors(u));
        tr.emit("degree.incident", {{"node", u}, {"directed", true}, {"in", in}, {"out", out}},
                kNodeEdgeStep);
        degree = tr.calc(static_cast<long long>(in.size() + out.size()));
        tr.emit("degree.count",
                {{"node", u}, {"directed", true}, {"in_degree", in.size()},
                 {"out_degree", out.size()}, {"degree", degree}},
                kCalculationStep);
    } else {
        auto nbrs = g.neighbors(u);
        tr.emit("degree.incident", {{"node", u}, {"directed", false}, {"neighbors", nbrs}}, kNodeEdgeStep);
        degree = tr.calc(static_cast<long long>(nbrs.size()));
        tr.emit("degree.count", {{"node", u}, {"directed", false}, {"degree", degree}}, kCalculationStep);
    }
    return AnswerValue::integer(degree);
}

double clustering_from_counts(bool directed, long long links, long long degree) {
    if (degree < 2) return 0.0;
    const double pairs = static_cast<double>(degree) * static_cast<double>(degree - 1);
    return directed ? static_cast<double>(links) / pairs : 2.0 * static_cast<double>(links) / pairs;
}

std::vector<std::pair<NodeId, NodeId>> links_among(const Graph& g, const std::vector<NodeId>& nbrs) {
    std::vector<std::pair<NodeId, NodeId>> links;
    for (NodeId a : nbrs) {
        for (NodeId b : nbrs) {
            if (a == b) continue;
            if (!g.directed() && a > b) continue;
            if (g.has_edge(a, b)) links.emplace_back(a, b);
        }
    }
    return links;
}

AnswerValue solve_clustering(Tracer& tr, const Graph& g, NodeId u) {
    emit_structure(tr, g);
    auto nbrs = pair_neighbors(g, u);
    emit_neighbors(tr, u, g.directed() ? "successors" : "neighbors", nbrs);
    auto links = links_among(g, nbrs);
    json link_list = json::array();
    for (auto [a, b] : links) link_list.push_back({a, b});
    long long t = tr.calc(static_cast<long long>(links.size()));
    tr.emit("cc.links", {{"node", u}, {"directed", g.directed()}, {"links", link_list}, {"count", t}},
            kNodeEdgeStep | kCalculationStep);
    const auto d = static_cast<long long>(nbrs.size());
    double value = tr.calc(clustering_from_counts(g.directed(), t, d));
    tr.emit("cc.formula", {{"node", u}, {"directed", g.directed()}, {"degree", d}, {"links", t}, {"value", value}},
            kCalculationStep);
    return AnswerValue::floating(value);
}

AnswerValue solve_neighbor(Tracer& tr, const Graph& g, NodeId u) {
    emit_structure(tr, g);
    if (g.directed()) {
        emit_neighbors(tr, u, "successors", to_vector(g.successors(u)));
        emit_neighbors(tr, u, "predecessors", to_vector(g.predecessors(u)));
    } else {
        emit_neighbors(tr, u, "neighbors", g.neighbors(u));
    }
    auto all = tr.calc_set(g.neighbors(u), g.node_count());
    tr.emit("collect", {{"node", u}, {"what", "neighbors"}, {"nodes", all}}, kCalculationStep);
    return AnswerValue::nodes(all);
}

AnswerValue solve_predecessor(Tracer& tr, const Graph& g, NodeId u) {
    emit_structure(tr, g);
    std::vector<NodeId> preds = g.directed() ? to_vector(g.predecessors(u)) : g.neighbors(u);
    emit_neighbors(tr, u, g.directed() ? "predecessors" : "neighbors", preds);
    preds = tr.calc_set(preds, g.node_count());
    tr.emit("collect", {{"node", u}, {"what", "predecessors"}, {"nodes", preds}}, kCalculationStep);
    return AnswerValue::nodes(preds);
}

std::vector<double> pagerank_iterate(const Graph& g, const std::vector<double>& values) {
    const int n = g.node_count();
    const double base = (1.0 - kDamping) / n;
    double dangling = 0;
    for (NodeId u = 0; u < n; ++u) {
        if (g.successors(u).empty()) dangling += values[u];
    }
    std::vector<double> next(static_cast<std::size_t>(n), base + kDamping * dangling / n);
    for (NodeId u = 0; u < n; ++u) {
        const auto& out = g.successors(u);
        if (out.empty()) continue;
        const double share = kDamping * values[u] / static_cast<double>(out.size());
        for (NodeId v : out) next[v] += share;
    }
    return next;
}

// Values within rounding noise of each other count as tied, so symmetric
// nodes resolve to the smaller id whatever the summation order.
NodeId argmax_smallest(const std::vector<double>& values) {
    NodeId best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best] * (1 + 1e-12)) best = static_cast<NodeId>(i);
    }
    return best;
}

AnswerValue solve_pagerank(Tracer& tr, const Graph& g) {
    emit_structure(tr, g);
    const int n = g.node_count();
    std::vector<long long> out_degree;
    std::vector<NodeId> dangling;
    for (NodeId u = 0; u < n; ++u) {
        out_degree.push_back(static_cast<long long>(g.successors(u).size()));
        if (g.successors(u).empty()) dangling.push_back(u);
    }
    std::vector<double> values(static_cast<std::size_t>(n), 1.0 / n);
    tr.emit("pr.init",
            {{"nodes", n}, {"initial", 1.0 / n}, {"directed", g.directed()}, {"out_degrees", out_degree},
             {"dangling", dangling}},
            kNodeEdgeStep);
    for (int it = 1; it <= kPageRankIterations; ++it) {
        values = tr.calc_values(pagerank_iterate(g, values));
        tr.emit("pr.iteration", {{"iteration", it}, {"values", values}}, kCalculationStep);
    }
    NodeId top = tr.calc_node(argmax_smallest(values), n);
    tr.emit("pr.argmax", {{"node", top}, {"value", values[top]}}, kCalculationStep);
    return AnswerValue::integer(top);
}

std::vector<NodeId> set_intersection(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
    std::vector<NodeId> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

std::vector<NodeId> set_union(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
    std::vector<NodeId> out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

std::vector<NodeId> emit_pair_neighbors(Tracer& tr, const Graph& g, NodeId u, NodeId v,
                                        std::vector<NodeId>& nv) {
    auto nu = pair_neighbors(g, u);
    nv = pair_neighbors(g, v);
    const char* relation = g.directed() ? "successors" : "neighbors";
    emit_neighbors(tr, u, relation, nu);
    emit_neighbors(tr, v, relation, nv);
    return nu;
}

AnswerValue solve_jaccard(Tracer& tr, const Graph& g, NodeId u, NodeId v) {
    emit_structure(tr, g);
    std::vector<NodeId> nv;
    auto nu = emit_pair_neighbors(tr, g, u, v, nv);
    auto inter = tr.calc_set(set_intersection(nu, nv), g.node_count());
    tr.emit("set.intersection", {{"a", u}, {"b", v}, {"nodes", inter}}, kCalculationStep);
    auto uni = tr.calc_set(set_union(nu, nv), g.node_count());
    tr.emit("set.union", {{"a", u}, {"b", v}, {"nodes", uni}}, kCalculationStep);
    double value = uni.empty() ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
    value = tr.calc(value);
    tr.emit("jaccard.formula",
            {{"a", u}, {"b", v}, {"intersection", inter.size()}, {"union", uni.size()}, {"value", value}},
            kCalculationStep);
    return AnswerValue::floating(value);
}

AnswerValue solve_common_neighbor(Tracer& tr, const Graph& g, NodeId u, NodeId v) {
    emit_structure(tr, g);
    std::vector<NodeId> nv;
    auto nu = emit_pair_neighbors(tr, g, u, v, nv);
    auto inter = tr.calc_set(set_intersection(nu, nv), g.node_count());
    tr.emit("set.intersection", {{"a", u}, {"b", v}, {"nodes", inter}}, kCalculationStep);
    long long count = tr.calc(static_cast<long long>(inter.size()));
    tr.emit("cn.count", {{"a", u}, {"b", v}, {"count", count}}, kCalculationStep);
    return AnswerValue::integer(count);
}

AnswerValue solve_connectivity(Tracer& tr, const Graph& g, NodeId u, NodeId v) {
    emit_structure(tr, g);
    auto order = bfs_order(g, u);
    tr.emit("traversal", {{"start", u}, {"directed", g.directed()}, {"order", order}}, kNodeEdgeStep);
    bool found = tr.calc(std::find(order.begin(), order.end(), v) != order.end());
    tr.emit("conn.check", {{"source", u}, {"target", v}, {"found", found}}, kCalculationStep);
    return AnswerValue::boolean(found);
}

struct AugmentingPath {
    std::vector<NodeId> path;
    long long bottleneck;
};

// Edmonds-Karp; BFS expands residual arcs in ascending node order.
std::vector<AugmentingPath> augmenting_paths(const Graph& g, NodeId s, NodeId t) {
    const int n = g.node_count();
    std::vector<std::vector<long long>> cap(n, std::vector<long long>(n, 0));
    for (const Edge& e : g.edges()) {
        const long long c = e.weight.value_or(1);
        cap[e.u][e.v] += c;
        if (!g.directed()) cap[e.v][e.u] += c;
    }
    std::vector<AugmentingPath> paths;
    while (true) {
        std::vector<NodeId> parent(n, -1);
        parent[s] = s;
        std::deque<NodeId> queue{s};
        while (!queue.empty() && parent[t] < 0) {
            NodeId x = queue.front();
            queue.pop_front();
            for (NodeId y = 0; y < n; ++y) {
                if (parent[y] < 0 && cap[x][y] > 0) {
                    parent[y] = x;
                    queue.push_back(y);
                }
            }
        }
        if (parent[t] < 0) break;
        long long bottleneck = std::numeric_limits<long long>::max();
        std::vector<NodeId> path{t};
        for (NodeId y = t; y != s; y = parent[y]) {
            bottleneck = std::min(bottleneck, cap[parent[y]][y]);
            path.push_back(parent[y]);
        }
        std::reverse(path.begin(), path.end());
        for (NodeId y = t; y != s; y = parent[y]) {
            cap[parent[y]][y] -= bottleneck;
            cap[y][parent[y]] += bottleneck;
        }
        paths.push_back({std::move(path), bottleneck});
    }
    return paths;
}

AnswerValue solve_max_flow(Tracer& tr, const Graph& g, NodeId s, NodeId t) {
    emit_structure(tr, g);
    auto paths = augmenting_paths(g, s, t);
    long long total = 0;
    for (auto [begin, end] : chunk_ranges(paths.size(), kMaxChunkedSteps)) {
        json items = json::array();
        for (std::size_t i = begin; i < end; ++i) {
            total = tr.calc(total + paths[i].bottleneck);
            items.push_back({{"path", paths[i].path}, {"bottleneck", paths[i].bottleneck}, {"total", total}});
        }
        tr.emit("flow.augment", {{"source", s}, {"sink", t}, {"paths", items}},
                kNodeEdgeStep | kCalculationStep);
    }
    tr.emit("flow.done", {{"source", s}, {"sink", t}, {"total", total}, {"augmented", paths.size()}},
            kNodeEdgeStep);
    return AnswerValue::integer(total);
}

AnswerValue solve_bfs(Tracer& tr, const Graph& g, NodeId u) {
    emit_structure(tr, g);
    std::vector<int> depth;
    auto order = bfs_order(g, u, &depth);
    std::vector<std::vector<NodeId>> layers;
    for (NodeId x : order) {
        auto d = static_cast<std::size_t>(depth[x]);
        if (layers.size() <= d) layers.resize(d + 1);
        layers[d].push_back(x);
    }
    for (auto [begin, end] : chunk_ranges(layers.size(), kMaxChunkedSteps)) {
        json items = json::array();
        for (std::size_t d = begin; d < end; ++d) items.push_back({{"depth", d}, {"nodes", layers[d]}});
        tr.emit("bfs.layer", {{"start", u}, {"directed", g.directed()}, {"layers", items}}, kNodeEdgeStep);
    }
    order = tr.calc_sequence(order, g.node_count());
    tr.emit("bfs.order", {{"start", u}, {"order", order}}, kCalculationStep);
    return AnswerValue::nodes(order);
}

AnswerValue solve_cycle(Tracer& tr, const Graph& g) {
    emit_structure(tr, g);
    bool found = false;
    if (!g.directed()) {
        std::vector<int> parent(static_cast<std::size_t>(g.node_count()));
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](int x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        json processed = json::array();
        json closing = nullptr;
        for (const Edge& e : g.edges()) {
            processed.push_back({e.u, e.v});
            int a = find(e.u), b = find(e.v);
            if (a == b) {
                closing = {e.u, e.v};
                break;
            }
            parent[a] = b;
        }
        found = !closing.is_null();
        tr.emit("cycle.union", {{"processed", processed}, {"closing", closing}}, kNodeEdgeStep);
    } else {
        const int n = g.node_count();
        std::vector<int> color(static_cast<std::size_t>(n), 0);
        std::vector<NodeId> order;
        json back_edge = nullptr;
        // Iterative DFS keeps the visit order identical to the recursive one.
        for (NodeId root = 0; root < n && back_edge.is_null(); ++root) {
            if (color[root] != 0) continue;
            std::vector<std::pair<NodeId, std::vector<NodeId>>> stack;
            color[root] = 1;
            order.push_back(root);
            stack.emplace_back(root, to_vector(g.successors(root)));
            std::vector<std::size_t> cursor{0};
            while (!stack.empty() && back_edge.is_null()) {
                auto& [x, next] = stack.back();
                std::size_t& i = cursor.back();
                if (i == next.size()) {
                    color[x] = 2;
                    stack.pop_back();
                    cursor.pop_back();
                    continue;
                }
                NodeId y = next[i++];
                if (color[y] == 1) {
                    back_edge = {x, y};
                } else if (color[y] == 0) {
                    color[y] = 1;
                    order.push_back(y);
                    stack.emplace_back(y, to_vector(g.successors(y)));
                    cursor.push_back(0);
                }
            }
        }
        found = !back_edge.is_null();
        tr.emit("cycle.dfs", {{"order", order}, {"back_edge", back_edge}}, kNodeEdgeStep);
    }
    found = tr.calc(found);
    tr.emit("cycle.verdict", {{"directed", g.directed()}, {"found", found}}, kCalculationStep);
    return AnswerValue::boolean(found);
}

AnswerValue solve_diameter(Tracer& tr, const Graph& g, bool relaxed) {
    const int n = g.node_count();
    std::vector<std::vector<int>> rows;
    bool connected = true;
    for (NodeId s = 0; s < n; ++s) {
        std::vector<int> depth;
        bfs_order(g, s, &depth);
        for (int d : depth) connected = connected && d >= 0;
        rows.push_back(std::move(depth));
    }
    if (!connected && !relaxed) {
        throw DataError("disconnected-graph", "diameter is undefined on a disconnected graph");
    }
    emit_structure(tr, g, connected);
    tr.emit("sp.bfs", {{"rows", rows}}, kNodeEdgeStep);
    std::vector<long long> ecc;
    for (const auto& row : rows) ecc.push_back(*std::max_element(row.begin(), row.end()));
    ecc = tr.calc_counts(ecc);
    tr.emit("dia.distances", {{"eccentricities", ecc}}, kCalculationStep);
    auto a = static_cast<NodeId>(std::max_element(ecc.begin(), ecc.end()) - ecc.begin());
    auto b = static_cast<NodeId>(std::max_element(rows[a].begin(), rows[a].end()) - rows[a].begin());
    long long diameter = tr.calc(ecc[a]);
    tr.emit("dia.farthest", {{"pair", {a, b}}, {"distance", diameter}}, kCalculationStep);
    return AnswerValue::integer(diameter);
}

AnswerValue solve_mst(Tracer& tr, const Graph& g, bool relaxed) {
    const bool connected = is_connected_undirected(g);
    if (!connected && !relaxed) {
        throw DataError("disconnected-graph", "spanning tree needs a connected graph");
    }
    emit_structure(tr, g, connected);
    auto edges = g.edges();
    std::stable_sort(edges.begin(), edges.end(),
                     [](const Edge& x, const Edge& y) { return x.weight.value_or(1) < y.weight.value_or(1); });
    json sorted = json::array();
    for (const Edge& e : edges) sorted.push_back({e.u, e.v, e.weight.value_or(1)});
    tr.emit("mst.sort", {{"edges", sorted}}, kNodeEdgeStep);

    struct Decision {
        Edge edge;
        bool accepted;
    };
    std::vector<Decision> decisions;
    std::vector<int> parent(static_cast<std::size_t>(g.node_count()));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    int accepted = 0;
    for (const Edge& e : edges) {
        if (accepted == g.node_count() - 1) break;
        int a = find(e.u), b = find(e.v);
        const bool take = a != b;
        if (take) {
            parent[a] = b;
            ++accepted;
        }
        decisions.push_back({e, take});
    }
    long long total = 0;
    for (auto [begin, end] : chunk_ranges(decisions.size(), kMaxChunkedSteps)) {
        json items = json::array();
        for (std::size_t i = begin; i < end; ++i) {
            const auto& d = decisions[i];
            if (d.accepted) total = tr.calc(total + d.edge.weight.value_or(1));
            items.push_back({{"edge", {d.edge.u, d.edge.v}},
                             {"weight", d.edge.weight.value_or(1)},
                             {"accepted", d.accepted},
                             {"total", total}});
        }
        tr.emit("mst.pick", {{"decisions", items}}, kNodeEdgeStep | kCalculationStep);
    }
    total = tr.calc(total);
    tr.emit("mst.total", {{"total", total}, {"edges", accepted}}, kCalculationStep);
    return AnswerValue::integer(total);
}

void check_contract(TaskKind kind, const Graph& g, std::span<const NodeId> args, bool relaxed) {
    const TaskInfo& info = task_info(kind);
    if (static_cast<int>(args.size()) != info.arity) {
        throw DataError("arity-mismatch", to_string(kind) + " expects " + std::to_string(info.arity) +
                                              " node argument(s), got " + std::to_string(args.size()));
    }
    for (NodeId a : args) {
        if (!g.valid_node(a)) throw DataError("invalid-node", "node " + std::to_string(a) + " not in graph");
    }
    if (kind == TaskKind::MaximumFlow && args[0] == args[1]) {
        throw DataError("invalid-node", "maximum flow needs distinct source and sink");
    }
    if (relaxed) return;
    if (info.directedness == Directedness::UndirectedOnly && g.directed()) {
        throw DataError("directedness-violation", to_string(kind) + " is defined on undirected graphs");
    }
    if (info.directedness == Directedness::DirectedOnly && !g.directed()) {
        throw DataError("directedness-violation", to_string(kind) + " is defined on directed graphs");
    }
    if (info.weighted && !g.weighted()) {
        throw DataError("weights-required", to_string(kind) + " needs a weighted graph");
    }
}

}  // namespace

const TaskInfo& task_info(TaskKind kind) { return kTasks[static_cast<int>(kind)]; }

const std::vector<TaskKind>& all_tasks() {
    static const std::vector<TaskKind> tasks = [] {
        std::vector<TaskKind> v;
        for (const auto& info : kTasks) v.push_back(info.kind);
        return v;
    }();
    return tasks;
}

std::string to_string(TaskKind kind) { return task_info(kind).id; }

TaskKind parse_task(const std::string& id) {
    for (const auto& info : kTasks) {
        if (id == info.id) return info.kind;
    }
    throw DataError("bad-config", "unknown task: " + id);
}

AnswerType AnswerValue::type() const {
    switch (value.index()) {
        case 0: return AnswerType::Integer;
        case 1: return AnswerType::Float;
        case 2: return AnswerType::Boolean;
        default: return AnswerType::NodeList;
    }
}

std::string format_answer(const AnswerValue& a) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, long long>) return std::to_string(v);
            else if constexpr (std::is_same_v<T, double>) return fmt_double(v);
            else if constexpr (std::is_same_v<T, bool>) return v ? "True" : "False";
            else return join_nodes(v);
        },
        a.value);
}

nlohmann::json answer_to_json(const AnswerValue& a) {
    return std::visit([](const auto& v) { return json(v); }, a.value);
}

AnswerValue answer_from_json(const nlohmann::json& j, AnswerType type) {
    try {
        switch (type) {
            case AnswerType::Integer: return AnswerValue::integer(j.get<long long>());
            case AnswerType::Float: return AnswerValue::floating(j.get<double>());
            case AnswerType::Boolean: return AnswerValue::boolean(j.get<bool>());
            case AnswerType::NodeList: return AnswerValue::nodes(j.get<std::vector<NodeId>>());
        }
    } catch (const nlohmann::json::exception& ex) {
        throw DataError("bad-answer", std::string("answer does not match its type: ") + ex.what());
    }
    throw DataError("bad-answer", "unknown answer type");
}

SolveResult solve(TaskKind kind, const Graph& g, std::span<const NodeId> args, const SolveOptions& options) {
    check_contract(kind, g, args, options.relaxed);
    Tracer tr(options);
    AnswerValue answer;
    switch (kind) {
        case TaskKind::Degree: answer = solve_degree(tr, g, args[0]); break;
        case TaskKind::ClusteringCoefficient: answer = solve_clustering(tr, g, args[0]); break;
        case TaskKind::Neighbor: answer = solve_neighbor(tr, g, args[0]); break;
        case TaskKind::PageRank: answer = solve_pagerank(tr, g); break;
        case TaskKind::Predecessor: answer = solve_predecessor(tr, g, args[0]); break;
        case TaskKind::Jaccard: answer = solve_jaccard(tr, g, args[0], args[1]); break;
        case TaskKind::CommonNeighbor: answer = solve_common_neighbor(tr, g, args[0], args[1]); break;
        case TaskKind::Connectivity: answer = solve_connectivity(tr, g, args[0], args[1]); break;
        case TaskKind::MaximumFlow: answer = solve_max_flow(tr, g, args[0], args[1]); break;
        case TaskKind::BFS: answer = solve_bfs(tr, g, args[0]); break;
        case TaskKind::Cycle: answer = solve_cycle(tr, g); break;
        case TaskKind::Diameter: answer = solve_diameter(tr, g, options.relaxed); break;
        case TaskKind::MST: answer = solve_mst(tr, g, options.relaxed); break;
    }
    tr.emit("answer",
            {{"task", to_string(kind)},
             {"subject", question_subject(kind, args)},
             {"answer", format_answer(answer)},
             {"value", answer_to_json(answer)}},
            kConclusionStep);
    return {std::move(answer), tr.take()};
}

double clustering_coefficient(const Graph& g, NodeId u) {
    if (!g.valid_node(u)) throw DataError("invalid-node", "node " + std::to_string(u) + " not in graph");
    auto nbrs = pair_neighbors(g, u);
    return clustering_from_counts(g.directed(), static_cast<long long>(links_among(g, nbrs).size()),
                                  static_cast<long long>(nbrs.size()));
}

PageRankResult pagerank(const Graph& g) {
    PageRankResult result;
    const int n = g.node_count();
    result.values.assign(static_cast<std::size_t>(n), 1.0 / n);
    for (int it = 0; it < kPageRankIterations; ++it) {
        result.values = pagerank_iterate(g, result.values);
        result.iterations.push_back(result.values);
    }
    result.top = argmax_smallest(result.values);
    return result;
}

long long max_flow(const Graph& g, NodeId s, NodeId t) {
    if (!g.valid_node(s) || !g.valid_node(t)) throw DataError("invalid-node", "source or sink not in graph");
    if (s == t) throw DataError("invalid-node", "maximum flow needs distinct source and sink");
    long long total = 0;
    for (const auto& p : augmenting_paths(g, s, t)) total += p.bottleneck;
    return total;
}

std::string question_subject(TaskKind kind, std::span<const NodeId> args) {
    auto node = [&](std::size_t i) { return "node " + std::to_string(args[i]); };
    switch (kind) {
        case TaskKind::Degree: return "the degree of " + node(0);
        case TaskKind::ClusteringCoefficient: return "the clustering coefficient of " + node(0);
        case TaskKind::Neighbor: return "the list of neighbors of " + node(0);
        case TaskKind::PageRank: return "the node with the largest PageRank value";
        case TaskKind::Predecessor: return "the list of predecessors of " + node(0);
        case TaskKind::Jaccard: return "the Jaccard coefficient of " + node(0) + " and " + node(1);
        case TaskKind::CommonNeighbor: return "the number of common neighbors of " + node(0) + " and " + node(1);
        case TaskKind::Connectivity:
            return "the answer to whether a path exists from " + node(0) + " to " + node(1);
        case TaskKind::MaximumFlow: return "the maximum flow from " + node(0) + " to " + node(1);
        case TaskKind::BFS: return "the BFS traversal order starting from " + node(0);
        case TaskKind::Cycle: return "the answer to whether the graph has a cycle";
        case TaskKind::Diameter: return "the diameter of the graph";
        case TaskKind::MST: return "the total weight of the minimum spanning tree";
    }
    return "the answer";
}

std::string render_prompt(TaskKind kind, const Graph& g, std::span<const NodeId> args) {
    static const std::string kReason = " Please reason step by step, and put your final answer within \\boxed{}.";
    static const std::string kArray =
        " The answer should be in the form of an array that starts with'[' and ends with ']', separated by comma ','";
    static const std::string kBool = " Please reason step by step, and answer with \\boxed{True} or \\boxed{False}.";
    auto n = [&](std::size_t i) { return std::to_string(args[i]); };

    std::string text = std::string("Given ") + (g.directed() ? "a directed" : "an undirected") +
                       " graph: This is " + render_edgelist(g) + ".";
    switch (kind) {
        case TaskKind::Degree: text += " What is the degree of node " + n(0) + "?" + kReason; break;
        case TaskKind::ClusteringCoefficient:
            text += " What is the clustering coefficient of node " + n(0) +
                    "? For a directed graph, we consider a node's successors as its neighbors." + kReason;
            break;
        case TaskKind::Neighbor:
            text += " Which are the neighbor nodes of node " + n(0) + "?" + kReason + kArray + ".";
            break;
        case TaskKind::PageRank:
            text += " Which node has the largest PageRank value? The dampling factor is 0.85. The number of "
                    "iterations is 3. The initial PageRank values for all nodes are initialized equally as 1/N, "
                    "where N is the number of nodes." + kReason;
            break;
        case TaskKind::Predecessor:
            text += " Which are the predecessor nodes of node " + n(0) +
                    "? A predecessor of n is a node m such that there exists a directed edge from m to n." +
                    kReason + kArray + ".";
            break;
        case TaskKind::Jaccard:
            text += " Calculate the Jaccard coefficient of node " + n(0) + " and node " + n(1) +
                    ". For a directed graph, we consider a node's successors as its neighbors." + kReason;
            break;
        case TaskKind::CommonNeighbor:
            text += " Calculate the number of common neighbors of node " + n(0) + " and node " + n(1) +
                    ". In the context of a directed graph, we consider a node's successors as its neighbors." +
                    kReason;
            break;
        case TaskKind::Connectivity:
            text += " Is there a path between node " + n(0) + " and node " + n(1) + "?" + kBool;
            break;
        case TaskKind::MaximumFlow:
            text += " Calculate the maximum flow between node " + n(0) + " and node " + n(1) +
                    " in this graph. Given a directed graph with capacities assigned to its edges, the maximum "
                    "flow from a source node to a sink node is the maximum amount of flow that can be sent from "
                    "the source to the sink, respecting the capacity constraints on each edge. The goal is to "
                    "find the optimal way to route flow through the network to maximize the flow from source to "
                    "sink." + kReason;
            break;
        case TaskKind::BFS:
            text += " Start from node " + n(0) +
                    ", output a sequence of traversal in breadth-first search (BFS) order." + kReason + kArray;
            break;
        case TaskKind::Cycle:
            text += " Does the graph have a cycle? For a directed graph, a cycle is a closed path that traverses "
                    "through a sequence of nodes and directed edges, eventually returning to the starting node." +
                    kBool;
            break;
        case TaskKind::Diameter:
            text += " Calculate the diameter of the graph. The diameter is the maximum distance over all pairs of "
                    "nodes in the graph." + kReason;
            break;
        case TaskKind::MST:
            text += " Output the total weight of the minimum spanning tree (MST) for this graph." + kReason;
            break;
    }
    return text;
}

TaskInstance make_instance(std::string id, TaskKind kind, Graph g, std::vector<NodeId> args) {
    SolveResult solved = solve(kind, g, args);
    std::string prompt = render_prompt(kind, g, args);
    return {std::move(id), kind, std::move(g), std::move(args), std::move(solved.answer), std::move(prompt)};
}

}  // namespace gcp
