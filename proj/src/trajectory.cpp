#include "gcp/trajectory.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <functional>
#include <map>

#include "gcp/error.hpp"
#include "gcp/evaluator.hpp"
#include "gcp/random.hpp"

namespace gcp {

namespace {

using json = nlohmann::json;
using Templates = std::array<const char*, 3>;
using Fields = std::map<std::string, std::string>;

std::string fill(std::string_view tmpl, const Fields& fields) {
    std::string out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i);
            if (close != std::string_view::npos) {
                auto it = fields.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != fields.end()) {
                    out += it->second;
                    i = close;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i]);
    }
    return out;
}

std::string num(double v, const char* fmt = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

std::string node_list(const json& nodes) {
    if (nodes.empty()) return "none";
    std::string out = "[";
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(nodes[i].get<int>());
    }
    return out + "]";
}

std::string pair_list(const json& pairs) {
    if (pairs.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (i) out += ", ";
        out += "(" + std::to_string(pairs[i][0].get<int>()) + ", " + std::to_string(pairs[i][1].get<int>()) + ")";
    }
    return out;
}

std::string path_text(const json& path) {
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) out += " -> ";
        out += std::to_string(path[i].get<int>());
    }
    return out;
}

std::string per_node(const json& values, const std::function<std::string(const json&)>& show) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += "node " + std::to_string(i) + ": " + show(values[i]);
    }
    return out;
}

std::string s(const json& j) { return j.is_string() ? j.get<std::string>() : j.dump(); }

struct Rendered {
    Templates templates;
    Fields fields;
};

Rendered render_structure(const json& p) {
    Fields f{{"kind", p["directed"].get<bool>() ? "a directed" : "an undirected"},
             {"n", s(p["nodes"])},
             {"last", std::to_string(p["nodes"].get<int>() - 1)},
             {"weighted", p["weighted"].get<bool>() ? " with weighted edges" : ""},
             {"connected", ""}};
    if (p.contains("connected")) {
        f["connected"] = p["connected"].get<bool>() ? " It is connected, so every node can reach every other node."
                                                    : " It is not connected.";
    }
    return {{"First, check the graph structure: this is {kind} graph with {n} nodes{weighted}.{connected}",
             "Let's examine the graph. It is {kind} graph on {n} nodes, numbered 0 to {last}{weighted}.{connected}",
             "Graph structure check: we are working with {kind} graph that has {n} nodes{weighted}.{connected}"},
            f};
}

Rendered render_degree_incident(const json& p) {
    Fields f{{"u", s(p["node"])}};
    if (p["directed"].get<bool>()) {
        f["in"] = node_list(p["in"]);
        f["out"] = node_list(p["out"]);
        return {{"Edges into node {u} come from {in}, and edges out of node {u} go to {out}.",
                 "Node {u} has incoming edges from {in} and outgoing edges to {out}.",
                 "Looking at the edges touching node {u}: in-neighbors {in}, out-neighbors {out}."},
                f};
    }
    f["nbrs"] = node_list(p["neighbors"]);
    return {{"Node {u} shares an edge with nodes {nbrs}.",
             "The edges incident to node {u} connect it to {nbrs}.",
             "Listing the edges that touch node {u}, its endpoints are {nbrs}."},
            f};
}

Rendered render_degree_count(const json& p) {
    Fields f{{"u", s(p["node"])}, {"d", s(p["degree"])}};
    if (p["directed"].get<bool>()) {
        f["in"] = s(p["in_degree"]);
        f["out"] = s(p["out_degree"]);
        return {{"Node {u} has in-degree {in} and out-degree {out}, so its degree is {in} + {out} = {d}.",
                 "Adding the in-degree {in} and the out-degree {out} of node {u} gives a degree of {d}.",
                 "In-degree {in} plus out-degree {out} makes the degree of node {u} equal to {d}."},
                f};
    }
    return {{"Counting these edges, node {u} has degree {d}.",
             "That is {d} incident edges, so the degree of node {u} is {d}.",
             "The number of edges incident to node {u} is {d}."},
            f};
}

Rendered render_neighbors(const json& p) {
    Fields f{{"u", s(p["node"])}, {"rel", s(p["relation"])}, {"list", node_list(p["nodes"])}};
    return {{"The {rel} of node {u} are {list}.",
             "Next, collect the {rel} of node {u}: {list}.",
             "Scanning the edge list, node {u} has {rel} {list}."},
            f};
}

Rendered render_cc_links(const json& p) {
    Fields f{{"u", s(p["node"])}, {"links", pair_list(p["links"])}, {"t", s(p["count"])},
             {"what", p["directed"].get<bool>() ? "directed edges" : "edges"}};
    return {{"Among the neighbors of node {u}, the {what} are {links}, so T = {t}.",
             "Check which neighbor pairs of node {u} are linked: {links}. That gives T = {t} {what}.",
             "The {what} between neighbors of node {u} are {links}; in total T = {t}."},
            f};
}

Rendered render_cc_formula(const json& p) {
    const long long d = p["degree"].get<long long>();
    Fields f{{"u", s(p["node"])}, {"d", std::to_string(d)}, {"dm1", std::to_string(d - 1)}, {"t", s(p["links"])},
             {"value", num(p["value"].get<double>())}};
    if (d < 2) {
        return {{"Node {u} has D = {d} neighbors, fewer than two, so its clustering coefficient is {value}.",
                 "With only D = {d} neighbors no pair can be linked; the clustering coefficient of node {u} is {value}.",
                 "Since D = {d} < 2, the clustering coefficient of node {u} is taken as {value}."},
                f};
    }
    if (p["directed"].get<bool>()) {
        return {{"With D = {d} and T = {t}, the clustering coefficient is T/(D(D-1)) = {t}/({d}*{dm1}) = {value}.",
                 "Apply C = T/(D(D-1)) for a directed graph: {t}/({d}*{dm1}) = {value}.",
                 "The clustering coefficient of node {u} is {t}/({d}*{dm1}) = {value}."},
                f};
    }
    return {{"With D = {d} and T = {t}, the clustering coefficient is 2T/(D(D-1)) = 2*{t}/({d}*{dm1}) = {value}.",
             "Apply C = 2T/(D(D-1)) for an undirected graph: 2*{t}/({d}*{dm1}) = {value}.",
             "The clustering coefficient of node {u} is 2*{t}/({d}*{dm1}) = {value}."},
            f};
}

Rendered render_collect(const json& p) {
    Fields f{{"u", s(p["node"])}, {"what", s(p["what"])}, {"list", node_list(p["nodes"])}};
    return {{"Combining these, the {what} of node {u} are {list}.",
             "So the full set of {what} of node {u} is {list}.",
             "Putting it together, node {u} has {what} {list}."},
            f};
}

Rendered render_pr_init(const json& p) {
    Fields f{{"n", s(p["nodes"])},
             {"init", num(p["initial"].get<double>(), "%.4f")},
             {"degs", per_node(p["out_degrees"], [](const json& v) { return v.dump(); })},
             {"dangling", ""},
             {"deg", p["directed"].get<bool>() ? "out-degrees" : "degrees"}};
    if (!p["dangling"].empty()) {
        f["dangling"] = " Nodes " + node_list(p["dangling"]) +
                        " have no outgoing edges, so their rank is spread evenly over all nodes.";
    }
    return {{"There are {n} nodes, so each starts with PageRank 1/{n} = {init}. The {deg} are {degs}.{dangling}",
             "Initialize every node to 1/{n} = {init}; the damping factor is 0.85. The {deg} are {degs}.{dangling}",
             "Start with PageRank {init} (1/{n}) for each node, using {deg} {degs}.{dangling}"},
            f};
}

Rendered render_pr_iteration(const json& p) {
    Fields f{{"k", s(p["iteration"])},
             {"vals", per_node(p["values"], [](const json& v) { return num(v.get<double>(), "%.4f"); })}};
    return {{"After iteration {k}, the PageRank values are: {vals}.",
             "Iteration {k} gives {vals}.",
             "Updating each node with 0.15/N plus 0.85 times its incoming share, iteration {k} yields {vals}."},
            f};
}

Rendered render_pr_argmax(const json& p) {
    Fields f{{"node", s(p["node"])}, {"value", num(p["value"].get<double>(), "%.4f")}};
    return {{"After 3 iterations, the largest value belongs to node {node} ({value}).",
             "Comparing the final values, node {node} is highest with {value}.",
             "The maximum PageRank after the last iteration is {value}, at node {node}."},
            f};
}

Rendered render_intersection(const json& p) {
    Fields f{{"a", s(p["a"])}, {"b", s(p["b"])}, {"list", node_list(p["nodes"])},
             {"size", std::to_string(p["nodes"].size())}};
    return {{"The neighbors shared by node {a} and node {b} are {list} ({size} in total).",
             "Intersecting the two neighbor sets gives {list}, which has {size} elements.",
             "Nodes adjacent to both node {a} and node {b}: {list}, i.e. {size} nodes."},
            f};
}

Rendered render_union(const json& p) {
    Fields f{{"a", s(p["a"])}, {"b", s(p["b"])}, {"list", node_list(p["nodes"])},
             {"size", std::to_string(p["nodes"].size())}};
    return {{"The union of the two neighbor sets is {list} ({size} in total).",
             "Merging the neighbors of node {a} and node {b} gives {list}, which has {size} elements.",
             "All nodes adjacent to node {a} or node {b}: {list}, i.e. {size} nodes."},
            f};
}

Rendered render_jaccard(const json& p) {
    Fields f{{"i", s(p["intersection"])}, {"u", s(p["union"])}, {"value", num(p["value"].get<double>())},
             {"a", s(p["a"])}, {"b", s(p["b"])}};
    if (p["union"].get<int>() == 0) {
        return {{"Both neighbor sets are empty, so the Jaccard coefficient is {value}.",
                 "The union is empty; the Jaccard coefficient of node {a} and node {b} is {value}.",
                 "With no neighbors on either side, the coefficient is {value}."},
                f};
    }
    return {{"The Jaccard coefficient is |intersection| / |union| = {i}/{u} = {value}.",
             "Dividing the intersection size by the union size: {i}/{u} = {value}.",
             "So J(node {a}, node {b}) = {i}/{u} = {value}."},
            f};
}

Rendered render_cn_count(const json& p) {
    Fields f{{"a", s(p["a"])}, {"b", s(p["b"])}, {"c", s(p["count"])}};
    return {{"Counting them, node {a} and node {b} have {c} common neighbors.",
             "That makes {c} common neighbors of node {a} and node {b}.",
             "The number of shared neighbors is {c}."},
            f};
}

Rendered render_traversal(const json& p) {
    Fields f{{"u", s(p["start"])}, {"order", node_list(p["order"])},
             {"via", p["directed"].get<bool>() ? " following edge directions" : ""}};
    return {{"Run a breadth-first search from node {u}{via}; the reached nodes in order are {order}.",
             "Starting at node {u} and exploring neighbors level by level{via}, we reach {order}.",
             "A BFS from node {u}{via} visits {order}."},
            f};
}

Rendered render_conn_check(const json& p) {
    Fields f{{"u", s(p["source"])}, {"v", s(p["target"])}};
    if (p["found"].get<bool>()) {
        return {{"Node {v} is among the reached nodes, so there is a path from node {u} to node {v}.",
                 "The search reaches node {v}, so the two nodes are connected.",
                 "Since node {v} was visited, a path from node {u} to node {v} exists."},
                f};
    }
    return {{"Node {v} is never reached, so there is no path from node {u} to node {v}.",
             "The search finishes without visiting node {v}, so the two nodes are not connected.",
             "Since node {v} was not visited, no path from node {u} to node {v} exists."},
            f};
}

Rendered render_flow_augment(const json& p) {
    std::string items;
    for (std::size_t i = 0; i < p["paths"].size(); ++i) {
        const auto& item = p["paths"][i];
        if (i) items += "; ";
        items += path_text(item["path"]) + " with bottleneck " + s(item["bottleneck"]) + " (total flow " +
                 s(item["total"]) + ")";
    }
    Fields f{{"s", s(p["source"])}, {"t", s(p["sink"])}, {"items", items}};
    return {{"Find augmenting paths from node {s} to node {t} in the residual graph: {items}.",
             "Push flow along shortest augmenting paths: {items}.",
             "Augmenting paths found: {items}."},
            f};
}

Rendered render_flow_done(const json& p) {
    Fields f{{"s", s(p["source"])}, {"t", s(p["sink"])}, {"total", s(p["total"])}};
    if (p["augmented"].get<int>() == 0) {
        return {{"There is no path from node {s} to node {t} with spare capacity, so the flow is {total}.",
                 "Node {t} cannot be reached from node {s} in the residual graph; the flow is {total}.",
                 "No augmenting path from node {s} to node {t} exists, so the total flow is {total}."},
                f};
    }
    return {{"No further augmenting path from node {s} to node {t} exists, so the total flow is {total}.",
             "The residual graph has no more paths from node {s} to node {t}; the flow stops at {total}.",
             "Once every augmenting path is saturated, the total flow from node {s} to node {t} is {total}."},
            f};
}

Rendered render_bfs_layer(const json& p) {
    std::string layers;
    for (std::size_t i = 0; i < p["layers"].size(); ++i) {
        const auto& layer = p["layers"][i];
        if (i) layers += "; ";
        layers += "depth " + s(layer["depth"]) + ": " + node_list(layer["nodes"]);
    }
    Fields f{{"u", s(p["start"])}, {"layers", layers}};
    return {{"Expand the BFS from node {u} level by level, smallest node ids first: {layers}.",
             "Dequeue nodes in order and enqueue unvisited neighbors in ascending order: {layers}.",
             "BFS levels from node {u}: {layers}."},
            f};
}

Rendered render_bfs_order(const json& p) {
    Fields f{{"u", s(p["start"])}, {"order", node_list(p["order"])}};
    return {{"Reading the nodes in the order they were visited gives {order}.",
             "So the BFS traversal starting at node {u} is {order}.",
             "The visit sequence is {order}."},
            f};
}

Rendered render_cycle_union(const json& p) {
    Fields f{{"processed", pair_list(p["processed"])}};
    if (p["closing"].is_null()) {
        return {{"Process the edges with union-find: {processed}. No edge joins two nodes that are already connected.",
                 "Add edges one by one, merging components: {processed}. Every edge merges two different components.",
                 "Union-find over the edges {processed} never finds an edge inside a single component."},
                f};
    }
    f["a"] = s(p["closing"][0]);
    f["b"] = s(p["closing"][1]);
    return {{"Process the edges with union-find: {processed}. Edge ({a}, {b}) joins two nodes that are already connected.",
             "Add edges one by one, merging components: {processed}. Nodes {a} and {b} were already in the same component.",
             "Union-find over the edges {processed} finds that edge ({a}, {b}) closes a loop."},
            f};
}

Rendered render_cycle_dfs(const json& p) {
    Fields f{{"order", node_list(p["order"])}};
    if (p["back_edge"].is_null()) {
        return {{"Run a depth-first search in node order, visiting {order}. No edge leads back to a node on the current path.",
                 "DFS visits {order} and never meets an edge into a node that is still being explored.",
                 "Depth-first search order: {order}; no back edge appears."},
                f};
    }
    f["x"] = s(p["back_edge"][0]);
    f["y"] = s(p["back_edge"][1]);
    return {{"Run a depth-first search in node order, visiting {order}. The edge {x} -> {y} leads back to a node on the current path.",
             "DFS visits {order} and meets edge {x} -> {y}, whose target is still being explored.",
             "Depth-first search order: {order}; edge {x} -> {y} is a back edge."},
            f};
}

Rendered render_cycle_verdict(const json& p) {
    Fields f;
    if (p["found"].get<bool>()) {
        return {{"Therefore the graph contains a cycle.", "This means a cycle exists.", "So the graph is cyclic."}, f};
    }
    return {{"Therefore the graph has no cycle.", "This means no cycle exists.", "So the graph is acyclic."}, f};
}

Rendered render_sp_bfs(const json& p) {
    std::string rows;
    for (std::size_t i = 0; i < p["rows"].size(); ++i) {
        if (i) rows += "; ";
        rows += "from " + std::to_string(i) + ": [";
        const auto& row = p["rows"][i];
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) rows += ", ";
            int d = row[j].get<int>();
            rows += d < 0 ? "inf" : std::to_string(d);
        }
        rows += "]";
    }
    Fields f{{"rows", rows}};
    return {{"Compute shortest path lengths from every node with BFS: {rows}.",
             "Run BFS from each node to get all shortest distances: {rows}.",
             "Shortest path calculation, one BFS per source: {rows}."},
            f};
}

Rendered render_dia_distances(const json& p) {
    Fields f{{"ecc", per_node(p["eccentricities"], [](const json& v) { return v.dump(); })}};
    return {{"The largest distance from each node is: {ecc}.",
             "Collecting the maximum distance per source node: {ecc}.",
             "Distance calculation, farthest distance from each node: {ecc}."},
            f};
}

Rendered render_dia_farthest(const json& p) {
    Fields f{{"a", s(p["pair"][0])}, {"b", s(p["pair"][1])}, {"d", s(p["distance"])}};
    return {{"The farthest pair is node {a} and node {b}, at distance {d}.",
             "Taking the maximum over all pairs, node {a} and node {b} are {d} apart.",
             "The longest shortest path runs from node {a} to node {b} with length {d}."},
            f};
}

Rendered render_mst_sort(const json& p) {
    std::string edges;
    for (std::size_t i = 0; i < p["edges"].size(); ++i) {
        const auto& e = p["edges"][i];
        if (i) edges += ", ";
        edges += "(" + s(e[0]) + ", " + s(e[1]) + ", w=" + s(e[2]) + ")";
    }
    if (edges.empty()) edges = "none";
    Fields f{{"edges", edges}};
    return {{"Sort the edges by weight: {edges}.",
             "For Kruskal's algorithm, list the edges in ascending weight order: {edges}.",
             "Edges ordered by weight: {edges}."},
            f};
}

Rendered render_mst_pick(const json& p) {
    std::string items;
    for (std::size_t i = 0; i < p["decisions"].size(); ++i) {
        const auto& d = p["decisions"][i];
        if (i) items += "; ";
        const std::string edge = "(" + s(d["edge"][0]) + ", " + s(d["edge"][1]) + ")";
        if (d["accepted"].get<bool>()) {
            items += "take " + edge + " with weight " + s(d["weight"]) + " (total " + s(d["total"]) + ")";
        } else {
            items += "skip " + edge + " since it would form a cycle";
        }
    }
    Fields f{{"items", items}};
    return {{"Go through the sorted edges: {items}.",
             "Kruskal's algorithm continues: {items}.",
             "Processing edges in order: {items}."},
            f};
}

Rendered render_mst_total(const json& p) {
    Fields f{{"total", s(p["total"])}, {"edges", s(p["edges"])}};
    return {{"The minimum spanning tree uses {edges} edges with total weight {total}.",
             "Summing the chosen {edges} edges gives a total weight of {total}.",
             "The selected tree has {edges} edges and weighs {total} in total."},
            f};
}

Rendered render_answer(const json& p) {
    Fields f{{"subject", s(p["subject"])}, {"answer", s(p["answer"])}};
    return {{"Therefore, {subject} is \\boxed{{answer}}.",
             "So {subject} is \\boxed{{answer}}.",
             "In conclusion, {subject} is \\boxed{{answer}}."},
            f};
}

const std::map<std::string, Rendered (*)(const json&)>& renderers() {
    static const std::map<std::string, Rendered (*)(const json&)> table = {
        {"structure", render_structure},
        {"degree.incident", render_degree_incident},
        {"degree.count", render_degree_count},
        {"neighbors", render_neighbors},
        {"cc.links", render_cc_links},
        {"cc.formula", render_cc_formula},
        {"collect", render_collect},
        {"pr.init", render_pr_init},
        {"pr.iteration", render_pr_iteration},
        {"pr.argmax", render_pr_argmax},
        {"set.intersection", render_intersection},
        {"set.union", render_union},
        {"jaccard.formula", render_jaccard},
        {"cn.count", render_cn_count},
        {"traversal", render_traversal},
        {"conn.check", render_conn_check},
        {"flow.augment", render_flow_augment},
        {"flow.done", render_flow_done},
        {"bfs.layer", render_bfs_layer},
        {"bfs.order", render_bfs_order},
        {"cycle.union", render_cycle_union},
        {"cycle.dfs", render_cycle_dfs},
        {"cycle.verdict", render_cycle_verdict},
        {"sp.bfs", render_sp_bfs},
        {"dia.distances", render_dia_distances},
        {"dia.farthest", render_dia_farthest},
        {"mst.sort", render_mst_sort},
        {"mst.pick", render_mst_pick},
        {"mst.total", render_mst_total},
        {"answer", render_answer},
    };
    return table;
}

Graph flip_directedness(const Graph& g) {
    Graph flipped(g.node_count(), !g.directed(), g.weighted());
    for (const Edge& e : g.edges()) {
        // Antiparallel arcs collapse into one undirected edge.
        if (!flipped.directed() && flipped.has_edge(e.u, e.v)) continue;
        flipped.add_edge(e.u, e.v, e.weight);
    }
    return flipped;
}

struct GraphEdit {
    bool add;
    NodeId u;
    NodeId v;
};

// Candidate single-edge edits, shuffled, alternating between edits that
// touch a task argument and edits elsewhere.
std::vector<GraphEdit> candidate_edits(const Graph& g, std::span<const NodeId> args, EditPreference pref,
                                       Rng& rng) {
    std::vector<GraphEdit> near, far;
    auto touches = [&](NodeId a, NodeId b) {
        return std::find(args.begin(), args.end(), a) != args.end() ||
               std::find(args.begin(), args.end(), b) != args.end();
    };
    for (NodeId a = 0; a < g.node_count(); ++a) {
        for (NodeId b = 0; b < g.node_count(); ++b) {
            if (a == b || (!g.directed() && a > b)) continue;
            const bool present = g.has_edge(a, b) && (g.directed() || a < b);
            GraphEdit edit{!present, a, b};
            if (edit.add && pref == EditPreference::Remove) continue;
            if (!edit.add && pref == EditPreference::Add) continue;
            (touches(a, b) ? near : far).push_back(edit);
        }
    }
    shuffle(near, rng);
    shuffle(far, rng);
    std::vector<GraphEdit> ordered;
    for (std::size_t i = 0; i < std::max(near.size(), far.size()); ++i) {
        if (i < near.size()) ordered.push_back(near[i]);
        if (i < far.size()) ordered.push_back(far[i]);
    }
    return ordered;
}

}  // namespace

std::string to_string(SequenceSource source) {
    return source == SequenceSource::Trajectory ? "trajectory" : "monte-carlo";
}

SequenceSource parse_source(const std::string& s) {
    if (s == "trajectory") return SequenceSource::Trajectory;
    if (s == "monte-carlo") return SequenceSource::MonteCarlo;
    throw DataError("bad-record", "unknown source: " + s);
}

std::string to_string(PerturbStrategy strategy) {
    switch (strategy) {
        case PerturbStrategy::Structure: return "structure";
        case PerturbStrategy::NodeEdge: return "node-edge";
        case PerturbStrategy::Calculation: return "calculation";
    }
    return "calculation";
}

std::string StepSequence::labels() const {
    std::string out;
    for (const auto& step : steps) out.push_back(step.label);
    return out;
}

std::vector<std::string> StepSequence::texts() const {
    std::vector<std::string> out;
    for (const auto& step : steps) out.push_back(step.text);
    return out;
}

bool matches_trajectory_grammar(std::string_view labels) {
    if (labels.empty()) return false;
    auto first_negative = labels.find(kNegative);
    if (first_negative == std::string_view::npos) return labels.find_first_not_of(kPositive) == std::string_view::npos;
    return labels.substr(0, first_negative).find_first_not_of(kPositive) == std::string_view::npos &&
           labels.substr(first_negative).find_first_not_of(kNegative) == std::string_view::npos;
}

bool matches_monte_carlo_grammar(std::string_view labels) {
    if (labels.empty()) return false;
    auto first_negative = labels.find(kNegative);
    if (first_negative == std::string_view::npos) return labels.find_first_not_of(kPositive) == std::string_view::npos;
    return first_negative == labels.size() - 1 &&
           labels.substr(0, first_negative).find_first_not_of(kPositive) == std::string_view::npos;
}

std::string render_step(const TraceStep& step, std::size_t index, std::uint64_t template_seed) {
    auto it = renderers().find(step.tag);
    if (it == renderers().end()) throw DataError("unknown-step-tag", "no template for step tag " + step.tag);
    Rendered r = it->second(step.payload);
    const std::uint64_t pick = hash_combine(hash_combine(template_seed, index), fnv1a(step.tag)) % 3;
    return fill(r.templates[pick], r.fields);
}

std::uint64_t template_seed_for(const TaskInstance& instance) { return fnv1a(instance.id); }

StepSequence render_trace(const ExecutionTrace& trace, const TaskInstance& instance) {
    StepSequence seq;
    seq.problem_id = instance.id;
    seq.source = SequenceSource::Trajectory;
    const std::uint64_t tseed = template_seed_for(instance);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        seq.steps.push_back({render_step(trace[i], i, tseed), kPositive});
    }
    if (!trace.empty() && trace.back().tag == "answer") {
        seq.final_answer = answer_from_json(trace.back().payload["value"], task_info(instance.kind).answer_type);
    }
    return seq;
}

StepSequence gold_trajectory(const TaskInstance& instance) {
    return render_trace(solve(instance.kind, instance.graph, instance.args).trace, instance);
}

bool strategy_applicable(PerturbStrategy strategy, const TraceStep& step) {
    switch (strategy) {
        case PerturbStrategy::Structure: return (step.flags & kStructureStep) != 0;
        case PerturbStrategy::NodeEdge: return (step.flags & kNodeEdgeStep) != 0;
        case PerturbStrategy::Calculation: return (step.flags & kCalculationStep) != 0;
    }
    return false;
}

std::vector<std::size_t> applicable_targets(const ExecutionTrace& trace, PerturbStrategy strategy) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (strategy_applicable(strategy, trace[i])) out.push_back(i);
    }
    return out;
}

StepSequence perturb(const TaskInstance& instance, const StepSequence& seq, const PerturbationPlan& plan) {
    if (seq.source != SequenceSource::Trajectory || seq.labels().find(kNegative) != std::string::npos) {
        throw DataError("not-perturbable", "only all-positive trajectory sequences can be perturbed");
    }
    const SolveResult original = solve(instance.kind, instance.graph, instance.args);
    if (plan.target_index >= original.trace.size() || plan.target_index >= seq.steps.size() ||
        !strategy_applicable(plan.strategy, original.trace[plan.target_index])) {
        throw DataError("no-applicable-step", to_string(plan.strategy) + " perturbation cannot target step " +
                                                  std::to_string(plan.target_index));
    }
    const std::uint64_t tseed = template_seed_for(instance);
    const std::size_t target = plan.target_index;

    auto try_result = [&](const SolveResult& corrupted) -> std::optional<StepSequence> {
        if (corrupted.trace.size() <= target) return std::nullopt;
        for (std::size_t i = 0; i < target; ++i) {
            if (render_step(corrupted.trace[i], i, tseed) != seq.steps[i].text) return std::nullopt;
        }
        if (render_step(corrupted.trace[target], target, tseed) == seq.steps[target].text) return std::nullopt;
        if (answers_equivalent(corrupted.answer, instance.gold, instance.kind)) return std::nullopt;
        StepSequence out;
        out.problem_id = seq.problem_id;
        out.source = SequenceSource::Trajectory;
        out.final_answer = corrupted.answer;
        for (std::size_t i = 0; i < target; ++i) out.steps.push_back({seq.steps[i].text, kPositive});
        for (std::size_t i = target; i < corrupted.trace.size(); ++i) {
            out.steps.push_back({render_step(corrupted.trace[i], i, tseed), kNegative});
        }
        return out;
    };

    auto attempt_solve = [&](const Graph& g, const SolveOptions& options) -> std::optional<SolveResult> {
        try {
            return solve(instance.kind, g, instance.args, options);
        } catch (const DataError&) {
            return std::nullopt;
        }
    };

    switch (plan.strategy) {
        case PerturbStrategy::Structure: {
            SolveOptions options;
            options.relaxed = true;
            if (auto r = attempt_solve(flip_directedness(instance.graph), options)) {
                if (auto out = try_result(*r)) return *out;
            }
            break;
        }
        case PerturbStrategy::NodeEdge: {
            Rng rng(hash_combine(plan.seed, 0x6e6f6465ULL));
            auto edits = candidate_edits(instance.graph, instance.args, plan.edit, rng);
            int tries = 0;
            for (const auto& edit : edits) {
                if (tries++ >= plan.max_retries) break;
                Graph g = instance.graph;
                if (edit.add) {
                    std::optional<int> w;
                    if (g.weighted()) w = static_cast<int>(uniform_int(rng, 1, 10));
                    g.add_edge(edit.u, edit.v, w);
                } else {
                    g.remove_edge(edit.u, edit.v);
                }
                if (auto r = attempt_solve(g, {})) {
                    if (auto out = try_result(*r)) return *out;
                }
            }
            break;
        }
        case PerturbStrategy::Calculation: {
            for (int attempt = 0; attempt < plan.max_retries; ++attempt) {
                SolveOptions options;
                options.fault = CalcFault{target, hash_combine(plan.seed, static_cast<std::uint64_t>(attempt))};
                if (auto r = attempt_solve(instance.graph, options)) {
                    if (auto out = try_result(*r)) return *out;
                }
            }
            break;
        }
    }
    throw DataError("perturbation-exhausted", to_string(plan.strategy) + " perturbation at step " +
                                                  std::to_string(target) + " never changed the answer");
}

std::string sanitize_step_text(std::string_view text) {
    std::string out;
    for (char c : text) {
        if (c == '\n' && !out.empty() && out.back() == '\n') continue;
        out.push_back(c);
    }
    while (!out.empty() && (out.front() == '\n' || out.front() == ' ')) out.erase(out.begin());
    while (!out.empty() && (out.back() == '\n' || out.back() == ' ')) out.pop_back();
    return out;
}

EncodedRecord encode_training_record(std::string_view prompt, const StepSequence& seq) {
    if (prompt.find(kStepToken) != std::string_view::npos) {
        throw DataError("step-token-in-text", "prompt contains the step token");
    }
    EncodedRecord record;
    for (const auto& step : seq.steps) {
        if (step.text.empty() || step.text.find(kStepToken) != std::string::npos || step.text.front() == '\n' ||
            step.text.back() == '\n') {
            throw DataError("step-token-in-text", "step text must be non-empty and free of the step token");
        }
        if (step.label != kPositive && step.label != kNegative) {
            throw DataError("malformed-record", "labels are '+' or '-'");
        }
        record.steps += step.text;
        record.steps += kStepToken;
        record.labels.push_back(step.label);
    }
    record.input = std::string(prompt) + "\n" + record.steps;
    return record;
}

std::vector<Step> decode_training_record(std::string_view steps, std::string_view labels) {
    std::vector<Step> out;
    std::size_t pos = 0;
    while (pos < steps.size()) {
        auto end = steps.find(kStepToken, pos);
        if (end == std::string_view::npos) throw DataError("malformed-record", "trailing text after the last step token");
        out.push_back({std::string(steps.substr(pos, end - pos)), kPositive});
        pos = end + kStepToken.size();
    }
    if (out.size() != labels.size()) {
        throw DataError("malformed-record", "label count does not match step count");
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (labels[i] != kPositive && labels[i] != kNegative) throw DataError("malformed-record", "bad label");
        out[i].label = labels[i];
    }
    return out;
}

}  // namespace gcp
