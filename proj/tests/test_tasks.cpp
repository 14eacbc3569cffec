#include <doctest.h>

#include <algorithm>

#include "gcp/error.hpp"
#include "gcp/random.hpp"
#include "gcp/tasks.hpp"
#include "reference.hpp"

using namespace gcp;

namespace {

// Small random corpus covering both orientations, with antiparallel arcs on
// some directed graphs since the solvers must accept them.
std::vector<Graph> corpus(bool weighted, int count, int max_nodes = 8) {
    std::vector<Graph> out;
    Rng rng(weighted ? 99 : 7);
    for (int i = 0; i < count; ++i) {
        const bool directed = i % 2 == 1;
        const int n = static_cast<int>(uniform_int(rng, 2, max_nodes));
        const double p = 0.15 + 0.6 * uniform_unit(rng);
        Graph g(n, directed, weighted);
        for (int u = 0; u < n; ++u)
            for (int v = 0; v < n; ++v) {
                if (u == v || (!directed && u > v)) continue;
                if (!bernoulli(rng, p)) continue;
                std::optional<int> w;
                if (weighted) w = static_cast<int>(uniform_int(rng, 1, 10));
                g.add_edge(u, v, w);
            }
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<NodeId> as_sorted(std::vector<NodeId> v) {
    std::sort(v.begin(), v.end());
    return v;
}

AnswerValue run(TaskKind kind, const Graph& g, std::vector<NodeId> args) {
    return solve(kind, g, args).answer;
}

std::string error_code(TaskKind kind, const Graph& g, std::vector<NodeId> args) {
    try {
        solve(kind, g, args);
    } catch (const DataError& e) {
        return e.code();
    }
    return "";
}

}  // namespace

TEST_CASE("node-level tasks agree with the references") {
    for (const auto& g : corpus(false, 120)) {
        for (NodeId u = 0; u < g.node_count(); ++u) {
            CHECK(std::get<long long>(run(TaskKind::Degree, g, {u}).value) == ref::degree(g, u));
            CHECK(std::get<double>(run(TaskKind::ClusteringCoefficient, g, {u}).value) ==
                  doctest::Approx(ref::clustering(g, u)));
            CHECK(clustering_coefficient(g, u) == doctest::Approx(ref::clustering(g, u)));
            CHECK(as_sorted(std::get<std::vector<NodeId>>(run(TaskKind::Neighbor, g, {u}).value)) ==
                  ref::any_set(g, u));
            CHECK(as_sorted(std::get<std::vector<NodeId>>(run(TaskKind::Predecessor, g, {u}).value)) ==
                  (g.directed() ? ref::in_set(g, u) : ref::any_set(g, u)));
            CHECK(std::get<std::vector<NodeId>>(run(TaskKind::BFS, g, {u}).value) == ref::bfs(g, u));
        }
    }
}

TEST_CASE("pagerank matches dense power iteration") {
    for (const auto& g : corpus(false, 80)) {
        auto expected = ref::pagerank(g);
        auto got = pagerank(g);
        REQUIRE(got.values.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) CHECK(got.values[i] == doctest::Approx(expected[i]));
        double sum = 0;
        for (double v : got.values) sum += v;
        CHECK(sum == doctest::Approx(1.0));
        CHECK(got.iterations.size() == 3);
        CHECK(got.top == ref::pagerank_top(g));
        CHECK(std::get<long long>(run(TaskKind::PageRank, g, {}).value) == got.top);
    }
}

TEST_CASE("pair tasks agree with the references") {
    for (const auto& g : corpus(false, 80)) {
        for (NodeId u = 0; u < g.node_count(); ++u)
            for (NodeId v = 0; v < g.node_count(); ++v) {
                if (u == v) continue;
                CHECK(std::get<double>(run(TaskKind::Jaccard, g, {u, v}).value) ==
                      doctest::Approx(ref::jaccard(g, u, v)));
                CHECK(std::get<long long>(run(TaskKind::CommonNeighbor, g, {u, v}).value) ==
                      ref::common_neighbors(g, u, v));
                CHECK(std::get<bool>(run(TaskKind::Connectivity, g, {u, v}).value) == ref::connected(g, u, v));
            }
    }
}

TEST_CASE("maximum flow equals the minimum cut") {
    int checked = 0;
    for (const auto& g : corpus(true, 80, 9)) {
        if (!g.directed()) continue;
        for (NodeId s = 0; s < g.node_count(); ++s)
            for (NodeId t = 0; t < g.node_count(); ++t) {
                if (s == t) continue;
                const long long expected = ref::max_flow(g, s, t);
                CHECK(max_flow(g, s, t) == expected);
                CHECK(std::get<long long>(run(TaskKind::MaximumFlow, g, {s, t}).value) == expected);
                ++checked;
            }
    }
    CHECK(checked > 500);
}

TEST_CASE("cycle detection matches the closure and forest references") {
    for (const auto& g : corpus(false, 200)) {
        CHECK(std::get<bool>(run(TaskKind::Cycle, g, {}).value) == ref::has_cycle(g));
    }
    Graph two_cycle(2, true);
    two_cycle.add_edge(0, 1);
    two_cycle.add_edge(1, 0);
    CHECK(std::get<bool>(run(TaskKind::Cycle, two_cycle, {}).value));
}

TEST_CASE("diameter and spanning tree on connected undirected graphs") {
    int checked = 0;
    for (const auto& g : corpus(true, 200, 7)) {
        if (g.directed()) continue;
        auto dia = ref::diameter(g);
        auto mst = ref::mst_weight(g);
        CHECK(dia.has_value() == mst.has_value());
        if (!dia) {
            if (g.node_count() > 1) {
                CHECK(error_code(TaskKind::Diameter, g, {}) == "disconnected-graph");
                CHECK(error_code(TaskKind::MST, g, {}) == "disconnected-graph");
            }
            continue;
        }
        CHECK(std::get<long long>(run(TaskKind::Diameter, g, {}).value) == *dia);
        CHECK(std::get<long long>(run(TaskKind::MST, g, {}).value) == *mst);
        ++checked;
    }
    CHECK(checked > 30);
}

TEST_CASE("task contracts") {
    Graph und(4, false);
    und.add_edge(0, 1);
    Graph dir(4, true);
    dir.add_edge(0, 1);
    Graph wdir(4, true, true);
    wdir.add_edge(0, 1, 3);
    CHECK(error_code(TaskKind::Degree, und, {}) == "arity-mismatch");
    CHECK(error_code(TaskKind::Jaccard, und, {0}) == "arity-mismatch");
    CHECK(error_code(TaskKind::Degree, und, {7}) == "invalid-node");
    CHECK(error_code(TaskKind::Diameter, dir, {}) == "directedness-violation");
    CHECK(error_code(TaskKind::MaximumFlow, wdir, {0, 1}).empty());
    CHECK(error_code(TaskKind::MaximumFlow, und, {0, 1}) == "directedness-violation");
    CHECK(error_code(TaskKind::MaximumFlow, dir, {0, 1}) == "weights-required");
    CHECK(error_code(TaskKind::MST, und, {}) == "weights-required");
    CHECK(task_info(TaskKind::Neighbor).in_domain == false);
    CHECK(task_info(TaskKind::BFS).in_domain == false);
    CHECK(task_info(TaskKind::Cycle).in_domain == false);
    int in_domain = 0;
    for (auto k : all_tasks()) in_domain += task_info(k).in_domain ? 1 : 0;
    CHECK(in_domain == 10);
    CHECK(all_tasks().size() == static_cast<std::size_t>(kTaskCount));
    for (auto k : all_tasks()) CHECK(parse_task(to_string(k)) == k);
}

TEST_CASE("traces open with structure and close with the answer") {
    for (const auto& g : corpus(true, 40, 7)) {
        for (auto kind : all_tasks()) {
            const auto& info = task_info(kind);
            std::vector<NodeId> args;
            for (int i = 0; i < info.arity; ++i) args.push_back(std::min(i, g.node_count() - 1));
            if (info.arity == 2 && g.node_count() < 2) continue;
            SolveResult r;
            try {
                r = solve(kind, g, args);
            } catch (const DataError&) {
                continue;
            }
            REQUIRE(r.trace.size() >= 3);
            CHECK(r.trace.front().tag == "structure");
            CHECK((r.trace.front().flags & kStructureStep) != 0);
            CHECK(r.trace.back().tag == "answer");
            CHECK(r.trace.back().flags == kConclusionStep);
            CHECK(answer_from_json(r.trace.back().payload["value"], info.answer_type) == r.answer);
            CHECK(r.answer.type() == info.answer_type);
            for (std::size_t i = 1; i + 1 < r.trace.size(); ++i) CHECK(r.trace[i].flags != 0);
        }
    }
}

TEST_CASE("a calculation fault leaves earlier steps untouched") {
    int changed = 0;
    for (const auto& g : corpus(true, 30, 7)) {
        if (!g.directed()) continue;
        for (auto kind : {TaskKind::Degree, TaskKind::ClusteringCoefficient, TaskKind::PageRank,
                          TaskKind::MaximumFlow, TaskKind::CommonNeighbor}) {
            const int arity = task_info(kind).arity;
            std::vector<NodeId> args;
            for (int i = 0; i < arity; ++i) args.push_back(i);
            if (g.node_count() < 2) continue;
            auto clean = solve(kind, g, args);
            for (std::size_t step = 0; step < clean.trace.size(); ++step) {
                if (!(clean.trace[step].flags & kCalculationStep)) continue;
                SolveOptions opt;
                opt.fault = CalcFault{step, 17};
                auto bad = solve(kind, g, args, opt);
                auto again = solve(kind, g, args, opt);
                CHECK(bad.answer == again.answer);
                for (std::size_t i = 0; i < step; ++i) CHECK(bad.trace[i].payload == clean.trace[i].payload);
                CHECK(bad.trace[step].payload != clean.trace[step].payload);
                if (!(bad.answer == clean.answer)) ++changed;
            }
        }
    }
    CHECK(changed > 0);
}

TEST_CASE("prompts follow the fixed question templates") {
    Graph g(3, false);
    g.add_edge(0, 1);
    g.add_edge(1, 2);
    CHECK(render_prompt(TaskKind::Degree, g, std::vector<NodeId>{2}) ==
          "Given an undirected graph: This is an undirected graph with edges: (0, 1), (1, 2). What is the degree of "
          "node 2? Please reason step by step, and put your final answer within \\boxed{}.");
    const std::string pr = render_prompt(TaskKind::PageRank, g, std::vector<NodeId>{});
    CHECK(pr.find("Which node has the largest PageRank value? The dampling factor is 0.85. The number of "
                  "iterations is 3. The initial PageRank values for all nodes are initialized equally as 1/N, "
                  "where N is the number of nodes. Please reason step by step, and put your final answer within "
                  "\\boxed{}.") != std::string::npos);
    Graph d(10, true);
    d.add_edge(2, 9);
    const std::string cn = render_prompt(TaskKind::CommonNeighbor, d, std::vector<NodeId>{2, 9});
    CHECK(cn.rfind("Given a directed graph:", 0) == 0);
    CHECK(cn.find("Calculate the number of common neighbors of node 2 and node 9. In the context of a directed "
                  "graph, we consider a node's successors as its neighbors. Please reason step by step, and put "
                  "your final answer within \\boxed{}.") != std::string::npos);
    auto inst = make_instance("x", TaskKind::Degree, g, {1});
    CHECK(std::get<long long>(inst.gold.value) == 2);
    CHECK(inst.prompt == render_prompt(TaskKind::Degree, g, inst.args));
}

TEST_CASE("answer formatting") {
    CHECK(format_answer(AnswerValue::integer(3)) == "3");
    CHECK(format_answer(AnswerValue::floating(1.0 / 3.0)) == "0.333333");
    CHECK(format_answer(AnswerValue::boolean(true)) == "True");
    CHECK(format_answer(AnswerValue::nodes({1, 2})) == "[1, 2]");
    CHECK(format_answer(AnswerValue::nodes({})) == "[]");
}
