#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gcp/graph.hpp"

namespace gcp {

enum class TaskKind {
    Degree,
    ClusteringCoefficient,
    Neighbor,
    PageRank,
    Predecessor,
    Jaccard,
    CommonNeighbor,
    Connectivity,
    MaximumFlow,
    BFS,
    Cycle,
    Diameter,
    MST,
};

inline constexpr int kTaskCount = 13;

enum class TaskLevel { Node, NodePair, Graph };
enum class AnswerType { Integer, Float, Boolean, NodeList };
enum class Directedness { Any, UndirectedOnly, DirectedOnly };

struct TaskInfo {
    TaskKind kind;
    const char* id;  // stable identifier used in files and flags
    TaskLevel level;
    AnswerType answer_type;
    Directedness directedness;
    bool weighted;
    int arity;
    bool in_domain;
};

const TaskInfo& task_info(TaskKind kind);
const std::vector<TaskKind>& all_tasks();
std::string to_string(TaskKind kind);
TaskKind parse_task(const std::string& id);

// Tagged answer: Integer | Float | Boolean | NodeList.
struct AnswerValue {
    std::variant<long long, double, bool, std::vector<NodeId>> value;

    AnswerType type() const;
    bool operator==(const AnswerValue&) const = default;

    static AnswerValue integer(long long v) { return {v}; }
    static AnswerValue floating(double v) { return {v}; }
    static AnswerValue boolean(bool v) { return {v}; }
    static AnswerValue nodes(std::vector<NodeId> v) { return {std::move(v)}; }
};

// Text placed inside \boxed{}: "3", "0.333333", "True", "[1, 2]".
std::string format_answer(const AnswerValue& a);
nlohmann::json answer_to_json(const AnswerValue& a);
AnswerValue answer_from_json(const nlohmann::json& j, AnswerType type);

// What a step does, used to decide which perturbations can target it.
enum StepFlag : unsigned {
    kStructureStep = 1u << 0,
    kNodeEdgeStep = 1u << 1,
    kCalculationStep = 1u << 2,
    kConclusionStep = 1u << 3,
};

struct TraceStep {
    std::string tag;
    nlohmann::json payload;
    unsigned flags = 0;
};

using ExecutionTrace = std::vector<TraceStep>;

// Corrupts the first computed value of trace step `step`; later steps are
// computed from the corrupted value.
struct CalcFault {
    std::size_t step = 0;
    std::uint64_t seed = 0;
};

struct SolveOptions {
    std::optional<CalcFault> fault;
    // Skip the directedness/weight/connectivity contract. Used when a
    // perturbed trajectory reasons about a misread graph.
    bool relaxed = false;
};

struct SolveResult {
    AnswerValue answer;
    ExecutionTrace trace;
};

// Throws DataError: "arity-mismatch", "invalid-node", "directedness-violation",
// "weights-required", "disconnected-graph".
SolveResult solve(TaskKind kind, const Graph& g, std::span<const NodeId> args,
                  const SolveOptions& options = {});

// Clustering coefficient; directed graphs use out-neighbours. Degree < 2 gives 0.
double clustering_coefficient(const Graph& g, NodeId u);

struct PageRankResult {
    NodeId top = 0;
    std::vector<double> values;
    std::vector<std::vector<double>> iterations;  // values after each iteration
};

inline constexpr double kDamping = 0.85;
inline constexpr int kPageRankIterations = 3;

// Three synchronous iterations from 1/N; dangling mass spread uniformly.
PageRankResult pagerank(const Graph& g);

// Edmonds-Karp on integer capacities.
long long max_flow(const Graph& g, NodeId s, NodeId t);

struct TaskInstance {
    std::string id;
    TaskKind kind = TaskKind::Degree;
    Graph graph;
    std::vector<NodeId> args;
    AnswerValue gold;
    std::string prompt;
};

std::string render_prompt(TaskKind kind, const Graph& g, std::span<const NodeId> args);

// Solves and renders the prompt.
TaskInstance make_instance(std::string id, TaskKind kind, Graph g, std::vector<NodeId> args);

// Short noun phrase naming what is asked: "the degree of node 2".
std::string question_subject(TaskKind kind, std::span<const NodeId> args);

}  // namespace gcp
