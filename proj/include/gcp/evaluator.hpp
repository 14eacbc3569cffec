#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gcp/tasks.hpp"

namespace gcp {

inline constexpr double kRelativeTolerance = 1e-4;
inline constexpr double kToleranceFloor = 1e-12;

enum class JudgeReason { Exact, FloatTolerance, SetEqual, SequenceEqual, Mismatch, Unparseable };

std::string to_string(JudgeReason reason);

struct Judgement {
    bool parsed = false;
    bool correct = false;
    JudgeReason reason = JudgeReason::Unparseable;
};

struct EvalOptions {
    // Accept any valid BFS visit order instead of the canonical ascending one.
    bool bfs_any_valid_order = false;
};

// Content of the last brace-balanced \boxed{...}; nullopt when absent.
std::optional<std::string> extract_boxed(std::string_view text);

std::optional<AnswerValue> parse_answer(std::string_view raw, AnswerType type);

// NodeList answers compare as sets for Neighbor/Predecessor, as sequences otherwise.
Judgement exact_match(std::string_view raw, const AnswerValue& gold, TaskKind kind);

// Same as exact_match, with access to the instance for checker-based rules.
Judgement judge(std::string_view raw, const TaskInstance& instance, const EvalOptions& options = {});

// Equivalence used for vote grouping and "is this the gold answer" checks.
bool answers_equivalent(const AnswerValue& a, const AnswerValue& b, TaskKind kind);

bool is_valid_bfs_order(const Graph& g, NodeId start, const std::vector<NodeId>& order);

struct ManifestRow {
    std::string id;
    std::string task;
    // Raw text of the chosen answer (boxed content); empty when none was chosen.
    std::optional<std::string> answer;
};

struct AccuracyCell {
    int correct = 0;
    int total = 0;
    double percent() const { return total ? 100.0 * correct / total : 0.0; }
};

struct AccuracyReport {
    std::map<std::string, AccuracyCell> per_task;
    AccuracyCell in_domain;
    AccuracyCell out_of_domain;
    AccuracyCell overall;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

// Throws DataError("empty-manifest") or ("dangling-reference").
AccuracyReport evaluate_run(const std::vector<ManifestRow>& manifest,
                            const std::map<std::string, TaskInstance>& dataset,
                            const EvalOptions& options = {});

}  // namespace gcp
