#include "gcp/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <set>
#include <sstream>

#include "gcp/error.hpp"

namespace gcp {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Strips math-mode dollars and \text{...} wrappers models like to add.
std::string normalize(std::string_view raw) {
    std::string_view s = trim(raw);
    while (s.size() >= 2 && s.front() == '$' && s.back() == '$') s = trim(s.substr(1, s.size() - 2));
    constexpr std::string_view kText = "\\text{";
    if (s.size() > kText.size() && s.substr(0, kText.size()) == kText && s.back() == '}') {
        s = trim(s.substr(kText.size(), s.size() - kText.size() - 1));
    }
    return std::string(s);
}

std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    auto slash = s.find('/');
    if (slash != std::string_view::npos) {
        auto num = parse_number(s.substr(0, slash));
        auto den = parse_number(s.substr(slash + 1));
        if (!num || !den || *den == 0) return std::nullopt;
        return *num / *den;
    }
    std::string buf(s);
    char* end = nullptr;
    double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<std::vector<NodeId>> parse_node_list(std::string_view s) {
    s = trim(s);
    if (!s.empty() && (s.front() == '[' || s.front() == '(' || s.front() == '{')) s.remove_prefix(1);
    if (!s.empty() && (s.back() == ']' || s.back() == ')' || s.back() == '}')) s.remove_suffix(1);
    std::vector<NodeId> nodes;
    std::string token;
    auto flush = [&]() -> bool {
        if (token.empty()) return true;
        NodeId v = 0;
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (ec != std::errc() || ptr != token.data() + token.size() || v < 0) return false;
        nodes.push_back(v);
        token.clear();
        return true;
    };
    for (char c : s) {
        if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
            if (!flush()) return std::nullopt;
        } else {
            token.push_back(c);
        }
    }
    if (!flush()) return std::nullopt;
    return nodes;
}

bool set_semantics(TaskKind kind) { return kind == TaskKind::Neighbor || kind == TaskKind::Predecessor; }

bool float_close(double predicted, double gold) {
    return std::abs(predicted - gold) / std::max(std::abs(gold), kToleranceFloor) < kRelativeTolerance;
}

std::vector<NodeId> as_set(std::vector<NodeId> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

std::string to_string(JudgeReason reason) {
    switch (reason) {
        case JudgeReason::Exact: return "exact";
        case JudgeReason::FloatTolerance: return "float-tol";
        case JudgeReason::SetEqual: return "set-eq";
        case JudgeReason::SequenceEqual: return "seq-eq";
        case JudgeReason::Mismatch: return "mismatch";
        case JudgeReason::Unparseable: return "unparseable";
    }
    return "unparseable";
}

std::optional<std::string> extract_boxed(std::string_view text) {
    constexpr std::string_view kOpen = "\\boxed{";
    auto pos = text.rfind(kOpen);
    if (pos == std::string_view::npos) return std::nullopt;
    std::size_t i = pos + kOpen.size();
    int depth = 1;
    for (std::size_t j = i; j < text.size(); ++j) {
        if (text[j] == '{') {
            ++depth;
        } else if (text[j] == '}' && --depth == 0) {
            return std::string(text.substr(i, j - i));
        }
    }
    return std::nullopt;
}

std::optional<AnswerValue> parse_answer(std::string_view raw, AnswerType type) {
    const std::string s = normalize(raw);
    switch (type) {
        case AnswerType::Integer: {
            auto v = parse_number(s);
            if (!v || std::floor(*v) != *v || std::abs(*v) > 9e15) return std::nullopt;
            return AnswerValue::integer(static_cast<long long>(*v));
        }
        case AnswerType::Float: {
            auto v = parse_number(s);
            if (!v) return std::nullopt;
            return AnswerValue::floating(*v);
        }
        case AnswerType::Boolean: {
            std::string lower;
            for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            if (lower == "true") return AnswerValue::boolean(true);
            if (lower == "false") return AnswerValue::boolean(false);
            return std::nullopt;
        }
        case AnswerType::NodeList: {
            auto nodes = parse_node_list(s);
            if (!nodes) return std::nullopt;
            return AnswerValue::nodes(std::move(*nodes));
        }
    }
    return std::nullopt;
}

bool answers_equivalent(const AnswerValue& a, const AnswerValue& b, TaskKind kind) {
    if (a.type() != b.type()) return false;
    switch (a.type()) {
        case AnswerType::Float:
            return float_close(std::get<double>(a.value), std::get<double>(b.value));
        case AnswerType::NodeList:
            if (set_semantics(kind)) {
                return as_set(std::get<std::vector<NodeId>>(a.value)) ==
                       as_set(std::get<std::vector<NodeId>>(b.value));
            }
            return a == b;
        default: return a == b;
    }
}

Judgement exact_match(std::string_view raw, const AnswerValue& gold, TaskKind kind) {
    auto parsed = parse_answer(raw, gold.type());
    if (!parsed) return {false, false, JudgeReason::Unparseable};
    if (!answers_equivalent(*parsed, gold, kind)) return {true, false, JudgeReason::Mismatch};
    switch (gold.type()) {
        case AnswerType::Float: return {true, true, JudgeReason::FloatTolerance};
        case AnswerType::NodeList:
            return {true, true, set_semantics(kind) ? JudgeReason::SetEqual : JudgeReason::SequenceEqual};
        default: return {true, true, JudgeReason::Exact};
    }
}

bool is_valid_bfs_order(const Graph& g, NodeId start, const std::vector<NodeId>& order) {
    const int n = g.node_count();
    if (order.empty() || order.front() != start || !g.valid_node(start)) return false;
    std::vector<int> position(static_cast<std::size_t>(n), -1);
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (!g.valid_node(order[i]) || position[order[i]] >= 0) return false;
        position[order[i]] = static_cast<int>(i);
    }
    // Replay a queue: the children of each dequeued node must appear next as
    // an arbitrary permutation of its undiscovered neighbours.
    auto adjacent = [&](NodeId x) {
        return g.directed() ? std::vector<NodeId>(g.successors(x).begin(), g.successors(x).end())
                            : g.neighbors(x);
    };
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    seen[start] = true;
    std::size_t next = 1;
    for (std::size_t head = 0; head < order.size(); ++head) {
        if (head >= next) return false;  // order[head] was never discovered
        std::set<NodeId> fresh;
        for (NodeId y : adjacent(order[head])) {
            if (!seen[y]) fresh.insert(y);
        }
        for (std::size_t k = 0; k < fresh.size(); ++k, ++next) {
            if (next >= order.size() || !fresh.count(order[next])) return false;
            seen[order[next]] = true;
        }
    }
    return next == order.size();
}

Judgement judge(std::string_view raw, const TaskInstance& instance, const EvalOptions& options) {
    if (instance.kind == TaskKind::BFS && options.bfs_any_valid_order) {
        auto parsed = parse_answer(raw, AnswerType::NodeList);
        if (!parsed) return {false, false, JudgeReason::Unparseable};
        const auto& gold = std::get<std::vector<NodeId>>(instance.gold.value);
        const auto& order = std::get<std::vector<NodeId>>(parsed->value);
        // Every valid order visits exactly the reachable set.
        bool ok = as_set(order) == as_set(gold) && is_valid_bfs_order(instance.graph, instance.args[0], order);
        return {true, ok, ok ? JudgeReason::SequenceEqual : JudgeReason::Mismatch};
    }
    return exact_match(raw, instance.gold, instance.kind);
}

nlohmann::json AccuracyReport::to_json() const {
    auto cell = [](const AccuracyCell& c) {
        return nlohmann::json{{"correct", c.correct}, {"total", c.total}, {"accuracy", c.percent()}};
    };
    nlohmann::json tasks = nlohmann::json::object();
    for (const auto& [task, c] : per_task) tasks[task] = cell(c);
    return {{"per_task", tasks},
            {"in_domain", cell(in_domain)},
            {"out_of_domain", cell(out_of_domain)},
            {"overall", cell(overall)}};
}

std::string AccuracyReport::to_table() const {
    std::ostringstream out;
    char line[128];
    std::snprintf(line, sizeof line, "%-24s %8s %8s %9s\n", "group", "correct", "total", "accuracy");
    out << line;
    auto row = [&](const std::string& name, const AccuracyCell& c) {
        std::snprintf(line, sizeof line, "%-24s %8d %8d %8.2f%%\n", name.c_str(), c.correct, c.total, c.percent());
        out << line;
    };
    for (const auto& [task, c] : per_task) row(task, c);
    row("in-domain", in_domain);
    row("out-of-domain", out_of_domain);
    row("overall", overall);
    return out.str();
}

AccuracyReport evaluate_run(const std::vector<ManifestRow>& manifest,
                            const std::map<std::string, TaskInstance>& dataset, const EvalOptions& options) {
    if (manifest.empty()) throw DataError("empty-manifest", "manifest has no rows");
    AccuracyReport report;
    for (const auto& row : manifest) {
        auto it = dataset.find(row.id);
        if (it == dataset.end()) {
            throw DataError("dangling-reference", "manifest row references unknown instance " + row.id);
        }
        const TaskInstance& instance = it->second;
        const bool correct = row.answer && judge(*row.answer, instance, options).correct;
        const std::string task = to_string(instance.kind);
        for (AccuracyCell* c : {&report.per_task[task], &report.overall,
                                task_info(instance.kind).in_domain ? &report.in_domain : &report.out_of_domain}) {
            c->total += 1;
            c->correct += correct ? 1 : 0;
        }
    }
    return report;
}

}  // namespace gcp
