#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcp/gateway.hpp"
#include "gcp/tasks.hpp"

namespace gcp {

enum class Aggregation { PrmLast, PrmMin, PrmLastVote, PrmMinVote, SelfConsistency };

std::string to_string(Aggregation method);
Aggregation parse_aggregation(const std::string& s);

struct Candidate {
    std::vector<std::string> steps;
    std::vector<double> step_scores;
    std::optional<std::string> raw_answer;  // boxed text of the last step
    std::optional<AnswerValue> answer;      // parsed; unset when unparseable
};

Candidate make_candidate(const std::string& text, AnswerType type);

// PRM-Last / PRM-Min (vote variants use their base rule). Unparseable
// candidates score 0. Throws DataError("empty-candidate").
double solution_score(const Candidate& c, Aggregation method);

struct FinalAnswer {
    std::optional<AnswerValue> answer;
    std::optional<std::string> raw;
    std::size_t chosen = 0;  // index of the representative candidate
    double weight = 0;
};

// argmax over answer groups of the summed weights; unparseable candidates are
// skipped; ties go to the group whose first member came earliest. Throws
// DataError("no-parseable-candidates").
FinalAnswer weighted_vote(const std::vector<Candidate>& candidates, const std::vector<double>& weights, TaskKind kind);

FinalAnswer aggregate(const std::vector<Candidate>& candidates, Aggregation method, TaskKind kind);

struct SearchOutcome {
    FinalAnswer final;
    std::vector<Candidate> candidates;  // all samples (best-of-n) or finished beams (beam)
    int expansions_per_survivor = 0;
    std::vector<int> pool_sizes;        // scorer-pool entries per depth
    std::vector<int> live_beams;        // beams kept after each pruning round
};

struct SearchParams {
    int n = 8;
    int k = 2;
    Aggregation method = Aggregation::PrmLastVote;
    double temperature = 0.7;
    int max_tokens = 1024;
    int depth_cap = kMaxSegments;
};

// n full samples, each scored step-wise (the scorer is skipped for
// self-consistency), aggregated with params.method.
SearchOutcome best_of_n(const TaskInstance& instance, Generator& generator, Scorer& scorer, const SearchParams& params);

// Step-level beam search: n first steps, keep top k by the latest step score,
// then expand each unfinished survivor n/k ways and keep the best. A beam
// whose latest step boxes an answer is finished and keeps its slot. The
// answer is a weighted vote over finished beams. Throws DataError("bad-beam")
// unless k divides n, and DataError("no-finished-beam") at the depth cap.
SearchOutcome beam_search(const TaskInstance& instance, Generator& generator, Scorer& scorer, const SearchParams& params);

nlohmann::json candidate_to_json(const Candidate& c);

}  // namespace gcp
