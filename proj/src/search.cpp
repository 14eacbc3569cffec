#include "gcp/search.hpp"

#include <algorithm>
#include <numeric>

#include "gcp/error.hpp"
#include "gcp/evaluator.hpp"

namespace gcp {

namespace {

bool uses_min(Aggregation m) { return m == Aggregation::PrmMin || m == Aggregation::PrmMinVote; }
bool is_vote(Aggregation m) {
    return m == Aggregation::PrmLastVote || m == Aggregation::PrmMinVote || m == Aggregation::SelfConsistency;
}

struct Beam {
    std::vector<std::string> steps;
    std::vector<double> scores;
    bool finished = false;
};

bool boxes_answer(const std::string& step) { return extract_boxed(step).has_value(); }

// Indices of the `keep` highest latest-step scores, earliest first on ties.
std::vector<std::size_t> top_by_latest(const std::vector<Beam>& pool, std::size_t keep) {
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return pool[a].scores.back() > pool[b].scores.back(); });
    idx.resize(std::min(keep, idx.size()));
    return idx;
}

Candidate beam_candidate(const Beam& beam, AnswerType type) {
    Candidate c;
    c.steps = beam.steps;
    c.step_scores = beam.scores;
    if (!beam.steps.empty()) {
        c.raw_answer = extract_boxed(beam.steps.back());
        if (c.raw_answer) c.answer = parse_answer(*c.raw_answer, type);
    }
    return c;
}

}  // namespace

std::string to_string(Aggregation method) {
    switch (method) {
        case Aggregation::PrmLast: return "prm-last";
        case Aggregation::PrmMin: return "prm-min";
        case Aggregation::PrmLastVote: return "prm-last-vote";
        case Aggregation::PrmMinVote: return "prm-min-vote";
        case Aggregation::SelfConsistency: return "self-consistency";
    }
    return "prm-last";
}

Aggregation parse_aggregation(const std::string& s) {
    for (auto m : {Aggregation::PrmLast, Aggregation::PrmMin, Aggregation::PrmLastVote, Aggregation::PrmMinVote,
                   Aggregation::SelfConsistency}) {
        if (to_string(m) == s) return m;
    }
    throw DataError("bad-config", "unknown aggregation method: " + s);
}

Candidate make_candidate(const std::string& text, AnswerType type) {
    Candidate c;
    c.steps = segment_steps(text);
    if (!c.steps.empty()) {
        c.raw_answer = extract_boxed(c.steps.back());
        if (c.raw_answer) c.answer = parse_answer(*c.raw_answer, type);
    }
    return c;
}

double solution_score(const Candidate& c, Aggregation method) {
    if (c.steps.empty()) throw DataError("empty-candidate", "candidate has no steps");
    if (method == Aggregation::SelfConsistency) return 1.0;
    if (!c.answer || c.step_scores.empty()) return 0.0;
    if (uses_min(method)) return *std::min_element(c.step_scores.begin(), c.step_scores.end());
    return c.step_scores.back();
}

FinalAnswer weighted_vote(const std::vector<Candidate>& candidates, const std::vector<double>& weights, TaskKind kind) {
    if (weights.size() != candidates.size()) throw DataError("bad-request", "one weight per candidate");
    struct Group {
        std::size_t first;
        double total;
    };
    std::vector<Group> groups;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!candidates[i].answer) continue;
        bool placed = false;
        for (auto& g : groups) {
            if (answers_equivalent(*candidates[g.first].answer, *candidates[i].answer, kind)) {
                g.total += weights[i];
                placed = true;
                break;
            }
        }
        if (!placed) groups.push_back({i, weights[i]});
    }
    if (groups.empty()) throw DataError("no-parseable-candidates", "no candidate has a parseable answer");
    const Group* best = &groups[0];
    for (const auto& g : groups)
        if (g.total > best->total) best = &g;
    const Candidate& rep = candidates[best->first];
    return {rep.answer, rep.raw_answer, best->first, best->total};
}

FinalAnswer aggregate(const std::vector<Candidate>& candidates, Aggregation method, TaskKind kind) {
    if (candidates.empty()) throw DataError("no-parseable-candidates", "no candidates to aggregate");
    std::vector<double> scores;
    for (const auto& c : candidates) scores.push_back(solution_score(c, method));
    if (is_vote(method)) return weighted_vote(candidates, scores, kind);
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return {candidates[best].answer, candidates[best].raw_answer, best, scores[best]};
}

SearchOutcome best_of_n(const TaskInstance& instance, Generator& generator, Scorer& scorer, const SearchParams& params) {
    if (params.n < 1) throw DataError("bad-config", "n must be at least 1");
    GenerationRequest req;
    req.prompt = instance.prompt;
    req.n = params.n;
    req.temperature = params.temperature;
    req.max_tokens = params.max_tokens;
    auto texts = generator.complete(req);
    if (static_cast<int>(texts.size()) != params.n) {
        throw BackendError("malformed-response", "generator returned the wrong number of samples");
    }
    SearchOutcome out;
    const AnswerType type = task_info(instance.kind).answer_type;
    for (const auto& text : texts) {
        Candidate c = make_candidate(text, type);
        if (c.steps.empty()) c.steps.push_back("(empty response)");
        if (params.method != Aggregation::SelfConsistency) c.step_scores = scorer.score_steps(instance.prompt, c.steps);
        out.candidates.push_back(std::move(c));
    }
    out.pool_sizes.push_back(params.n);
    out.final = aggregate(out.candidates, params.method, instance.kind);
    return out;
}

SearchOutcome beam_search(const TaskInstance& instance, Generator& generator, Scorer& scorer,
                          const SearchParams& params) {
    if (params.n < 1 || params.k < 1 || params.k > params.n || params.n % params.k != 0) {
        throw DataError("bad-beam", "beam search needs 1 <= k <= n with k dividing n");
    }
    const int expansions = params.n / params.k;
    SearchOutcome out;
    out.expansions_per_survivor = expansions;

    auto next_steps = [&](const std::vector<std::string>& prefix, int count) {
        GenerationRequest req;
        req.prompt = instance.prompt;
        req.prefix_steps = prefix;
        req.n = count;
        req.temperature = params.temperature;
        req.max_tokens = params.max_tokens;
        req.stop = {kStepJoin};
        auto texts = generator.complete(req);
        if (static_cast<int>(texts.size()) != count) {
            throw BackendError("malformed-response", "generator returned the wrong number of steps");
        }
        return texts;
    };
    auto extend = [&](const std::vector<std::string>& prefix, const std::string& text) {
        Beam b;
        b.steps = prefix;
        auto segments = segment_steps(text);
        if (segments.empty()) {
            b.steps.push_back("(empty response)");
            b.finished = true;
        } else {
            b.steps.push_back(segments.front());
            b.finished = boxes_answer(segments.front());
        }
        b.scores = scorer.score_steps(instance.prompt, b.steps);
        return b;
    };

    std::vector<Beam> pool;
    for (const auto& text : next_steps({}, params.n)) pool.push_back(extend({}, text));
    out.pool_sizes.push_back(static_cast<int>(pool.size()));
    std::vector<Beam> beams;
    for (std::size_t i : top_by_latest(pool, static_cast<std::size_t>(params.k))) beams.push_back(pool[i]);
    out.live_beams.push_back(static_cast<int>(beams.size()));

    for (int depth = 2; depth <= params.depth_cap; ++depth) {
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < beams.size(); ++i)
            if (!beams[i].finished) open.push_back(i);
        if (open.empty()) break;
        pool.clear();
        for (std::size_t i : open)
            for (const auto& text : next_steps(beams[i].steps, expansions)) pool.push_back(extend(beams[i].steps, text));
        out.pool_sizes.push_back(static_cast<int>(pool.size()));
        auto keep = top_by_latest(pool, open.size());
        for (std::size_t slot = 0; slot < open.size(); ++slot) beams[open[slot]] = pool[keep[slot]];
        out.live_beams.push_back(static_cast<int>(beams.size()));
    }

    const AnswerType type = task_info(instance.kind).answer_type;
    for (const auto& b : beams)
        if (b.finished) out.candidates.push_back(beam_candidate(b, type));
    if (out.candidates.empty()) throw DataError("no-finished-beam", "no beam finished within the depth cap");
    const Aggregation method = params.method == Aggregation::SelfConsistency ? Aggregation::SelfConsistency
                               : uses_min(params.method)                   ? Aggregation::PrmMinVote
                                                                           : Aggregation::PrmLastVote;
    out.final = aggregate(out.candidates, method, instance.kind);
    return out;
}

nlohmann::json candidate_to_json(const Candidate& c) {
    nlohmann::json j = {{"steps", c.steps}, {"scores", c.step_scores}};
    j["answer"] = c.raw_answer ? nlohmann::json(*c.raw_answer) : nlohmann::json(nullptr);
    return j;
}

}  // namespace gcp
