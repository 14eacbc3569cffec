#include <doctest.h>

#include <memory>

#include "gcp/error.hpp"
#include "gcp/evaluator.hpp"
#include "gcp/random.hpp"
#include "gcp/search.hpp"
#include "naive_vote.hpp"
#include "scripted.hpp"

using namespace gcp;

namespace {

Candidate scored(long long answer, std::vector<double> scores) {
    Candidate c;
    for (std::size_t i = 0; i + 1 < scores.size(); ++i) c.steps.push_back("s" + std::to_string(i));
    c.steps.push_back(fixture::boxed(answer));
    c.step_scores = std::move(scores);
    c.raw_answer = std::to_string(answer);
    c.answer = AnswerValue::integer(answer);
    return c;
}

Candidate unparseable(std::vector<double> scores) {
    Candidate c;
    for (std::size_t i = 0; i < scores.size(); ++i) c.steps.push_back("s" + std::to_string(i));
    c.step_scores = std::move(scores);
    return c;
}

class ConstantScorer : public Scorer {
public:
    explicit ConstantScorer(double v) : v_(v) {}
    std::vector<double> score_steps(const std::string&, const std::vector<std::string>& steps) override {
        return std::vector<double>(steps.size(), v_);
    }

private:
    double v_;
};

std::unique_ptr<ScriptGenerator> pool_generator(const TaskInstance& inst, const std::vector<long long>& answers) {
    auto gen = std::make_unique<ScriptGenerator>(0, ScriptPolicy::RoundRobin);
    for (std::size_t i = 0; i < answers.size(); ++i) {
        const bool gold = answers[i] == 2;
        gen->add(inst.prompt, {fixture::script(3, answers[i], gold ? 0 : 1, "w" + std::to_string(i))});
    }
    return gen;
}

OracleScorer oracle_for(const TaskInstance& inst, int gold_len) {
    OracleScorer scorer;
    scorer.add(inst.prompt, fixture::script(gold_len, 2));
    return scorer;
}

long long chosen_int(const SearchOutcome& out) { return std::get<long long>(out.final.answer->value); }

}  // namespace

TEST_CASE("solution scores") {
    CHECK(solution_score(scored(1, {0.9, 0.2, 0.8}), Aggregation::PrmMin) == 0.2);
    CHECK(solution_score(scored(1, {0.9, 0.2, 0.8}), Aggregation::PrmLast) == 0.8);
    CHECK(solution_score(scored(1, {0.7}), Aggregation::PrmMin) == 0.7);
    CHECK(solution_score(scored(1, {0.7}), Aggregation::PrmLast) == 0.7);
    CHECK(solution_score(unparseable({0.9}), Aggregation::PrmLast) == 0.0);
    CHECK_THROWS_AS(solution_score(Candidate{}, Aggregation::PrmLast), DataError);
    for (auto m : {Aggregation::PrmLast, Aggregation::PrmMin, Aggregation::PrmLastVote, Aggregation::PrmMinVote,
                   Aggregation::SelfConsistency}) {
        CHECK(parse_aggregation(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_aggregation("median"), DataError);
}

TEST_CASE("weighted vote") {
    std::vector<Candidate> c = {scored(1, {0.9}), scored(1, {0.2}), scored(2, {0.8})};
    CHECK(std::get<long long>(weighted_vote(c, {0.9, 0.2, 0.8}, TaskKind::Degree).answer->value) == 1);
    CHECK(std::get<long long>(weighted_vote({scored(5, {0.1})}, {0.1}, TaskKind::Degree).answer->value) == 5);
    // tie between groups: earliest member wins
    std::vector<Candidate> tie = {scored(3, {0.5}), scored(4, {0.5})};
    CHECK(weighted_vote(tie, {0.5, 0.5}, TaskKind::Degree).chosen == 0);
    CHECK_THROWS_AS(weighted_vote({unparseable({1.0})}, {1.0}, TaskKind::Degree), DataError);

    Rng rng(5);
    for (int trial = 0; trial < 2000; ++trial) {
        const int n = static_cast<int>(uniform_int(rng, 1, 9));
        std::vector<Candidate> cands;
        std::vector<double> w;
        for (int i = 0; i < n; ++i) {
            const double s = static_cast<double>(uniform_int(rng, 0, 4)) / 4;
            cands.push_back(bernoulli(rng, 0.15) ? unparseable({s}) : scored(uniform_int(rng, 0, 3), {s}));
            w.push_back(s);
        }
        const auto expect = ref::naive_vote(cands, w);
        if (expect == cands.size()) {
            CHECK_THROWS_AS(weighted_vote(cands, w, TaskKind::Degree), DataError);
            continue;
        }
        const auto got = weighted_vote(cands, w, TaskKind::Degree);
        CHECK(got.chosen == expect);

        // constant weights: every vote method agrees with plurality
        const auto last = aggregate(cands, Aggregation::SelfConsistency, TaskKind::Degree);
        std::vector<Candidate> flat = cands;
        for (auto& f : flat) f.step_scores = {0.6};
        CHECK(aggregate(flat, Aggregation::PrmLastVote, TaskKind::Degree).chosen == last.chosen);
        CHECK(aggregate(flat, Aggregation::PrmMinVote, TaskKind::Degree).chosen == last.chosen);
    }
}

TEST_CASE("best of n") {
    auto inst = fixture::degree_instance();
    auto scorer = oracle_for(inst, 3);
    SearchParams params;

    auto one_gold = pool_generator(inst, {3, 4, 3, 2, 5, 0, 3, 1});
    for (auto m : {Aggregation::PrmLast, Aggregation::PrmMin, Aggregation::PrmLastVote, Aggregation::PrmMinVote}) {
        params.method = m;
        auto out = best_of_n(inst, *one_gold, scorer, params);
        CHECK(out.candidates.size() == 8);
        CHECK(chosen_int(out) == 2);
    }

    params.method = Aggregation::SelfConsistency;
    params.n = 3;
    auto plural = pool_generator(inst, {3, 3, 2});
    CHECK(chosen_int(best_of_n(inst, *plural, scorer, params)) == 3);

    params.n = 1;
    for (auto m : {Aggregation::PrmLast, Aggregation::PrmMin, Aggregation::PrmLastVote, Aggregation::PrmMinVote,
                   Aggregation::SelfConsistency}) {
        params.method = m;
        auto single = pool_generator(inst, {4});
        CHECK(chosen_int(best_of_n(inst, *single, scorer, params)) == 4);
    }

    params.n = 0;
    CHECK_THROWS_AS(best_of_n(inst, *plural, scorer, params), DataError);

    // The answer is always one of the generated candidates.
    Rng rng(9);
    params.n = 8;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<long long> answers;
        for (int i = 0; i < 5; ++i) answers.push_back(uniform_int(rng, 0, 4));
        auto gen = pool_generator(inst, answers);
        params.method = static_cast<Aggregation>(uniform_int(rng, 0, 4));
        ConstantScorer flat(0.5);
        auto out = best_of_n(inst, *gen, flat, params);
        bool found = false;
        for (const auto& c : out.candidates) found = found || (c.answer && *c.answer == *out.final.answer);
        CHECK(found);
    }
}

TEST_CASE("beam search") {
    auto inst = fixture::degree_instance();
    auto scorer = oracle_for(inst, 4);
    auto tree = [&] {
        auto g = std::make_unique<ScriptGenerator>(0, ScriptPolicy::RoundRobin);
        g->add(inst.prompt, {fixture::script(4, 2)});
        g->add(inst.prompt, {fixture::script(4, 3, 1, "a")});
        g->add(inst.prompt, {fixture::script(4, 5, 2, "b")});
        g->add(inst.prompt, {fixture::script(4, 6, 3, "c")});
        g->add(inst.prompt, {fixture::script(4, 7, 4, "d")});
        return g;
    };

    SearchParams params;
    auto gen = tree();
    auto out = beam_search(inst, *gen, scorer, params);
    CHECK(out.expansions_per_survivor == 4);
    CHECK(chosen_int(out) == 2);
    CHECK(out.pool_sizes == std::vector<int>(4, 8));
    CHECK(out.live_beams == std::vector<int>(4, 2));

    // Every scripted leaf that the oracle scores all-ones is the gold one.
    for (const auto& c : out.candidates) {
        auto s = scorer.score_steps(inst.prompt, c.steps);
        if (std::all_of(s.begin(), s.end(), [](double v) { return v == 1.0; })) CHECK(std::get<long long>(c.answer->value) == 2);
    }

    params.k = 8;
    auto wide = tree();
    auto all = beam_search(inst, *wide, scorer, params);
    CHECK(all.live_beams.front() == 8);
    CHECK(all.expansions_per_survivor == 1);
    CHECK(chosen_int(all) == 2);

    params.k = 3;
    try {
        beam_search(inst, *gen, scorer, params);
        FAIL("expected bad-beam");
    } catch (const DataError& e) {
        CHECK(e.code() == "bad-beam");
    }

    params.k = 2;
    params.depth_cap = 2;
    try {
        beam_search(inst, *tree(), scorer, params);
        FAIL("expected no-finished-beam");
    } catch (const DataError& e) {
        CHECK(e.code() == "no-finished-beam");
    }

    // A beam that finishes early keeps its slot while the others continue.
    auto uneven = std::make_unique<ScriptGenerator>(0, ScriptPolicy::RoundRobin);
    uneven->add(inst.prompt, {fixture::script(2, 2)});
    uneven->add(inst.prompt, {fixture::script(5, 9, 1, "long")});
    OracleScorer short_gold = oracle_for(inst, 2);
    params.depth_cap = 20;
    params.n = 4;
    params.k = 2;
    auto mixed = beam_search(inst, *uneven, short_gold, params);
    CHECK(chosen_int(mixed) == 2);
    for (int live : mixed.live_beams) CHECK(live == 2);
    CHECK(mixed.pool_sizes.front() == 4);
}
