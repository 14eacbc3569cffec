#include <doctest.h>

#include "gcp/error.hpp"
#include "gcp/evaluator.hpp"
#include "gcp/trajectory.hpp"

#include <set>

using namespace gcp;

namespace {

std::vector<TaskInstance> instances() {
    std::vector<TaskInstance> out;
    int id = 0;
    for (auto kind : all_tasks()) {
        const auto& info = task_info(kind);
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            GraphSpec spec;
            spec.family = static_cast<GraphFamily>(seed % 3);
            spec.size_tier = seed < 3 ? SizeTier::Tiny : SizeTier::Small;
            spec.directed = info.directedness == Directedness::DirectedOnly ||
                            (info.directedness == Directedness::Any && seed % 2 == 1);
            spec.weighted = info.weighted;
            spec.require_connected = true;
            spec.seed = seed * 131 + static_cast<std::uint64_t>(kind);
            Graph g = generate_graph(spec);
            std::vector<NodeId> args;
            for (int i = 0; i < info.arity; ++i) args.push_back((static_cast<int>(seed) + 3 * i) % g.node_count());
            if (info.arity == 2 && args[0] == args[1]) args[1] = (args[1] + 1) % g.node_count();
            out.push_back(make_instance("p" + std::to_string(id++), kind, g, args));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("label grammars") {
    CHECK(matches_trajectory_grammar("+"));
    CHECK(matches_trajectory_grammar("+++--"));
    CHECK(matches_trajectory_grammar("--"));
    CHECK_FALSE(matches_trajectory_grammar("+-+"));
    CHECK_FALSE(matches_trajectory_grammar(""));
    CHECK(matches_monte_carlo_grammar("++-"));
    CHECK(matches_monte_carlo_grammar("-"));
    CHECK(matches_monte_carlo_grammar("+++"));
    CHECK_FALSE(matches_monte_carlo_grammar("+--"));
    CHECK_FALSE(matches_monte_carlo_grammar("x"));
}

TEST_CASE("gold trajectories end in the boxed gold answer") {
    for (const auto& inst : instances()) {
        auto seq = gold_trajectory(inst);
        CAPTURE(inst.id);
        REQUIRE_FALSE(seq.steps.empty());
        CHECK(seq.labels() == std::string(seq.steps.size(), '+'));
        REQUIRE(seq.final_answer.has_value());
        CHECK(answers_equivalent(*seq.final_answer, inst.gold, inst.kind));
        auto boxed = extract_boxed(seq.steps.back().text);
        REQUIRE(boxed.has_value());
        CHECK(judge(*boxed, inst).correct);
        for (size_t i = 0; i + 1 < seq.steps.size(); ++i) CHECK_FALSE(extract_boxed(seq.steps[i].text).has_value());
        for (const auto& st : seq.steps) CHECK(st.text == sanitize_step_text(st.text));
        auto again = gold_trajectory(inst);
        CHECK(again.texts() == seq.texts());
    }
}

TEST_CASE("template variants differ across instances") {
    std::set<std::string> first_steps;
    for (const auto& inst : instances()) first_steps.insert(gold_trajectory(inst).steps.front().text.substr(0, 12));
    CHECK(first_steps.size() >= 3);
}

TEST_CASE("perturbations keep the prefix and change the answer") {
    int made = 0, exhausted = 0;
    for (const auto& inst : instances()) {
        auto gold = gold_trajectory(inst);
        auto trace = solve(inst.kind, inst.graph, inst.args).trace;
        for (auto strategy : {PerturbStrategy::Structure, PerturbStrategy::NodeEdge, PerturbStrategy::Calculation}) {
            for (std::size_t target : applicable_targets(trace, strategy)) {
                PerturbationPlan plan;
                plan.strategy = strategy;
                plan.target_index = target;
                plan.seed = 5;
                StepSequence bad;
                try {
                    bad = perturb(inst, gold, plan);
                } catch (const DataError& e) {
                    CHECK(e.code() == "perturbation-exhausted");
                    ++exhausted;
                    continue;
                }
                ++made;
                CAPTURE(inst.id);
                CAPTURE(target);
                CHECK(matches_trajectory_grammar(bad.labels()));
                CHECK(bad.labels() == std::string(target, '+') + std::string(bad.steps.size() - target, '-'));
                for (std::size_t i = 0; i < target; ++i) CHECK(bad.steps[i].text == gold.steps[i].text);
                CHECK(bad.steps[target].text != gold.steps[target].text);
                REQUIRE(bad.final_answer.has_value());
                CHECK_FALSE(answers_equivalent(*bad.final_answer, inst.gold, inst.kind));
                auto boxed = extract_boxed(bad.steps.back().text);
                REQUIRE(boxed.has_value());
                CHECK_FALSE(judge(*boxed, inst).correct);
                auto repeat = perturb(inst, gold, plan);
                CHECK(repeat.texts() == bad.texts());
            }
        }
    }
    CHECK(made > 100);
    MESSAGE("perturbations made=" << made << " exhausted=" << exhausted);
}

TEST_CASE("perturb rejects bad plans") {
    auto inst = instances().front();
    auto gold = gold_trajectory(inst);
    PerturbationPlan plan;
    plan.strategy = PerturbStrategy::Calculation;
    plan.target_index = gold.steps.size() - 1;  // conclusion
    auto code = [&](const StepSequence& seq, const PerturbationPlan& p) {
        try {
            perturb(inst, seq, p);
        } catch (const DataError& e) {
            return e.code();
        }
        return std::string();
    };
    CHECK(code(gold, plan) == "no-applicable-step");
    plan.target_index = 999;
    CHECK(code(gold, plan) == "no-applicable-step");
    auto neg = gold;
    neg.steps.back().label = '-';
    plan.target_index = 1;
    CHECK(code(neg, plan) == "not-perturbable");
    auto mc = gold;
    mc.source = SequenceSource::MonteCarlo;
    CHECK(code(mc, plan) == "not-perturbable");
}

TEST_CASE("training records encode and decode losslessly") {
    for (const auto& inst : instances()) {
        auto seq = gold_trajectory(inst);
        auto rec = encode_training_record(inst.prompt, seq);
        CHECK(rec.labels == seq.labels());
        CHECK(rec.input == inst.prompt + "\n" + rec.steps);
        auto back = decode_training_record(rec.steps, rec.labels);
        CHECK(back == seq.steps);
    }
    StepSequence bad;
    bad.steps = {{"one\n\n\n\n\ntwo", '+'}};
    CHECK_THROWS_AS(encode_training_record("q", bad), DataError);
    bad.steps = {{"", '+'}};
    CHECK_THROWS_AS(encode_training_record("q", bad), DataError);
    CHECK_THROWS_AS(decode_training_record("a\n\n\n\n\nb", "++"), DataError);
    CHECK_THROWS_AS(decode_training_record("a\n\n\n\n\n", "++"), DataError);
    CHECK(sanitize_step_text("\n a\n\n\n\n\nb \n") == "a\nb");
}
