// Acceptance run: one line per criterion, non-zero exit when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gcp/dataset.hpp"
#include "gcp/error.hpp"
#include "gcp/evaluator.hpp"
#include "gcp/mcts.hpp"
#include "gcp/parallel.hpp"
#include "gcp/random.hpp"
#include "gcp/search.hpp"
#include "gcp/tasks.hpp"
#include "gcp/trajectory.hpp"
#include "naive_vote.hpp"
#include "reference.hpp"
#include "scripted.hpp"

using namespace gcp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool close_rel(double a, double b, double tol = 1e-9) {
    return std::fabs(a - b) <= tol * std::max(1.0, std::fabs(b));
}

std::vector<NodeId> sorted(std::vector<NodeId> v) {
    std::sort(v.begin(), v.end());
    return v;
}

std::string error_code(TaskKind kind, const Graph& g, const std::vector<NodeId>& args) {
    try {
        solve(kind, g, args);
    } catch (const DataError& e) {
        return e.code();
    }
    return "";
}

// Compares every applicable task on g against the brute-force references.
// Returns the number of checks; mismatches are appended to `bad`.
long long compare_all(const Graph& g, std::vector<std::string>& bad) {
    long long checks = 0;
    auto expect = [&](bool ok, TaskKind kind, const std::string& what) {
        ++checks;
        if (!ok && bad.size() < 5) bad.push_back(to_string(kind) + " " + what);
    };
    auto ans = [&](TaskKind kind, std::vector<NodeId> args) { return solve(kind, g, args).answer.value; };
    const int n = g.node_count();

    for (NodeId u = 0; u < n; ++u) {
        const std::string at = "node " + std::to_string(u);
        expect(std::get<long long>(ans(TaskKind::Degree, {u})) == ref::degree(g, u), TaskKind::Degree, at);
        expect(close_rel(std::get<double>(ans(TaskKind::ClusteringCoefficient, {u})), ref::clustering(g, u)),
               TaskKind::ClusteringCoefficient, at);
        expect(sorted(std::get<std::vector<NodeId>>(ans(TaskKind::Neighbor, {u}))) == ref::any_set(g, u),
               TaskKind::Neighbor, at);
        expect(sorted(std::get<std::vector<NodeId>>(ans(TaskKind::Predecessor, {u}))) ==
                   (g.directed() ? ref::in_set(g, u) : ref::any_set(g, u)),
               TaskKind::Predecessor, at);
        expect(std::get<std::vector<NodeId>>(ans(TaskKind::BFS, {u})) == ref::bfs(g, u), TaskKind::BFS, at);
    }
    for (NodeId u = 0; u < n; ++u)
        for (NodeId v = 0; v < n; ++v) {
            if (u == v) continue;
            const std::string at = "pair " + std::to_string(u) + "," + std::to_string(v);
            expect(close_rel(std::get<double>(ans(TaskKind::Jaccard, {u, v})), ref::jaccard(g, u, v)),
                   TaskKind::Jaccard, at);
            expect(std::get<long long>(ans(TaskKind::CommonNeighbor, {u, v})) == ref::common_neighbors(g, u, v),
                   TaskKind::CommonNeighbor, at);
            expect(std::get<bool>(ans(TaskKind::Connectivity, {u, v})) == ref::connected(g, u, v),
                   TaskKind::Connectivity, at);
            if (g.directed() && g.weighted()) {
                expect(std::get<long long>(ans(TaskKind::MaximumFlow, {u, v})) == ref::max_flow(g, u, v),
                       TaskKind::MaximumFlow, at);
            }
        }
    if (n >= 1) {
        expect(std::get<long long>(ans(TaskKind::PageRank, {})) == ref::pagerank_top(g), TaskKind::PageRank, "top");
        const auto values = pagerank(g).values;
        const auto want = ref::pagerank(g);
        bool same = values.size() == want.size();
        for (std::size_t i = 0; same && i < want.size(); ++i) same = close_rel(values[i], want[i]);
        expect(same, TaskKind::PageRank, "values");
    }
    expect(std::get<bool>(ans(TaskKind::Cycle, {})) == ref::has_cycle(g), TaskKind::Cycle, "graph");

    if (g.directed()) {
        expect(error_code(TaskKind::Diameter, g, {}) == "directedness-violation", TaskKind::Diameter, "directed");
        expect(error_code(TaskKind::MST, g, {}) == "directedness-violation", TaskKind::MST, "directed");
        return checks;
    }
    if (n >= 2) {
        expect(error_code(TaskKind::MaximumFlow, g, {0, 1}) == "directedness-violation", TaskKind::MaximumFlow,
               "undirected");
    }
    const auto dia = ref::diameter(g);
    if (dia) {
        expect(std::get<long long>(ans(TaskKind::Diameter, {})) == *dia, TaskKind::Diameter, "graph");
    } else {
        expect(error_code(TaskKind::Diameter, g, {}) == "disconnected-graph", TaskKind::Diameter, "disconnected");
    }
    if (g.weighted()) {
        const auto mst = ref::mst_weight(g);
        if (mst) {
            expect(std::get<long long>(ans(TaskKind::MST, {})) == *mst, TaskKind::MST, "graph");
        } else {
            expect(error_code(TaskKind::MST, g, {}) == "disconnected-graph", TaskKind::MST, "disconnected");
        }
    } else {
        expect(error_code(TaskKind::MST, g, {}) == "weights-required", TaskKind::MST, "unweighted");
    }
    return checks;
}

Graph random_graph(Rng& rng, int n, bool directed, bool weighted, double p) {
    Graph g(n, directed, weighted);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v) {
            if (u == v || (!directed && u > v) || !bernoulli(rng, p)) continue;
            std::optional<int> w;
            if (weighted) w = static_cast<int>(uniform_int(rng, 1, 10));
            g.add_edge(u, v, w);
        }
    return g;
}

Outcome oracle_equivalence() {
    std::vector<std::string> bad;
    long long checks = 0;
    int graphs = 0;
    for (int n = 1; n <= 5; ++n) {
        std::vector<std::pair<int, int>> slots;
        for (int u = 0; u < n; ++u)
            for (int v = u + 1; v < n; ++v) slots.emplace_back(u, v);
        for (unsigned mask = 0; mask < (1u << slots.size()); ++mask) {
            Graph plain(n, false);
            Graph weighted(n, false, true);
            for (std::size_t i = 0; i < slots.size(); ++i) {
                if (!(mask >> i & 1u)) continue;
                plain.add_edge(slots[i].first, slots[i].second);
                weighted.add_edge(slots[i].first, slots[i].second, static_cast<int>(mix64(mask * 31 + i) % 10) + 1);
            }
            checks += compare_all(plain, bad);
            checks += compare_all(weighted, bad);
            ++graphs;
        }
    }
    Rng rng(2024);
    for (int i = 0; i < 1000; ++i) {
        const int n = static_cast<int>(uniform_int(rng, 1, 6));
        checks += compare_all(random_graph(rng, n, i % 2 == 1, true, 0.15 + 0.6 * uniform_unit(rng)), bad);
    }
    std::string detail = fmt("%d exhaustive undirected graphs (n<=5) and 1000 random weighted graphs (n<=6), %lld checks",
                             graphs, checks);
    if (!bad.empty()) detail += ", first mismatch: " + bad.front();
    return {bad.empty(), detail};
}

Outcome flow_cut_duality() {
    Rng rng(77);
    long long pairs = 0, mismatches = 0;
    for (int i = 0; i < 500; ++i) {
        const int n = static_cast<int>(uniform_int(rng, 2, 8));
        const Graph g = random_graph(rng, n, true, true, 0.2 + 0.5 * uniform_unit(rng));
        for (NodeId s = 0; s < n; ++s)
            for (NodeId t = 0; t < n; ++t) {
                if (s == t) continue;
                ++pairs;
                const long long cut = ref::max_flow(g, s, t);
                if (max_flow(g, s, t) != cut ||
                    std::get<long long>(solve(TaskKind::MaximumFlow, g, std::vector<NodeId>{s, t}).answer.value) != cut)
                    ++mismatches;
            }
    }
    return {mismatches == 0, fmt("500 graphs, %lld source/sink pairs, %lld flow != min cut", pairs, mismatches)};
}

Outcome pagerank_mass() {
    Rng rng(31);
    int dangling_graphs = 0, violations = 0;
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const int n = static_cast<int>(uniform_int(rng, 1, 12));
        const bool directed = i % 4 != 0;
        const Graph g = random_graph(rng, n, directed, false, 0.05 + 0.5 * uniform_unit(rng));
        bool dangling = false;
        for (NodeId u = 0; u < n; ++u) dangling = dangling || g.successors(u).empty();
        dangling_graphs += dangling ? 1 : 0;
        const auto pr = pagerank(g);
        for (const auto& it : pr.iterations) {
            double sum = 0;
            for (double v : it) sum += v;
            worst = std::max(worst, std::fabs(sum - 1.0));
            if (std::fabs(sum - 1.0) > 1e-12) ++violations;
        }
        if (pr.iterations.size() != static_cast<std::size_t>(kPageRankIterations)) ++violations;
    }
    return {violations == 0,
            fmt("1000 graphs (%d with dangling nodes), max |sum-1| = %.3g, %d violations", dangling_graphs, worst,
                violations)};
}

fs::path scratch(const std::string& name) {
    auto d = fs::temp_directory_path() / "gcp_acceptance" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

Outcome label_grammars() {
    BuildConfig cfg;
    cfg.plan.count_per_task = 20;
    cfg.plan.seed = 5;
    cfg.preferences = false;
    cfg.workers = default_workers();
    const auto res = mini_build(cfg, scratch("grammar"));
    int traj = 0, traj_bad = 0, traj_negative = 0, mc = 0, mc_bad = 0;
    for (const auto& r : res.filtered.kept) {
        const std::string labels = r.labels();
        if (r.source == SequenceSource::Trajectory) {
            ++traj;
            traj_bad += matches_trajectory_grammar(labels) ? 0 : 1;
            traj_negative += labels.find('-') != std::string::npos ? 1 : 0;
        } else {
            ++mc;
            const bool ok = matches_monte_carlo_grammar(labels) && std::count(labels.begin(), labels.end(), '-') <= 1 &&
                            (labels.find('-') == std::string::npos || labels.back() == '-');
            mc_bad += ok ? 0 : 1;
        }
    }
    std::map<std::string, int> reasons;
    for (const auto& rej : res.filtered.rejected) ++reasons[rej.reason];
    const bool ok = traj_bad == 0 && mc_bad == 0 && traj_negative > 0 && mc > 0;
    return {ok, fmt("%d problems; %d trajectory records (%d perturbed, %d bad), %d monte-carlo records (%d bad), "
                    "%d rejected by the filter (%d for label grammar)",
                    static_cast<int>(res.problems.size()), traj, traj_negative, traj_bad, mc, mc_bad,
                    static_cast<int>(res.filtered.rejected.size()), reasons["label grammar"])};
}

Outcome binary_search_locator() {
    const auto inst = fixture::degree_instance();
    AnnotatorParams p;
    Rng rng(13);
    int wrong = 0, over_budget = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int len = static_cast<int>(uniform_int(rng, 1, 20));
        const int err = static_cast<int>(uniform_int(rng, 1, len));
        ScriptGenerator gen(0, ScriptPolicy::RoundRobin);
        gen.add(inst.prompt, {fixture::script(20, 2)});
        gen.add(inst.prompt, {fixture::script(len, 3, err)});
        const auto rollout = fixture::script(len, 3, err);

        MonteCarloEstimator scan(gen, inst, p);
        int linear = 0;
        for (int i = 1; i <= len && !linear; ++i) {
            if (scan.mc({rollout.begin(), rollout.begin() + i}) == 0) linear = i;
        }
        MonteCarloEstimator est(gen, inst, p);
        if (locate_first_error(rollout, est) != static_cast<std::size_t>(linear)) ++wrong;
        if (est.batches() > static_cast<int>(std::ceil(std::log2(len))) + 1) ++over_budget;
    }
    return {wrong == 0 && over_budget == 0,
            fmt("200 rollouts of length 1-20: %d disagree with the linear scan, %d exceed ceil(log2 len)+1 batches",
                wrong, over_budget)};
}

Outcome selection_formulas() {
    long double worst = 0;
    int points = 0;
    const double alphas[] = {0.1, 0.3, 0.5, 0.7, 0.9};
    const double betas[] = {0.5, 0.9};
    for (double a : alphas)
        for (double b : betas)
            for (int m = 0; m < 10; ++m)
                for (int t = 0; t < 10; ++t) {
                    AnnotatorParams p;
                    p.alpha = a;
                    p.beta = b;
                    p.length_scale = 500;
                    const double mc = m / 9.0;
                    const double tokens = t * 211.0;
                    const long double want = powl(static_cast<long double>(a), 1.0L - mc) *
                                             powl(static_cast<long double>(b), tokens / 500.0L);
                    worst = std::max(worst, fabsl(q_value(mc, tokens, p) - want));
                    ++points;
                }
    const double cs[] = {0.05, 0.125, 0.5, 1.0, 2.0};
    for (double c : cs)
        for (int v = 0; v < 10; ++v)
            for (int s = 0; s < 20; ++s) {
                AnnotatorParams p;
                p.c_puct = c;
                const long long sib = static_cast<long long>(s) * s * 7;
                const long double want = c * sqrtl(static_cast<long double>(sib)) / (1.0L + v);
                worst = std::max(worst, fabsl(u_value(v, sib, p) - want) / std::max(1.0L, fabsl(want)));
                ++points;
            }
    return {worst <= 1e-12L, fmt("%d grid points, max deviation from long-double evaluation %.3Lg", points, worst)};
}

Candidate scored(std::optional<long long> answer, double s) {
    Candidate c;
    c.steps.push_back(answer ? fixture::boxed(*answer) : std::string("no answer"));
    c.step_scores = {s};
    if (answer) {
        c.raw_answer = std::to_string(*answer);
        c.answer = AnswerValue::integer(*answer);
    }
    return c;
}

Outcome vote_reference() {
    Rng rng(404);
    int pools = 0, mismatches = 0, plurality_mismatches = 0;
    while (pools < 1000) {
        const int n = static_cast<int>(uniform_int(rng, 1, 12));
        std::vector<Candidate> cands;
        std::vector<double> w;
        for (int i = 0; i < n; ++i) {
            const double s = uniform_unit(rng);
            cands.push_back(scored(bernoulli(rng, 0.1) ? std::nullopt : std::optional<long long>(uniform_int(rng, 0, 4)), s));
            w.push_back(s);
        }
        const auto expect = ref::naive_vote(cands, w);
        if (expect == cands.size()) continue;
        ++pools;
        if (weighted_vote(cands, w, TaskKind::Degree).chosen != expect) ++mismatches;

        const auto plural = ref::naive_vote(cands, std::vector<double>(cands.size(), 1.0));
        std::vector<Candidate> flat = cands;
        for (auto& f : flat) f.step_scores = {0.42};
        for (auto m : {Aggregation::PrmLastVote, Aggregation::PrmMinVote, Aggregation::SelfConsistency}) {
            if (aggregate(flat, m, TaskKind::Degree).chosen != plural) ++plurality_mismatches;
        }
    }
    return {mismatches == 0 && plurality_mismatches == 0,
            fmt("1000 fuzzed pools: %d differ from the naive vote, %d constant-score votes differ from plurality",
                mismatches, plurality_mismatches)};
}

std::vector<Problem> problem_set(int per_task, std::uint64_t seed, std::size_t keep) {
    InstancePlan plan;
    plan.count_per_task = per_task;
    plan.seed = seed;
    auto all = generate_problems(plan, default_workers());
    // interleave tasks so a prefix covers all of them
    std::vector<Problem> out;
    for (int i = 0; i < per_task && out.size() < keep; ++i)
        for (int t = 0; t < kTaskCount && out.size() < keep; ++t) out.push_back(all[t * per_task + i]);
    return out;
}

Outcome search_scaling() {
    const auto problems = problem_set(40, 8, 500);
    int bon = 0, sc = 0, one = 0, total = 0, skipped = 0, bon_below_sc = 0, bon_below_one = 0;
    int bool_pools = 0, bool_sc = 0, bool_one = 0;
    for (std::size_t i = 0; i < problems.size(); ++i) {
        const auto& inst = problems[i].instance;
        const auto gold = gold_trajectory(inst);
        std::vector<std::vector<std::string>> wrong;
        for (const auto& v : perturbation_variants(inst, gold, hash_combine(8, i), 12)) {
            if (v.final_answer && !answers_equivalent(*v.final_answer, inst.gold, inst.kind)) wrong.push_back(v.texts());
        }
        if (wrong.empty()) {
            ++skipped;
            continue;
        }
        std::vector<std::vector<std::string>> pool = {gold.texts(), gold.texts()};
        for (std::size_t k = 0; pool.size() < 8; ++k) pool.push_back(wrong[k % wrong.size()]);
        Rng rng(hash_combine(99, i));
        shuffle(pool, rng);

        ScriptGenerator gen(0, ScriptPolicy::RoundRobin);
        for (const auto& s : pool) gen.add(inst.prompt, {s});
        OracleScorer scorer;
        scorer.add(inst.prompt, gold.texts());

        auto correct = [&](int n, Aggregation m) {
            SearchParams params;
            params.n = n;
            params.method = m;
            const auto out = best_of_n(inst, gen, scorer, params);
            return out.final.raw && judge(*out.final.raw, inst).correct;
        };
        const bool b = correct(8, Aggregation::PrmLastVote);
        const bool s = correct(8, Aggregation::SelfConsistency);
        const bool o = correct(1, Aggregation::PrmLastVote);
        bon += b;
        sc += s;
        one += o;
        if (task_info(inst.kind).answer_type == AnswerType::Boolean) {
            ++bool_pools;
            bool_sc += s;
            bool_one += o;
        }
        bon_below_sc += (!b && s) ? 1 : 0;
        bon_below_one += (!b && o) ? 1 : 0;
        ++total;
    }
    const bool ok = total == 500 - skipped && skipped == 0 && bon_below_sc == 0 && bon_below_one == 0 && sc >= one;
    return {ok, fmt("%d pools (%d skipped, no wrong variant): best-of-8 %.1f%%, self-consistency %.1f%%, n=1 %.1f%%; "
                    "best-of-8 below SC on %d pools, below n=1 on %d; Boolean pools %d (SC %d, n=1 %d correct)",
                    total, skipped, 100.0 * bon / total, 100.0 * sc / total, 100.0 * one / total, bon_below_sc,
                    bon_below_one, bool_pools, bool_sc, bool_one)};
}

Outcome pair_soundness() {
    const auto problems = problem_set(16, 9, 200);
    auto mock = make_mock_backend(problems, 9, 4);
    PairParams params;
    PairYield yield;
    const auto pairs = build_preference_pairs(problems, *mock.generator, *mock.scorer, params, default_workers(), &yield);
    std::map<std::string, const TaskInstance*> by_id;
    for (const auto& p : problems) by_id[p.instance.id] = &p.instance;
    int unsound = 0;
    for (const auto& pair : pairs) {
        auto it = by_id.find(pair.id);
        if (it == by_id.end() || pair.preferred.empty() || pair.dispreferred.empty()) {
            ++unsound;
            continue;
        }
        const auto& inst = *it->second;
        const auto good = judge(pair.preferred_answer, inst);
        const auto bad = judge(pair.dispreferred_answer, inst);
        const bool boxed_match = extract_boxed(pair.preferred.back()) == pair.preferred_answer &&
                                 extract_boxed(pair.dispreferred.back()) == pair.dispreferred_answer;
        if (!good.correct || !bad.parsed || bad.correct || !boxed_match) ++unsound;
    }
    const bool ok = unsound == 0 && !pairs.empty() &&
                    yield.pairs + yield.no_preferred + yield.no_dispreferred == static_cast<int>(problems.size());
    return {ok, fmt("%d problems: %d pairs, %d unsound; skipped %d without a correct preferred answer, %d without a "
                    "wrong sample",
                    static_cast<int>(problems.size()), static_cast<int>(pairs.size()), unsound, yield.no_preferred,
                    yield.no_dispreferred)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome reproducible_builds() {
    BuildConfig cfg;
    cfg.plan.count_per_task = 20;
    cfg.plan.seed = 11;
    cfg.workers = 4;
    const auto a = scratch("repro_a");
    const auto b = scratch("repro_b");
    mini_build(cfg, a);
    cfg.workers = 1;
    mini_build(cfg, b);
    int differing = 0;
    std::size_t bytes = 0;
    const auto pa = CorpusPaths::in(a);
    const auto pb = CorpusPaths::in(b);
    for (auto [x, y] : {std::pair{pa.prm_train, pb.prm_train}, std::pair{pa.sft, pb.sft}, std::pair{pa.dpo, pb.dpo},
                        std::pair{pa.stats, pb.stats}}) {
        const auto sx = slurp(x);
        bytes += sx.size();
        if (sx.empty() || sx != slurp(y)) ++differing;
    }
    return {differing == 0, fmt("4 output files, %zu bytes, %d differ between two runs (4 and 1 workers)", bytes,
                                differing)};
}

Outcome float_tolerance() {
    int cases = 0, wrong = 0;
    Rng rng(55);
    for (int i = 0; i < 25; ++i) {
        const double gold = 0.001 + 2.0 * uniform_unit(rng);
        const double sign = i % 2 ? -1.0 : 1.0;
        for (auto [rel, expect] : {std::pair{0.99e-4, true}, std::pair{1.01e-4, false}}) {
            const std::string raw = fmt("%.17g", gold * (1.0 + sign * rel));
            const auto j = exact_match(raw, AnswerValue::floating(gold), TaskKind::ClusteringCoefficient);
            ++cases;
            if (!j.parsed || j.correct != expect) ++wrong;
        }
    }
    return {wrong == 0, fmt("%d (raw, gold) pairs at 0.99e-4 and 1.01e-4 relative error, %d misjudged", cases, wrong)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"oracle equivalence", oracle_equivalence},
        {"max-flow / min-cut duality", flow_cut_duality},
        {"pagerank mass conservation", pagerank_mass},
        {"label grammars after filtering", label_grammars},
        {"first-error binary search", binary_search_locator},
        {"selection formulas", selection_formulas},
        {"weighted vote", vote_reference},
        {"search scaling", search_scaling},
        {"preference pair soundness", pair_soundness},
        {"reproducible builds", reproducible_builds},
        {"float tolerance boundary", float_tolerance},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %2zu %s  %s: %s (%.1fs)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
