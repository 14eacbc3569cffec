#include "gcp/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>

#include "gcp/error.hpp"
#include "gcp/evaluator.hpp"
#include "gcp/parallel.hpp"
#include "gcp/random.hpp"

namespace gcp {

namespace {

using json = nlohmann::json;

constexpr double kHuntProbabilities[] = {0.1, 0.2, 0.35, 0.5, 0.8};
constexpr int kPlainAttempts = 8;

std::string padded(int index) {
    std::ostringstream os;
    os << std::setw(4) << std::setfill('0') << index;
    return os.str();
}

std::vector<NodeId> sample_args(TaskKind kind, int nodes, Rng& rng) {
    const int arity = task_info(kind).arity;
    std::vector<NodeId> args;
    if (arity >= 1) args.push_back(static_cast<NodeId>(uniform_int(rng, 0, nodes - 1)));
    if (arity >= 2) {
        NodeId v = static_cast<NodeId>(uniform_int(rng, 0, nodes - 2));
        if (v >= args[0]) ++v;
        args.push_back(v);
    }
    return args;
}

bool needs_connected(TaskKind kind) { return kind == TaskKind::Diameter || kind == TaskKind::MST; }

// Sentences end at . ! ? followed by whitespace or the end, or at a newline.
std::vector<std::string> sentences(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        const auto b = cur.find_first_not_of(" \t");
        if (b != std::string::npos) out.push_back(cur.substr(b, cur.find_last_not_of(" \t") - b + 1));
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            flush();
            continue;
        }
        cur += c;
        const bool boundary = i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\n';
        if ((c == '.' || c == '!' || c == '?') && boundary) flush();
    }
    flush();
    return out;
}

bool has_repeats(const std::vector<Step>& steps) {
    std::string prev;
    int run = 0;
    for (const auto& step : steps) {
        for (const auto& s : sentences(step.text)) {
            run = s == prev ? run + 1 : 1;
            prev = s;
            if (run >= kRepeatLimit) return true;
        }
    }
    return false;
}

std::vector<std::string> texts_of(const StepSequence& seq) { return seq.texts(); }

}  // namespace

Problem sample_problem(TaskKind kind, SizeTier tier, GraphFamily family, std::uint64_t seed, std::optional<bool> want,
                       int max_attempts) {
    const TaskInfo& info = task_info(kind);
    if (want && info.answer_type != AnswerType::Boolean) want.reset();
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Rng rng(hash_combine(seed, static_cast<std::uint64_t>(attempt)));
        GraphSpec spec;
        spec.family = family;
        spec.size_tier = tier;
        spec.weighted = info.weighted;
        spec.directed = info.directedness == Directedness::DirectedOnly ||
                        (info.directedness == Directedness::Any && bernoulli(rng, 0.5));
        spec.require_connected = needs_connected(kind);
        spec.seed = rng();
        if (want && attempt >= kPlainAttempts) {
            // Sparse and dense random graphs reach the rarer Boolean answer.
            spec.family = GraphFamily::Random;
            spec.edge_probability = kHuntProbabilities[attempt % std::size(kHuntProbabilities)];
        }
        try {
            Graph g = generate_graph(spec);
            auto args = sample_args(kind, g.node_count(), rng);
            TaskInstance inst = make_instance("", kind, std::move(g), std::move(args));
            if (want && std::get<bool>(inst.gold.value) != *want) continue;
            Problem p;
            p.family = spec.family;
            p.size_tier = tier;
            p.density_tier = density(inst.graph).tier;
            p.instance = std::move(inst);
            return p;
        } catch (const DataError&) {
            continue;
        }
    }
    throw DataError("generation-exhausted", "no acceptable " + to_string(kind) + " instance after " +
                                                std::to_string(max_attempts) + " attempts");
}

std::vector<Problem> generate_problems(const InstancePlan& plan, int workers) {
    if (plan.count_per_task < 0) throw DataError("bad-config", "count must be non-negative");
    if (plan.tasks.empty() || plan.tiers.empty() || plan.families.empty()) {
        throw DataError("bad-config", "tasks, tiers and families must be non-empty");
    }
    const std::size_t per = static_cast<std::size_t>(plan.count_per_task);
    std::vector<Problem> out(plan.tasks.size() * per);
    parallel_for(out.size(), workers, [&](std::size_t slot) {
        const TaskKind kind = plan.tasks[slot / per];
        const int index = static_cast<int>(slot % per);
        const std::uint64_t seed = hash_combine(hash_combine(plan.seed, fnv1a(to_string(kind))), index);
        Rng rng(seed);
        const SizeTier tier = plan.tiers[uniform_int(rng, 0, static_cast<std::int64_t>(plan.tiers.size()) - 1)];
        const GraphFamily family =
            plan.families[uniform_int(rng, 0, static_cast<std::int64_t>(plan.families.size()) - 1)];
        std::optional<bool> want;
        if (plan.balance_booleans && task_info(kind).answer_type == AnswerType::Boolean) want = index % 2 == 0;
        Problem p = sample_problem(kind, tier, family, rng(), want, plan.max_attempts);
        // Re-render with the final id so template variants follow it.
        p.instance = make_instance(to_string(kind) + "-" + to_string(tier) + "-" + padded(index), kind,
                                   std::move(p.instance.graph), std::move(p.instance.args));
        out[slot] = std::move(p);
    });
    return out;
}

json problem_to_json(const Problem& p) {
    const auto& inst = p.instance;
    return {{"id", inst.id},
            {"task", to_string(inst.kind)},
            {"graph", graph_to_json(inst.graph)},
            {"args", inst.args},
            {"question", inst.prompt},
            {"gold", answer_to_json(inst.gold)},
            {"family", to_string(p.family)},
            {"size_tier", to_string(p.size_tier)},
            {"density_tier", to_string(p.density_tier)}};
}

Problem problem_from_json(const json& j) {
    try {
        Problem p;
        const TaskKind kind = parse_task(j.at("task").get<std::string>());
        p.instance = make_instance(j.at("id").get<std::string>(), kind, graph_from_json(j.at("graph")),
                                   j.at("args").get<std::vector<NodeId>>());
        p.family = parse_family(j.at("family").get<std::string>());
        p.size_tier = parse_size_tier(j.at("size_tier").get<std::string>());
        p.density_tier = parse_density_tier(j.at("density_tier").get<std::string>());
        if (!(answer_from_json(j.at("gold"), task_info(kind).answer_type) == p.instance.gold)) {
            throw DataError("malformed-record", "stored gold answer disagrees with the solver for " + p.instance.id);
        }
        return p;
    } catch (const json::exception& e) {
        throw DataError("malformed-record", std::string("bad problem row: ") + e.what());
    }
}

std::string DatasetRecord::labels() const {
    std::string out;
    for (const auto& s : steps) out += s.label;
    return out;
}

DatasetRecord make_record(const Problem& p, const StepSequence& seq, std::string id) {
    DatasetRecord r;
    r.id = std::move(id);
    r.task = p.instance.kind;
    r.graph = p.instance.graph;
    r.question = p.instance.prompt;
    r.steps = seq.steps;
    if (!seq.steps.empty()) r.answer = extract_boxed(seq.steps.back().text);
    // Monte-carlo sequences stop at their first error; the rollout's answer
    // still counts as the process's final answer.
    if (!r.answer && seq.final_answer) r.answer = format_answer(*seq.final_answer);
    r.source = seq.source;
    r.size_tier = p.size_tier;
    r.density_tier = p.density_tier;
    return r;
}

json record_to_json(const DatasetRecord& r) {
    StepSequence seq;
    seq.steps = r.steps;
    const auto enc = encode_training_record(r.question, seq);
    return {{"id", r.id},
            {"task", to_string(r.task)},
            {"graph", graph_to_json(r.graph)},
            {"question", r.question},
            {"steps", enc.steps},
            {"labels", enc.labels},
            {"answer", r.answer ? json(*r.answer) : json(nullptr)},
            {"source", to_string(r.source)},
            {"size_tier", to_string(r.size_tier)},
            {"density_tier", to_string(r.density_tier)}};
}

DatasetRecord record_from_json(const json& j) {
    try {
        DatasetRecord r;
        r.id = j.at("id").get<std::string>();
        r.task = parse_task(j.at("task").get<std::string>());
        r.graph = graph_from_json(j.at("graph"));
        r.question = j.at("question").get<std::string>();
        r.steps = decode_training_record(j.at("steps").get<std::string>(), j.at("labels").get<std::string>());
        if (!j.at("answer").is_null()) r.answer = j.at("answer").get<std::string>();
        r.source = parse_source(j.at("source").get<std::string>());
        r.size_tier = parse_size_tier(j.at("size_tier").get<std::string>());
        r.density_tier = parse_density_tier(j.at("density_tier").get<std::string>());
        return r;
    } catch (const json::exception& e) {
        throw DataError("malformed-record", std::string("bad record row: ") + e.what());
    }
}

FilterResult quality_filter(const std::vector<DatasetRecord>& records) {
    FilterResult out;
    for (const auto& rec : records) {
        if (rec.steps.empty() || !rec.answer) {
            out.rejected.push_back({rec, "no final answer"});
            continue;
        }
        if (has_repeats(rec.steps)) {
            out.rejected.push_back({rec, "repeated sentences"});
            continue;
        }
        DatasetRecord kept = rec;
        if (kept.source == SequenceSource::MonteCarlo) {
            const auto labels = kept.labels();
            const auto cut = labels.find(kNegative);
            if (cut != std::string::npos) kept.steps.resize(cut + 1);
            if (!matches_monte_carlo_grammar(kept.labels())) {
                out.rejected.push_back({rec, "label grammar"});
                continue;
            }
        } else if (!matches_trajectory_grammar(kept.labels())) {
            out.rejected.push_back({rec, "label grammar"});
            continue;
        }
        out.kept.push_back(std::move(kept));
    }
    return out;
}

std::vector<StepSequence> perturbation_variants(const TaskInstance& instance, const StepSequence& gold,
                                                std::uint64_t seed, std::size_t max_count) {
    const auto trace = solve(instance.kind, instance.graph, instance.args).trace;
    std::vector<std::pair<PerturbStrategy, std::size_t>> plans;
    for (auto strategy : {PerturbStrategy::Structure, PerturbStrategy::NodeEdge, PerturbStrategy::Calculation}) {
        for (std::size_t target : applicable_targets(trace, strategy)) plans.emplace_back(strategy, target);
    }
    Rng rng(seed);
    shuffle(plans, rng);
    std::vector<StepSequence> out;
    std::set<std::vector<std::string>> seen;
    for (std::size_t i = 0; i < plans.size() && out.size() < max_count; ++i) {
        PerturbationPlan plan;
        plan.strategy = plans[i].first;
        plan.target_index = plans[i].second;
        plan.seed = hash_combine(seed, i);
        try {
            auto bad = perturb(instance, gold, plan);
            if (seen.insert(bad.texts()).second) out.push_back(std::move(bad));
        } catch (const DataError&) {
        }
    }
    return out;
}

MockBackend make_mock_backend(const std::vector<Problem>& problems, std::uint64_t seed, std::size_t variants_per_problem,
                              ScriptPolicy policy) {
    MockBackend mock{std::make_unique<ScriptGenerator>(seed, policy), std::make_unique<OracleScorer>()};
    std::vector<std::vector<StepSequence>> variants(problems.size());
    std::vector<StepSequence> golds(problems.size());
    for (std::size_t i = 0; i < problems.size(); ++i) {
        golds[i] = gold_trajectory(problems[i].instance);
        variants[i] = perturbation_variants(problems[i].instance, golds[i], hash_combine(seed, i), variants_per_problem);
    }
    std::set<std::string> prompts;
    for (std::size_t i = 0; i < problems.size(); ++i) {
        const auto& prompt = problems[i].instance.prompt;
        // Identical questions share the first problem's scripts.
        if (!prompts.insert(prompt).second) continue;
        mock.generator->add(prompt, {texts_of(golds[i])});
        for (const auto& v : variants[i]) mock.generator->add(prompt, {texts_of(v)});
        mock.scorer->add(prompt, texts_of(golds[i]));
    }
    return mock;
}

namespace {

enum class PairMiss { None, NoPreferred, NoDispreferred };

std::pair<std::optional<PreferencePair>, PairMiss> try_pair(const TaskInstance& instance, Generator& generator,
                                                           Scorer& scorer, const PairParams& params) {
    SearchOutcome beam;
    try {
        beam = beam_search(instance, generator, scorer, params.beam);
    } catch (const DataError&) {
        return {std::nullopt, PairMiss::NoPreferred};
    }
    if (!beam.final.raw || !judge(*beam.final.raw, instance).correct) return {std::nullopt, PairMiss::NoPreferred};

    SearchOutcome samples;
    try {
        samples = best_of_n(instance, generator, scorer, params.sampling);
    } catch (const DataError&) {
        return {std::nullopt, PairMiss::NoDispreferred};
    }
    const Candidate* worst = nullptr;
    double worst_score = 0;
    for (const auto& c : samples.candidates) {
        if (!c.answer || !c.raw_answer || judge(*c.raw_answer, instance).correct) continue;
        const double s = solution_score(c, Aggregation::PrmMin);
        if (!worst || s < worst_score) {
            worst = &c;
            worst_score = s;
        }
    }
    if (!worst) return {std::nullopt, PairMiss::NoDispreferred};
    PreferencePair pair;
    pair.id = instance.id;
    pair.task = instance.kind;
    pair.question = instance.prompt;
    pair.preferred = beam.candidates[beam.final.chosen].steps;
    pair.preferred_answer = *beam.final.raw;
    pair.dispreferred = worst->steps;
    pair.dispreferred_answer = *worst->raw_answer;
    return {pair, PairMiss::None};
}

}  // namespace

std::optional<PreferencePair> build_preference_pair(const TaskInstance& instance, Generator& generator, Scorer& scorer,
                                                    const PairParams& params) {
    return try_pair(instance, generator, scorer, params).first;
}

std::vector<PreferencePair> build_preference_pairs(const std::vector<Problem>& problems, Generator& generator,
                                                   Scorer& scorer, const PairParams& params, int workers,
                                                   PairYield* yield) {
    std::vector<std::pair<std::optional<PreferencePair>, PairMiss>> slots(problems.size());
    parallel_for(problems.size(), workers,
                 [&](std::size_t i) { slots[i] = try_pair(problems[i].instance, generator, scorer, params); });
    std::vector<PreferencePair> out;
    PairYield y;
    y.problems = static_cast<int>(problems.size());
    for (auto& [pair, miss] : slots) {
        if (pair) out.push_back(std::move(*pair));
        if (miss == PairMiss::NoPreferred) ++y.no_preferred;
        if (miss == PairMiss::NoDispreferred) ++y.no_dispreferred;
    }
    y.pairs = static_cast<int>(out.size());
    if (yield) *yield = y;
    return out;
}

json pair_to_json(const PreferencePair& p) {
    return {{"id", p.id},
            {"task", to_string(p.task)},
            {"prompt", p.question},
            {"chosen", p.preferred},
            {"rejected", p.dispreferred},
            {"chosen_answer", p.preferred_answer},
            {"rejected_answer", p.dispreferred_answer}};
}

PreferencePair pair_from_json(const json& j) {
    try {
        PreferencePair p;
        p.id = j.at("id").get<std::string>();
        p.task = parse_task(j.at("task").get<std::string>());
        p.question = j.at("prompt").get<std::string>();
        p.preferred = j.at("chosen").get<std::vector<std::string>>();
        p.dispreferred = j.at("rejected").get<std::vector<std::string>>();
        p.preferred_answer = j.at("chosen_answer").get<std::string>();
        p.dispreferred_answer = j.at("rejected_answer").get<std::string>();
        return p;
    } catch (const json::exception& e) {
        throw DataError("malformed-record", std::string("bad pair row: ") + e.what());
    }
}

json CorpusStats::to_json() const {
    return {{"tasks", tasks},
            {"problems", problems},
            {"records", records},
            {"trajectory_records", trajectory_records},
            {"monte_carlo_records", monte_carlo_records},
            {"sft_records", sft_records},
            {"preference_pairs", pairs},
            {"positive_labels", positive_labels},
            {"negative_labels", negative_labels},
            {"max_steps", max_steps},
            {"rejected", rejected}};
}

CorpusPaths CorpusPaths::in(const std::filesystem::path& dir) {
    return {dir / "prm_train.jsonl", dir / "sft.jsonl", dir / "dpo.jsonl", dir / "stats.json"};
}

namespace {

bool sft_eligible(const DatasetRecord& r) {
    const auto labels = r.labels();
    return r.source == SequenceSource::Trajectory && labels.find(kNegative) == std::string::npos;
}

}  // namespace

CorpusStats corpus_stats(const std::vector<Problem>& problems, const std::vector<DatasetRecord>& records,
                         const std::vector<PreferencePair>& pairs, int rejected) {
    CorpusStats stats;
    std::set<TaskKind> tasks;
    for (const auto& p : problems) tasks.insert(p.instance.kind);
    if (problems.empty())
        for (const auto& r : records) tasks.insert(r.task);
    stats.tasks = static_cast<int>(tasks.size());
    stats.problems = static_cast<int>(problems.size());
    stats.rejected = rejected;
    stats.pairs = static_cast<int>(pairs.size());
    for (const auto& r : records) {
        ++stats.records;
        ++(r.source == SequenceSource::MonteCarlo ? stats.monte_carlo_records : stats.trajectory_records);
        const auto labels = r.labels();
        stats.positive_labels += std::count(labels.begin(), labels.end(), kPositive);
        stats.negative_labels += std::count(labels.begin(), labels.end(), kNegative);
        stats.max_steps = std::max(stats.max_steps, static_cast<int>(r.steps.size()));
        if (sft_eligible(r)) ++stats.sft_records;
    }
    return stats;
}

CorpusStats emit_corpora(const std::vector<Problem>& problems, const std::vector<DatasetRecord>& records,
                         const std::vector<PreferencePair>& pairs, int rejected, const CorpusPaths& paths) {
    std::vector<json> prm, sft, dpo;
    for (const auto& r : records) {
        prm.push_back(record_to_json(r));
        if (!sft_eligible(r)) continue;
        std::vector<std::string> texts;
        for (const auto& s : r.steps) texts.push_back(s.text);
        sft.push_back({{"id", r.id},
                       {"task", to_string(r.task)},
                       {"question", r.question},
                       {"response", join_steps(texts)},
                       {"answer", r.answer ? json(*r.answer) : json(nullptr)}});
    }
    for (const auto& p : pairs) dpo.push_back(pair_to_json(p));
    const CorpusStats stats = corpus_stats(problems, records, pairs, rejected);
    write_jsonl(paths.prm_train, prm);
    write_jsonl(paths.sft, sft);
    write_jsonl(paths.dpo, dpo);
    write_json(paths.stats, stats.to_json());
    return stats;
}

BuildResult mini_build(const BuildConfig& config, const std::filesystem::path& out_dir) {
    BuildResult result;
    result.problems = generate_problems(config.plan, config.workers);
    const auto& problems = result.problems;
    const std::uint64_t seed = config.plan.seed;

    std::vector<std::vector<DatasetRecord>> per_problem(problems.size());
    parallel_for(problems.size(), config.workers, [&](std::size_t i) {
        const auto& p = problems[i];
        auto gold = gold_trajectory(p.instance);
        per_problem[i].push_back(make_record(p, gold, p.instance.id + "#gold"));
        auto variants = perturbation_variants(p.instance, gold, hash_combine(seed, i), config.variants_per_problem);
        for (std::size_t v = 0; v < variants.size(); ++v) {
            per_problem[i].push_back(make_record(p, variants[v], p.instance.id + "#p" + std::to_string(v)));
        }
    });

    MockBackend mock;
    if (config.monte_carlo || config.preferences) {
        mock = make_mock_backend(problems, seed, config.variants_per_problem);
    }
    if (config.monte_carlo) {
        std::vector<std::vector<DatasetRecord>> mc(problems.size());
        parallel_for(problems.size(), config.workers, [&](std::size_t i) {
            const auto& p = problems[i];
            auto res = annotate(p.instance, *mock.generator, config.annotator);
            for (std::size_t k = 0; k < res.sequences.size(); ++k) {
                mc[i].push_back(make_record(p, res.sequences[k], p.instance.id + "#mc" + std::to_string(k)));
            }
        });
        for (std::size_t i = 0; i < problems.size(); ++i) {
            for (auto& r : mc[i]) per_problem[i].push_back(std::move(r));
        }
    }

    std::vector<DatasetRecord> all;
    for (auto& rs : per_problem)
        for (auto& r : rs) all.push_back(std::move(r));
    result.filtered = quality_filter(all);

    if (config.preferences) {
        result.pairs = build_preference_pairs(problems, *mock.generator, *mock.scorer, config.pairs, config.workers,
                                              &result.yield);
    }
    std::filesystem::create_directories(out_dir);
    result.stats = emit_corpora(problems, result.filtered.kept, result.pairs,
                                static_cast<int>(result.filtered.rejected.size()), CorpusPaths::in(out_dir));
    return result;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("io-error", "cannot write " + path.string());
    for (const auto& row : rows) out << row.dump() << '\n';
    if (!out) throw DataError("io-error", "write failed for " + path.string());
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("io-error", "cannot read " + path.string());
    std::vector<json> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            rows.push_back(json::parse(line));
        } catch (const json::parse_error&) {
            throw DataError("malformed-record", path.string() + ":" + std::to_string(lineno) + ": not JSON");
        }
    }
    return rows;
}

void write_json(const std::filesystem::path& path, const json& value) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("io-error", "cannot write " + path.string());
    out << value.dump(2) << '\n';
    if (!out) throw DataError("io-error", "write failed for " + path.string());
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("io-error", "cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error&) {
        throw DataError("malformed-record", path.string() + ": not JSON");
    }
}

}  // namespace gcp
