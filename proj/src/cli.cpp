#include "gcp/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gcp/dataset.hpp"
#include "gcp/error.hpp"
#include "gcp/evaluator.hpp"
#include "gcp/gateway.hpp"
#include "gcp/mcts.hpp"
#include "gcp/parallel.hpp"
#include "gcp/search.hpp"

namespace gcp::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string> kCommands = {"generate", "annotate-mcts", "search", "evaluate", "build-prefs", "stats"};

struct BackendOptions {
    std::string kind = "mock-oracle";
    std::string script;
    std::string base_url;
    std::string scorer_url;
    std::string model = "default";
    std::string score_protocol = "logprob";
    std::string api_key_env = "GCPFORGE_API_KEY";
    int concurrency = 8;
    int timeout_s = 60;
    int retries = 4;
    std::size_t variants = 4;
};

struct Options {
    std::uint64_t seed = 1;
    int workers = default_workers();
    BackendOptions backend;

    // generate
    std::string tasks = "all";
    std::string tiers = "tiny";
    std::string families = "all";
    int count = 20;
    bool with_mcts = false;
    bool with_prefs = false;

    // shared paths
    std::string dataset;
    std::string out;
    std::string manifest;
    std::string records;
    std::string pairs;

    // search and pairs
    std::string strategy = "best-of-n";
    int n = 8;
    int k = 2;
    std::string method = "prm-last-vote";
    int depth_cap = kMaxSegments;
    double temperature = 0.7;
    int max_tokens = 1024;

    // annotate-mcts
    AnnotatorParams annotator;

    // evaluate
    bool bfs_any_order = false;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<TaskKind> parse_tasks(const std::string& s) {
    if (s == "all") return all_tasks();
    std::vector<TaskKind> out;
    for (const auto& id : split_list(s)) out.push_back(parse_task(id));
    if (out.empty()) throw DataError("bad-config", "empty task list");
    return out;
}

std::vector<SizeTier> parse_tiers(const std::string& s) {
    if (s == "all") return {SizeTier::Tiny, SizeTier::Small, SizeTier::Medium, SizeTier::Large};
    std::vector<SizeTier> out;
    for (const auto& id : split_list(s)) out.push_back(parse_size_tier(id));
    if (out.empty()) throw DataError("bad-config", "empty tier list");
    return out;
}

std::vector<GraphFamily> parse_families(const std::string& s) {
    if (s == "all") return {GraphFamily::Random, GraphFamily::SmallWorld, GraphFamily::ScaleFree};
    std::vector<GraphFamily> out;
    for (const auto& id : split_list(s)) out.push_back(parse_family(id));
    if (out.empty()) throw DataError("bad-config", "empty family list");
    return out;
}

void require(const std::string& value, const std::string& flag) {
    if (value.empty()) throw DataError("bad-config", flag + " is required");
}

// Fails before any work when an output file cannot be created.
void check_writable(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream probe(path, std::ios::app);
    if (!probe) throw DataError("io-error", "cannot write " + path.string());
}

std::vector<Problem> load_problems(const std::string& path) {
    require(path, "--dataset");
    std::vector<Problem> out;
    for (const auto& row : read_jsonl(path)) out.push_back(problem_from_json(row));
    if (out.empty()) throw DataError("empty-dataset", path + " holds no problems");
    return out;
}

struct Backend {
    std::unique_ptr<Generator> generator;
    std::unique_ptr<Scorer> scorer;
};

ScriptPolicy parse_policy(const std::string& s) {
    if (s == "seeded") return ScriptPolicy::Seeded;
    if (s == "round-robin") return ScriptPolicy::RoundRobin;
    throw DataError("bad-config", "unknown script policy: " + s);
}

// {"seed", "policy", "scripts": [{"problem"|"prompt", "steps", "weight"}],
//  "gold": [{"problem"|"prompt", "steps"}]}
Backend script_backend(const std::string& path, const std::vector<Problem>& problems, std::uint64_t seed) {
    require(path, "--script");
    const json spec = read_json(path);
    std::map<std::string, std::string> prompts;
    for (const auto& p : problems) prompts[p.instance.id] = p.instance.prompt;
    auto prompt_of = [&](const json& entry) {
        if (entry.contains("prompt")) return entry.at("prompt").get<std::string>();
        const auto id = entry.at("problem").get<std::string>();
        auto it = prompts.find(id);
        if (it == prompts.end()) throw DataError("dangling-reference", "script names unknown problem " + id);
        return it->second;
    };
    try {
        auto gen = std::make_unique<ScriptGenerator>(spec.value("seed", seed), parse_policy(spec.value("policy", "seeded")));
        auto scorer = std::make_unique<OracleScorer>();
        for (const auto& s : spec.at("scripts")) {
            gen->add(prompt_of(s), {s.at("steps").get<std::vector<std::string>>(), s.value("weight", 1.0)});
        }
        if (spec.contains("gold")) {
            for (const auto& g : spec.at("gold")) scorer->add(prompt_of(g), g.at("steps").get<std::vector<std::string>>());
        }
        return {std::move(gen), std::move(scorer)};
    } catch (const json::exception& e) {
        throw DataError("bad-config", std::string("bad script file: ") + e.what());
    }
}

Backend make_backend(const Options& o, const std::vector<Problem>& problems) {
    const auto& b = o.backend;
    if (b.kind == "mock-oracle") {
        auto mock = make_mock_backend(problems, o.seed, b.variants);
        return {std::move(mock.generator), std::move(mock.scorer)};
    }
    if (b.kind == "mock-script") return script_backend(b.script, problems, o.seed);
    if (b.kind == "http") {
        require(b.base_url, "--base-url");
        HttpConfig cfg;
        cfg.base_url = b.base_url;
        cfg.model = b.model;
        cfg.api_key_env = b.api_key_env;
        cfg.concurrency = b.concurrency;
        cfg.timeout = std::chrono::seconds(b.timeout_s);
        cfg.retry.max_attempts = b.retries;
        auto limiter = std::make_shared<RequestLimiter>(cfg.concurrency);
        HttpConfig score_cfg = cfg;
        if (!b.scorer_url.empty()) score_cfg.base_url = b.scorer_url;
        ScoreProtocol protocol;
        if (b.score_protocol == "logprob") {
            protocol = ScoreProtocol::Logprob;
        } else if (b.score_protocol == "scalar") {
            protocol = ScoreProtocol::Scalar;
        } else {
            throw DataError("bad-config", "unknown score protocol: " + b.score_protocol);
        }
        return {std::make_unique<HttpGenerator>(cfg, limiter), std::make_unique<HttpScorer>(score_cfg, protocol, limiter)};
    }
    throw DataError("bad-config", "unknown backend: " + b.kind);
}

SearchParams search_params(const Options& o) {
    SearchParams p;
    p.n = o.n;
    p.k = o.k;
    p.method = parse_aggregation(o.method);
    p.temperature = o.temperature;
    p.max_tokens = o.max_tokens;
    p.depth_cap = o.depth_cap;
    if (p.n < 1) throw DataError("bad-config", "--n must be at least 1");
    if (p.depth_cap < 1) throw DataError("bad-config", "--depth-cap must be at least 1");
    return p;
}

void add_backend_flags(CLI::App* sub, Options& o) {
    sub->add_option("--backend", o.backend.kind, "mock-oracle | mock-script | http")
        ->check(CLI::IsMember({"mock-oracle", "mock-script", "http"}));
    sub->add_option("--script", o.backend.script, "Script file for mock-script");
    sub->add_option("--variants", o.backend.variants, "Perturbed scripts per problem for mock-oracle");
    sub->add_option("--base-url", o.backend.base_url, "Generator endpoint for http");
    sub->add_option("--scorer-url", o.backend.scorer_url, "Scorer endpoint (defaults to --base-url)");
    sub->add_option("--model", o.backend.model);
    sub->add_option("--score-protocol", o.backend.score_protocol, "logprob | scalar");
    sub->add_option("--api-key-env", o.backend.api_key_env, "Environment variable holding the API key");
    sub->add_option("--concurrency", o.backend.concurrency, "Max in-flight HTTP requests");
    sub->add_option("--timeout", o.backend.timeout_s, "HTTP timeout in seconds");
    sub->add_option("--retries", o.backend.retries, "Attempts per HTTP request");
    sub->add_option("--temperature", o.temperature);
    sub->add_option("--max-tokens", o.max_tokens);
}

void add_common_flags(CLI::App* sub, Options& o) {
    sub->add_option("--seed", o.seed);
    sub->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
}

int cmd_generate(const Options& o, std::ostream& out) {
    BuildConfig cfg;
    cfg.plan.tasks = parse_tasks(o.tasks);
    cfg.plan.tiers = parse_tiers(o.tiers);
    cfg.plan.families = parse_families(o.families);
    cfg.plan.count_per_task = o.count;
    cfg.plan.seed = o.seed;
    cfg.variants_per_problem = o.backend.variants;
    cfg.monte_carlo = o.with_mcts;
    cfg.preferences = o.with_prefs;
    cfg.annotator = o.annotator;
    cfg.pairs.beam = search_params(o);
    cfg.pairs.beam.method = Aggregation::PrmLastVote;
    cfg.pairs.sampling = cfg.pairs.beam;
    cfg.pairs.sampling.method = Aggregation::PrmMin;
    cfg.workers = o.workers;
    if (o.count < 0) throw DataError("bad-config", "--count must be non-negative");
    if ((o.with_mcts || o.with_prefs) && o.backend.kind != "mock-oracle") {
        throw DataError("bad-config", "generate builds monte-carlo records and pairs against mock-oracle only");
    }
    const fs::path dir = o.out.empty() ? fs::path("out") : fs::path(o.out);
    fs::create_directories(dir);
    check_writable(dir / "problems.jsonl");

    auto result = mini_build(cfg, dir);
    std::vector<json> rows;
    for (const auto& p : result.problems) rows.push_back(problem_to_json(p));
    write_jsonl(dir / "problems.jsonl", rows);
    json summary = {{"command", "generate"},
                    {"problems", result.problems.size()},
                    {"out", dir.string()},
                    {"stats", result.stats.to_json()}};
    out << summary.dump() << '\n';
    return kOk;
}

int cmd_annotate(const Options& o, std::ostream& out) {
    o.annotator.validate();
    require(o.out, "--out");
    check_writable(o.out);
    auto problems = load_problems(o.dataset);
    auto backend = make_backend(o, problems);
    std::vector<std::vector<json>> rows(problems.size());
    std::vector<int> batches(problems.size(), 0);
    parallel_for(problems.size(), o.workers, [&](std::size_t i) {
        auto res = annotate(problems[i].instance, *backend.generator, o.annotator);
        batches[i] = res.batches;
        for (std::size_t k = 0; k < res.sequences.size(); ++k) {
            rows[i].push_back(record_to_json(
                make_record(problems[i], res.sequences[k], problems[i].instance.id + "#mc" + std::to_string(k))));
        }
    });
    std::vector<json> flat;
    for (auto& r : rows)
        for (auto& j : r) flat.push_back(std::move(j));
    write_jsonl(o.out, flat);
    long long total_batches = 0;
    for (int b : batches) total_batches += b;
    out << json{{"command", "annotate-mcts"}, {"problems", problems.size()}, {"records", flat.size()},
                {"batches", total_batches}}
               .dump()
        << '\n';
    return kOk;
}

int cmd_search(const Options& o, std::ostream& out) {
    const SearchParams params = search_params(o);
    const bool beam = o.strategy == "beam";
    if (!beam && o.strategy != "best-of-n") throw DataError("bad-config", "unknown strategy: " + o.strategy);
    if (beam && (params.k < 1 || params.k > params.n || params.n % params.k != 0)) {
        throw DataError("bad-beam", "beam search needs 1 <= k <= n with k dividing n");
    }
    require(o.out, "--out");
    check_writable(o.out);
    auto problems = load_problems(o.dataset);
    auto backend = make_backend(o, problems);

    std::vector<json> rows(problems.size());
    parallel_for(problems.size(), o.workers, [&](std::size_t i) {
        const auto& inst = problems[i].instance;
        json row = {{"id", inst.id}, {"task", to_string(inst.kind)}, {"strategy", o.strategy},
                    {"method", to_string(params.method)}, {"n", params.n}};
        if (beam) row["k"] = params.k;
        try {
            auto res = beam ? beam_search(inst, *backend.generator, *backend.scorer, params)
                            : best_of_n(inst, *backend.generator, *backend.scorer, params);
            if (beam) row["expansions_per_survivor"] = res.expansions_per_survivor;
            row["pool_sizes"] = res.pool_sizes;
            if (beam) row["live_beams"] = res.live_beams;
            json cands = json::array();
            for (const auto& c : res.candidates) cands.push_back(candidate_to_json(c));
            row["candidates"] = cands;
            row["chosen"] = res.final.chosen;
            row["answer"] = res.final.raw ? json(*res.final.raw) : json(nullptr);
            row["correct"] = res.final.raw && judge(*res.final.raw, inst).correct;
        } catch (const DataError& e) {
            // Per-instance domain failures are recorded; backend failures abort the run.
            row["answer"] = nullptr;
            row["correct"] = false;
            row["error"] = e.code();
        }
        rows[i] = std::move(row);
    });
    write_jsonl(o.out, rows);
    int correct = 0;
    for (const auto& r : rows) correct += r["correct"].get<bool>() ? 1 : 0;
    out << json{{"command", "search"}, {"strategy", o.strategy}, {"problems", rows.size()}, {"correct", correct}}.dump()
        << '\n';
    return kOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
    require(o.manifest, "--manifest");
    if (!o.out.empty()) check_writable(o.out);
    auto problems = load_problems(o.dataset);
    std::map<std::string, TaskInstance> dataset;
    for (auto& p : problems) dataset.emplace(p.instance.id, std::move(p.instance));
    std::vector<ManifestRow> manifest;
    for (const auto& row : read_jsonl(o.manifest)) {
        try {
            ManifestRow m;
            m.id = row.at("id").get<std::string>();
            m.task = row.value("task", "");
            if (row.contains("answer") && !row.at("answer").is_null()) m.answer = row.at("answer").get<std::string>();
            manifest.push_back(std::move(m));
        } catch (const json::exception& e) {
            throw DataError("malformed-record", std::string("bad manifest row: ") + e.what());
        }
    }
    EvalOptions opts;
    opts.bfs_any_valid_order = o.bfs_any_order;
    auto report = evaluate_run(manifest, dataset, opts);
    if (!o.out.empty()) write_json(o.out, report.to_json());
    out << report.to_table();
    return kOk;
}

int cmd_build_prefs(const Options& o, std::ostream& out) {
    require(o.out, "--out");
    check_writable(o.out);
    PairParams params;
    params.beam = search_params(o);
    params.beam.method = Aggregation::PrmLastVote;
    if (params.beam.k < 1 || params.beam.k > params.beam.n || params.beam.n % params.beam.k != 0) {
        throw DataError("bad-beam", "beam search needs 1 <= k <= n with k dividing n");
    }
    params.sampling = params.beam;
    params.sampling.method = Aggregation::PrmMin;
    auto problems = load_problems(o.dataset);
    auto backend = make_backend(o, problems);
    PairYield yield;
    auto pairs = build_preference_pairs(problems, *backend.generator, *backend.scorer, params, o.workers, &yield);
    std::vector<json> rows;
    for (const auto& p : pairs) rows.push_back(pair_to_json(p));
    write_jsonl(o.out, rows);
    out << json{{"command", "build-prefs"},
                {"problems", yield.problems},
                {"pairs", yield.pairs},
                {"no_preferred", yield.no_preferred},
                {"no_dispreferred", yield.no_dispreferred}}
               .dump()
        << '\n';
    return kOk;
}

int cmd_stats(const Options& o, std::ostream& out) {
    require(o.records, "--records");
    std::vector<Problem> problems;
    if (!o.dataset.empty()) problems = load_problems(o.dataset);
    std::vector<DatasetRecord> records;
    for (const auto& row : read_jsonl(o.records)) records.push_back(record_from_json(row));
    std::vector<PreferencePair> pairs;
    if (!o.pairs.empty()) {
        for (const auto& row : read_jsonl(o.pairs)) pairs.push_back(pair_from_json(row));
    }
    json j = corpus_stats(problems, records, pairs, 0).to_json();
    j.erase("rejected");
    if (!o.out.empty()) {
        check_writable(o.out);
        write_json(o.out, j);
    }
    out << j.dump() << '\n';
    return kOk;
}

void print_error(std::ostream& err, const std::string& code, const std::string& category, const std::string& message) {
    err << json{{"error", code}, {"category", category}, {"message", message}}.dump() << '\n';
}

// Config files are JSON: {"common": {...}, "<subcommand>": {...}}; keys are
// flag names without the leading dashes. Flat top-level scalars count as
// common. Values become flags placed before the real ones, so flags win.
std::vector<std::string> config_args(const json& cfg, const std::string& command, CLI::App* sub) {
    std::vector<std::string> args;
    auto emit = [&](const std::string& key, const json& value, bool strict) {
        const std::string flag = "--" + key;
        if (!sub->get_option_no_throw(flag)) {
            if (strict) throw DataError("bad-config", "unknown config key for " + command + ": " + key);
            return;
        }
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back(flag);
            return;
        }
        std::string text;
        if (value.is_string()) {
            text = value.get<std::string>();
        } else if (value.is_array()) {
            for (const auto& v : value) text += (text.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
        } else {
            text = value.dump();
        }
        args.push_back(flag + "=" + text);
    };
    for (const auto& [key, value] : cfg.items()) {
        if (key == "common" && value.is_object()) {
            for (const auto& [k, v] : value.items()) emit(k, v, false);
        } else if (!value.is_object()) {
            emit(key, value, false);
        }
    }
    if (cfg.contains(command)) {
        for (const auto& [k, v] : cfg.at(command).items()) emit(k, v, true);
    }
    return args;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Graph reasoning data factory and search harness", "gcpforge"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file");

    auto* gen = app.add_subcommand("generate", "Problems, trajectories and corpora");
    add_common_flags(gen, o);
    add_backend_flags(gen, o);
    gen->add_option("--tasks", o.tasks, "all or comma-separated task ids");
    gen->add_option("--tier", o.tiers, "all or comma-separated size tiers");
    gen->add_option("--family", o.families, "all or comma-separated graph families");
    gen->add_option("--count", o.count, "Problems per task");
    gen->add_option("--out", o.out, "Output directory");
    gen->add_flag("--with-mcts", o.with_mcts, "Add monte-carlo records (mock-oracle)");
    gen->add_flag("--with-prefs", o.with_prefs, "Add preference pairs (mock-oracle)");
    gen->add_option("--budget", o.annotator.budget);
    gen->add_option("--n", o.n);
    gen->add_option("--k", o.k);

    auto* ann = app.add_subcommand("annotate-mcts", "Monte-carlo step labels");
    add_common_flags(ann, o);
    add_backend_flags(ann, o);
    ann->add_option("--dataset", o.dataset, "problems.jsonl");
    ann->add_option("--out", o.out, "Output JSONL");
    ann->add_option("--budget", o.annotator.budget, "Rollout selections per problem");
    ann->add_option("--rollouts", o.annotator.k, "Completions per estimate");
    ann->add_option("--alpha", o.annotator.alpha);
    ann->add_option("--beta", o.annotator.beta);
    ann->add_option("--length-scale", o.annotator.length_scale);
    ann->add_option("--c-puct", o.annotator.c_puct);

    auto* srch = app.add_subcommand("search", "Best-of-n or beam search");
    add_common_flags(srch, o);
    add_backend_flags(srch, o);
    srch->add_option("--dataset", o.dataset, "problems.jsonl");
    srch->add_option("--out", o.out, "Manifest JSONL");
    srch->add_option("--strategy", o.strategy, "best-of-n | beam");
    srch->add_option("--n", o.n);
    srch->add_option("--k", o.k);
    srch->add_option("--method", o.method, "prm-last | prm-min | prm-last-vote | prm-min-vote | self-consistency");
    srch->add_option("--depth-cap", o.depth_cap);

    auto* ev = app.add_subcommand("evaluate", "Accuracy report for a manifest");
    add_common_flags(ev, o);
    ev->add_option("--manifest", o.manifest);
    ev->add_option("--dataset", o.dataset);
    ev->add_option("--out", o.out, "Report JSON");
    ev->add_flag("--bfs-any-order", o.bfs_any_order, "Accept any valid BFS order");

    auto* prefs = app.add_subcommand("build-prefs", "Preference pairs");
    add_common_flags(prefs, o);
    add_backend_flags(prefs, o);
    prefs->add_option("--dataset", o.dataset);
    prefs->add_option("--out", o.out, "Pairs JSONL");
    prefs->add_option("--n", o.n);
    prefs->add_option("--k", o.k);

    auto* st = app.add_subcommand("stats", "Corpus statistics sidecar");
    add_common_flags(st, o);
    st->add_option("--records", o.records, "prm_train.jsonl");
    st->add_option("--pairs", o.pairs, "dpo.jsonl");
    st->add_option("--dataset", o.dataset, "problems.jsonl");
    st->add_option("--out", o.out, "stats JSON");

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        std::string cfg_file;
        std::string command;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size()) cfg_file = args[i + 1];
            if (args[i].rfind("--config=", 0) == 0) cfg_file = args[i].substr(9);
            if (command.empty() && std::find(kCommands.begin(), kCommands.end(), args[i]) != kCommands.end()) {
                command = args[i];
                if (!cfg_file.empty()) {
                    auto extra = config_args(read_json(cfg_file), command, app.get_subcommand(command));
                    args.insert(args.begin() + static_cast<std::ptrdiff_t>(i) + 1, extra.begin(), extra.end());
                    i += extra.size();
                }
            }
        }
        std::vector<const char*> cargv = {argv[0]};
        for (const auto& a : args) cargv.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(cargv.size()), cargv.data());
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return kOk;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return kOk;
        } catch (const CLI::ParseError& e) {
            print_error(err, "usage", "data", e.what());
            return kDataFailure;
        }

        if (*gen) return cmd_generate(o, out);
        if (*ann) return cmd_annotate(o, out);
        if (*srch) return cmd_search(o, out);
        if (*ev) return cmd_evaluate(o, out);
        if (*prefs) return cmd_build_prefs(o, out);
        if (*st) return cmd_stats(o, out);
        print_error(err, "usage", "data", "no subcommand");
        return kDataFailure;
    } catch (const BackendError& e) {
        print_error(err, e.code(), "backend", e.what());
        return kBackendFailure;
    } catch (const Error& e) {
        print_error(err, e.code(), "data", e.what());
        return kDataFailure;
    } catch (const fs::filesystem_error& e) {
        print_error(err, "io-error", "data", e.what());
        return kDataFailure;
    }
}

}  // namespace gcp::cli
