#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gcp/gateway.hpp"
#include "gcp/graph.hpp"
#include "gcp/mcts.hpp"
#include "gcp/search.hpp"
#include "gcp/tasks.hpp"
#include "gcp/trajectory.hpp"

namespace gcp {

// A task instance plus the generation metadata that travels with it.
struct Problem {
    TaskInstance instance;
    GraphFamily family = GraphFamily::Random;
    SizeTier size_tier = SizeTier::Tiny;
    DensityTier density_tier = DensityTier::Low;
};

struct InstancePlan {
    std::vector<TaskKind> tasks = all_tasks();
    std::vector<SizeTier> tiers = {SizeTier::Tiny};
    std::vector<GraphFamily> families = {GraphFamily::Random, GraphFamily::SmallWorld, GraphFamily::ScaleFree};
    int count_per_task = 20;
    std::uint64_t seed = 1;
    // Alternate True/False gold answers on Boolean tasks.
    bool balance_booleans = true;
    int max_attempts = 256;
};

// One problem, a pure function of its arguments. `want` forces a Boolean gold
// answer. Throws DataError("generation-exhausted").
Problem sample_problem(TaskKind kind, SizeTier tier, GraphFamily family, std::uint64_t seed,
                       std::optional<bool> want = std::nullopt, int max_attempts = 256);

// count_per_task problems per task, ordered by task then index.
std::vector<Problem> generate_problems(const InstancePlan& plan, int workers = 1);

nlohmann::json problem_to_json(const Problem& p);
Problem problem_from_json(const nlohmann::json& j);

struct DatasetRecord {
    std::string id;
    TaskKind task = TaskKind::Degree;
    Graph graph;
    std::string question;
    std::vector<Step> steps;
    std::optional<std::string> answer;  // final answer text; unset when the process gives none
    SequenceSource source = SequenceSource::Trajectory;
    SizeTier size_tier = SizeTier::Tiny;
    DensityTier density_tier = DensityTier::Low;

    std::string labels() const;
};

DatasetRecord make_record(const Problem& p, const StepSequence& seq, std::string id);

// Steps are written as the step-token encoding, labels as a '+'/'-' string.
nlohmann::json record_to_json(const DatasetRecord& r);
// Throws DataError("malformed-record").
DatasetRecord record_from_json(const nlohmann::json& j);

struct Rejection {
    DatasetRecord record;
    std::string reason;
};

struct FilterResult {
    std::vector<DatasetRecord> kept;
    std::vector<Rejection> rejected;
};

inline constexpr int kRepeatLimit = 3;

// Reasons: "no final answer" (answer unset), "repeated sentences", "label grammar".
// Monte-carlo records are cut after their first '-'.
FilterResult quality_filter(const std::vector<DatasetRecord>& records);

// Wrong trajectories for one problem, built from the gold one by every
// applicable strategy and target in a seeded order. Failed attempts are
// skipped.
std::vector<StepSequence> perturbation_variants(const TaskInstance& instance, const StepSequence& gold,
                                                std::uint64_t seed, std::size_t max_count);

// Mock backends fed from gold and perturbed trajectories: the generator
// serves them as scripts, the scorer knows the gold steps.
struct MockBackend {
    std::unique_ptr<ScriptGenerator> generator;
    std::unique_ptr<OracleScorer> scorer;
};

MockBackend make_mock_backend(const std::vector<Problem>& problems, std::uint64_t seed, std::size_t variants_per_problem,
                              ScriptPolicy policy = ScriptPolicy::Seeded);

struct PreferencePair {
    std::string id;
    TaskKind task = TaskKind::Degree;
    std::string question;
    std::vector<std::string> preferred;
    std::vector<std::string> dispreferred;
    std::string preferred_answer;
    std::string dispreferred_answer;
};

struct PairParams {
    SearchParams beam;       // n 8, k 2
    SearchParams sampling;   // n 8, scored with PRM-Min
    PairParams() { sampling.method = Aggregation::PrmMin; }
};

struct PairYield {
    int problems = 0;
    int pairs = 0;
    int no_preferred = 0;
    int no_dispreferred = 0;
};

// Preferred: the beam-search answer when it is correct. Dispreferred: the
// wrong-answer Best-of-N sample with the lowest PRM-Min score, earliest on
// ties. Problems without both are skipped.
std::optional<PreferencePair> build_preference_pair(const TaskInstance& instance, Generator& generator, Scorer& scorer,
                                                    const PairParams& params);

std::vector<PreferencePair> build_preference_pairs(const std::vector<Problem>& problems, Generator& generator,
                                                   Scorer& scorer, const PairParams& params, int workers = 1,
                                                   PairYield* yield = nullptr);

nlohmann::json pair_to_json(const PreferencePair& p);
PreferencePair pair_from_json(const nlohmann::json& j);

struct CorpusStats {
    int tasks = 0;
    int problems = 0;
    int records = 0;
    int trajectory_records = 0;
    int monte_carlo_records = 0;
    int sft_records = 0;
    int pairs = 0;
    long long positive_labels = 0;
    long long negative_labels = 0;
    int max_steps = 0;
    int rejected = 0;

    nlohmann::json to_json() const;
};

struct CorpusPaths {
    std::filesystem::path prm_train;
    std::filesystem::path sft;
    std::filesystem::path dpo;
    std::filesystem::path stats;

    static CorpusPaths in(const std::filesystem::path& dir);
};

// Counts for the stats sidecar. Tasks come from the problems, or from the
// records when no problems are given.
CorpusStats corpus_stats(const std::vector<Problem>& problems, const std::vector<DatasetRecord>& records,
                         const std::vector<PreferencePair>& pairs, int rejected);

// Writes prm-train, sft (all-'+' trajectory records) and dpo JSONL plus the
// stats sidecar. Throws DataError("io-error").
CorpusStats emit_corpora(const std::vector<Problem>& problems, const std::vector<DatasetRecord>& records,
                         const std::vector<PreferencePair>& pairs, int rejected, const CorpusPaths& paths);

struct BuildConfig {
    InstancePlan plan;
    std::size_t variants_per_problem = 4;
    bool monte_carlo = true;
    AnnotatorParams annotator;
    bool preferences = true;
    PairParams pairs;
    int workers = 1;

    BuildConfig() { annotator.budget = 4; }
};

struct BuildResult {
    std::vector<Problem> problems;
    FilterResult filtered;
    std::vector<PreferencePair> pairs;
    PairYield yield;
    CorpusStats stats;
};

// Generate, render, perturb, annotate against the mock backend, filter,
// build pairs and emit, all from config.plan.seed.
BuildResult mini_build(const BuildConfig& config, const std::filesystem::path& out_dir);

// JSONL helpers. read_jsonl throws DataError("io-error") or ("malformed-record").
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace gcp
