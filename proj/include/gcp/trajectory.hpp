#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gcp/tasks.hpp"

namespace gcp {

// Terminates every step in PRM training text.
inline constexpr std::string_view kStepToken = "\n\n\n\n\n";

inline constexpr char kPositive = '+';
inline constexpr char kNegative = '-';

enum class SequenceSource { Trajectory, MonteCarlo };

std::string to_string(SequenceSource source);
SequenceSource parse_source(const std::string& s);

struct Step {
    std::string text;
    char label = kPositive;

    bool operator==(const Step&) const = default;
};

struct StepSequence {
    std::string problem_id;
    std::vector<Step> steps;
    std::optional<AnswerValue> final_answer;
    SequenceSource source = SequenceSource::Trajectory;

    std::string labels() const;
    std::vector<std::string> texts() const;
};

// Non-empty '+'* '-'*. All-negative is allowed: a corrupted first step
// leaves no correct prefix.
bool matches_trajectory_grammar(std::string_view labels);
// '+'* followed by at most one '-', which is final.
bool matches_monte_carlo_grammar(std::string_view labels);

// One rendered sentence block per trace step. The template variant is chosen
// from (template_seed, step index, tag). Throws DataError("unknown-step-tag").
std::string render_step(const TraceStep& step, std::size_t index, std::uint64_t template_seed);

// Template seed derived from the instance id, so re-rendering is stable.
std::uint64_t template_seed_for(const TaskInstance& instance);

StepSequence render_trace(const ExecutionTrace& trace, const TaskInstance& instance);

// Solve + render in one go.
StepSequence gold_trajectory(const TaskInstance& instance);

enum class PerturbStrategy { Structure, NodeEdge, Calculation };
enum class EditPreference { Any, Add, Remove };

std::string to_string(PerturbStrategy strategy);

struct PerturbationPlan {
    PerturbStrategy strategy = PerturbStrategy::Calculation;
    std::size_t target_index = 0;
    std::uint64_t seed = 0;
    // Node/edge strategy only: restrict to phantom additions or removals.
    EditPreference edit = EditPreference::Any;
    int max_retries = 64;
};

bool strategy_applicable(PerturbStrategy strategy, const TraceStep& step);
std::vector<std::size_t> applicable_targets(const ExecutionTrace& trace, PerturbStrategy strategy);

// Keeps steps before the target, corrupts the target step and regenerates
// everything after it from the corrupted state. Throws DataError with code
// "not-perturbable", "no-applicable-step" or "perturbation-exhausted".
StepSequence perturb(const TaskInstance& instance, const StepSequence& seq, const PerturbationPlan& plan);

struct EncodedRecord {
    std::string input;   // prompt, newline, then each step followed by the step token
    std::string steps;   // steps only, each followed by the step token
    std::string labels;  // one '+' or '-' per step
};

// Throws DataError("step-token-in-text") on unsanitized step text.
EncodedRecord encode_training_record(std::string_view prompt, const StepSequence& seq);

// Inverse of the steps/labels pair. Throws DataError("malformed-record").
std::vector<Step> decode_training_record(std::string_view steps, std::string_view labels);

// Makes arbitrary text safe as one step: collapses blank-line runs, trims newlines.
std::string sanitize_step_text(std::string_view text);

}  // namespace gcp
