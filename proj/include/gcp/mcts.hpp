#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gcp/gateway.hpp"
#include "gcp/tasks.hpp"
#include "gcp/trajectory.hpp"

namespace gcp {

struct AnnotatorParams {
    double alpha = 0.5;
    double beta = 0.9;
    double length_scale = 500;  // tokens
    double c_puct = 0.125;
    int k = 8;                  // rollouts per estimate
    int budget = 16;            // max selections
    double temperature = 0.7;
    int max_tokens = 1024;

    void validate() const;
};

// Q = alpha^(1 - mc) * beta^(len / L)
double q_value(double mc, double rollout_tokens, const AnnotatorParams& params);
// U = c_puct * sqrt(sibling_visits) / (1 + visits)
double u_value(long long visits, long long sibling_visits, const AnnotatorParams& params);

struct Rollout {
    std::vector<std::string> steps;  // continuation only, after the prefix
    bool correct = false;
    std::optional<AnswerValue> answer;
};

struct Estimate {
    double mc = 0;
    std::vector<Rollout> rollouts;
};

// MC(prefix) with a per-prefix cache. A prefix whose last step already boxes
// an answer is judged directly without calling the generator.
class MonteCarloEstimator {
public:
    MonteCarloEstimator(Generator& generator, const TaskInstance& instance, const AnnotatorParams& params);
    const Estimate& estimate(const std::vector<std::string>& prefix);
    double mc(const std::vector<std::string>& prefix) { return estimate(prefix).mc; }
    // Generator requests issued so far (one per uncached, unboxed prefix).
    int batches() const { return batches_; }

private:
    Generator& generator_;
    const TaskInstance& instance_;
    AnnotatorParams params_;
    std::map<std::vector<std::string>, Estimate> cache_;
    int batches_ = 0;
};

// Smallest 1-based position i >= lowest with MC(steps[0..i]) = 0, by binary
// search. Requires MC of the full sequence to be 0; throws
// DataError("no-error-to-locate") otherwise.
std::size_t locate_first_error(const std::vector<std::string>& steps, MonteCarloEstimator& estimator,
                               std::size_t lowest = 1);

struct TreeState {
    std::vector<std::string> prefix;
    double mc = 0;
    long long visits = 0;
};

struct FrontierItem {
    std::size_t state = 0;
    Rollout rollout;
    double tokens = 0;
    std::uint64_t order = 0;
};

class SearchTree {
public:
    std::size_t add_state(std::vector<std::string> prefix, double mc);
    void push(std::size_t state, Rollout rollout);
    // Pops argmax Q + U; ties go to the earliest insertion. Bumps the state's
    // visit count. Throws DataError("frontier-empty").
    FrontierItem select(const AnnotatorParams& params);
    double score(const FrontierItem& item, const AnnotatorParams& params) const;

    const std::vector<TreeState>& states() const { return states_; }
    const std::vector<FrontierItem>& frontier() const { return frontier_; }
    long long total_visits() const;

private:
    std::vector<TreeState> states_;
    std::vector<FrontierItem> frontier_;
    std::uint64_t next_order_ = 0;
};

struct AnnotationResult {
    std::vector<StepSequence> sequences;
    int selections = 0;
    int batches = 0;
};

// Monte-carlo labelling: correct rollouts become all-'+' sequences; each
// selected wrong rollout yields '+'... '-' up to its first error, and the
// longest correct prefix becomes a new tree state. Only states with
// 0 < MC < 1 feed the frontier. budget = 0 returns nothing without calling
// the generator; a negative budget is a DataError.
AnnotationResult annotate(const TaskInstance& instance, Generator& generator, const AnnotatorParams& params);

}  // namespace gcp
