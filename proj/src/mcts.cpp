#include "gcp/mcts.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gcp/error.hpp"
#include "gcp/evaluator.hpp"

namespace gcp {

void AnnotatorParams::validate() const {
    if (!(alpha > 0 && alpha < 1) || !(beta > 0 && beta < 1)) {
        throw DataError("bad-config", "alpha and beta must lie in (0, 1)");
    }
    if (!(length_scale > 0) || !(c_puct > 0)) throw DataError("bad-config", "L and c_puct must be positive");
    if (k < 1) throw DataError("bad-config", "k must be at least 1");
    if (budget < 0) throw DataError("bad-budget", "annotation budget must be non-negative");
}

double q_value(double mc, double rollout_tokens, const AnnotatorParams& params) {
    return std::pow(params.alpha, 1.0 - mc) * std::pow(params.beta, rollout_tokens / params.length_scale);
}

double u_value(long long visits, long long sibling_visits, const AnnotatorParams& params) {
    return params.c_puct * std::sqrt(static_cast<double>(sibling_visits)) / (1.0 + static_cast<double>(visits));
}

MonteCarloEstimator::MonteCarloEstimator(Generator& generator, const TaskInstance& instance,
                                         const AnnotatorParams& params)
    : generator_(generator), instance_(instance), params_(params) {}

const Estimate& MonteCarloEstimator::estimate(const std::vector<std::string>& prefix) {
    if (auto it = cache_.find(prefix); it != cache_.end()) return it->second;
    Estimate est;
    if (!prefix.empty() && extract_boxed(prefix.back())) {
        est.mc = judge(*extract_boxed(prefix.back()), instance_).correct ? 1.0 : 0.0;
        return cache_.emplace(prefix, std::move(est)).first->second;
    }
    GenerationRequest req;
    req.prompt = instance_.prompt;
    req.prefix_steps = prefix;
    req.n = params_.k;
    req.temperature = params_.temperature;
    req.max_tokens = params_.max_tokens;
    ++batches_;
    auto texts = generator_.complete(req);
    if (static_cast<int>(texts.size()) != params_.k) {
        throw BackendError("malformed-response", "generator returned the wrong number of rollouts");
    }
    const int room = std::max(1, kMaxSegments - static_cast<int>(prefix.size()));
    int correct = 0;
    for (const auto& text : texts) {
        Rollout r;
        r.steps = segment_steps(text, room);
        if (!r.steps.empty()) {
            if (auto boxed = extract_boxed(r.steps.back())) {
                r.answer = parse_answer(*boxed, instance_.gold.type());
                r.correct = judge(*boxed, instance_).correct;
            }
        }
        correct += r.correct ? 1 : 0;
        est.rollouts.push_back(std::move(r));
    }
    est.mc = static_cast<double>(correct) / params_.k;
    return cache_.emplace(prefix, std::move(est)).first->second;
}

std::size_t locate_first_error(const std::vector<std::string>& steps, MonteCarloEstimator& estimator,
                               std::size_t lowest) {
    const std::size_t n = steps.size();
    if (n == 0) throw DataError("empty-rollout", "cannot locate an error in an empty rollout");
    lowest = std::max<std::size_t>(lowest, 1);
    if (lowest > n || estimator.mc(steps) > 0) {
        throw DataError("no-error-to-locate", "the full rollout still reaches the gold answer");
    }
    std::size_t lo = lowest, hi = n;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        std::vector<std::string> prefix(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(mid));
        if (estimator.mc(prefix) == 0) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return lo;
}

std::size_t SearchTree::add_state(std::vector<std::string> prefix, double mc) {
    states_.push_back({std::move(prefix), mc, 0});
    return states_.size() - 1;
}

void SearchTree::push(std::size_t state, Rollout rollout) {
    FrontierItem item;
    item.state = state;
    item.tokens = token_length(join_steps(rollout.steps));
    item.rollout = std::move(rollout);
    item.order = next_order_++;
    frontier_.push_back(std::move(item));
}

long long SearchTree::total_visits() const {
    long long total = 0;
    for (const auto& s : states_) total += s.visits;
    return total;
}

double SearchTree::score(const FrontierItem& item, const AnnotatorParams& params) const {
    const TreeState& s = states_.at(item.state);
    return q_value(s.mc, item.tokens, params) + u_value(s.visits, total_visits(), params);
}

FrontierItem SearchTree::select(const AnnotatorParams& params) {
    if (frontier_.empty()) throw DataError("frontier-empty", "no rollouts left to select");
    std::size_t best = 0;
    double best_score = score(frontier_[0], params);
    for (std::size_t i = 1; i < frontier_.size(); ++i) {
        const double s = score(frontier_[i], params);
        if (s > best_score) {
            best = i;
            best_score = s;
        }
    }
    FrontierItem item = std::move(frontier_[best]);
    frontier_.erase(frontier_.begin() + static_cast<std::ptrdiff_t>(best));
    ++states_[item.state].visits;
    return item;
}

AnnotationResult annotate(const TaskInstance& instance, Generator& generator, const AnnotatorParams& params) {
    params.validate();
    AnnotationResult result;
    if (params.budget == 0) return result;

    MonteCarloEstimator estimator(generator, instance, params);
    SearchTree tree;
    std::set<std::vector<std::string>> known_states;
    std::set<std::pair<std::vector<std::string>, std::string>> emitted;

    auto emit = [&](std::vector<std::string> steps, const std::string& labels, const std::optional<AnswerValue>& answer) {
        if (!emitted.insert({steps, labels}).second) return;
        StepSequence seq;
        seq.problem_id = instance.id;
        seq.source = SequenceSource::MonteCarlo;
        seq.final_answer = answer;
        for (std::size_t i = 0; i < steps.size(); ++i) seq.steps.push_back({std::move(steps[i]), labels[i]});
        result.sequences.push_back(std::move(seq));
    };

    auto admit = [&](const std::vector<std::string>& prefix) {
        known_states.insert(prefix);
        const Estimate& est = estimator.estimate(prefix);
        const std::size_t state = tree.add_state(prefix, est.mc);
        for (const auto& r : est.rollouts) {
            if (!r.correct) continue;
            std::vector<std::string> steps = prefix;
            steps.insert(steps.end(), r.steps.begin(), r.steps.end());
            emit(steps, std::string(steps.size(), kPositive), r.answer);
        }
        if (est.mc > 0 && est.mc < 1) {
            for (const auto& r : est.rollouts)
                if (!r.correct && !r.steps.empty()) tree.push(state, r);
        }
    };

    admit({});
    while (result.selections < params.budget && !tree.frontier().empty()) {
        FrontierItem item = tree.select(params);
        ++result.selections;
        const std::vector<std::string> base = tree.states()[item.state].prefix;
        std::vector<std::string> full = base;
        full.insert(full.end(), item.rollout.steps.begin(), item.rollout.steps.end());
        std::size_t first_error;
        try {
            first_error = locate_first_error(full, estimator, base.size() + 1);
        } catch (const DataError& e) {
            // An unanswered rollout whose continuations recover has no error to pin down.
            if (e.code() == "no-error-to-locate") continue;
            throw;
        }
        std::vector<std::string> steps(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(first_error));
        emit(steps, std::string(first_error - 1, kPositive) + kNegative, item.rollout.answer);
        std::vector<std::string> correct_prefix(steps.begin(), steps.end() - 1);
        if (correct_prefix.size() > base.size() && !known_states.count(correct_prefix)) admit(correct_prefix);
    }
    result.batches = estimator.batches();
    return result;
}

}  // namespace gcp
