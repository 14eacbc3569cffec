#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "gcp/error.hpp"

namespace gcp {

// Generators return step texts joined by this separator.
inline constexpr const char* kStepJoin = "\n\n";
inline constexpr int kMaxSegments = 20;

struct GenerationRequest {
    std::string prompt;
    // Steps already written; the completion continues after them.
    std::vector<std::string> prefix_steps;
    int n = 1;
    double temperature = 0.7;
    int max_tokens = 1024;
    // A "\n\n" stop asks for exactly one more step.
    std::vector<std::string> stop;

    bool single_step() const;
    void validate() const;
};

class Generator {
public:
    virtual ~Generator() = default;
    // Exactly req.n continuation texts.
    virtual std::vector<std::string> complete(const GenerationRequest& req) = 0;
};

class Scorer {
public:
    virtual ~Scorer() = default;
    // One score in [0,1] per step; step i is scored on problem + steps[0..i].
    virtual std::vector<double> score_steps(const std::string& problem, const std::vector<std::string>& steps) = 0;
};

// Blank-line split, falling back to "Step N" lines; segments past the cap are
// merged into the last one. Every segment is sanitized into a valid step.
std::vector<std::string> segment_steps(const std::string& text, int cap = kMaxSegments);
std::string join_steps(const std::vector<std::string>& steps);

// Whitespace-token count, the length proxy used for rollout lengths.
int token_length(const std::string& text);

struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds base_delay{200};
    std::chrono::milliseconds max_delay{5000};
};

// Runs fn, retrying TransientError with exponential backoff. AuthError and
// other BackendErrors propagate at once. `attempts` reports calls made.
template <typename F>
auto with_retries(const RetryPolicy& policy, F&& fn, int* attempts = nullptr) -> decltype(fn());

// Bounded in-flight request counter shared by the HTTP adapters.
class RequestLimiter {
public:
    explicit RequestLimiter(int max_in_flight = 8);
    void acquire();
    void release();
    int max_in_flight() const { return max_; }
    int peak() const { return peak_.load(); }

private:
    int max_;
    std::counting_semaphore<1024> slots_;
    std::atomic<int> current_{0};
    std::atomic<int> peak_{0};
};

class LimiterGuard {
public:
    explicit LimiterGuard(RequestLimiter& limiter) : limiter_(limiter) { limiter_.acquire(); }
    ~LimiterGuard() { limiter_.release(); }
    LimiterGuard(const LimiterGuard&) = delete;
    LimiterGuard& operator=(const LimiterGuard&) = delete;

private:
    RequestLimiter& limiter_;
};

// Fixed queue of texts; the first `transient_failures` calls throw TransientError.
class ReplayGenerator : public Generator {
public:
    explicit ReplayGenerator(std::vector<std::string> texts, int transient_failures = 0);
    std::vector<std::string> complete(const GenerationRequest& req) override;
    int calls() const { return calls_; }

private:
    std::mutex mu_;
    std::vector<std::string> texts_;
    std::size_t next_ = 0;
    int failures_left_;
    int calls_ = 0;
};

struct Script {
    std::vector<std::string> steps;
    double weight = 1.0;
};

enum class ScriptPolicy { RoundRobin, Seeded };

// Per-prompt scripted solutions. A request is served from the scripts whose
// steps start with its prefix: sample i takes script i mod m (round robin) or
// a weighted draw seeded by (seed, prompt, prefix, i). Output is a pure
// function of the seed and the request.
class ScriptGenerator : public Generator {
public:
    ScriptGenerator(std::uint64_t seed, ScriptPolicy policy) : seed_(seed), policy_(policy) {}
    void add(const std::string& prompt, Script script);
    std::vector<std::string> complete(const GenerationRequest& req) override;
    // Number of complete() calls and of samples produced, for budget tests.
    int calls() const { return calls_.load(); }
    int samples() const { return samples_.load(); }

private:
    std::uint64_t seed_;
    ScriptPolicy policy_;
    std::map<std::string, std::vector<Script>> scripts_;
    std::atomic<int> calls_{0};
    std::atomic<int> samples_{0};
};

// Scores a step 1.0 iff the steps up to and including it equal the gold
// prefix for that problem, else 0.0.
class OracleScorer : public Scorer {
public:
    void add(const std::string& problem, std::vector<std::string> gold_steps);
    std::vector<double> score_steps(const std::string& problem, const std::vector<std::string>& steps) override;

private:
    std::map<std::string, std::vector<std::string>> gold_;
};

struct HttpConfig {
    std::string base_url = "http://127.0.0.1:8000";
    std::string model = "default";
    // Name of the environment variable holding the API key.
    std::string api_key_env = "GCPFORGE_API_KEY";
    int concurrency = 8;
    std::chrono::seconds timeout{60};
    RetryPolicy retry;
};

// Chat-completions client. A non-empty prefix is sent as a trailing
// assistant message with continue_final_message set.
class HttpGenerator : public Generator {
public:
    explicit HttpGenerator(HttpConfig config, std::shared_ptr<RequestLimiter> limiter = nullptr);
    std::vector<std::string> complete(const GenerationRequest& req) override;

private:
    HttpConfig config_;
    std::shared_ptr<RequestLimiter> limiter_;
};

enum class ScoreProtocol { Logprob, Scalar };

// Logprob: one /v1/completions call per step on the step-token-encoded
// prefix, score = P(+) / (P(+) + P(-)) of the next token. Scalar: a single
// POST /score returning {"scores": [...]}.
class HttpScorer : public Scorer {
public:
    HttpScorer(HttpConfig config, ScoreProtocol protocol, std::shared_ptr<RequestLimiter> limiter = nullptr);
    std::vector<double> score_steps(const std::string& problem, const std::vector<std::string>& steps) override;

private:
    HttpConfig config_;
    ScoreProtocol protocol_;
    std::shared_ptr<RequestLimiter> limiter_;
};

// Wraps any generator with the retry policy.
class RetryingGenerator : public Generator {
public:
    RetryingGenerator(std::shared_ptr<Generator> inner, RetryPolicy policy) : inner_(std::move(inner)), policy_(policy) {}
    std::vector<std::string> complete(const GenerationRequest& req) override;
    int last_attempts() const { return last_attempts_; }

private:
    std::shared_ptr<Generator> inner_;
    RetryPolicy policy_;
    int last_attempts_ = 0;
};

void sleep_backoff(const RetryPolicy& policy, int attempt);

template <typename F>
auto with_retries(const RetryPolicy& policy, F&& fn, int* attempts) -> decltype(fn()) {
    for (int attempt = 1;; ++attempt) {
        if (attempts) *attempts = attempt;
        try {
            return fn();
        } catch (const AuthError&) {
            throw;
        } catch (const TransientError& e) {
            if (attempt >= policy.max_attempts) {
                throw BackendError("retries-exhausted", std::string("giving up after ") + std::to_string(attempt) +
                                                            " attempts: " + e.what());
            }
            sleep_backoff(policy, attempt);
        }
    }
}

}  // namespace gcp
