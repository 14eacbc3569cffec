#include "gcp/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "gcp/random.hpp"
#include "gcp/trajectory.hpp"

namespace gcp {

namespace {

using json = nlohmann::json;

bool blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

bool step_heading(const std::string& line) {
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '*' || line[i] == '#')) ++i;
    if (line.compare(i, 4, "Step") != 0 && line.compare(i, 4, "step") != 0) return false;
    i += 4;
    while (i < line.size() && line[i] == ' ') ++i;
    return i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]));
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out += "\n";
        out += lines[i];
    }
    return out;
}

std::uint64_t hash_steps(const std::vector<std::string>& steps) {
    std::uint64_t h = fnv1a("prefix");
    for (const auto& s : steps) h = hash_combine(h, fnv1a(s));
    return h;
}

struct Endpoint {
    std::string host;  // scheme://host:port
    std::string path;  // prefix without trailing slash
};

Endpoint split_url(const std::string& url) {
    auto scheme = url.find("://");
    auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (slash == std::string::npos) return {url, ""};
    std::string path = url.substr(slash);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, slash), path};
}

httplib::Headers auth_headers(const HttpConfig& config) {
    httplib::Headers headers;
    if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    return headers;
}

json post_json(const HttpConfig& config, RequestLimiter* limiter, const std::string& route, const json& body) {
    std::optional<LimiterGuard> guard;
    if (limiter) guard.emplace(*limiter);
    const Endpoint ep = split_url(config.base_url);
    httplib::Client client(ep.host);
    client.set_connection_timeout(config.timeout);
    client.set_read_timeout(config.timeout);
    client.set_write_timeout(config.timeout);
    auto res = client.Post(ep.path + route, auth_headers(config), body.dump(), "application/json");
    if (!res) throw TransientError("connection-failed", "request to " + config.base_url + route + " failed: " +
                                                          httplib::to_string(res.error()));
    const int status = res->status;
    if (status == 401 || status == 403) {
        throw AuthError("auth-failed", "backend rejected credentials (HTTP " + std::to_string(status) + ")");
    }
    if (status == 429 || status >= 500) {
        throw TransientError("http-" + std::to_string(status), "backend returned HTTP " + std::to_string(status));
    }
    if (status == 400 && (res->body.find("context length") != std::string::npos ||
                          res->body.find("maximum context") != std::string::npos)) {
        throw BackendError("length-limit-exceeded", "input exceeds the backend context length; truncate it");
    }
    if (status != 200) {
        throw BackendError("http-" + std::to_string(status), "backend returned HTTP " + std::to_string(status) + ": " +
                                                                 res->body.substr(0, 200));
    }
    try {
        return json::parse(res->body);
    } catch (const json::exception&) {
        throw BackendError("malformed-response", "backend response is not JSON");
    }
}

std::string trim_copy(std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
}

}  // namespace

bool GenerationRequest::single_step() const {
    return std::find(stop.begin(), stop.end(), std::string(kStepJoin)) != stop.end();
}

void GenerationRequest::validate() const {
    if (n < 1) throw DataError("bad-request", "n must be at least 1");
    if (temperature < 0) throw DataError("bad-request", "temperature must be non-negative");
    if (max_tokens < 1) throw DataError("bad-request", "max_tokens must be positive");
}

std::vector<std::string> segment_steps(const std::string& raw, int cap) {
    std::string text;
    for (char c : raw)
        if (c != '\r') text.push_back(c);
    std::vector<std::string> lines;
    std::stringstream in(text);
    for (std::string line; std::getline(in, line);) lines.push_back(line);

    std::vector<std::vector<std::string>> groups;
    std::vector<std::string> current;
    for (const auto& line : lines) {
        if (blank(line)) {
            if (!current.empty()) groups.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(line);
        }
    }
    if (!current.empty()) groups.push_back(std::move(current));

    if (groups.size() == 1) {
        int headings = 0;
        for (const auto& line : groups[0]) headings += step_heading(line) ? 1 : 0;
        if (headings >= 2) {
            std::vector<std::vector<std::string>> split;
            for (const auto& line : groups[0]) {
                if (split.empty() || step_heading(line)) split.emplace_back();
                split.back().push_back(line);
            }
            groups = std::move(split);
        }
    }

    std::vector<std::string> steps;
    for (const auto& g : groups) {
        std::string step = sanitize_step_text(join_lines(g));
        if (!step.empty()) steps.push_back(std::move(step));
    }
    if (cap > 0 && static_cast<int>(steps.size()) > cap) {
        for (std::size_t i = static_cast<std::size_t>(cap); i < steps.size(); ++i) steps[cap - 1] += "\n" + steps[i];
        steps.resize(static_cast<std::size_t>(cap));
    }
    return steps;
}

std::string join_steps(const std::vector<std::string>& steps) {
    std::string out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i) out += kStepJoin;
        out += steps[i];
    }
    return out;
}

int token_length(const std::string& text) {
    int count = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

void sleep_backoff(const RetryPolicy& policy, int attempt) {
    auto delay = policy.base_delay * (1LL << std::min(attempt - 1, 20));
    std::this_thread::sleep_for(std::min<std::chrono::milliseconds>(delay, policy.max_delay));
}

RequestLimiter::RequestLimiter(int max_in_flight)
    : max_(std::clamp(max_in_flight, 1, 1024)), slots_(std::clamp(max_in_flight, 1, 1024)) {}

void RequestLimiter::acquire() {
    slots_.acquire();
    int now = ++current_;
    int seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
    }
}

void RequestLimiter::release() {
    --current_;
    slots_.release();
}

ReplayGenerator::ReplayGenerator(std::vector<std::string> texts, int transient_failures)
    : texts_(std::move(texts)), failures_left_(transient_failures) {}

std::vector<std::string> ReplayGenerator::complete(const GenerationRequest& req) {
    req.validate();
    std::lock_guard lock(mu_);
    ++calls_;
    if (failures_left_ > 0) {
        --failures_left_;
        throw TransientError("http-503", "scripted transient failure");
    }
    if (texts_.empty()) throw BackendError("malformed-response", "replay script is empty");
    std::vector<std::string> out;
    for (int i = 0; i < req.n; ++i) out.push_back(texts_[next_++ % texts_.size()]);
    return out;
}

void ScriptGenerator::add(const std::string& prompt, Script script) {
    if (script.steps.empty()) throw DataError("bad-script", "script has no steps");
    if (script.weight <= 0) throw DataError("bad-script", "script weight must be positive");
    scripts_[prompt].push_back(std::move(script));
}

std::vector<std::string> ScriptGenerator::complete(const GenerationRequest& req) {
    req.validate();
    ++calls_;
    samples_ += req.n;
    auto it = scripts_.find(req.prompt);
    if (it == scripts_.end()) throw BackendError("unknown-prompt", "no script for this prompt");
    std::vector<const Script*> matching;
    for (const auto& s : it->second) {
        if (s.steps.size() > req.prefix_steps.size() &&
            std::equal(req.prefix_steps.begin(), req.prefix_steps.end(), s.steps.begin())) {
            matching.push_back(&s);
        }
    }
    if (matching.empty()) throw BackendError("off-script", "prefix does not continue any scripted solution");
    std::vector<double> weights;
    for (const auto* s : matching) weights.push_back(s->weight);
    const std::uint64_t base = hash_combine(hash_combine(seed_, fnv1a(req.prompt)), hash_steps(req.prefix_steps));

    std::vector<std::string> out;
    for (int i = 0; i < req.n; ++i) {
        std::size_t pick;
        if (policy_ == ScriptPolicy::RoundRobin) {
            pick = static_cast<std::size_t>(i) % matching.size();
        } else {
            Rng rng(hash_combine(base, static_cast<std::uint64_t>(i)));
            pick = weighted_index(rng, weights);
        }
        const auto& steps = matching[pick]->steps;
        std::vector<std::string> rest(steps.begin() + static_cast<std::ptrdiff_t>(req.prefix_steps.size()),
                                      steps.end());
        if (req.single_step()) rest.resize(1);
        out.push_back(join_steps(rest));
    }
    return out;
}

void OracleScorer::add(const std::string& problem, std::vector<std::string> gold_steps) {
    gold_[problem] = std::move(gold_steps);
}

std::vector<double> OracleScorer::score_steps(const std::string& problem, const std::vector<std::string>& steps) {
    if (steps.empty()) throw DataError("empty-steps", "scoring needs at least one step");
    auto it = gold_.find(problem);
    if (it == gold_.end()) throw BackendError("unknown-problem", "oracle scorer has no gold trace for this problem");
    const auto& gold = it->second;
    std::vector<double> scores;
    bool on_track = true;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        on_track = on_track && i < gold.size() && steps[i] == gold[i];
        scores.push_back(on_track ? 1.0 : 0.0);
    }
    return scores;
}

HttpGenerator::HttpGenerator(HttpConfig config, std::shared_ptr<RequestLimiter> limiter)
    : config_(std::move(config)), limiter_(limiter ? std::move(limiter) : std::make_shared<RequestLimiter>(config_.concurrency)) {}

std::vector<std::string> HttpGenerator::complete(const GenerationRequest& req) {
    req.validate();
    json messages = json::array({{{"role", "user"}, {"content", req.prompt}}});
    json body = {{"model", config_.model},
                 {"n", req.n},
                 {"temperature", req.temperature},
                 {"max_tokens", req.max_tokens}};
    if (!req.stop.empty()) body["stop"] = req.stop;
    if (!req.prefix_steps.empty()) {
        messages.push_back({{"role", "assistant"}, {"content", join_steps(req.prefix_steps) + kStepJoin}});
        body["continue_final_message"] = true;
        body["add_generation_prompt"] = false;
    }
    body["messages"] = messages;

    json res = with_retries(config_.retry, [&] { return post_json(config_, limiter_.get(), "/v1/chat/completions", body); });
    std::vector<std::string> out;
    try {
        for (const auto& choice : res.at("choices")) {
            std::string text = choice.at("message").at("content").get<std::string>();
            if (req.single_step()) {
                auto steps = segment_steps(text);
                text = steps.empty() ? std::string() : steps.front();
            }
            out.push_back(std::move(text));
        }
    } catch (const json::exception&) {
        throw BackendError("malformed-response", "chat completion response lacks choices[].message.content");
    }
    if (static_cast<int>(out.size()) != req.n) {
        throw BackendError("malformed-response", "asked for " + std::to_string(req.n) + " completions, got " +
                                                     std::to_string(out.size()));
    }
    return out;
}

HttpScorer::HttpScorer(HttpConfig config, ScoreProtocol protocol, std::shared_ptr<RequestLimiter> limiter)
    : config_(std::move(config)),
      protocol_(protocol),
      limiter_(limiter ? std::move(limiter) : std::make_shared<RequestLimiter>(config_.concurrency)) {}

std::vector<double> HttpScorer::score_steps(const std::string& problem, const std::vector<std::string>& steps) {
    if (steps.empty()) throw DataError("empty-steps", "scoring needs at least one step");
    std::vector<double> scores;
    if (protocol_ == ScoreProtocol::Scalar) {
        json body = {{"model", config_.model}, {"problem", problem}, {"steps", steps}};
        json res = with_retries(config_.retry, [&] { return post_json(config_, limiter_.get(), "/score", body); });
        try {
            scores = res.at("scores").get<std::vector<double>>();
        } catch (const json::exception&) {
            throw BackendError("malformed-response", "score response lacks a numeric scores array");
        }
        if (scores.size() != steps.size()) throw BackendError("malformed-response", "score count does not match steps");
        for (double s : scores) {
            if (!(s >= 0.0 && s <= 1.0)) throw BackendError("malformed-response", "score outside [0,1]");
        }
        return scores;
    }

    std::string prompt = problem + "\n";
    for (const auto& step : steps) {
        prompt += step;
        prompt += kStepToken;
        json body = {{"model", config_.model}, {"prompt", prompt}, {"max_tokens", 1}, {"temperature", 0},
                     {"logprobs", 20}};
        json res = with_retries(config_.retry, [&] { return post_json(config_, limiter_.get(), "/v1/completions", body); });
        double pos = 0, neg = 0;
        try {
            const auto& top = res.at("choices").at(0).at("logprobs").at("top_logprobs").at(0);
            for (const auto& [token, lp] : top.items()) {
                const std::string t = trim_copy(token);
                if (t == "+") pos += std::exp(lp.get<double>());
                if (t == "-") neg += std::exp(lp.get<double>());
            }
        } catch (const json::exception&) {
            throw BackendError("malformed-response", "completion response lacks top_logprobs");
        }
        if (pos + neg <= 0) throw BackendError("malformed-response", "neither label token is among the top logprobs");
        scores.push_back(pos / (pos + neg));
    }
    return scores;
}

std::vector<std::string> RetryingGenerator::complete(const GenerationRequest& req) {
    return with_retries(policy_, [&] { return inner_->complete(req); }, &last_attempts_);
}

}  // namespace gcp
