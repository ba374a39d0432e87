#pragma once

// Text-generation backends. Agents only ever see TextBackend.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "logboard/log_store.hpp"

namespace logboard {

struct GenerationRequest {
    std::string prompt;
    double temperature = 0.0;
    int max_tokens = 512;
    std::string role;  // requesting agent name, informational
};

struct Completion {
    std::string text;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::optional<std::int64_t> simulated_latency_ms;  // set by scripted backends
};

/// Transport-level failure (network, HTTP status, malformed body). Retryable.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TextBackend {
public:
    virtual ~TextBackend() = default;
    /// Must be deterministic at temperature 0. Safe to call concurrently.
    virtual Completion generate(const GenerationRequest& req) = 0;
};

/// Canned replies keyed by prompt substrings.
///
/// Fixture layout:
///   {"default_latency_ms": 100,
///    "default": "no relevant info found",
///    "rules": [{"match": "You are the TableAgent", "unless": ["Flag"],
///               "reply": "...", "latency_ms": 80},
///              {"match": ["A", "B"], "error": "connection reset"}]}
/// The first rule whose every `match` substring occurs in the prompt and no
/// `unless` substring does wins. `error` makes the call throw TransportError.
class ScriptedBackend final : public TextBackend {
public:
    struct Rule {
        std::vector<std::string> match;
        std::vector<std::string> unless;
        std::string reply;
        std::optional<std::string> error;
        std::optional<std::int64_t> latency_ms;
    };

    ScriptedBackend() = default;
    explicit ScriptedBackend(std::vector<Rule> rules, std::optional<std::string> fallback = std::nullopt,
                             std::int64_t default_latency_ms = 0, TokenEstimator estimator = token_estimate);
    ScriptedBackend(ScriptedBackend&& o) noexcept
        : rules_(std::move(o.rules_)),
          fallback_(std::move(o.fallback_)),
          default_latency_ms_(o.default_latency_ms_),
          estimator_(std::move(o.estimator_)),
          calls_(o.calls_.load()) {}

    static ScriptedBackend from_json(const nlohmann::json& j);
    static ScriptedBackend from_file(const std::filesystem::path& path);

    Completion generate(const GenerationRequest& req) override;

    std::int64_t calls() const { return calls_.load(); }

private:
    std::vector<Rule> rules_;
    std::optional<std::string> fallback_;
    std::int64_t default_latency_ms_ = 0;
    TokenEstimator estimator_ = token_estimate;
    std::atomic<std::int64_t> calls_{0};
};

/// Adapts a callable; used for programmatic fixtures.
class FunctionBackend final : public TextBackend {
public:
    using Fn = std::function<std::string(const GenerationRequest&)>;
    explicit FunctionBackend(Fn fn, std::int64_t latency_ms = 0, TokenEstimator estimator = token_estimate)
        : fn_(std::move(fn)), latency_ms_(latency_ms), estimator_(std::move(estimator)) {}

    Completion generate(const GenerationRequest& req) override;

private:
    Fn fn_;
    std::int64_t latency_ms_;
    TokenEstimator estimator_;
};

/// Chat-completion style HTTP JSON backend:
///   POST {base_url}/chat/completions
///   {"model", "messages":[{"role":"user","content":prompt}], "temperature", "max_tokens"}
/// Reads choices[0].message.content and, when present, usage.prompt_tokens /
/// usage.completion_tokens.
class HttpChatBackend final : public TextBackend {
public:
    struct Options {
        std::string base_url;  // e.g. "http://localhost:8000/v1"
        std::string model = "default";
        std::string api_key;
        int timeout_seconds = 60;
    };

    explicit HttpChatBackend(Options opts, TokenEstimator estimator = token_estimate);

    /// Base URL from LOGBOARD_BASE_URL, key from LOGBOARD_API_KEY.
    static Options options_from_env(std::string model = "default");

    Completion generate(const GenerationRequest& req) override;

    static nlohmann::json request_body(const Options& opts, const GenerationRequest& req);

private:
    Options opts_;
    TokenEstimator estimator_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

/// Per-run view over a shared backend: counts calls, tokens and simulated
/// latency for just the requests routed through it.
class MeteredBackend final : public TextBackend {
public:
    explicit MeteredBackend(TextBackend& inner) : inner_(inner) {}

    Completion generate(const GenerationRequest& req) override;

    std::int64_t calls() const { return calls_.load(); }
    std::int64_t tokens() const { return tokens_.load(); }
    std::int64_t simulated_ms() const { return simulated_ms_.load(); }
    bool saw_simulated_latency() const { return saw_simulated_.load(); }

private:
    TextBackend& inner_;
    std::atomic<std::int64_t> calls_{0};
    std::atomic<std::int64_t> tokens_{0};
    std::atomic<std::int64_t> simulated_ms_{0};
    std::atomic<bool> saw_simulated_{false};
};

}  // namespace logboard
