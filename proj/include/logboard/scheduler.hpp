#pragma once

// The controller loop: round-robin turn offers, summarization, verification
// with one-shot re-engagement, guardrails and stopping.

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "logboard/agents.hpp"
#include "logboard/backend.hpp"
#include "logboard/gating.hpp"
#include "logboard/log_store.hpp"

namespace logboard {

struct SchedulerConfig {
    int max_rounds = 6;
    int patience = 1;
    int per_agent_cap = 2;
    bool verifier_enabled = true;
    int reengage_limit = 1;
    bool gate_enabled = false;
    bool parallel_retrieval = false;
    int transport_retries = 2;
    TokenBudget budget;

    bool valid() const;
};

enum class Termination { AnswerVerified, AnswerUnverified, NoProgress, MaxRounds };

std::string_view to_string(Termination t);
std::optional<Termination> termination_from_string(std::string_view s);

struct RunMetrics {
    int rounds = 0;
    std::int64_t backend_calls = 0;
    std::int64_t token_usage = 0;
    std::int64_t wall_ms = 0;
    int agent_turns = 0;  // act invocations, all roles
};

struct RoundRecord {
    int round = 0;
    int accepted = 0;  // retrieval entries accepted
    int rejected = 0;  // retrieval entries dropped as near-duplicates
    bool summarized = false;
    bool summary_was_answer = false;
    std::optional<EntryType> verdict;
    std::optional<double> gate_probability;
    int consecutive_nonanswer = 0;
};

struct RunResult {
    std::optional<std::string> final_answer;
    SharedLog log;
    Termination termination = Termination::MaxRounds;
    RunMetrics metrics;
    std::vector<RoundRecord> history;
    int reengagements = 0;
    std::optional<std::string> partial_summary;  // latest Summary on NoProgress
    std::vector<std::string> diagnostics;
};

/// Transport failure that outlived the retries. Carries the partial log.
class RunAborted : public std::runtime_error {
public:
    RunAborted(const std::string& what, SharedLog partial, RunMetrics m)
        : std::runtime_error(what), partial_log(std::move(partial)), metrics(m) {}
    SharedLog partial_log;
    RunMetrics metrics;
};

/// Observation and rewriting of retrieval entries before they are committed.
/// `ordinal` counts retrieval entries produced in the run, from 0.
struct EntryHook {
    std::function<std::vector<LogEntry>(LogEntry entry, std::size_t ordinal)> rewrite;
    std::function<void(std::size_t ordinal, const LogEntry& committed, AppendResult result, std::int64_t step)>
        committed;
};

/// Runs one question to termination. Throws std::invalid_argument on an empty
/// question or invalid config, RunAborted on persistent transport failure.
RunResult run(std::string_view question, const RunResources& resources, const AgentSet& agents, TextBackend& backend,
              const SchedulerConfig& config = {}, const LogisticGate* gate = nullptr, const EntryHook* hook = nullptr);

/// {"answer","termination","rounds","backend_calls","token_usage","wall_ms"}
nlohmann::ordered_json run_summary(const RunResult& r);

/// Retries TransportError up to `retries` extra attempts.
class RetryingBackend final : public TextBackend {
public:
    RetryingBackend(TextBackend& inner, int retries) : inner_(inner), retries_(retries) {}
    Completion generate(const GenerationRequest& req) override;

private:
    TextBackend& inner_;
    int retries_;
};

}  // namespace logboard
