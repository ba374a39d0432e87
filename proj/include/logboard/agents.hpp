#pragma once

// Agent roles. Each role decides whether to act from the shared log
// (should_act), builds its prompt from the log and its sources, and turns the
// backend's reply into one typed, anchored entry (act).

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "logboard/backend.hpp"
#include "logboard/log_store.hpp"
#include "logboard/retrieval.hpp"
#include "logboard/sources.hpp"

namespace logboard {

enum class AgentRole { Table, Context, Visual, Summarizing, Verification };

inline constexpr std::array<AgentRole, 3> kRetrievalRoles{AgentRole::Table, AgentRole::Context, AgentRole::Visual};

std::string_view agent_name(AgentRole role);
std::vector<EntryType> permitted_types(AgentRole role);

struct AgentConfig {
    AgentRole role = AgentRole::Table;
    double temperature = 0.3;
    int per_query_action_cap = 2;
    std::size_t context_window = 4096;
    int max_tokens = 512;

    /// 0.0 for Summarizing/Verification, 0.3 otherwise.
    static AgentConfig defaults(AgentRole role);
};

/// How the Verification role decides.
enum class VerifierMode {
    Layered,            // deterministic checks, then the backend
    DeterministicOnly,  // no backend call
    BackendOnly,        // skip deterministic checks
    AlwaysOk,           // no-op verifier, for ablations and fault baselines
};

/// Configuration shared by every agent of a run.
struct AgentSet {
    std::array<AgentConfig, 5> configs{AgentConfig::defaults(AgentRole::Table),
                                       AgentConfig::defaults(AgentRole::Context),
                                       AgentConfig::defaults(AgentRole::Visual),
                                       AgentConfig::defaults(AgentRole::Summarizing),
                                       AgentConfig::defaults(AgentRole::Verification)};
    retrieval::RetrievalConfig retrieval;
    VerifierMode verifier_mode = VerifierMode::Layered;
    bool check_contradictions = false;
    TokenEstimator estimator = token_estimate;
    retrieval::Reranker reranker;

    const AgentConfig& config(AgentRole r) const { return configs[static_cast<std::size_t>(r)]; }
    AgentConfig& config(AgentRole r) { return configs[static_cast<std::size_t>(r)]; }
};

/// Per-run read-only resources: the sources plus their passage index.
struct RunResources {
    explicit RunResources(SourceBundle s);

    SourceBundle sources;
    retrieval::CorpusIndex passage_index;
};

struct AgentContext {
    const SharedLog& log;
    const RunResources& resources;
    const AgentSet& agents;
    int round = 0;
    bool finalize = false;  // Summarizing: no further rounds will run
};

struct ActOutcome {
    std::optional<LogEntry> entry;
    std::string diagnostic;  // why no entry was produced
    bool abstained = false;
    bool called_backend = false;
};

class Agent {
public:
    virtual ~Agent() = default;
    virtual AgentRole role() const = 0;
    virtual bool should_act(const AgentContext& ctx) const = 0;
    virtual std::string build_prompt(const AgentContext& ctx) const = 0;
    /// Calls the backend at most once. TransportError propagates.
    virtual ActOutcome act(const AgentContext& ctx, TextBackend& backend) const = 0;
};

std::unique_ptr<Agent> make_agent(AgentRole role);

// Free-function forms.
bool should_act(AgentRole role, const AgentContext& ctx);
ActOutcome act(AgentRole role, const AgentContext& ctx, TextBackend& backend);
std::string build_prompt(AgentRole role, const AgentContext& ctx);

/// The question carried by the first Query entry.
std::string question_of(const std::vector<LogEntry>& entries);

inline constexpr std::array<std::string_view, 4> kGapPhrases{"needed", "missing", "not sure", "don't have"};

/// Occurrences of gap phrases ("needed", "missing", "not sure", "don't have").
int count_gap_phrases(std::string_view text);

/// Content of the newest Summary or Flag when it names something missing or
/// inconsistent and no Answer/OK has superseded it; empty otherwise.
std::string open_request(const std::vector<LogEntry>& entries);

/// Steps cited by "(steps 1, 3)" groups in a Flag's content.
std::vector<std::int64_t> implicated_steps(std::string_view flag_content);

// -- verification -----------------------------------------------------------

struct Finding {
    enum class Kind { ArithmeticMismatch, UnitMismatch, UnsupportedClaim, MissingItem };
    Kind kind = Kind::UnsupportedClaim;
    std::string detail;
    std::vector<std::int64_t> implicated_steps;
};

std::string_view to_string(Finding::Kind k);

struct VerifyOptions {
    bool check_contradictions = false;
};

/// Recomputes differences, sums, ratios and percentage changes claimed in the
/// answer from Lookup/Visual values, checks unit agreement, and requires every
/// other numeral to be present in or derivable from evidence entries.
std::vector<Finding> verify_deterministic(const std::vector<LogEntry>& entries, std::string_view answer_text,
                                          const VerifyOptions& opts = {});

/// "Flagged <Kind>: <detail> (steps a, b)". Also used for extra findings.
std::string describe(const Finding& f);

struct VerificationOutcome {
    LogEntry entry;  // Flag or OK
    std::vector<Finding> findings;
    bool backend_consulted = false;
    bool backend_unavailable = false;
};

/// Requires the newest Summarizing entry to be an Answer. Deterministic
/// findings always win over a backend "OK"; a backend failure with clean
/// deterministic checks yields OK with a backend-unavailable note.
VerificationOutcome verification_act(const AgentContext& ctx, TextBackend& backend);

}  // namespace logboard
