#pragma once

// The shared log: the only medium through which agents coordinate.
//
// Entries are typed, carry provenance anchors, and are totally ordered by a
// step counter assigned at append time. Appends are serialized through an
// internal mutex so retrieval roles can produce entries concurrently while
// the committed order stays the step order.

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace logboard {

enum class EntryType { Query, Lookup, Quote, Visual, Summary, Answer, Flag, OK };

std::string_view to_string(EntryType t);
std::optional<EntryType> entry_type_from_string(std::string_view s);

// Role names as they appear in the "agent" field.
namespace agent_names {
inline constexpr std::string_view kUser = "User";
inline constexpr std::string_view kTable = "TableAgent";
inline constexpr std::string_view kContext = "ContextAgent";
inline constexpr std::string_view kVisual = "VisualAgent";
inline constexpr std::string_view kSummarizing = "SummarizingAgent";
inline constexpr std::string_view kVerification = "VerificationAgent";
}  // namespace agent_names

struct TableAnchor {
    std::string table_id;
    std::size_t row = 0;
    std::size_t col = 0;
    bool operator==(const TableAnchor&) const = default;
};

struct DocSpan {
    std::string doc_id;
    std::size_t start_char = 0;
    std::size_t end_char = 0;
    bool operator==(const DocSpan&) const = default;
};

struct ImageRef {
    std::string image_id;
    bool operator==(const ImageRef&) const = default;
};

struct NoProvenance {
    bool operator==(const NoProvenance&) const = default;
};

using Provenance = std::variant<TableAnchor, DocSpan, ImageRef, NoProvenance>;

/// Citation string for one anchor: "table:<id>[row,col]", "doc:<id>[start:end]",
/// "image:<id>". Empty for NoProvenance.
std::string citation(const Provenance& p);

struct EntryMeta {
    std::int64_t step = -1;  // assigned by SharedLog::append
    std::int64_t ts_ms = 0;  // milliseconds since run start
    int round = -1;          // scheduler round, -1 when not produced by a run
    std::vector<Provenance> provenance;
};

struct LogEntry {
    std::string agent;
    EntryType type = EntryType::Query;
    std::string content;
    EntryMeta meta;
};

/// Raised for entries that violate the role/type/provenance invariants.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Checks content, role/type discipline and provenance requirements.
/// Throws ValidationError naming the violated invariant.
void validate_entry(const LogEntry& entry);

struct TokenBudget {
    std::size_t soft_limit = 4096;
    std::size_t compress_trigger = 3600;
    std::size_t summary_cap = 300;
    std::size_t target_after = 3900;

    /// compress_trigger < target_after <= soft_limit; summary_cap < compress_trigger.
    bool valid() const;
};

using TokenEstimator = std::function<std::size_t(std::string_view)>;

/// ceil(code points / 4).
std::size_t token_estimate(std::string_view text);

/// Jaccard similarity of word-3-gram sets >= 0.85 after lowercasing and
/// punctuation stripping. Texts with fewer than 3 words compare by exact
/// equality of their normalized word sequences.
bool is_near_duplicate(std::string_view a, std::string_view b);

enum class AppendResult { Accepted, RejectedDuplicate };

class SharedLog {
public:
    explicit SharedLog(TokenBudget budget = {});
    SharedLog(const SharedLog& other);
    SharedLog& operator=(const SharedLog& other);
    SharedLog(SharedLog&& other) noexcept;
    SharedLog& operator=(SharedLog&& other) noexcept;

    /// Validates, rejects near-duplicates of any existing entry, then assigns
    /// the next step index. Returns the committed step through `step_out`.
    AppendResult append(LogEntry entry, std::int64_t* step_out = nullptr);

    std::vector<LogEntry> entries() const;
    std::size_t size() const;
    bool empty() const;
    std::optional<LogEntry> at_step(std::int64_t step) const;
    std::optional<LogEntry> latest_of(std::string_view agent) const;

    const TokenBudget& budget() const { return budget_; }

    /// Builds a log directly from already-stepped entries (trace replay).
    /// Steps must be strictly increasing; dedup is not re-applied.
    static SharedLog from_entries(std::vector<LogEntry> entries, TokenBudget budget = {});

private:
    mutable std::mutex mu_;
    std::vector<LogEntry> entries_;
    // Sorted 3-gram set per entry (or the bare words when fewer than three).
    struct Shingles {
        bool short_text = false;
        std::vector<std::string> items;
    };
    static Shingles shingles(std::string_view content);
    friend bool is_near_duplicate(std::string_view a, std::string_view b);
    static bool near(const Shingles& a, const Shingles& b);
    std::vector<Shingles> shingles_;
    std::int64_t next_step_ = 0;
    TokenBudget budget_;
};

/// Compresses a run of log entries into summary prose. Output is capped at the
/// budget's summary_cap by render_view.
using SummarizeFn = std::function<std::string(std::span<const LogEntry>)>;

struct RenderOptions {
    TokenEstimator estimator = token_estimate;
    std::optional<TokenBudget> budget;  // defaults to the log's own budget
};

/// One line per entry: "[step] Agent (Type): content {cite; cite}".
std::string render_entry(const LogEntry& e);

/// Renders newest-last. Past compress_trigger, the oldest entries are folded
/// one at a time into a single Summary stub until the estimate is within
/// target_after. The stub keeps every folded entry's citations.
std::string render_view(const SharedLog& log, const SummarizeFn& summarize = {}, const RenderOptions& opts = {});
std::string render_view(std::span<const LogEntry> entries, const TokenBudget& budget, const SummarizeFn& summarize = {},
                        const TokenEstimator& estimator = token_estimate);

/// Marker-based answer extraction: text after the last "Answer:" (any case),
/// else the first sentence when the content opens with "Therefore" or
/// "In conclusion".
std::optional<std::string> parse_answer(std::string_view content);

/// The Summarizing template's answer line; parse_answer(format_answer(x)) == x.
std::string format_answer(std::string_view answer);

struct Verdict {
    bool ok = false;
    std::string reason;  // set when !ok
};

/// OK when the content holds a standalone "OK" token or "No issues flagged";
/// otherwise a Flag whose reason is the first sentence mentioning
/// flag/incorrect/missing, or "unparseable verdict".
Verdict parse_verdict(std::string_view content);

}  // namespace logboard
