#pragma once

// Evaluation harness: fault injection, answer metrics, bootstrap intervals and
// the benchmark runner.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "logboard/agents.hpp"
#include "logboard/gating.hpp"
#include "logboard/log_store.hpp"
#include "logboard/scheduler.hpp"
#include "logboard/sources.hpp"

namespace logboard::harness {

// -- faults -------------------------------------------------------------------

enum class FaultType { MissingRow, RowOffByOne, ArithmeticCorruption, OcrMisread, ContradictionInjection };

std::string_view to_string(FaultType t);
/// Accepts the enum names and short forms: missing-row, off-by-one,
/// arithmetic, ocr, contradiction.
std::optional<FaultType> fault_type_from_string(std::string_view s);

struct FaultSpec {
    FaultType type = FaultType::ArithmeticCorruption;
    double rate = 0.1;
    std::uint64_t seed = 0;

    bool valid() const { return rate > 0.0 && rate <= 1.0; }
};

struct FaultLabel {
    std::size_t record = 0;            // benchmark record index
    std::optional<std::int64_t> step;  // corrupted (or injected) entry, when committed
    std::string source_id;             // table/doc/image the target refers to
    std::optional<std::size_t> row;
    FaultType type = FaultType::ArithmeticCorruption;
    std::string original;
    std::string corrupted;
    std::vector<std::string> restore_markers;  // all present again = value restored
};

nlohmann::ordered_json to_json(const FaultLabel& l);

/// Thrown when the rate selects no target, or there are no targets at all.
class NoFaultTargets : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// ceil(rate * n), guarded against floating error (0.1 * 30 -> 3).
std::size_t fault_count(double rate, std::size_t n);

/// k distinct indices from [0, n), chosen by seed. Uses its own bounded draw
/// over mt19937_64 so the selection is identical across standard libraries.
std::vector<std::size_t> choose_targets(std::size_t n, std::size_t k, std::uint64_t seed);

/// True when the entry can carry a fault of this type.
bool eligible(const LogEntry& e, FaultType type);

struct Mutation {
    std::vector<LogEntry> entries;      // empty for MissingRow, two for ContradictionInjection
    FaultLabel label;                   // label.step left unset
    std::optional<std::size_t> target;  // index in `entries` the label points at
};

/// Applies one mutation to an eligible entry.
Mutation mutate(const LogEntry& e, FaultType type);

struct InjectedLog {
    std::vector<LogEntry> entries;  // steps renumbered from 0
    std::vector<FaultLabel> labels;
};

/// Entry-level injection over a finished log.
InjectedLog inject_faults(const std::vector<LogEntry>& entries, const FaultSpec& spec);

struct InjectedSources {
    SourceBundle sources;
    std::vector<FaultLabel> labels;
};

/// Source-level injection: table rows (MissingRow, RowOffByOne,
/// ArithmeticCorruption, ContradictionInjection via a conflicting passage) or
/// image OCR text (OcrMisread).
InjectedSources inject_faults(const SourceBundle& sources, const FaultSpec& spec);

struct CatchRepair {
    std::size_t labels = 0;
    std::size_t caught = 0;
    std::size_t repaired = 0;
    std::vector<std::optional<std::int64_t>> catching_flag;  // per label
    double catch_rate() const { return labels ? static_cast<double>(caught) / static_cast<double>(labels) : 0.0; }
    double repair_rate() const { return labels ? static_cast<double>(repaired) / static_cast<double>(labels) : 0.0; }
};

/// A label is caught when a Flag implicates its step, or implicates an entry
/// anchored to its source (and row, when set). It is repaired when caught, a
/// later evidence entry carries every restore marker, and the run verified.
CatchRepair catch_and_repair(const std::vector<FaultLabel>& labels, const std::vector<LogEntry>& final_log,
                             bool final_answer_ok);

// -- metrics --------------------------------------------------------------------

/// Numerals canonicalized, lowercased, punctuation and articles dropped,
/// whitespace collapsed.
std::string normalize_answer(std::string_view s);
bool exact_match(std::string_view pred, const std::vector<std::string>& golds);

struct Rouge {
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double rougeL = 0.0;
};

/// F1 scores over lowercased alphanumeric tokens (numerals canonicalized).
Rouge rouge(std::string_view pred, std::string_view gold);

/// Fraction of answer units (numerals, capitalized spans) supported by
/// evidence entries; 1.0 when there are no units.
double log_groundedness(std::string_view answer, const std::vector<LogEntry>& log);

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

/// Percentile bootstrap of the mean (nearest-rank percentiles). The interval
/// is widened when needed so it always contains the sample mean.
Interval bootstrap_ci(const std::vector<double>& values, int resamples = 1000, double level = 0.95,
                      std::uint64_t seed = 2024);

/// Nearest-rank percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

// -- benchmark ------------------------------------------------------------------

struct BenchmarkRecord {
    std::string id;
    std::string question;
    SourceBundle sources;
    std::vector<std::string> gold_answers;
};

/// JSONL; each line {"id"?, "question", "gold_answers" | "answer", and
/// "sources" (inline bundle) or "sources_path" (relative to the file)}.
std::vector<BenchmarkRecord> load_records(const std::filesystem::path& path);

struct Metrics {
    std::size_t n = 0;
    std::size_t failures = 0;
    double em = 0.0;
    double rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0;
    double log_groundedness = 0.0;
    double catch_rate = 0.0;
    double repair_rate = 0.0;
    std::size_t faults_injected = 0;
    double ci_low = 0.0, ci_high = 0.0;
    double backend_calls_mean = 0.0;
    double token_mean = 0.0;
    double latency_ms_p50 = 0.0, latency_ms_p95 = 0.0;
    double rounds_mean = 0.0;
    double agent_turns_mean = 0.0;
    std::map<std::string, std::pair<double, std::size_t>> em_by_log_length;  // bucket -> (em, count)
};

nlohmann::ordered_json to_json(const Metrics& m);

struct QuestionReport {
    std::string id;
    std::string question;
    std::optional<std::string> answer;
    std::vector<std::string> gold;
    bool em = false;
    std::string termination;
    RunMetrics run;
    std::size_t log_entries = 0;
    Rouge rouge;
    double groundedness = 0.0;
    std::size_t faults = 0;
    std::size_t caught = 0;
    std::size_t repaired = 0;
    std::string error;
    std::vector<LogEntry> trace;
};

nlohmann::ordered_json to_json(const QuestionReport& r);

struct BenchOptions {
    SchedulerConfig scheduler;
    AgentSet agents;
    std::optional<FaultSpec> fault;
    const LogisticGate* gate = nullptr;
    std::filesystem::path out_dir;  // nothing written when empty
    int jobs = 1;
    std::uint64_t seed = 2024;      // bootstrap seed
};

struct BenchResult {
    Metrics metrics;
    std::vector<QuestionReport> reports;
    std::vector<FaultLabel> labels;
    std::vector<std::optional<std::int64_t>> catching_flag;  // parallel to labels
};

/// "<=4", "5-6", "7-8" or ">=9" log entries.
std::string log_length_bucket(std::size_t entries);

/// Runs every record and aggregates. With a fault spec, a clean pass finds the
/// retrieval entries each run produces, ceil(rate * total) of them are chosen
/// by seed, and a second pass corrupts exactly those as they are produced.
BenchResult run_benchmark(const std::vector<BenchmarkRecord>& records, TextBackend& backend, const BenchOptions& opts);

}  // namespace logboard::harness
