#pragma once

// Learned continue/stop policy over four log-derived features.

#include <array>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "logboard/log_store.hpp"
#include "logboard/sources.hpp"
#include "logboard/trace_io.hpp"

namespace logboard {

struct GateFeatures {
    double image_present = 0.0;       // 0 or 1
    double summary_confidence = 0.5;  // 1 answer, 0 gap phrase, 0.5 otherwise
    double new_entries = 0.0;         // accepted retrieval appends this round
    double pending_needs_delta = 0.0;

    std::array<double, 4> as_array() const { return {image_present, summary_confidence, new_entries, pending_needs_delta}; }
    bool valid() const;
};

/// image_present from the sources (when given) or image mentions in the log.
GateFeatures extract_features(std::span<const LogEntry> entries, const SourceBundle* sources, int new_entries);

struct LogisticGate {
    std::array<double, 4> weights{};
    double bias = 0.0;
    double threshold = 0.5;

    /// sigmoid(w.x + b)
    double predict_continue(const GateFeatures& f) const;
    bool should_continue(const GateFeatures& f) const { return predict_continue(f) >= threshold; }
    bool valid() const;
};

double sigmoid(double z);

nlohmann::ordered_json to_json(const LogisticGate& g);
LogisticGate gate_from_json(const nlohmann::json& j);
LogisticGate load_gate(const std::filesystem::path& path);
void save_gate(const std::filesystem::path& path, const LogisticGate& g);

struct GateSample {
    GateFeatures features;
    int label = 0;
};

/// Single-class training data.
class DegenerateDataError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct TrainOptions {
    int epochs = 500;
    double learning_rate = 0.1;
    double l2 = 0.0;
    double threshold = 0.5;
};

struct TrainResult {
    LogisticGate gate;
    double final_loss = 0.0;
    std::vector<double> loss_history;  // loss before each epoch, then the final loss
};

/// Full-batch gradient descent on mean log-loss + (l2/2)|w|^2 from zero
/// initialization. Throws DegenerateDataError unless both labels occur.
TrainResult train(const std::vector<GateSample>& samples, const TrainOptions& opts = {});

/// Mean log-loss plus the L2 term.
double training_loss(const LogisticGate& g, const std::vector<GateSample>& samples, double l2);

struct MinedSamples {
    std::vector<GateSample> samples;
    std::vector<std::string> warnings;
};

/// One sample per non-final round of each trace. Label 1 when an evidence
/// entry appended in a later round shares a numeral (directly or as an
/// operand of a value the answer states) or a capitalized span with the final
/// Answer. Traces without round markers or without an Answer are skipped.
MinedSamples mine_samples(const std::vector<Trace>& traces);

/// Reads every *.jsonl below `dir` (sorted by path).
std::vector<Trace> read_trace_dir(const std::filesystem::path& dir);

}  // namespace logboard
