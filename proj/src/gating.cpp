#include "logboard/gating.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "logboard/agents.hpp"
#include "logboard/evidence.hpp"
#include "logboard/text.hpp"

namespace logboard {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const LogEntry* nth_latest_summarizing(std::span<const LogEntry> entries, int n) {
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        if (it->agent != agent_names::kSummarizing) continue;
        if (n-- == 0) return &*it;
    }
    return nullptr;
}

bool mentions_image(std::string_view s) {
    return text::contains_ci(s, "image") || text::contains_ci(s, "figure");
}

}  // namespace

bool GateFeatures::valid() const {
    for (double v : as_array())
        if (!std::isfinite(v)) return false;
    return image_present == 0.0 || image_present == 1.0;
}

GateFeatures extract_features(std::span<const LogEntry> entries, const SourceBundle* sources, int new_entries) {
    GateFeatures f;
    bool image = sources && !sources->images.empty();
    if (!sources)
        image = std::any_of(entries.begin(), entries.end(), [](const LogEntry& e) {
            return e.type == EntryType::Visual || mentions_image(e.content);
        });
    f.image_present = image ? 1.0 : 0.0;
    f.new_entries = new_entries;

    const auto* latest = nth_latest_summarizing(entries, 0);
    if (latest) {
        if (latest->type == EntryType::Answer)
            f.summary_confidence = 1.0;
        else if (count_gap_phrases(latest->content) > 0)
            f.summary_confidence = 0.0;
        const auto* prev = nth_latest_summarizing(entries, 1);
        f.pending_needs_delta = count_gap_phrases(latest->content) - (prev ? count_gap_phrases(prev->content) : 0);
    }
    return f;
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

double LogisticGate::predict_continue(const GateFeatures& f) const {
    auto x = f.as_array();
    double z = bias;
    for (std::size_t i = 0; i < x.size(); ++i) z += weights[i] * x[i];
    return sigmoid(z);
}

bool LogisticGate::valid() const {
    return std::all_of(weights.begin(), weights.end(), [](double w) { return std::isfinite(w); }) &&
           std::isfinite(bias) && std::isfinite(threshold);
}

ordered_json to_json(const LogisticGate& g) {
    ordered_json j;
    j["weights"] = g.weights;
    j["bias"] = g.bias;
    j["threshold"] = g.threshold;
    return j;
}

LogisticGate gate_from_json(const json& j) {
    LogisticGate g;
    try {
        auto w = j.at("weights").get<std::vector<double>>();
        if (w.size() != g.weights.size()) throw std::invalid_argument("gate needs exactly 4 weights");
        std::copy(w.begin(), w.end(), g.weights.begin());
        g.bias = j.at("bias").get<double>();
        g.threshold = j.value("threshold", 0.5);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed gate JSON: ") + e.what());
    }
    if (!g.valid()) throw std::invalid_argument("gate parameters must be finite");
    return g;
}

LogisticGate load_gate(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read gate " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return gate_from_json(j);
}

void save_gate(const std::filesystem::path& path, const LogisticGate& g) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write gate " + path.string());
    os << to_json(g).dump(2) << "\n";
}

double training_loss(const LogisticGate& g, const std::vector<GateSample>& samples, double l2) {
    constexpr double eps = 1e-12;
    double loss = 0.0;
    for (const auto& s : samples) {
        double p = g.predict_continue(s.features);
        loss -= s.label ? std::log(std::max(p, eps)) : std::log(std::max(1.0 - p, eps));
    }
    loss /= static_cast<double>(samples.size());
    double norm = 0.0;
    for (double w : g.weights) norm += w * w;
    return loss + 0.5 * l2 * norm;
}

TrainResult train(const std::vector<GateSample>& samples, const TrainOptions& opts) {
    bool has0 = false, has1 = false;
    for (const auto& s : samples) {
        if (s.label != 0 && s.label != 1) throw std::invalid_argument("gate labels must be 0 or 1");
        if (!s.features.valid()) throw std::invalid_argument("gate features must be finite with binary image_present");
        (s.label ? has1 : has0) = true;
    }
    if (!has0 || !has1)
        throw DegenerateDataError(
            "gate training data holds a single label; use threshold-only gating (a fixed continue probability) "
            "instead of a fitted classifier");
    if (opts.epochs < 0 || !(opts.learning_rate > 0.0) || opts.l2 < 0.0)
        throw std::invalid_argument("epochs >= 0, learning_rate > 0 and l2 >= 0 required");

    TrainResult r;
    r.gate.threshold = opts.threshold;
    const double n = static_cast<double>(samples.size());
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        r.loss_history.push_back(training_loss(r.gate, samples, opts.l2));
        std::array<double, 4> gw{};
        double gb = 0.0;
        for (const auto& s : samples) {
            double err = r.gate.predict_continue(s.features) - s.label;
            auto x = s.features.as_array();
            for (std::size_t i = 0; i < x.size(); ++i) gw[i] += err * x[i];
            gb += err;
        }
        for (std::size_t i = 0; i < gw.size(); ++i)
            r.gate.weights[i] -= opts.learning_rate * (gw[i] / n + opts.l2 * r.gate.weights[i]);
        r.gate.bias -= opts.learning_rate * gb / n;
    }
    r.final_loss = training_loss(r.gate, samples, opts.l2);
    r.loss_history.push_back(r.final_loss);
    return r;
}

MinedSamples mine_samples(const std::vector<Trace>& traces) {
    MinedSamples out;
    for (std::size_t t = 0; t < traces.size(); ++t) {
        const auto& entries = traces[t].entries;
        const std::string name = "trace " + std::to_string(t);
        if (!traces[t].has_rounds) {
            out.warnings.push_back(name + ": no round markers, skipped");
            continue;
        }
        const LogEntry* answer = nullptr;
        for (auto it = entries.rbegin(); it != entries.rend(); ++it)
            if (it->agent == agent_names::kSummarizing && it->type == EntryType::Answer) {
                answer = &*it;
                break;
            }
        if (!answer) {
            out.warnings.push_back(name + ": no final Answer, skipped");
            continue;
        }
        int last_round = 0;
        for (const auto& e : entries) last_round = std::max(last_round, e.meta.round);

        const auto answer_text = parse_answer(answer->content).value_or(answer->content);
        auto answer_nums = text::extract_numerals(answer_text);
        std::erase_if(answer_nums, [](const text::Numeral& n) { return n.year_like; });
        const auto answer_spans = evidence::capitalized_spans(answer_text);
        const auto derived = evidence::derive(evidence::arithmetic_operands(entries));

        std::map<std::int64_t, int> round_of_step;
        for (const auto& e : entries) round_of_step[e.meta.step] = e.meta.round;

        // Rounds holding evidence the answer cites.
        std::set<int> cited_rounds;
        for (const auto& e : entries) {
            if (!evidence::is_evidence(e.type)) continue;
            bool cited = false;
            for (const auto& n : text::extract_numerals(e.content))
                for (const auto& a : answer_nums)
                    if (!n.year_like && text::same_quantity(n, a)) cited = true;
            for (const auto& span : answer_spans)
                if (e.content.find(span) != std::string::npos) cited = true;
            if (cited) cited_rounds.insert(e.meta.round);
        }
        for (const auto& d : derived) {
            bool used = std::any_of(answer_nums.begin(), answer_nums.end(), [&](const text::Numeral& a) {
                return d.percent == a.percent &&
                       (text::matches_written(a, d.value) || text::matches_written(a, std::fabs(d.value)));
            });
            if (!used) continue;
            for (auto st : d.steps) cited_rounds.insert(round_of_step[st]);
        }

        for (int r = 0; r < last_round; ++r) {
            std::vector<LogEntry> prefix;
            int fresh = 0;
            for (const auto& e : entries) {
                if (e.meta.round > r) continue;
                prefix.push_back(e);
                if (e.meta.round == r && evidence::is_evidence(e.type)) ++fresh;
            }
            GateSample s;
            s.features = extract_features(prefix, nullptr, fresh);
            s.label = cited_rounds.upper_bound(r) != cited_rounds.end() ? 1 : 0;
            out.samples.push_back(s);
        }
    }
    return out;
}

std::vector<Trace> read_trace_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<Trace> out;
    for (const auto& f : files) out.push_back(read_jsonl(f));
    return out;
}

}  // namespace logboard
