#include "logboard/log_store.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

#include "logboard/text.hpp"

namespace logboard {

namespace {

constexpr double kDuplicateJaccard = 0.85;

template <class T>
bool has_anchor(const LogEntry& e) {
    return std::any_of(e.meta.provenance.begin(), e.meta.provenance.end(),
                       [](const Provenance& p) { return std::holds_alternative<T>(p); });
}

std::string_view permitted_agent(EntryType t) {
    switch (t) {
        case EntryType::Query: return agent_names::kUser;
        case EntryType::Lookup: return agent_names::kTable;
        case EntryType::Quote: return agent_names::kContext;
        case EntryType::Visual: return agent_names::kVisual;
        case EntryType::Summary:
        case EntryType::Answer: return agent_names::kSummarizing;
        case EntryType::Flag:
        case EntryType::OK: return agent_names::kVerification;
    }
    return {};
}

std::string cap_to_tokens(std::string s, std::size_t cap, const TokenEstimator& est) {
    if (est(s) <= cap) return s;
    std::size_t lo = 0;
    std::size_t hi = s.size();
    while (lo < hi) {
        std::size_t mid = (lo + hi + 1) / 2;
        if (est(std::string_view(s).substr(0, mid)) <= cap)
            lo = mid;
        else
            hi = mid - 1;
    }
    // Do not cut inside a UTF-8 sequence.
    while (lo > 0 && lo < s.size() && (static_cast<unsigned char>(s[lo]) & 0xC0) == 0x80) --lo;
    s.resize(lo);
    return s;
}

std::string join_lines(const std::vector<std::string>& lines, std::size_t from) {
    std::string out;
    for (std::size_t i = from; i < lines.size(); ++i) {
        if (!out.empty()) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

std::string citation_block(std::span<const LogEntry> entries) {
    std::string out;
    for (const auto& e : entries)
        for (const auto& p : e.meta.provenance) {
            auto c = citation(p);
            if (c.empty()) continue;
            if (!out.empty()) out += "; ";
            out += c;
        }
    return out.empty() ? std::string{} : " {" + out + "}";
}

std::string stub_line(std::span<const LogEntry> folded, const std::string& summary) {
    std::ostringstream os;
    os << "[" << folded.front().meta.step << "-" << folded.back().meta.step << "] "
       << agent_names::kSummarizing << " (Summary): HistorySummary";
    if (!summary.empty()) os << ": " << summary;
    os << citation_block(folded);
    return os.str();
}

}  // namespace

std::string_view to_string(EntryType t) {
    switch (t) {
        case EntryType::Query: return "Query";
        case EntryType::Lookup: return "Lookup";
        case EntryType::Quote: return "Quote";
        case EntryType::Visual: return "Visual";
        case EntryType::Summary: return "Summary";
        case EntryType::Answer: return "Answer";
        case EntryType::Flag: return "Flag";
        case EntryType::OK: return "OK";
    }
    return "?";
}

std::optional<EntryType> entry_type_from_string(std::string_view s) {
    for (auto t : {EntryType::Query, EntryType::Lookup, EntryType::Quote, EntryType::Visual, EntryType::Summary,
                   EntryType::Answer, EntryType::Flag, EntryType::OK})
        if (to_string(t) == s) return t;
    return std::nullopt;
}

std::string citation(const Provenance& p) {
    struct Visitor {
        std::string operator()(const TableAnchor& a) const {
            return "table:" + a.table_id + "[" + std::to_string(a.row) + "," + std::to_string(a.col) + "]";
        }
        std::string operator()(const DocSpan& d) const {
            return "doc:" + d.doc_id + "[" + std::to_string(d.start_char) + ":" + std::to_string(d.end_char) + "]";
        }
        std::string operator()(const ImageRef& i) const { return "image:" + i.image_id; }
        std::string operator()(const NoProvenance&) const { return {}; }
    };
    return std::visit(Visitor{}, p);
}

void validate_entry(const LogEntry& e) {
    if (text::trim(e.content).empty()) throw ValidationError("content is non-empty");
    if (e.agent != permitted_agent(e.type))
        throw ValidationError("role/type mismatch: " + std::string(to_string(e.type)) + " entries are written by " +
                              std::string(permitted_agent(e.type)) + ", not " + e.agent);
    switch (e.type) {
        case EntryType::Lookup:
            if (!has_anchor<TableAnchor>(e)) throw ValidationError("Lookup entries carry at least one TableAnchor");
            break;
        case EntryType::Quote:
            if (!has_anchor<DocSpan>(e)) throw ValidationError("Quote entries carry at least one DocSpan");
            break;
        case EntryType::Visual:
            if (!has_anchor<ImageRef>(e)) throw ValidationError("Visual entries carry at least one ImageRef");
            break;
        default: break;
    }
    for (const auto& p : e.meta.provenance)
        if (const auto* d = std::get_if<DocSpan>(&p); d && d->start_char > d->end_char)
            throw ValidationError("DocSpan start_char <= end_char");
}

bool TokenBudget::valid() const {
    return compress_trigger < target_after && target_after <= soft_limit && summary_cap < compress_trigger;
}

std::size_t token_estimate(std::string_view text) { return (text::utf8_length(text) + 3) / 4; }

SharedLog::Shingles SharedLog::shingles(std::string_view content) {
    Shingles s;
    auto w = text::normalized_words(content);
    if (w.size() < 3) {
        s.short_text = true;
        s.items = std::move(w);
        return s;
    }
    for (std::size_t i = 0; i + 2 < w.size(); ++i) s.items.push_back(w[i] + ' ' + w[i + 1] + ' ' + w[i + 2]);
    std::sort(s.items.begin(), s.items.end());
    s.items.erase(std::unique(s.items.begin(), s.items.end()), s.items.end());
    return s;
}

bool SharedLog::near(const Shingles& a, const Shingles& b) {
    if (a.short_text || b.short_text) return a.short_text == b.short_text && a.items == b.items;
    std::size_t inter = 0;
    for (auto i = a.items.begin(), j = b.items.begin(); i != a.items.end() && j != b.items.end();) {
        int c = i->compare(*j);
        if (c == 0) ++inter, ++i, ++j;
        else if (c < 0) ++i;
        else ++j;
    }
    std::size_t uni = a.items.size() + b.items.size() - inter;
    return static_cast<double>(inter) >= kDuplicateJaccard * static_cast<double>(uni);
}

bool is_near_duplicate(std::string_view a, std::string_view b) {
    return SharedLog::near(SharedLog::shingles(a), SharedLog::shingles(b));
}

SharedLog::SharedLog(TokenBudget budget) : budget_(budget) {
    if (!budget_.valid()) throw std::invalid_argument("TokenBudget ordering violated");
}

SharedLog::SharedLog(const SharedLog& other) {
    std::lock_guard lk(other.mu_);
    entries_ = other.entries_;
    shingles_ = other.shingles_;
    next_step_ = other.next_step_;
    budget_ = other.budget_;
}

SharedLog& SharedLog::operator=(const SharedLog& other) {
    if (this == &other) return *this;
    std::scoped_lock lk(mu_, other.mu_);
    entries_ = other.entries_;
    shingles_ = other.shingles_;
    next_step_ = other.next_step_;
    budget_ = other.budget_;
    return *this;
}

SharedLog::SharedLog(SharedLog&& other) noexcept {
    std::lock_guard lk(other.mu_);
    entries_ = std::move(other.entries_);
    shingles_ = std::move(other.shingles_);
    next_step_ = other.next_step_;
    budget_ = other.budget_;
}

SharedLog& SharedLog::operator=(SharedLog&& other) noexcept {
    if (this == &other) return *this;
    std::scoped_lock lk(mu_, other.mu_);
    entries_ = std::move(other.entries_);
    shingles_ = std::move(other.shingles_);
    next_step_ = other.next_step_;
    budget_ = other.budget_;
    return *this;
}

AppendResult SharedLog::append(LogEntry entry, std::int64_t* step_out) {
    validate_entry(entry);
    std::lock_guard lk(mu_);
    auto sh = shingles(entry.content);
    for (const auto& other : shingles_)
        if (near(other, sh)) return AppendResult::RejectedDuplicate;
    shingles_.push_back(std::move(sh));
    entry.meta.step = next_step_++;
    if (step_out) *step_out = entry.meta.step;
    entries_.push_back(std::move(entry));
    return AppendResult::Accepted;
}

std::vector<LogEntry> SharedLog::entries() const {
    std::lock_guard lk(mu_);
    return entries_;
}

std::size_t SharedLog::size() const {
    std::lock_guard lk(mu_);
    return entries_.size();
}

bool SharedLog::empty() const { return size() == 0; }

std::optional<LogEntry> SharedLog::at_step(std::int64_t step) const {
    std::lock_guard lk(mu_);
    auto it = std::lower_bound(entries_.begin(), entries_.end(), step,
                               [](const LogEntry& e, std::int64_t s) { return e.meta.step < s; });
    if (it == entries_.end() || it->meta.step != step) return std::nullopt;
    return *it;
}

std::optional<LogEntry> SharedLog::latest_of(std::string_view agent) const {
    std::lock_guard lk(mu_);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
        if (it->agent == agent) return *it;
    return std::nullopt;
}

SharedLog SharedLog::from_entries(std::vector<LogEntry> entries, TokenBudget budget) {
    SharedLog log(budget);
    std::int64_t prev = -1;
    for (const auto& e : entries) {
        if (e.meta.step <= prev) throw ValidationError("step values are strictly increasing");
        prev = e.meta.step;
    }
    log.next_step_ = prev + 1;
    log.entries_ = std::move(entries);
    for (const auto& e : log.entries_) log.shingles_.push_back(shingles(e.content));
    return log;
}

std::string render_entry(const LogEntry& e) {
    std::ostringstream os;
    os << "[" << e.meta.step << "] " << e.agent << " (" << to_string(e.type) << "): " << e.content
       << citation_block(std::span<const LogEntry>(&e, 1));
    return os.str();
}

std::string render_view(std::span<const LogEntry> entries, const TokenBudget& budget, const SummarizeFn& summarize,
                        const TokenEstimator& est) {
    std::vector<std::string> lines;
    lines.reserve(entries.size());
    for (const auto& e : entries) lines.push_back(render_entry(e));
    std::string verbatim = join_lines(lines, 0);
    if (est(verbatim) <= budget.compress_trigger) return verbatim;

    // Size the fold assuming the summary uses its full cap, so summarize runs once.
    std::string worst_case_summary(budget.summary_cap * 4, 'x');
    std::size_t k = 1;
    for (; k < entries.size(); ++k) {
        std::string candidate = stub_line(entries.first(k), summarize ? worst_case_summary : std::string{});
        std::string rest = join_lines(lines, k);
        if (est(candidate + "\n" + rest) <= budget.target_after) break;
    }
    auto folded = entries.first(k);
    std::string summary;
    if (summarize) summary = cap_to_tokens(text::trim(summarize(folded)), budget.summary_cap, est);
    std::string out = stub_line(folded, summary);
    std::string rest = join_lines(lines, k);
    if (!rest.empty()) out += "\n" + rest;
    return out;
}

std::string render_view(const SharedLog& log, const SummarizeFn& summarize, const RenderOptions& opts) {
    auto entries = log.entries();
    return render_view(entries, opts.budget.value_or(log.budget()), summarize, opts.estimator);
}

std::optional<std::string> parse_answer(std::string_view content) {
    static const std::regex kMarker(R"(answer\s*:)", std::regex::icase);
    std::string s(content);
    std::size_t last_end = std::string::npos;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), kMarker); it != std::sregex_iterator(); ++it)
        last_end = static_cast<std::size_t>(it->position() + it->length());
    if (last_end != std::string::npos) {
        auto tail = text::trim(std::string_view(s).substr(last_end));
        if (!tail.empty()) return tail;
    }
    auto body = text::trim(s);
    if (text::starts_with_ci(body, "therefore") || text::starts_with_ci(body, "in conclusion")) {
        auto spans = text::sentence_spans(body);
        if (!spans.empty()) return body.substr(spans.front().begin, spans.front().end - spans.front().begin);
    }
    return std::nullopt;
}

std::string format_answer(std::string_view answer) { return "Answer: " + std::string(answer); }

Verdict parse_verdict(std::string_view content) {
    static const std::regex kOk(R"((^|[^A-Za-z0-9])OK([^A-Za-z0-9]|$))");
    std::string s(content);
    if (std::regex_search(s, kOk) || text::contains_ci(s, "no issues flagged")) return {true, {}};
    for (const auto& sp : text::sentence_spans(s)) {
        auto sentence = s.substr(sp.begin, sp.end - sp.begin);
        if (text::contains_ci(sentence, "flag") || text::contains_ci(sentence, "incorrect") ||
            text::contains_ci(sentence, "missing"))
            return {false, sentence};
    }
    return {false, "unparseable verdict"};
}

}  // namespace logboard
