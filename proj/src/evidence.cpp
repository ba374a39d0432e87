#include "logboard/evidence.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_set>

namespace logboard::evidence {

bool is_evidence(EntryType t) { return t == EntryType::Lookup || t == EntryType::Quote || t == EntryType::Visual; }

std::vector<text::Numeral> entry_numerals(const LogEntry& e) {
    auto nums = text::extract_numerals(e.content);
    std::vector<std::pair<std::size_t, std::size_t>> ids;
    for (const auto& p : e.meta.provenance) {
        std::string id;
        if (const auto* a = std::get_if<TableAnchor>(&p)) id = a->table_id;
        else if (const auto* d = std::get_if<DocSpan>(&p)) id = d->doc_id;
        else if (const auto* i = std::get_if<ImageRef>(&p)) id = i->image_id;
        if (id.empty()) continue;
        for (auto pos = e.content.find(id); pos != std::string::npos; pos = e.content.find(id, pos + 1))
            ids.emplace_back(pos, pos + id.size());
    }
    std::erase_if(nums, [&](const text::Numeral& n) {
        return std::any_of(ids.begin(), ids.end(),
                           [&](const auto& r) { return n.span.begin >= r.first && n.span.end <= r.second; });
    });
    return nums;
}

namespace {

std::vector<EvidenceNumeral> collect(std::span<const LogEntry> entries, bool (*pred)(EntryType)) {
    std::vector<EvidenceNumeral> out;
    for (const auto& e : entries) {
        if (!pred(e.type)) continue;
        for (auto& n : entry_numerals(e)) out.push_back({std::move(n), e.meta.step});
    }
    return out;
}

bool is_operand_type(EntryType t) { return t == EntryType::Lookup || t == EntryType::Visual; }

std::vector<std::int64_t> steps_of(std::int64_t a, std::int64_t b) {
    if (a == b) return {a};
    return {std::min(a, b), std::max(a, b)};
}

}  // namespace

std::vector<EvidenceNumeral> evidence_numerals(std::span<const LogEntry> entries) {
    return collect(entries, &is_evidence);
}

std::vector<EvidenceNumeral> arithmetic_operands(std::span<const LogEntry> entries) {
    return collect(entries, &is_operand_type);
}

std::vector<Derived> derive(const std::vector<EvidenceNumeral>& all) {
    std::vector<const EvidenceNumeral*> ops;
    for (const auto& e : all)
        if (!e.num.year_like) ops.push_back(&e);

    std::vector<Derived> out;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        for (std::size_t j = i + 1; j < ops.size(); ++j) {
            const auto& a = ops[i]->num;
            const auto& b = ops[j]->num;
            if (a.percent != b.percent) continue;
            auto steps = steps_of(ops[i]->step, ops[j]->step);
            out.push_back({b.value - a.value, a.percent, Derivation::Difference, steps});
            out.push_back({a.value + b.value, a.percent, Derivation::Sum, steps});
            if (a.value != 0.0) {
                out.push_back({b.value / a.value, false, Derivation::Ratio, steps});
                if (!a.percent)
                    out.push_back({(b.value - a.value) / std::fabs(a.value) * 100.0, true, Derivation::PercentChange,
                                   steps});
            }
        }
    }
    for (bool pct : {false, true}) {
        double total = 0.0;
        std::vector<std::int64_t> steps;
        std::size_t count = 0;
        for (const auto* op : ops) {
            if (op->num.percent != pct) continue;
            total += op->num.value;
            ++count;
            if (std::find(steps.begin(), steps.end(), op->step) == steps.end()) steps.push_back(op->step);
        }
        if (count > 2) out.push_back({total, pct, Derivation::Sum, steps});
    }
    return out;
}

bool literally_present(const text::Numeral& n, const std::vector<EvidenceNumeral>& ev) {
    return std::any_of(ev.begin(), ev.end(), [&](const EvidenceNumeral& e) {
        if (e.num.percent != n.percent) return false;
        if (text::numerically_equal(n.value, e.num.value)) return true;
        // Unsigned restatement of a signed evidence value ("fell 5" vs "-5").
        return !n.explicit_sign && text::numerically_equal(std::fabs(n.value), std::fabs(e.num.value));
    });
}

bool numerically_supported(const text::Numeral& n, const std::vector<EvidenceNumeral>& ev,
                           const std::vector<Derived>& derived) {
    if (literally_present(n, ev)) return true;
    return std::any_of(derived.begin(), derived.end(), [&](const Derived& d) {
        if (d.percent != n.percent) return false;
        if (text::matches_written(n, d.value)) return true;
        return !n.explicit_sign && text::matches_written(n, std::fabs(d.value));
    });
}

std::vector<std::string> capitalized_spans(std::string_view s) {
    static const std::unordered_set<std::string> kFunctionWords{
        "the", "a", "an", "therefore", "in", "answer", "it", "this", "that", "these", "those", "yes", "no",
        "based", "according", "so", "thus", "overall", "because", "due", "and", "but", "we", "i"};
    struct Word {
        std::size_t begin, end;
        bool capital;
        bool sentence_initial;
    };
    std::vector<Word> words;
    bool at_sentence_start = true;
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        if (std::isalpha(c)) {
            std::size_t b = i;
            while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '\'' || s[i] == '-')) ++i;
            words.push_back({b, i, std::isupper(c) != 0, at_sentence_start});
            at_sentence_start = false;
            continue;
        }
        if (std::isdigit(c)) {
            while (i < s.size() && std::isalnum(static_cast<unsigned char>(s[i]))) ++i;
            words.push_back({i, i, false, false});  // numerals break spans
            at_sentence_start = false;
            continue;
        }
        if (c == '.' || c == '?' || c == '!' || c == ':' || c == '\n') {
            bool decimal = c == '.' && i > 0 && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i - 1])) &&
                           std::isdigit(static_cast<unsigned char>(s[i + 1]));
            if (!decimal) at_sentence_start = true;
        }
        if (c == ',' || c == ';' || c == '(' || c == ')' || c == '"') words.push_back({i, i, false, false});
        ++i;
    }

    std::vector<std::string> spans;
    std::size_t w = 0;
    while (w < words.size()) {
        if (!words[w].capital) {
            ++w;
            continue;
        }
        std::size_t start = w;
        while (w < words.size() && words[w].capital) ++w;
        std::size_t count = w - start;
        std::string lone = text::to_lower(s.substr(words[start].begin, words[start].end - words[start].begin));
        if (count == 1 && words[start].sentence_initial && kFunctionWords.contains(lone)) continue;
        // Drop a leading function word from a multi-word span ("The Acme Corp").
        if (count > 1 && words[start].sentence_initial && kFunctionWords.contains(lone)) ++start;
        spans.emplace_back(s.substr(words[start].begin, words[w - 1].end - words[start].begin));
    }
    return spans;
}

}  // namespace logboard::evidence
