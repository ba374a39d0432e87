#include "logboard/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace logboard::retrieval {

std::size_t CorpusIndex::document_frequency(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

std::size_t CorpusIndex::term_frequency(std::size_t doc, const std::string& term) const {
    const auto& m = tf_.at(doc);
    auto it = m.find(term);
    return it == m.end() ? 0 : it->second;
}

const std::vector<CorpusIndex::Posting>* CorpusIndex::postings(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

CorpusIndex index(const std::vector<Passage>& passages) {
    CorpusIndex idx;
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto& p : passages) {
        if (!seen.insert(p.id).second) throw SourceError("duplicate passage id: " + p.id);
        std::size_t doc = idx.doc_ids_.size();
        idx.doc_ids_.push_back(p.id);
        auto toks = text::tokenize(p.text);
        idx.doc_len_.push_back(toks.size());
        total += toks.size();
        auto& tf = idx.tf_.emplace_back();
        for (const auto& t : toks) ++tf[t];
        for (const auto& [term, f] : tf) idx.postings_[term].push_back({doc, f});
    }
    // Postings are built in doc order per term already; keep them sorted.
    for (auto& [term, list] : idx.postings_)
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.doc < b.doc; });
    idx.avgdl_ = passages.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(passages.size());
    return idx;
}

std::vector<ScoredDoc> retrieve(const CorpusIndex& idx, std::string_view query, std::size_t n,
                                const RetrievalConfig& cfg, const Reranker& rerank) {
    std::vector<ScoredDoc> out;
    if (n == 0 || idx.doc_count() == 0) return out;
    auto qt = text::tokenize(query);
    std::set<std::string> terms(qt.begin(), qt.end());

    std::vector<double> scores(idx.doc_count(), 0.0);
    const double N = static_cast<double>(idx.doc_count());
    for (const auto& term : terms) {
        const auto* plist = idx.postings(term);
        if (!plist) continue;
        const double df = static_cast<double>(plist->size());
        const double idf = std::log(1.0 + (N - df + 0.5) / (df + 0.5));
        for (const auto& post : *plist) {
            const double tf = static_cast<double>(post.tf);
            const double norm = 1.0 - cfg.b + cfg.b * static_cast<double>(idx.doc_length(post.doc)) / idx.avg_doc_length();
            scores[post.doc] += idf * tf * (cfg.k1 + 1.0) / (tf + cfg.k1 * norm);
        }
    }
    for (std::size_t d = 0; d < scores.size(); ++d) {
        double s = scores[d];
        if (s <= 0.0) continue;
        if (rerank) s = rerank(idx.doc_ids()[d], s);
        if (s > 0.0) out.push_back({idx.doc_ids()[d], s});
    }
    std::sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (out.size() > n) out.resize(n);
    return out;
}

bool is_numeric_cell(std::string_view cell) {
    auto nums = text::extract_numerals(cell);
    if (nums.size() != 1) return false;
    const auto& sp = nums.front().span;
    for (std::size_t i = 0; i < cell.size(); ++i) {
        if (i >= sp.begin && i < sp.end) continue;
        if (std::isalnum(static_cast<unsigned char>(cell[i]))) return false;
    }
    return true;
}

bool is_numeric_column(const Table& t, std::size_t col) {
    bool any = false;
    for (const auto& row : t.rows) {
        auto cell = text::trim(row.at(col));
        if (cell.empty()) continue;
        if (!is_numeric_cell(cell)) return false;
        any = true;
    }
    return any;
}

TableSlice select_table_slice(const Table& table, std::string_view question) {
    TableSlice slice;
    auto qt = text::content_tokens(question);
    std::set<std::string> q(qt.begin(), qt.end());
    auto overlaps = [&](std::string_view s) {
        for (const auto& t : text::tokenize(s))
            if (q.contains(t)) return true;
        return false;
    };
    for (std::size_t c = 0; c < table.header.size(); ++c)
        if (overlaps(table.header[c]) || is_numeric_column(table, c)) slice.kept_cols.push_back(c);
    for (std::size_t r = 0; r < table.rows.size(); ++r)
        if (std::any_of(table.rows[r].begin(), table.rows[r].end(), overlaps)) slice.kept_rows.push_back(r);
    if (slice.kept_rows.empty())
        for (std::size_t r = 0; r < std::min(table.rows.size(), kFallbackRowCap); ++r) slice.kept_rows.push_back(r);
    return slice;
}

std::string truncate_span(std::string_view passage, text::Span match, std::size_t k) {
    auto spans = text::sentence_spans(passage);
    if (spans.empty()) return {};
    std::size_t first = spans.size();
    std::size_t last = 0;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        bool hit = match.end > match.begin ? (spans[i].begin < match.end && match.begin < spans[i].end)
                                           : (match.begin >= spans[i].begin && match.begin < spans[i].end);
        if (hit) {
            first = std::min(first, i);
            last = std::max(last, i);
        }
    }
    if (first == spans.size()) {
        // Range sits in inter-sentence whitespace: anchor on the next sentence.
        first = spans.size() - 1;
        for (std::size_t i = 0; i < spans.size(); ++i)
            if (spans[i].begin >= match.begin) {
                first = i;
                break;
            }
        last = first;
    }
    std::size_t lo = first >= k ? first - k : 0;
    std::size_t hi = std::min(spans.size() - 1, last + k);
    return std::string(passage.substr(spans[lo].begin, spans[hi].end - spans[lo].begin));
}

std::optional<text::Span> best_sentence(std::string_view passage, std::string_view query) {
    auto qt = text::content_tokens(query);
    std::set<std::string> q(qt.begin(), qt.end());
    std::optional<text::Span> best;
    std::size_t best_score = 0;
    for (const auto& sp : text::sentence_spans(passage)) {
        auto toks = text::content_tokens(passage.substr(sp.begin, sp.end - sp.begin));
        std::set<std::string> uniq(toks.begin(), toks.end());
        std::size_t score = 0;
        for (const auto& t : uniq) score += q.contains(t);
        if (score > best_score) {
            best_score = score;
            best = sp;
        }
    }
    return best;
}

std::string render_visual_text(const ImageRecord& image, std::size_t max_chars) {
    const std::string caption = text::trim(image.caption);
    const std::string ocr = text::trim(image.ocr_text);
    auto compose = [](const std::string& cap, const std::string& o) {
        if (o.empty()) return cap;
        if (cap.empty()) return "OCR: " + o;
        return cap + " | OCR: " + o;
    };
    std::string full = compose(caption, ocr);
    if (full.size() <= max_chars) return full;

    std::string ocr_part = ocr;
    if (compose("", ocr_part).size() > max_chars) {
        std::string nums;
        for (const auto& n : text::extract_numerals(ocr)) {
            if (!nums.empty()) nums.push_back(' ');
            nums += n.text;
        }
        ocr_part = nums;
    }
    std::size_t used = ocr_part.empty() ? 0 : compose("", ocr_part).size() + 3;  // " | "
    std::string cap = caption;
    if (used >= max_chars) {
        cap.clear();
    } else if (cap.size() > max_chars - used) {
        cap.resize(max_chars - used);
        auto sp = cap.find_last_of(' ');
        if (sp != std::string::npos && sp > 0) cap.resize(sp);
        while (!cap.empty() && (static_cast<unsigned char>(cap.back()) & 0xC0) == 0x80) cap.pop_back();
        if (!cap.empty() && (static_cast<unsigned char>(cap.back()) & 0xC0) == 0xC0) cap.pop_back();
    }
    return compose(cap, ocr_part);
}

}  // namespace logboard::retrieval
