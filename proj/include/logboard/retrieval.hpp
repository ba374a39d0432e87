#pragma once

// Input filtering: BM25 over passages, structural table slicing, sentence
// windows around matched spans, and numeral-preserving visual text.

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "logboard/sources.hpp"
#include "logboard/text.hpp"

namespace logboard::retrieval {

struct RetrievalConfig {
    double k1 = 1.2;
    double b = 0.75;
    std::size_t top_n = 3;
    std::size_t sentence_window_k = 2;

    bool valid() const { return k1 > 0.0 && b >= 0.0 && b <= 1.0 && top_n >= 1; }
};

class CorpusIndex {
public:
    struct Posting {
        std::size_t doc = 0;
        std::size_t tf = 0;
    };

    std::size_t doc_count() const { return doc_ids_.size(); }
    double avg_doc_length() const { return avgdl_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    std::size_t doc_length(std::size_t doc) const { return doc_len_.at(doc); }
    std::size_t document_frequency(const std::string& term) const;
    std::size_t term_frequency(std::size_t doc, const std::string& term) const;
    const std::vector<Posting>* postings(const std::string& term) const;

    friend CorpusIndex index(const std::vector<Passage>& passages);

private:
    std::vector<std::string> doc_ids_;
    std::vector<std::size_t> doc_len_;
    std::vector<std::unordered_map<std::string, std::size_t>> tf_;
    std::map<std::string, std::vector<Posting>> postings_;
    double avgdl_ = 0.0;
};

/// Throws SourceError on duplicate ids.
CorpusIndex index(const std::vector<Passage>& passages);

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;
    bool operator==(const ScoredDoc&) const = default;
};

/// Score-adjusting callback applied after BM25 (e.g. a dense reranker).
using Reranker = std::function<double(const std::string& doc_id, double bm25_score)>;

/// Okapi BM25 with idf = ln(1 + (N - df + 0.5) / (df + 0.5)) over the unique
/// query terms. Descending score, ties by ascending doc id, only score > 0.
std::vector<ScoredDoc> retrieve(const CorpusIndex& idx, std::string_view query, std::size_t n,
                                const RetrievalConfig& cfg = {}, const Reranker& rerank = {});

struct TableSlice {
    std::vector<std::size_t> kept_rows;
    std::vector<std::size_t> kept_cols;
};

inline constexpr std::size_t kFallbackRowCap = 50;

bool is_numeric_cell(std::string_view cell);
bool is_numeric_column(const Table& t, std::size_t col);

/// Keeps columns whose header overlaps the question plus every numeric
/// column; keeps rows with a cell token in the question, falling back to the
/// first 50 rows when none match.
TableSlice select_table_slice(const Table& table, std::string_view question);

/// Sentences covering `match` plus `k` on each side.
std::string truncate_span(std::string_view passage, text::Span match, std::size_t k);

/// Sentence of `passage` with the largest content-token overlap with `query`
/// (first on ties); nullopt when nothing overlaps.
std::optional<text::Span> best_sentence(std::string_view passage, std::string_view query);

/// "caption | OCR: ocr". Under a character budget the caption is cut first and
/// the OCR text collapses to its numeric tokens, which are never dropped.
std::string render_visual_text(const ImageRecord& image,
                               std::size_t max_chars = std::numeric_limits<std::size_t>::max());

}  // namespace logboard::retrieval
