#pragma once

// Shared text helpers: normalization, tokenization, sentence splitting and
// numeral extraction. Every component that compares evidence goes through
// these so that "$5M", "5 million" and "5,000,000" agree everywhere.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace logboard::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool contains_ci(std::string_view haystack, std::string_view needle);

/// Lowercased alphanumeric words; every other byte is a separator.
std::vector<std::string> normalized_words(std::string_view s);

/// Retrieval tokenizer: lowercase, split on non-alphanumerics, but numerals
/// such as "5.2" or "1,200" stay one token (commas are dropped).
std::vector<std::string> tokenize(std::string_view s);

bool is_stopword(std::string_view lowered_word);

/// tokenize() minus stopwords.
std::vector<std::string> content_tokens(std::string_view s);

/// Half-open byte range [begin, end).
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool operator==(const Span&) const = default;
};

/// Sentence boundaries are '.', '?' or '!' followed by whitespace (or end of
/// text). Leading whitespace is excluded from each span. Decimal points never
/// terminate a sentence since they are followed by a digit.
std::vector<Span> sentence_spans(std::string_view s);

/// Number of UTF-8 code points.
std::size_t utf8_length(std::string_view s);

struct Numeral {
    double value = 0.0;     // signed, scale applied ("$5M" -> 5e6)
    double mantissa = 0.0;  // unsigned number as written ("5")
    double scale = 1.0;     // 1, 1e3, 1e6, 1e9
    bool percent = false;
    bool currency = false;
    bool explicit_sign = false;
    bool year_like = false;  // plain integer in [1900, 2100]
    int decimals = 0;        // digits written after the decimal point
    Span span;
    std::string text;
};

std::vector<Numeral> extract_numerals(std::string_view s);

/// Canonical string used by exact-match normalization ("5000000", "12.5%").
std::string canonical(const Numeral& n);

/// Relative comparison with tolerance 1e-6 * max(1, |b|).
bool numerically_equal(double a, double b);

/// True when `claim` equals `value` either within numerically_equal or once
/// `value` is rounded to the number of decimals written in the claim.
bool matches_written(const Numeral& claim, double value);

/// Same quantity: equal value and same percent-ness.
bool same_quantity(const Numeral& a, const Numeral& b);

}  // namespace logboard::text
