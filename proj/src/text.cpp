#include "logboard/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace logboard::text {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

// U+2212 MINUS SIGN
constexpr std::string_view kUnicodeMinus = "\xE2\x88\x92";

struct ScaleWord {
    std::string_view word;
    double scale;
};

constexpr std::array<ScaleWord, 7> kScaleWords{{
    {"thousand", 1e3},
    {"million", 1e6},
    {"billion", 1e9},
    {"mn", 1e6},
    {"bn", 1e9},
    {"mln", 1e6},
    {"percent", 0.0},  // sentinel: percent
}};

}  // namespace

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = lower(c);
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (prefix.size() > s.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (lower(s[i]) != lower(prefix[i])) return false;
    return true;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

std::vector<std::string> normalized_words(std::string_view s) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : s) {
        if (is_alnum(c)) {
            cur.push_back(lower(c));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (is_alnum(c)) {
            cur.push_back(lower(c));
            continue;
        }
        // Keep "5.2" and "1,200" intact: separator between two digits.
        bool between_digits = i > 0 && i + 1 < s.size() && is_digit(s[i - 1]) && is_digit(s[i + 1]);
        if (between_digits && c == '.') {
            cur.push_back('.');
            continue;
        }
        if (between_digits && c == ',') continue;
        flush();
    }
    flush();
    return out;
}

bool is_stopword(std::string_view w) {
    static const std::unordered_set<std::string_view> kStop{
        "a",    "an",   "the",  "of",    "to",   "in",    "on",   "for",  "and",  "or",
        "by",   "is",   "was",  "were",  "be",   "been",  "are",  "did",  "do",   "does",
        "what", "how",  "much", "many",  "which", "who",  "whom", "when", "where", "why",
        "from", "with", "as",   "at",    "that", "this",  "it",   "its",  "into", "than",
        "then", "there", "their", "according", "report", "about", "between", "any", "all", "if"};
    return kStop.contains(w);
}

std::vector<std::string> content_tokens(std::string_view s) {
    auto toks = tokenize(s);
    std::erase_if(toks, [](const std::string& t) { return is_stopword(t); });
    return toks;
}

std::vector<Span> sentence_spans(std::string_view s) {
    std::vector<Span> spans;
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        while (i < n && is_space(s[i])) ++i;
        if (i >= n) break;
        std::size_t start = i;
        std::size_t end = n;
        for (std::size_t j = i; j < n; ++j) {
            char c = s[j];
            if ((c == '.' || c == '?' || c == '!') && (j + 1 == n || is_space(s[j + 1]))) {
                end = j + 1;
                break;
            }
        }
        // Trailing whitespace of the final unterminated sentence is not part of it.
        std::size_t e = end;
        while (e > start && is_space(s[e - 1])) --e;
        spans.push_back({start, e});
        i = end;
    }
    return spans;
}

std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (char c : s)
        if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
    return n;
}

std::vector<Numeral> extract_numerals(std::string_view s) {
    std::vector<Numeral> out;
    const std::size_t n = s.size();
    std::size_t i = 0;
    while (i < n) {
        if (!is_digit(s[i])) {
            ++i;
            continue;
        }
        // Digits glued to letters on the left ("Q3", "FY2019") are identifiers.
        if (i > 0 && (is_alpha(s[i - 1]) || is_digit(s[i - 1]))) {
            ++i;
            continue;
        }

        Numeral num;
        std::size_t begin = i;

        // Look back for currency and sign.
        std::size_t k = begin;
        if (k > 0 && (s[k - 1] == '$' || s[k - 1] == '\xA3')) {
            num.currency = true;
            --k;
        } else if (k >= 2 && s.substr(k - 2, 2) == "\xC2\xA3") {
            num.currency = true;
            k -= 2;
        } else if (k >= 3 && s.substr(k - 3, 3) == "\xE2\x82\xAC") {
            num.currency = true;
            k -= 3;
        }
        auto sign_allowed_before = [&](std::size_t pos) {
            return pos == 0 || is_space(s[pos - 1]) || s[pos - 1] == '(' || s[pos - 1] == '[' ||
                   s[pos - 1] == ':' || s[pos - 1] == '"' || s[pos - 1] == '\'';
        };
        double sign = 1.0;
        if (k > 0 && (s[k - 1] == '-' || s[k - 1] == '+') && sign_allowed_before(k - 1)) {
            sign = s[k - 1] == '-' ? -1.0 : 1.0;
            num.explicit_sign = true;
            --k;
        } else if (k >= kUnicodeMinus.size() && s.substr(k - kUnicodeMinus.size(), kUnicodeMinus.size()) == kUnicodeMinus &&
                   sign_allowed_before(k - kUnicodeMinus.size())) {
            sign = -1.0;
            num.explicit_sign = true;
            k -= kUnicodeMinus.size();
        }
        begin = k;

        // Integer part with optional thousands separators.
        std::string digits;
        bool had_comma = false;
        while (i < n) {
            if (is_digit(s[i])) {
                digits.push_back(s[i]);
                ++i;
            } else if (s[i] == ',' && !digits.empty() && i + 3 < n && is_digit(s[i + 1]) &&
                       is_digit(s[i + 2]) && is_digit(s[i + 3]) && (i + 4 >= n || !is_digit(s[i + 4]))) {
                had_comma = true;
                ++i;
            } else {
                break;
            }
        }
        std::string frac;
        if (i + 1 < n && s[i] == '.' && is_digit(s[i + 1])) {
            ++i;
            while (i < n && is_digit(s[i])) frac.push_back(s[i++]);
        }
        num.decimals = static_cast<int>(frac.size());
        num.mantissa = std::stod(frac.empty() ? digits : digits + "." + frac);

        // Suffixes: %, M/B/K letters, scale words.
        std::size_t end = i;
        if (i < n && s[i] == '%') {
            num.percent = true;
            end = i + 1;
        } else if (i < n && (s[i] == 'M' || s[i] == 'm' || s[i] == 'B' || s[i] == 'b' || s[i] == 'K' || s[i] == 'k') &&
                   (i + 1 >= n || !is_alpha(s[i + 1]))) {
            char c = lower(s[i]);
            num.scale = c == 'm' ? 1e6 : c == 'b' ? 1e9 : 1e3;
            end = i + 1;
        } else {
            std::size_t j = i;
            while (j < n && s[j] == ' ') ++j;
            if (j > i || (j < n && is_alpha(s[j]))) {
                std::size_t w = j;
                while (w < n && is_alpha(s[w])) ++w;
                std::string word = to_lower(s.substr(j, w - j));
                for (const auto& sw : kScaleWords) {
                    if (word == sw.word) {
                        if (sw.scale == 0.0)
                            num.percent = true;
                        else
                            num.scale = sw.scale;
                        end = w;
                        break;
                    }
                }
            }
        }
        i = std::max(i, end);

        num.value = sign * num.mantissa * num.scale;
        num.year_like = !num.currency && !num.percent && num.scale == 1.0 && frac.empty() && !had_comma &&
                        !num.explicit_sign && digits.size() == 4 && num.mantissa >= 1900 && num.mantissa <= 2100;
        num.span = {begin, end};
        num.text = std::string(s.substr(begin, end - begin));
        out.push_back(std::move(num));
    }
    return out;
}

std::string canonical(const Numeral& n) {
    char buf[64];
    double v = n.value;
    if (v == 0.0) v = 0.0;  // fold -0
    std::snprintf(buf, sizeof buf, "%.12g", v);
    std::string s = buf;
    if (s.find('e') != std::string::npos) {
        std::snprintf(buf, sizeof buf, "%.0f", v);
        s = buf;
    }
    if (n.percent) s += "%";
    return s;
}

bool numerically_equal(double a, double b) {
    return std::fabs(a - b) <= 1e-6 * std::max(1.0, std::fabs(b));
}

bool matches_written(const Numeral& claim, double value) {
    if (numerically_equal(claim.value, value)) return true;
    if (claim.scale <= 0.0) return false;
    double in_claim_units = value / claim.scale;
    double p = std::pow(10.0, claim.decimals);
    double rounded = std::round(in_claim_units * p) / p;
    double written = claim.value / claim.scale;
    return numerically_equal(written, rounded);
}

bool same_quantity(const Numeral& a, const Numeral& b) {
    return a.percent == b.percent && numerically_equal(a.value, b.value);
}

}  // namespace logboard::text
