#include "logboard/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "logboard/evidence.hpp"
#include "logboard/text.hpp"
#include "logboard/trace_io.hpp"

namespace logboard::harness {

using nlohmann::json;
using nlohmann::ordered_json;

// -- faults -------------------------------------------------------------------

std::string_view to_string(FaultType t) {
    switch (t) {
        case FaultType::MissingRow: return "MissingRow";
        case FaultType::RowOffByOne: return "RowOffByOne";
        case FaultType::ArithmeticCorruption: return "ArithmeticCorruption";
        case FaultType::OcrMisread: return "OcrMisread";
        case FaultType::ContradictionInjection: return "ContradictionInjection";
    }
    return "?";
}

std::optional<FaultType> fault_type_from_string(std::string_view s) {
    static const std::vector<std::pair<std::string_view, FaultType>> kNames{
        {"missingrow", FaultType::MissingRow},
        {"missing-row", FaultType::MissingRow},
        {"missing", FaultType::MissingRow},
        {"rowoffbyone", FaultType::RowOffByOne},
        {"off-by-one", FaultType::RowOffByOne},
        {"offbyone", FaultType::RowOffByOne},
        {"arithmeticcorruption", FaultType::ArithmeticCorruption},
        {"arithmetic", FaultType::ArithmeticCorruption},
        {"ocrmisread", FaultType::OcrMisread},
        {"ocr", FaultType::OcrMisread},
        {"contradictioninjection", FaultType::ContradictionInjection},
        {"contradiction", FaultType::ContradictionInjection},
    };
    auto lower = text::to_lower(s);
    for (const auto& [name, t] : kNames)
        if (lower == name) return t;
    return std::nullopt;
}

ordered_json to_json(const FaultLabel& l) {
    ordered_json j;
    j["record"] = l.record;
    j["step"] = l.step ? ordered_json(*l.step) : ordered_json(nullptr);
    j["source_id"] = l.source_id;
    j["row"] = l.row ? ordered_json(*l.row) : ordered_json(nullptr);
    j["type"] = std::string(to_string(l.type));
    j["original"] = l.original;
    j["corrupted"] = l.corrupted;
    j["restore_markers"] = l.restore_markers;
    return j;
}

std::size_t fault_count(double rate, std::size_t n) {
    return static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
}

namespace {

// Uniform draw in [0, m) by rejection, independent of the standard library's
// distribution implementation.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t m) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % m;
    for (;;) {
        std::uint64_t v = rng();
        if (v < limit) return v % m;
    }
}

std::vector<text::Numeral> plain_numerals(const LogEntry& e) {
    auto nums = evidence::entry_numerals(e);
    std::erase_if(nums, [](const text::Numeral& n) { return n.year_like; });
    return nums;
}

std::vector<text::Numeral> plain_numerals(std::string_view s) {
    auto nums = text::extract_numerals(s);
    std::erase_if(nums, [](const text::Numeral& n) { return n.year_like; });
    return nums;
}

// "$55M" -> "$56M", "5.2" -> "6.2", "1,200" -> "1201".
std::string bump_numeral_text(const text::Numeral& n) {
    const auto& t = n.text;
    auto first = t.find_first_of("0123456789");
    auto last = t.find_last_of("0123456789");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", n.decimals, n.mantissa + 1.0);
    return t.substr(0, first) + buf + t.substr(last + 1);
}

std::string source_of(const Provenance& p) {
    if (const auto* a = std::get_if<TableAnchor>(&p)) return a->table_id;
    if (const auto* d = std::get_if<DocSpan>(&p)) return d->doc_id;
    if (const auto* i = std::get_if<ImageRef>(&p)) return i->image_id;
    return {};
}

const TableAnchor* first_anchor(const LogEntry& e) {
    for (const auto& p : e.meta.provenance)
        if (const auto* a = std::get_if<TableAnchor>(&p)) return a;
    return nullptr;
}

void set_source(FaultLabel& l, const LogEntry& e) {
    if (const auto* a = first_anchor(e)) {
        l.source_id = a->table_id;
        l.row = a->row;
    } else if (!e.meta.provenance.empty()) {
        l.source_id = source_of(e.meta.provenance.front());
    }
}

std::vector<std::string> numeral_texts(std::string_view s) {
    std::vector<std::string> out;
    for (const auto& n : plain_numerals(s)) out.push_back(n.text);
    return out;
}

std::string citations(const LogEntry& e) {
    std::string s;
    for (const auto& p : e.meta.provenance) {
        auto c = citation(p);
        if (c.empty()) continue;
        if (!s.empty()) s += "; ";
        s += c;
    }
    return s;
}

// First two numerals of different text: the pair a stacked-bar misread swaps.
std::optional<std::pair<text::Numeral, text::Numeral>> swappable_pair(std::string_view s) {
    auto nums = plain_numerals(s);
    for (std::size_t i = 0; i < nums.size(); ++i)
        for (std::size_t j = i + 1; j < nums.size(); ++j)
            if (nums[i].text != nums[j].text) return std::make_pair(nums[i], nums[j]);
    return std::nullopt;
}

std::string swap_spans(std::string s, const text::Numeral& a, const text::Numeral& b) {
    s.replace(b.span.begin, b.span.end - b.span.begin, a.text);
    s.replace(a.span.begin, a.span.end - a.span.begin, b.text);
    return s;
}

}  // namespace

std::vector<std::size_t> choose_targets(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k > n) throw std::invalid_argument("cannot choose more targets than exist");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(bounded(rng, n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

bool eligible(const LogEntry& e, FaultType type) {
    switch (type) {
        case FaultType::MissingRow:
        case FaultType::RowOffByOne: return e.type == EntryType::Lookup && first_anchor(e) != nullptr;
        case FaultType::ArithmeticCorruption:
            return (e.type == EntryType::Lookup || e.type == EntryType::Visual) && !plain_numerals(e).empty();
        case FaultType::OcrMisread: return e.type == EntryType::Visual && swappable_pair(e.content).has_value();
        case FaultType::ContradictionInjection:
            return e.type == EntryType::Lookup && !plain_numerals(e).empty();
    }
    return false;
}

Mutation mutate(const LogEntry& e, FaultType type) {
    if (!eligible(e, type))
        throw std::invalid_argument("entry not eligible for " + std::string(to_string(type)));
    Mutation m;
    m.label.type = type;
    set_source(m.label, e);
    switch (type) {
        case FaultType::MissingRow: {
            m.label.original = e.content;
            m.label.corrupted = "<entry removed>";
            m.label.restore_markers = numeral_texts(e.content);
            break;
        }
        case FaultType::RowOffByOne: {
            LogEntry c = e;
            for (auto& p : c.meta.provenance)
                if (auto* a = std::get_if<TableAnchor>(&p)) ++a->row;
            m.label.original = citations(e);
            m.label.corrupted = citations(c);
            m.label.restore_markers = numeral_texts(e.content);
            m.entries.push_back(std::move(c));
            m.target = 0;
            break;
        }
        case FaultType::ArithmeticCorruption: {
            auto n = plain_numerals(e).back();
            LogEntry c = e;
            auto bumped = bump_numeral_text(n);
            c.content.replace(n.span.begin, n.span.end - n.span.begin, bumped);
            m.label.original = n.text;
            m.label.corrupted = bumped;
            m.label.restore_markers = {n.text};
            m.entries.push_back(std::move(c));
            m.target = 0;
            break;
        }
        case FaultType::OcrMisread: {
            auto [a, b] = *swappable_pair(e.content);
            LogEntry c = e;
            c.content = swap_spans(e.content, a, b);
            m.label.original = e.content.substr(a.span.begin, b.span.end - a.span.begin);
            m.label.corrupted = c.content.substr(a.span.begin, c.content.size() - e.content.size() + b.span.end - a.span.begin);
            m.label.restore_markers = {m.label.original};
            m.entries.push_back(std::move(c));
            m.target = 0;
            break;
        }
        case FaultType::ContradictionInjection: {
            auto n = plain_numerals(e).back();
            auto bumped = bump_numeral_text(n);
            LogEntry q;
            q.agent = agent_names::kContext;
            q.type = EntryType::Quote;
            q.content = "A separate report states the figure was " + bumped + ".";
            q.meta.round = e.meta.round;
            q.meta.ts_ms = e.meta.ts_ms;
            q.meta.provenance.emplace_back(DocSpan{"injected:" + m.label.source_id, 0, q.content.size()});
            m.label.source_id = "injected:" + m.label.source_id;
            m.label.row.reset();
            m.label.original = n.text;
            m.label.corrupted = bumped;
            m.label.restore_markers = {n.text};
            m.entries.push_back(e);
            m.entries.push_back(std::move(q));
            m.target = 1;
            break;
        }
    }
    return m;
}

InjectedLog inject_faults(const std::vector<LogEntry>& entries, const FaultSpec& spec) {
    if (!spec.valid()) throw std::invalid_argument("fault rate must be in (0, 1]");
    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (eligible(entries[i], spec.type)) targets.push_back(i);
    const auto k = fault_count(spec.rate, targets.size());
    if (k == 0)
        throw NoFaultTargets("no " + std::string(to_string(spec.type)) + " targets selected among " +
                             std::to_string(targets.size()) + " eligible entries");
    auto chosen = choose_targets(targets.size(), k, spec.seed);
    std::set<std::size_t> hit;
    for (auto c : chosen) hit.insert(targets[c]);

    InjectedLog out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!hit.contains(i)) {
            out.entries.push_back(entries[i]);
            out.entries.back().meta.step = static_cast<std::int64_t>(out.entries.size() - 1);
            continue;
        }
        auto m = mutate(entries[i], spec.type);
        std::size_t base = out.entries.size();
        for (auto& e : m.entries) {
            out.entries.push_back(std::move(e));
            out.entries.back().meta.step = static_cast<std::int64_t>(out.entries.size() - 1);
        }
        if (m.target) m.label.step = static_cast<std::int64_t>(base + *m.target);
        out.labels.push_back(std::move(m.label));
    }
    return out;
}

InjectedSources inject_faults(const SourceBundle& sources, const FaultSpec& spec) {
    if (!spec.valid()) throw std::invalid_argument("fault rate must be in (0, 1]");
    struct Target {
        std::size_t item;
        std::size_t row;
    };
    std::vector<Target> targets;
    auto numeric_col = [](const Table& t, std::size_t r) -> std::optional<std::size_t> {
        for (std::size_t c = t.header.size(); c-- > 0;)
            if (!plain_numerals(t.rows[r][c]).empty()) return c;
        return std::nullopt;
    };
    if (spec.type == FaultType::OcrMisread) {
        for (std::size_t i = 0; i < sources.images.size(); ++i)
            if (swappable_pair(sources.images[i].ocr_text)) targets.push_back({i, 0});
    } else {
        for (std::size_t i = 0; i < sources.tables.size(); ++i) {
            const auto& t = sources.tables[i];
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                if (spec.type == FaultType::RowOffByOne && t.rows.size() < 2) continue;
                if ((spec.type == FaultType::ArithmeticCorruption || spec.type == FaultType::ContradictionInjection) &&
                    !numeric_col(t, r))
                    continue;
                targets.push_back({i, r});
            }
        }
    }
    const auto k = fault_count(spec.rate, targets.size());
    if (k == 0)
        throw NoFaultTargets("no " + std::string(to_string(spec.type)) + " targets selected among " +
                             std::to_string(targets.size()) + " eligible source items");
    auto chosen = choose_targets(targets.size(), k, spec.seed);

    InjectedSources out{sources, {}};
    std::map<std::size_t, std::vector<std::size_t>> removed;  // table -> rows, applied last
    for (auto c : chosen) {
        const auto tg = targets[c];
        FaultLabel l;
        l.type = spec.type;
        l.row = tg.row;
        switch (spec.type) {
            case FaultType::OcrMisread: {
                auto& img = out.sources.images[tg.item];
                auto [a, b] = *swappable_pair(img.ocr_text);
                l.source_id = img.id;
                l.row.reset();
                l.original = img.ocr_text;
                img.ocr_text = swap_spans(img.ocr_text, a, b);
                l.corrupted = img.ocr_text;
                l.restore_markers = {l.original.substr(a.span.begin, b.span.end - a.span.begin)};
                break;
            }
            case FaultType::MissingRow: {
                const auto& t = out.sources.tables[tg.item];
                l.source_id = t.id;
                for (const auto& cell : t.rows[tg.row]) l.original += (l.original.empty() ? "" : " | ") + cell;
                l.corrupted = "<row removed>";
                l.restore_markers = numeral_texts(l.original);
                removed[tg.item].push_back(tg.row);
                break;
            }
            case FaultType::RowOffByOne: {
                auto& t = out.sources.tables[tg.item];
                std::size_t other = tg.row + 1 < t.rows.size() ? tg.row + 1 : tg.row - 1;
                l.source_id = t.id;
                auto join = [](const std::vector<std::string>& row) {
                    std::string s;
                    for (const auto& cell : row) s += (s.empty() ? "" : " | ") + cell;
                    return s;
                };
                l.original = join(t.rows[tg.row]);
                std::swap(t.rows[tg.row], t.rows[other]);
                l.corrupted = join(t.rows[tg.row]);
                l.restore_markers = numeral_texts(l.original);
                break;
            }
            case FaultType::ArithmeticCorruption: {
                auto& t = out.sources.tables[tg.item];
                auto col = *numeric_col(t, tg.row);
                auto& cell = t.rows[tg.row][col];
                auto n = plain_numerals(cell).back();
                auto bumped = bump_numeral_text(n);
                l.source_id = t.id;
                l.original = cell;
                cell.replace(n.span.begin, n.span.end - n.span.begin, bumped);
                l.corrupted = cell;
                l.restore_markers = {n.text};
                break;
            }
            case FaultType::ContradictionInjection: {
                const auto& t = out.sources.tables[tg.item];
                auto col = *numeric_col(t, tg.row);
                const auto& cell = t.rows[tg.row][col];
                auto n = plain_numerals(cell).back();
                Passage p;
                p.id = "injected-" + t.id + "-" + std::to_string(tg.row);
                p.text = t.header[col] + " for " + t.rows[tg.row][0] + " was " + bump_numeral_text(n) + ".";
                l.source_id = p.id;
                l.original = cell;
                l.corrupted = p.text;
                l.restore_markers = {n.text};
                out.sources.passages.push_back(std::move(p));
                break;
            }
        }
        l.record = 0;
        out.labels.push_back(std::move(l));
    }
    for (auto& [item, rows] : removed) {
        auto& t = out.sources.tables[item];
        std::sort(rows.rbegin(), rows.rend());
        for (auto r : rows) t.rows.erase(t.rows.begin() + static_cast<std::ptrdiff_t>(r));
    }
    return out;
}

CatchRepair catch_and_repair(const std::vector<FaultLabel>& labels, const std::vector<LogEntry>& final_log,
                             bool final_answer_ok) {
    CatchRepair cr;
    cr.labels = labels.size();
    std::map<std::int64_t, const LogEntry*> by_step;
    for (const auto& e : final_log) by_step[e.meta.step] = &e;

    auto implicates = [&](const FaultLabel& l, const std::vector<std::int64_t>& steps) {
        for (auto st : steps) {
            if (l.step && st == *l.step) return true;
            auto it = by_step.find(st);
            if (it == by_step.end() || l.source_id.empty()) continue;
            for (const auto& p : it->second->meta.provenance) {
                if (source_of(p) != l.source_id) continue;
                const auto* a = std::get_if<TableAnchor>(&p);
                if (!l.row || !a || a->row == *l.row) return true;
            }
        }
        return false;
    };

    for (const auto& l : labels) {
        std::optional<std::int64_t> flag_step;
        for (const auto& e : final_log) {
            if (e.type != EntryType::Flag) continue;
            if (implicates(l, implicated_steps(e.content))) {
                flag_step = e.meta.step;
                break;
            }
        }
        cr.catching_flag.push_back(flag_step);
        if (!flag_step) continue;
        ++cr.caught;
        if (!final_answer_ok) continue;
        bool restored = std::any_of(final_log.begin(), final_log.end(), [&](const LogEntry& e) {
            if (e.meta.step <= *flag_step || !evidence::is_evidence(e.type)) return false;
            return std::all_of(l.restore_markers.begin(), l.restore_markers.end(),
                               [&](const std::string& m) { return e.content.find(m) != std::string::npos; });
        });
        if (restored) ++cr.repaired;
    }
    return cr;
}

// -- metrics --------------------------------------------------------------------

namespace {

std::vector<std::string> answer_tokens(std::string_view s) {
    auto nums = text::extract_numerals(s);
    std::vector<std::string> out;
    std::size_t pos = 0;
    auto words = [&](std::string_view seg) {
        for (auto& w : text::normalized_words(seg)) out.push_back(std::move(w));
    };
    for (const auto& n : nums) {
        words(s.substr(pos, n.span.begin - pos));
        out.push_back(text::canonical(n));
        pos = n.span.end;
    }
    words(s.substr(pos));
    return out;
}

double f1(double overlap, std::size_t a, std::size_t b) {
    if (overlap <= 0.0) return 0.0;
    double p = overlap / static_cast<double>(a);
    double r = overlap / static_cast<double>(b);
    return 2.0 * p * r / (p + r);
}

template <typename T>
double ngram_f1(const std::vector<T>& a, const std::vector<T>& b) {
    if (a.empty() && b.empty()) return 1.0;
    if (a.empty() || b.empty()) return 0.0;
    std::map<T, int> ca, cb;
    for (const auto& x : a) ++ca[x];
    for (const auto& x : b) ++cb[x];
    double overlap = 0.0;
    for (const auto& [k, v] : ca)
        if (auto it = cb.find(k); it != cb.end()) overlap += std::min(v, it->second);
    return f1(overlap, a.size(), b.size());
}

std::vector<std::pair<std::string, std::string>> bigrams(const std::vector<std::string>& t) {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 1; i < t.size(); ++i) out.emplace_back(t[i - 1], t[i]);
    return out;
}

std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

std::string normalize_answer(std::string_view s) {
    std::string out;
    for (const auto& t : answer_tokens(s)) {
        if (t == "a" || t == "an" || t == "the") continue;
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

bool exact_match(std::string_view pred, const std::vector<std::string>& golds) {
    auto p = normalize_answer(pred);
    return std::any_of(golds.begin(), golds.end(), [&](const std::string& g) { return normalize_answer(g) == p; });
}

Rouge rouge(std::string_view pred, std::string_view gold) {
    auto a = answer_tokens(pred);
    auto b = answer_tokens(gold);
    Rouge r;
    r.rouge1 = ngram_f1(a, b);
    auto ba = bigrams(a), bb = bigrams(b);
    if (ba.empty() && bb.empty())
        r.rouge2 = a == b ? 1.0 : 0.0;
    else
        r.rouge2 = ngram_f1(ba, bb);
    if (a.empty() && b.empty())
        r.rougeL = 1.0;
    else if (a.empty() || b.empty())
        r.rougeL = 0.0;
    else
        r.rougeL = f1(static_cast<double>(lcs(a, b)), a.size(), b.size());
    return r;
}

double log_groundedness(std::string_view answer, const std::vector<LogEntry>& log) {
    const auto ev = evidence::evidence_numerals(log);
    const auto derived = evidence::derive(evidence::arithmetic_operands(log));
    std::size_t units = 0, grounded = 0;
    for (const auto& n : text::extract_numerals(answer)) {
        ++units;
        if (evidence::numerically_supported(n, ev, derived)) ++grounded;
    }
    for (const auto& span : evidence::capitalized_spans(answer)) {
        ++units;
        bool found = std::any_of(log.begin(), log.end(), [&](const LogEntry& e) {
            return evidence::is_evidence(e.type) && text::contains_ci(e.content, span);
        });
        if (found) ++grounded;
    }
    return units == 0 ? 1.0 : static_cast<double>(grounded) / static_cast<double>(units);
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile of empty data");
    std::sort(values.begin(), values.end());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size()) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

Interval bootstrap_ci(const std::vector<double>& values, int resamples, double level, std::uint64_t seed) {
    if (values.empty()) throw std::invalid_argument("bootstrap_ci needs at least one value");
    if (resamples < 1 || !(level > 0.0 && level < 1.0)) throw std::invalid_argument("bad bootstrap parameters");
    const std::size_t n = values.size();
    // Summing a constant can drift in the last bit; a constant sample has no spread.
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); }))
        return {values.front(), values.front()};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);

    std::mt19937_64 rng(seed);
    std::vector<double> means;
    means.reserve(static_cast<std::size_t>(resamples));
    for (int b = 0; b < resamples; ++b) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += values[bounded(rng, n)];
        means.push_back(sum / static_cast<double>(n));
    }
    Interval ci{percentile(means, (1.0 - level) / 2.0 * 100.0), percentile(means, (1.0 + level) / 2.0 * 100.0)};
    ci.low = std::min(ci.low, mean);
    ci.high = std::max(ci.high, mean);
    return ci;
}

// -- benchmark ------------------------------------------------------------------

std::vector<BenchmarkRecord> load_records(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read benchmark " + path.string());
    std::vector<BenchmarkRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = path.string() + ":" + std::to_string(lineno);
        try {
            auto j = json::parse(line);
            BenchmarkRecord r;
            r.id = j.value("id", "q" + std::to_string(out.size()));
            r.question = j.at("question").get<std::string>();
            if (j.contains("gold_answers"))
                r.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
            else
                r.gold_answers = {j.at("answer").get<std::string>()};
            if (r.gold_answers.empty()) throw std::invalid_argument("at least one gold answer required");
            if (j.contains("sources"))
                r.sources = sources_from_json(j.at("sources"));
            else
                r.sources = load_sources(path.parent_path() / j.at("sources_path").get<std::string>());
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw std::invalid_argument(where + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(where + ": " + e.what());
        }
    }
    return out;
}

ordered_json to_json(const Metrics& m) {
    ordered_json j;
    j["n"] = m.n;
    j["failures"] = m.failures;
    j["em"] = m.em;
    j["ci_low"] = m.ci_low;
    j["ci_high"] = m.ci_high;
    j["rouge1"] = m.rouge1;
    j["rouge2"] = m.rouge2;
    j["rougeL"] = m.rougeL;
    j["log_groundedness"] = m.log_groundedness;
    j["catch_rate"] = m.catch_rate;
    j["repair_rate"] = m.repair_rate;
    j["faults_injected"] = m.faults_injected;
    j["backend_calls_mean"] = m.backend_calls_mean;
    j["token_mean"] = m.token_mean;
    j["latency_ms_p50"] = m.latency_ms_p50;
    j["latency_ms_p95"] = m.latency_ms_p95;
    j["rounds_mean"] = m.rounds_mean;
    j["agent_turns_mean"] = m.agent_turns_mean;
    ordered_json buckets = ordered_json::object();
    for (const auto& [k, v] : m.em_by_log_length) buckets[k] = {{"em", v.first}, {"count", v.second}};
    j["em_by_log_length"] = buckets;
    return j;
}

ordered_json to_json(const QuestionReport& r) {
    ordered_json j;
    j["id"] = r.id;
    j["question"] = r.question;
    j["answer"] = r.answer ? ordered_json(*r.answer) : ordered_json(nullptr);
    j["gold_answers"] = r.gold;
    j["em"] = r.em;
    j["termination"] = r.termination;
    j["rounds"] = r.run.rounds;
    j["backend_calls"] = r.run.backend_calls;
    j["token_usage"] = r.run.token_usage;
    j["wall_ms"] = r.run.wall_ms;
    j["agent_turns"] = r.run.agent_turns;
    j["log_entries"] = r.log_entries;
    j["rougeL"] = r.rouge.rougeL;
    j["log_groundedness"] = r.groundedness;
    j["faults"] = r.faults;
    j["caught"] = r.caught;
    j["repaired"] = r.repaired;
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

std::string log_length_bucket(std::size_t n) {
    if (n <= 4) return "<=4";
    if (n <= 6) return "5-6";
    if (n <= 8) return "7-8";
    return ">=9";
}

namespace {

struct RecordOutcome {
    QuestionReport report;
    std::vector<FaultLabel> labels;
    std::vector<std::optional<std::int64_t>> catching_flag;
    std::vector<std::size_t> eligible_ordinals;  // clean pass only
};

RecordOutcome run_record(std::size_t index, const BenchmarkRecord& rec, TextBackend& backend, const BenchOptions& opts,
                         const std::optional<FaultType>& observe, const std::set<std::size_t>* corrupt) {
    RecordOutcome out;
    auto& rep = out.report;
    rep.id = rec.id;
    rep.question = rec.question;
    rep.gold = rec.gold_answers;

    EntryHook hook;
    std::map<std::size_t, std::size_t> label_of_ordinal;
    std::map<std::size_t, std::size_t> target_of_ordinal;
    std::map<std::size_t, std::size_t> seen_in_ordinal;
    if (observe) {
        hook.rewrite = [&](LogEntry e, std::size_t ordinal) -> std::vector<LogEntry> {
            if (!eligible(e, *observe)) return {std::move(e)};
            if (!corrupt) {
                out.eligible_ordinals.push_back(ordinal);
                return {std::move(e)};
            }
            if (!corrupt->contains(ordinal)) return {std::move(e)};
            auto m = mutate(e, *observe);
            m.label.record = index;
            label_of_ordinal[ordinal] = out.labels.size();
            if (m.target) target_of_ordinal[ordinal] = *m.target;
            out.labels.push_back(std::move(m.label));
            return std::move(m.entries);
        };
        hook.committed = [&](std::size_t ordinal, const LogEntry&, AppendResult r, std::int64_t step) {
            auto it = label_of_ordinal.find(ordinal);
            if (it == label_of_ordinal.end()) return;
            std::size_t k = seen_in_ordinal[ordinal]++;
            auto tg = target_of_ordinal.find(ordinal);
            if (tg != target_of_ordinal.end() && tg->second == k && r == AppendResult::Accepted)
                out.labels[it->second].step = step;
        };
    }

    try {
        RunResources resources(rec.sources);
        auto result = run(rec.question, resources, opts.agents, backend, opts.scheduler, opts.gate,
                          observe ? &hook : nullptr);
        rep.answer = result.final_answer;
        rep.termination = std::string(to_string(result.termination));
        rep.run = result.metrics;
        rep.trace = result.log.entries();
        if (rep.answer) {
            rep.em = exact_match(*rep.answer, rec.gold_answers);
            for (const auto& g : rec.gold_answers) {
                auto r = rouge(*rep.answer, g);
                if (r.rougeL > rep.rouge.rougeL || (r.rougeL == rep.rouge.rougeL && r.rouge1 > rep.rouge.rouge1))
                    rep.rouge = r;
            }
            rep.groundedness = log_groundedness(*rep.answer, rep.trace);
        }
        if (corrupt) {
            auto cr = catch_and_repair(out.labels, rep.trace, result.termination == Termination::AnswerVerified);
            rep.caught = cr.caught;
            rep.repaired = cr.repaired;
            out.catching_flag = cr.catching_flag;
        }
    } catch (const RunAborted& e) {
        rep.error = e.what();
        rep.termination = "Error";
        rep.run = e.metrics;
        rep.trace = e.partial_log.entries();
    } catch (const std::exception& e) {
        rep.error = e.what();
        rep.termination = "Error";
    }
    if (corrupt && out.catching_flag.size() != out.labels.size()) out.catching_flag.assign(out.labels.size(), std::nullopt);
    rep.faults = out.labels.size();
    rep.log_entries = rep.trace.size();
    return out;
}

std::vector<RecordOutcome> run_all(const std::vector<BenchmarkRecord>& records, TextBackend& backend,
                                   const BenchOptions& opts, const std::optional<FaultType>& observe,
                                   const std::vector<std::set<std::size_t>>* corrupt) {
    std::vector<RecordOutcome> outs(records.size());
    auto one = [&](std::size_t i) {
        outs[i] = run_record(i, records[i], backend, opts, observe, corrupt ? &(*corrupt)[i] : nullptr);
    };
    const auto jobs = static_cast<std::size_t>(std::max(1, opts.jobs));
    if (jobs == 1 || records.size() < 2) {
        for (std::size_t i = 0; i < records.size(); ++i) one(i);
        return outs;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(jobs, records.size()); ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < records.size(); i = next++) one(i);
        });
    for (auto& th : pool) th.join();
    return outs;
}

void write_outputs(const BenchResult& r, const BenchOptions& opts, std::size_t targets_total) {
    namespace fs = std::filesystem;
    fs::create_directories(opts.out_dir / "traces");
    {
        std::ofstream os(opts.out_dir / "report.jsonl", std::ios::binary);
        for (const auto& q : r.reports) os << to_json(q).dump(-1, ' ', false, json::error_handler_t::replace) << "\n";
    }
    {
        std::ofstream os(opts.out_dir / "metrics.json", std::ios::binary);
        os << to_json(r.metrics).dump(2) << "\n";
    }
    for (std::size_t i = 0; i < r.reports.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "q%04zu.jsonl", i);
        write_jsonl(opts.out_dir / "traces" / name, r.reports[i].trace);
    }
    if (opts.fault) {
        ordered_json j;
        j["type"] = std::string(to_string(opts.fault->type));
        j["rate"] = opts.fault->rate;
        j["seed"] = opts.fault->seed;
        j["eligible_targets"] = targets_total;
        ordered_json labels = ordered_json::array();
        for (std::size_t i = 0; i < r.labels.size(); ++i) {
            auto l = to_json(r.labels[i]);
            l["caught"] = r.catching_flag[i].has_value();
            l["flag_step"] = r.catching_flag[i] ? ordered_json(*r.catching_flag[i]) : ordered_json(nullptr);
            labels.push_back(std::move(l));
        }
        j["labels"] = std::move(labels);
        std::ofstream os(opts.out_dir / "faults.json", std::ios::binary);
        os << j.dump(2, ' ', false, json::error_handler_t::replace) << "\n";
    }
}

}  // namespace

BenchResult run_benchmark(const std::vector<BenchmarkRecord>& records, TextBackend& backend, const BenchOptions& opts) {
    if (records.empty()) throw std::invalid_argument("benchmark needs at least one record");
    if (opts.fault && !opts.fault->valid()) throw std::invalid_argument("fault rate must be in (0, 1]");

    std::vector<RecordOutcome> outs;
    std::size_t targets_total = 0;
    if (opts.fault) {
        const auto type = opts.fault->type;
        auto clean = run_all(records, backend, opts, type, nullptr);
        std::vector<std::pair<std::size_t, std::size_t>> targets;
        for (std::size_t i = 0; i < clean.size(); ++i)
            for (auto o : clean[i].eligible_ordinals) targets.emplace_back(i, o);
        targets_total = targets.size();
        const auto k = fault_count(opts.fault->rate, targets.size());
        if (k == 0)
            throw NoFaultTargets("no " + std::string(to_string(type)) + " targets selected among " +
                                 std::to_string(targets.size()) + " retrieval entries");
        std::vector<std::set<std::size_t>> corrupt(records.size());
        for (auto c : choose_targets(targets.size(), k, opts.fault->seed))
            corrupt[targets[c].first].insert(targets[c].second);
        outs = run_all(records, backend, opts, type, &corrupt);
    } else {
        outs = run_all(records, backend, opts, std::nullopt, nullptr);
    }

    BenchResult r;
    auto& m = r.metrics;
    m.n = records.size();
    std::vector<double> em, latency;
    std::map<std::string, std::pair<double, std::size_t>> buckets;
    std::size_t caught = 0, repaired = 0;
    for (auto& o : outs) {
        auto& q = o.report;
        if (!q.error.empty()) ++m.failures;
        em.push_back(q.em ? 1.0 : 0.0);
        m.rouge1 += q.rouge.rouge1;
        m.rouge2 += q.rouge.rouge2;
        m.rougeL += q.rouge.rougeL;
        m.log_groundedness += q.groundedness;
        m.backend_calls_mean += static_cast<double>(q.run.backend_calls);
        m.token_mean += static_cast<double>(q.run.token_usage);
        m.rounds_mean += q.run.rounds;
        m.agent_turns_mean += q.run.agent_turns;
        latency.push_back(static_cast<double>(q.run.wall_ms));
        auto& b = buckets[log_length_bucket(q.log_entries)];
        b.first += q.em ? 1.0 : 0.0;
        ++b.second;
        caught += q.caught;
        repaired += q.repaired;
        for (std::size_t i = 0; i < o.labels.size(); ++i) {
            r.labels.push_back(o.labels[i]);
            r.catching_flag.push_back(o.catching_flag[i]);
        }
        r.reports.push_back(std::move(q));
    }
    const double n = static_cast<double>(m.n);
    for (double v : em) m.em += v;
    m.em /= n;
    m.rouge1 /= n;
    m.rouge2 /= n;
    m.rougeL /= n;
    m.log_groundedness /= n;
    m.backend_calls_mean /= n;
    m.token_mean /= n;
    m.rounds_mean /= n;
    m.agent_turns_mean /= n;
    m.latency_ms_p50 = percentile(latency, 50);
    m.latency_ms_p95 = percentile(latency, 95);
    auto ci = bootstrap_ci(em, 1000, 0.95, opts.seed);
    m.ci_low = ci.low;
    m.ci_high = ci.high;
    for (auto& [k, v] : buckets) m.em_by_log_length[k] = {v.first / static_cast<double>(v.second), v.second};
    m.faults_injected = r.labels.size();
    if (!r.labels.empty()) {
        m.catch_rate = static_cast<double>(caught) / static_cast<double>(r.labels.size());
        m.repair_rate = static_cast<double>(repaired) / static_cast<double>(r.labels.size());
    }
    if (!opts.out_dir.empty()) write_outputs(r, opts, targets_total);
    return r;
}

}  // namespace logboard::harness
