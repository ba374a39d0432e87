#include "logboard/agents.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "logboard/evidence.hpp"
#include "logboard/text.hpp"

namespace logboard {

namespace {

constexpr std::string_view kAbstention = "no relevant info found";

std::string_view strip_role_prefix(std::string_view reply, std::string_view name) {
    auto t = reply;
    while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.remove_prefix(1);
    if (text::starts_with_ci(t, name)) {
        t.remove_prefix(name.size());
        while (!t.empty() && (t.front() == ':' || std::isspace(static_cast<unsigned char>(t.front()))))
            t.remove_prefix(1);
    }
    return t;
}

bool is_abstention(std::string_view reply) {
    auto t = text::trim(reply);
    return t.empty() || text::contains_ci(t, kAbstention);
}

std::string fmt_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string fmt_steps(const std::vector<std::int64_t>& steps) {
    std::string s;
    for (auto st : steps) {
        if (!s.empty()) s += ", ";
        s += std::to_string(st);
    }
    return s;
}

// -- prompt assembly ---------------------------------------------------------

struct SourceItem {
    std::string text;
    bool pinned = false;
};

struct PromptParts {
    std::string head;
    std::string sources_title;
    std::vector<SourceItem> sources;
    std::string tail;
};

std::string assemble(const PromptParts& p, const std::string& log_view) {
    std::string out = p.head;
    out += "\n\nShared log:\n" + log_view;
    if (!p.sources.empty()) {
        out += "\n\n" + p.sources_title + "\n";
        for (std::size_t i = 0; i < p.sources.size(); ++i) {
            if (i) out += "\n";
            out += p.sources[i].text;
        }
    }
    if (!p.tail.empty()) out += "\n\n" + p.tail;
    return out;
}

// Fits the prompt into the context window: sources shrink first, then the
// log view is re-rendered under a tighter budget, then cut from the front.
std::string fit_prompt(PromptParts parts, const AgentContext& ctx, std::size_t window) {
    const auto& est = ctx.agents.estimator;
    auto entries = ctx.log.entries();
    std::string log_view = render_view(entries, ctx.log.budget(), {}, est);
    std::string prompt = assemble(parts, log_view);
    while (est(prompt) > window && !parts.sources.empty()) {
        auto it = std::find_if(parts.sources.rbegin(), parts.sources.rend(), [](const SourceItem& s) { return !s.pinned; });
        if (it != parts.sources.rend())
            parts.sources.erase(std::next(it).base());
        else
            parts.sources.pop_back();
        prompt = assemble(parts, log_view);
    }
    if (est(prompt) <= window) return prompt;

    std::size_t fixed = est(assemble(parts, ""));
    std::size_t room = window > fixed + 8 ? window - fixed - 8 : 8;
    if (room >= 16) {
        TokenBudget tight{room, room - 1, std::min<std::size_t>(300, room / 4), room};
        log_view = render_view(entries, tight, {}, est);
        prompt = assemble(parts, log_view);
    }
    while (est(prompt) > window && !log_view.empty()) {
        std::size_t cut = std::max<std::size_t>(1, log_view.size() / 8);
        log_view.erase(0, cut);
        while (!log_view.empty() && (static_cast<unsigned char>(log_view.front()) & 0xC0) == 0x80) log_view.erase(0, 1);
        prompt = assemble(parts, log_view);
    }
    return prompt;
}

std::string request_line(const std::vector<LogEntry>& entries) {
    auto req = open_request(entries);
    if (req.empty()) return {};
    return "\nOpen request from the log (target this item): " + req;
}

// -- table helpers -------------------------------------------------------------

std::set<std::size_t> relevant_columns(const Table& t, std::string_view focus) {
    auto qt = text::content_tokens(focus);
    std::set<std::string> q(qt.begin(), qt.end());
    std::set<std::size_t> cols;
    for (std::size_t c = 0; c < t.header.size(); ++c)
        for (const auto& tok : text::content_tokens(t.header[c]))
            if (q.contains(tok)) {
                cols.insert(c);
                break;
            }
    if (cols.empty())
        for (std::size_t c = 0; c < t.header.size(); ++c)
            if (retrieval::is_numeric_column(t, c)) cols.insert(c);
    return cols;
}

retrieval::TableSlice prompt_slice(const Table& t, std::string_view focus) {
    auto slice = retrieval::select_table_slice(t, focus);
    if (!t.header.empty() && (slice.kept_cols.empty() || slice.kept_cols.front() != 0))
        slice.kept_cols.insert(slice.kept_cols.begin(), 0);  // row labels
    return slice;
}

std::string table_focus(const std::vector<LogEntry>& entries) {
    return question_of(entries) + " " + open_request(entries);
}

bool flag_targets_lookup(const std::vector<LogEntry>& entries) {
    std::int64_t last_table = -1;
    for (const auto& e : entries)
        if (e.agent == agent_names::kTable) last_table = e.meta.step;
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        if (it->meta.step <= last_table) break;
        if (it->type != EntryType::Flag) continue;
        for (auto st : implicated_steps(it->content)) {
            auto hit = std::find_if(entries.begin(), entries.end(),
                                    [&](const LogEntry& e) { return e.meta.step == st && e.type == EntryType::Lookup; });
            if (hit != entries.end()) return true;
        }
    }
    return false;
}

bool mentions_image(std::string_view s) {
    return text::contains_ci(s, "image") || text::contains_ci(s, "figure") || text::contains_ci(s, "[Image]");
}

GenerationRequest request_for(AgentRole role, const AgentContext& ctx, std::string prompt) {
    const auto& cfg = ctx.agents.config(role);
    return {std::move(prompt), cfg.temperature, cfg.max_tokens, std::string(agent_name(role))};
}

LogEntry make_entry(AgentRole role, EntryType type, std::string content, int round) {
    LogEntry e;
    e.agent = std::string(agent_name(role));
    e.type = type;
    e.content = std::move(content);
    e.meta.round = round;
    return e;
}

// -- roles ----------------------------------------------------------------------

class TableAgent final : public Agent {
public:
    AgentRole role() const override { return AgentRole::Table; }

    bool should_act(const AgentContext& ctx) const override {
        const auto& tables = ctx.resources.sources.tables;
        if (tables.empty()) return false;
        auto entries = ctx.log.entries();
        if (flag_targets_lookup(entries)) return true;
        std::set<std::pair<std::string, std::size_t>> reported;
        for (const auto& e : entries) {
            if (e.agent != agent_names::kTable) continue;
            for (const auto& p : e.meta.provenance)
                if (const auto* a = std::get_if<TableAnchor>(&p)) reported.insert({a->table_id, a->col});
        }
        auto focus = table_focus(entries);
        for (const auto& t : tables)
            for (auto c : relevant_columns(t, focus))
                if (!reported.contains({t.id, c})) return true;
        return false;
    }

    std::string build_prompt(const AgentContext& ctx) const override {
        auto entries = ctx.log.entries();
        auto focus = table_focus(entries);
        PromptParts p;
        p.head =
            "You are the TableAgent.\n"
            "Extract the relevant cells from the table to answer the query. If calculations are needed, do them. "
            "Provide the result in one sentence with reference.\n"
            "If the table holds nothing relevant, reply \"no relevant info found\".\n"
            "Example: Question: What was the headcount in 2020?; Table: | Year | Headcount |; "
            "Response: TableAgent: Headcount in 2020 was 120 (from Table Staff).\n"
            "Question: " +
            question_of(entries) + request_line(entries);
        p.sources_title = "Tables:";
        for (const auto& t : ctx.resources.sources.tables) {
            auto slice = prompt_slice(t, focus);
            p.sources.push_back({"[" + t.id + "]", true});
            std::string header = "| # |";
            for (auto c : slice.kept_cols) header += " " + t.header[c] + " |";
            p.sources.push_back({header, true});
            for (auto r : slice.kept_rows) {
                std::string line = "| " + std::to_string(r) + " |";
                for (auto c : slice.kept_cols) line += " " + t.rows[r][c] + " |";
                p.sources.push_back({line, false});
            }
        }
        p.tail = "Response: TableAgent:";
        return fit_prompt(std::move(p), ctx, ctx.agents.config(role()).context_window);
    }

    ActOutcome act(const AgentContext& ctx, TextBackend& backend) const override {
        ActOutcome out;
        auto prompt = build_prompt(ctx);
        auto reply = backend.generate(request_for(role(), ctx, prompt)).text;
        out.called_backend = true;
        auto body = text::trim(strip_role_prefix(reply, agent_name(role())));
        if (is_abstention(body)) {
            out.abstained = true;
            out.diagnostic = "TableAgent abstained";
            return out;
        }
        auto anchors = anchor_cells(ctx, body);
        if (anchors.empty()) {
            out.diagnostic = "TableAgent reply cites no cell of the prompted tables";
            return out;
        }
        auto e = make_entry(role(), EntryType::Lookup, body, ctx.round);
        for (auto& a : anchors) e.meta.provenance.emplace_back(std::move(a));
        out.entry = std::move(e);
        return out;
    }

private:
    static std::vector<TableAnchor> anchor_cells(const AgentContext& ctx, const std::string& reply) {
        const auto& tables = ctx.resources.sources.tables;
        auto focus = table_focus(ctx.log.entries());
        std::vector<const Table*> chosen;
        for (const auto& t : tables)
            if (text::contains_ci(reply, t.id)) chosen.push_back(&t);
        if (chosen.empty())
            for (const auto& t : tables) chosen.push_back(&t);

        auto reply_nums = text::extract_numerals(reply);
        auto reply_tokens = text::tokenize(reply);
        std::set<std::string> rtok(reply_tokens.begin(), reply_tokens.end());

        std::vector<TableAnchor> all;
        std::vector<TableAnchor> in_named_cols;
        for (const auto* t : chosen) {
            auto slice = prompt_slice(*t, focus);
            std::set<std::size_t> named;
            for (auto c : slice.kept_cols)
                for (const auto& tok : text::content_tokens(t->header[c]))
                    if (rtok.contains(tok)) {
                        named.insert(c);
                        break;
                    }
            for (auto r : slice.kept_rows)
                for (auto c : slice.kept_cols) {
                    const auto cell = text::trim(t->rows[r][c]);
                    if (cell.empty() || !cell_cited(cell, reply, reply_nums)) continue;
                    TableAnchor a{t->id, r, c};
                    all.push_back(a);
                    if (named.contains(c)) in_named_cols.push_back(a);
                }
        }
        return in_named_cols.empty() ? all : in_named_cols;
    }

    static bool cell_cited(const std::string& cell, const std::string& reply, const std::vector<text::Numeral>& nums) {
        if (retrieval::is_numeric_cell(cell)) {
            auto cn = text::extract_numerals(cell).front();
            return std::any_of(nums.begin(), nums.end(), [&](const text::Numeral& n) {
                if (n.percent != cn.percent) return false;
                if (text::numerically_equal(n.value, cn.value)) return true;
                // Units in the header: cell "50" vs reply "$50M".
                return !cn.year_like && !n.year_like && cn.scale == 1.0 &&
                       text::numerically_equal(n.mantissa, std::fabs(cn.value));
            });
        }
        return cell.size() >= 3 && text::contains_ci(reply, cell);
    }
};

class ContextAgent final : public Agent {
public:
    AgentRole role() const override { return AgentRole::Context; }

    bool should_act(const AgentContext& ctx) const override {
        if (ctx.resources.sources.passages.empty()) return false;
        if (ctx.round == 0) return true;
        return count_gap_phrases(open_request(ctx.log.entries())) > 0;
    }

    std::string build_prompt(const AgentContext& ctx) const override {
        auto entries = ctx.log.entries();
        PromptParts p;
        p.head =
            "You are the ContextAgent.\n"
            "Identify any piece of text that helps answer the question. Quote it or paraphrase concisely.\n"
            "Only log something if you are confident it's relevant. If nothing helps, reply \"no relevant info "
            "found\".\n"
            "Question: " +
            question_of(entries) + request_line(entries);
        p.sources_title = "Passages:";
        for (const auto& [id, snippet] : snippets(ctx)) p.sources.push_back({"[" + id + "] " + snippet, false});
        p.tail = "Response: ContextAgent:";
        return fit_prompt(std::move(p), ctx, ctx.agents.config(role()).context_window);
    }

    ActOutcome act(const AgentContext& ctx, TextBackend& backend) const override {
        ActOutcome out;
        auto hits = retrieve(ctx);
        if (hits.empty()) {
            out.abstained = true;
            out.diagnostic = "ContextAgent: retrieval returned no passages";
            return out;
        }
        auto reply = backend.generate(request_for(role(), ctx, build_prompt(ctx))).text;
        out.called_backend = true;
        auto body = text::trim(strip_role_prefix(reply, agent_name(role())));
        if (is_abstention(body)) {
            out.abstained = true;
            out.diagnostic = "ContextAgent abstained";
            return out;
        }
        auto spans = locate(ctx, hits, body);
        if (spans.empty()) {
            out.diagnostic = "ContextAgent reply matches no retrieved passage";
            return out;
        }
        auto e = make_entry(role(), EntryType::Quote, body, ctx.round);
        for (auto& s : spans) e.meta.provenance.emplace_back(std::move(s));
        out.entry = std::move(e);
        return out;
    }

private:
    static std::string query(const AgentContext& ctx) {
        auto entries = ctx.log.entries();
        return question_of(entries) + " " + open_request(entries);
    }

    static std::vector<retrieval::ScoredDoc> retrieve(const AgentContext& ctx) {
        const auto& cfg = ctx.agents.retrieval;
        return retrieval::retrieve(ctx.resources.passage_index, query(ctx), cfg.top_n, cfg, ctx.agents.reranker);
    }

    static std::vector<std::pair<std::string, std::string>> snippets(const AgentContext& ctx) {
        std::vector<std::pair<std::string, std::string>> out;
        auto q = query(ctx);
        for (const auto& hit : retrieve(ctx)) {
            const auto* p = ctx.resources.sources.find_passage(hit.doc_id);
            if (!p) continue;
            auto sp = retrieval::best_sentence(p->text, q);
            auto spans = text::sentence_spans(p->text);
            text::Span match = sp ? *sp : (spans.empty() ? text::Span{} : spans.front());
            out.emplace_back(p->id, retrieval::truncate_span(p->text, match, ctx.agents.retrieval.sentence_window_k));
        }
        return out;
    }

    static std::vector<DocSpan> locate(const AgentContext& ctx, const std::vector<retrieval::ScoredDoc>& hits,
                                       const std::string& reply) {
        std::vector<DocSpan> exact;
        const auto reply_words = text::normalized_words(reply);
        std::string reply_norm;
        for (const auto& w : reply_words) reply_norm += w + " ";
        std::optional<DocSpan> best;
        double best_cover = 0.0;
        auto rt = text::content_tokens(reply);
        std::set<std::string> rset(rt.begin(), rt.end());
        for (const auto& hit : hits) {
            const auto* p = ctx.resources.sources.find_passage(hit.doc_id);
            if (!p) continue;
            for (const auto& sp : text::sentence_spans(p->text)) {
                auto sentence = std::string_view(p->text).substr(sp.begin, sp.end - sp.begin);
                std::string norm;
                for (const auto& w : text::normalized_words(sentence)) norm += w + " ";
                if (!norm.empty() && reply_norm.find(norm) != std::string::npos) {
                    exact.push_back({p->id, sp.begin, sp.end});
                    continue;
                }
                auto st = text::content_tokens(sentence);
                std::set<std::string> sset(st.begin(), st.end());
                if (sset.empty()) continue;
                std::size_t hitc = 0;
                for (const auto& t : sset) hitc += rset.contains(t);
                double cover = static_cast<double>(hitc) / static_cast<double>(sset.size());
                if (cover > best_cover) {
                    best_cover = cover;
                    best = DocSpan{p->id, sp.begin, sp.end};
                }
            }
        }
        if (!exact.empty()) return exact;
        if (best && best_cover >= 0.5) return {*best};
        return {};
    }
};

class VisualAgent final : public Agent {
public:
    AgentRole role() const override { return AgentRole::Visual; }

    bool should_act(const AgentContext& ctx) const override {
        if (ctx.resources.sources.images.empty()) return false;
        for (const auto& e : ctx.log.entries())
            if (mentions_image(e.content)) return true;
        return false;
    }

    std::string build_prompt(const AgentContext& ctx) const override {
        auto entries = ctx.log.entries();
        PromptParts p;
        p.head =
            "You are the VisualAgent.\n"
            "Below is a description of each image's content from captioning and OCR. Interpret it for the question "
            "and state it as one sentence other agents can use, naming the image. Keep every number exactly as "
            "written.\n"
            "Question: " +
            question_of(entries) + request_line(entries);
        p.sources_title = "Images:";
        for (const auto& img : ctx.resources.sources.images)
            p.sources.push_back({"[" + img.id + "] " + retrieval::render_visual_text(img), false});
        p.tail = "Response: VisualAgent:";
        return fit_prompt(std::move(p), ctx, ctx.agents.config(role()).context_window);
    }

    ActOutcome act(const AgentContext& ctx, TextBackend& backend) const override {
        ActOutcome out;
        auto reply = backend.generate(request_for(role(), ctx, build_prompt(ctx))).text;
        out.called_backend = true;
        auto body = text::trim(strip_role_prefix(reply, agent_name(role())));
        if (is_abstention(body)) {
            out.abstained = true;
            out.diagnostic = "VisualAgent abstained";
            return out;
        }
        const auto& images = ctx.resources.sources.images;
        std::vector<ImageRef> refs;
        for (const auto& img : images)
            if (text::contains_ci(body, img.id)) refs.push_back({img.id});
        if (refs.empty()) {
            auto nums = text::extract_numerals(body);
            for (const auto& img : images) {
                auto ocr = text::extract_numerals(img.ocr_text);
                bool shared = std::any_of(ocr.begin(), ocr.end(), [&](const text::Numeral& o) {
                    return std::any_of(nums.begin(), nums.end(),
                                       [&](const text::Numeral& n) { return text::same_quantity(n, o) ||
                                                                            text::numerically_equal(n.mantissa, o.mantissa); });
                });
                if (shared) refs.push_back({img.id});
            }
        }
        if (refs.empty())
            for (const auto& img : images) refs.push_back({img.id});
        auto e = make_entry(role(), EntryType::Visual, body, ctx.round);
        for (auto& r : refs) e.meta.provenance.emplace_back(std::move(r));
        out.entry = std::move(e);
        return out;
    }
};

class SummarizingAgent final : public Agent {
public:
    AgentRole role() const override { return AgentRole::Summarizing; }
    bool should_act(const AgentContext&) const override { return true; }

    std::string build_prompt(const AgentContext& ctx) const override {
        auto entries = ctx.log.entries();
        PromptParts p;
        p.head =
            "You are the SummarizingAgent. You will see a log of information gathered by other agents, and you will "
            "provide the final answer to the user's question.\n"
            "- If the log has enough info to answer, give a concise answer with explanation.\n"
            "- If info is missing or unclear, state what is needed.\n"
            "Do not make up information not in the log. Use step-by-step reasoning if needed, and end with the "
            "answer clearly.\n"
            "Question: " +
            question_of(entries);
        std::string tail =
            "Based on the above log, either (a) provide a final answer with explanation, or (b) if the information is "
            "incomplete, summarize what's found and what is needed.\n"
            "If final answer, start with 'Therefore' or 'In conclusion', or finish with a line 'Answer: <answer>'.\n"
            "Only use information from the log; if something is not in the log, state that it's unknown.";
        auto req = open_request(entries);
        if (!req.empty()) tail += "\nAddress this open item: " + req;
        if (ctx.finalize) tail += "\nNo further retrieval rounds will run. Give your best final answer from the log now.";
        p.tail = std::move(tail);
        return fit_prompt(std::move(p), ctx, ctx.agents.config(role()).context_window);
    }

    ActOutcome act(const AgentContext& ctx, TextBackend& backend) const override {
        ActOutcome out;
        auto reply = backend.generate(request_for(role(), ctx, build_prompt(ctx))).text;
        out.called_backend = true;
        auto body = text::trim(strip_role_prefix(reply, agent_name(role())));
        if (body.empty()) {
            out.diagnostic = "SummarizingAgent returned an empty reply";
            return out;
        }
        auto type = parse_answer(body) ? EntryType::Answer : EntryType::Summary;
        out.entry = make_entry(role(), type, body, ctx.round);
        return out;
    }
};

class VerificationAgent final : public Agent {
public:
    AgentRole role() const override { return AgentRole::Verification; }
    bool should_act(const AgentContext&) const override { return true; }

    std::string build_prompt(const AgentContext& ctx) const override {
        auto entries = ctx.log.entries();
        std::string answer;
        for (auto it = entries.rbegin(); it != entries.rend(); ++it)
            if (it->type == EntryType::Answer) {
                answer = it->content;
                break;
            }
        PromptParts p;
        p.head = "You are the VerificationAgent.\nQuestion: " + question_of(entries) + "\nProposed answer: " + answer;
        p.tail =
            "The question, answer, and supporting log are above. Verify each part of the answer. If any part seems "
            "incorrect or unsupported, explain and flag it. If everything is consistent, reply with OK.";
        return fit_prompt(std::move(p), ctx, ctx.agents.config(role()).context_window);
    }

    ActOutcome act(const AgentContext& ctx, TextBackend& backend) const override {
        auto v = verification_act(ctx, backend);
        ActOutcome out;
        out.called_backend = v.backend_consulted;
        out.entry = std::move(v.entry);
        return out;
    }
};

// -- deterministic verification -------------------------------------------------

enum class ClaimClass { Increase, Decrease, Change, Difference, Sum, Ratio };

struct Keyword {
    std::string_view word;
    ClaimClass cls;
};

constexpr std::array<Keyword, 36> kKeywords{{
    {"increase", ClaimClass::Increase},   {"increased", ClaimClass::Increase}, {"increases", ClaimClass::Increase},
    {"grew", ClaimClass::Increase},       {"grow", ClaimClass::Increase},      {"growth", ClaimClass::Increase},
    {"rose", ClaimClass::Increase},       {"rise", ClaimClass::Increase},      {"gain", ClaimClass::Increase},
    {"gained", ClaimClass::Increase},     {"up", ClaimClass::Increase},        {"decrease", ClaimClass::Decrease},
    {"decreased", ClaimClass::Decrease},  {"decreases", ClaimClass::Decrease}, {"decline", ClaimClass::Decrease},
    {"declined", ClaimClass::Decrease},   {"fell", ClaimClass::Decrease},      {"fall", ClaimClass::Decrease},
    {"dropped", ClaimClass::Decrease},    {"drop", ClaimClass::Decrease},      {"down", ClaimClass::Decrease},
    {"reduction", ClaimClass::Decrease},  {"change", ClaimClass::Change},      {"changed", ClaimClass::Change},
    {"delta", ClaimClass::Change},        {"difference", ClaimClass::Difference}, {"differ", ClaimClass::Difference},
    {"total", ClaimClass::Sum},           {"sum", ClaimClass::Sum},            {"combined", ClaimClass::Sum},
    {"together", ClaimClass::Sum},        {"altogether", ClaimClass::Sum},     {"ratio", ClaimClass::Ratio},
    {"times", ClaimClass::Ratio},         {"multiple", ClaimClass::Ratio},     {"fold", ClaimClass::Ratio},
}};

constexpr std::size_t kClaimWindowWords = 3;

struct WordPos {
    std::string lower;
    std::size_t begin;
    std::size_t end;
};

std::vector<WordPos> alpha_words(std::string_view s) {
    std::vector<WordPos> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!std::isalpha(static_cast<unsigned char>(s[i]))) {
            ++i;
            continue;
        }
        std::size_t b = i;
        while (i < s.size() && std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
        out.push_back({text::to_lower(s.substr(b, i - b)), b, i});
    }
    return out;
}

struct Claim {
    text::Numeral num;
    ClaimClass cls;
};

// A numeral is a computed claim when an arithmetic keyword sits within three
// words of it and it is not introduced as a reference value ("from X to Y").
std::vector<Claim> find_claims(std::string_view answer, const std::vector<text::Numeral>& nums,
                               std::vector<bool>& is_claim) {
    auto words = alpha_words(answer);
    std::vector<Claim> claims;
    is_claim.assign(nums.size(), false);
    for (std::size_t n = 0; n < nums.size(); ++n) {
        const auto& num = nums[n];
        if (num.year_like) continue;
        // Preceding word.
        std::optional<std::size_t> before;
        for (std::size_t w = 0; w < words.size(); ++w)
            if (words[w].end <= num.span.begin) before = w;
        if (before && (words[*before].lower == "from" || words[*before].lower == "to") &&
            num.span.begin - words[*before].end <= 3)
            continue;
        std::optional<std::pair<std::size_t, ClaimClass>> best;
        for (std::size_t w = 0; w < words.size(); ++w) {
            auto kw = std::find_if(kKeywords.begin(), kKeywords.end(),
                                   [&](const Keyword& k) { return k.word == words[w].lower; });
            if (kw == kKeywords.end()) continue;
            std::size_t between = 0;
            if (words[w].end <= num.span.begin) {
                for (std::size_t x = w + 1; x < words.size() && words[x].end <= num.span.begin; ++x) ++between;
            } else if (words[w].begin >= num.span.end) {
                for (std::size_t x = 0; x < w; ++x)
                    if (words[x].begin >= num.span.end) ++between;
            } else {
                continue;
            }
            if (between > kClaimWindowWords) continue;
            // Numerals between keyword and claim break the association.
            bool blocked = false;
            for (std::size_t m = 0; m < nums.size(); ++m) {
                if (m == n) continue;
                auto lo = std::min(words[w].end, num.span.end);
                auto hi = std::max(words[w].begin, num.span.begin);
                if (nums[m].span.begin >= lo && nums[m].span.end <= hi) blocked = true;
            }
            if (blocked) continue;
            if (!best || between < best->first) best = {{between, kw->cls}};
        }
        if (!best) continue;
        is_claim[n] = true;
        claims.push_back({num, best->second});
    }
    return claims;
}

struct Candidate {
    double value;
    std::vector<std::int64_t> steps;
};

std::vector<Candidate> candidates_for(const Claim& c, const std::vector<evidence::Derived>& derived) {
    std::vector<Candidate> out;
    for (const auto& d : derived) {
        bool want = false;
        switch (c.cls) {
            case ClaimClass::Increase:
            case ClaimClass::Decrease:
            case ClaimClass::Change:
            case ClaimClass::Difference:
                want = c.num.percent ? (d.kind == evidence::Derivation::PercentChange ||
                                        (d.kind == evidence::Derivation::Difference && d.percent))
                                     : (d.kind == evidence::Derivation::Difference && !d.percent);
                break;
            case ClaimClass::Sum: want = d.kind == evidence::Derivation::Sum && d.percent == c.num.percent; break;
            case ClaimClass::Ratio: want = d.kind == evidence::Derivation::Ratio; break;
        }
        if (want) out.push_back({d.value, d.steps});
    }
    return out;
}

double signed_claim(const Claim& c) {
    double v = c.num.value;
    if (c.cls == ClaimClass::Decrease && !c.num.explicit_sign) v = -v;
    return v;
}

bool claim_matches(const Claim& c, double cand) {
    text::Numeral probe = c.num;
    if (c.cls == ClaimClass::Difference) {
        probe.value = std::fabs(probe.value);
        return text::matches_written(probe, std::fabs(cand));
    }
    probe.value = signed_claim(c);
    return text::matches_written(probe, cand);
}

// Same digits at a different magnitude, or percent written where the
// computation gives a plain number (and vice versa).
bool unit_mismatch(const Claim& c, const std::vector<evidence::Derived>& derived) {
    const double written = signed_claim(c) / c.num.scale;
    for (const auto& d : derived) {
        bool kind_ok = d.kind == evidence::Derivation::Difference || d.kind == evidence::Derivation::PercentChange ||
                       d.kind == evidence::Derivation::Sum;
        if (!kind_ok) continue;
        for (double s : {1.0, 1e3, 1e6, 1e9}) {
            bool same_unit = s == c.num.scale && d.percent == c.num.percent;
            if (same_unit) continue;
            double cand = d.value / s;
            if (text::numerically_equal(written, cand) ||
                (c.cls == ClaimClass::Difference && text::numerically_equal(std::fabs(written), std::fabs(cand))))
                return true;
        }
    }
    return false;
}

}  // namespace

// -- public -----------------------------------------------------------------------

std::string_view agent_name(AgentRole role) {
    switch (role) {
        case AgentRole::Table: return agent_names::kTable;
        case AgentRole::Context: return agent_names::kContext;
        case AgentRole::Visual: return agent_names::kVisual;
        case AgentRole::Summarizing: return agent_names::kSummarizing;
        case AgentRole::Verification: return agent_names::kVerification;
    }
    return {};
}

std::vector<EntryType> permitted_types(AgentRole role) {
    switch (role) {
        case AgentRole::Table: return {EntryType::Lookup};
        case AgentRole::Context: return {EntryType::Quote};
        case AgentRole::Visual: return {EntryType::Visual};
        case AgentRole::Summarizing: return {EntryType::Summary, EntryType::Answer};
        case AgentRole::Verification: return {EntryType::Flag, EntryType::OK};
    }
    return {};
}

AgentConfig AgentConfig::defaults(AgentRole role) {
    AgentConfig c;
    c.role = role;
    c.temperature = (role == AgentRole::Summarizing || role == AgentRole::Verification) ? 0.0 : 0.3;
    return c;
}

RunResources::RunResources(SourceBundle s) : sources(std::move(s)), passage_index(retrieval::index(sources.passages)) {
    validate(sources);
}

std::unique_ptr<Agent> make_agent(AgentRole role) {
    switch (role) {
        case AgentRole::Table: return std::make_unique<TableAgent>();
        case AgentRole::Context: return std::make_unique<ContextAgent>();
        case AgentRole::Visual: return std::make_unique<VisualAgent>();
        case AgentRole::Summarizing: return std::make_unique<SummarizingAgent>();
        case AgentRole::Verification: return std::make_unique<VerificationAgent>();
    }
    return nullptr;
}

bool should_act(AgentRole role, const AgentContext& ctx) { return make_agent(role)->should_act(ctx); }
ActOutcome act(AgentRole role, const AgentContext& ctx, TextBackend& backend) {
    return make_agent(role)->act(ctx, backend);
}
std::string build_prompt(AgentRole role, const AgentContext& ctx) { return make_agent(role)->build_prompt(ctx); }

std::string question_of(const std::vector<LogEntry>& entries) {
    for (const auto& e : entries)
        if (e.type == EntryType::Query) return e.content;
    return {};
}

int count_gap_phrases(std::string_view s) {
    std::string lower = text::to_lower(s);
    // Normalize the typographic apostrophe.
    for (std::size_t p = lower.find("\xE2\x80\x99"); p != std::string::npos; p = lower.find("\xE2\x80\x99"))
        lower.replace(p, 3, "'");
    int n = 0;
    for (auto phrase : kGapPhrases)
        for (std::size_t p = lower.find(phrase); p != std::string::npos; p = lower.find(phrase, p + phrase.size())) ++n;
    return n;
}

std::string open_request(const std::vector<LogEntry>& entries) {
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        switch (it->type) {
            case EntryType::Flag: return it->content;
            case EntryType::Summary: return count_gap_phrases(it->content) > 0 ? it->content : std::string{};
            case EntryType::Answer:
            case EntryType::OK: return {};
            default: break;
        }
    }
    return {};
}

std::vector<std::int64_t> implicated_steps(std::string_view content) {
    static const std::regex kGroup(R"(\(steps? ([0-9][0-9, ]*)\))");
    std::vector<std::int64_t> out;
    std::string s(content);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), kGroup); it != std::sregex_iterator(); ++it) {
        std::string list = (*it)[1].str();
        std::stringstream ss(list);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = text::trim(tok);
            if (!tok.empty()) out.push_back(std::stoll(tok));
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::string_view to_string(Finding::Kind k) {
    switch (k) {
        case Finding::Kind::ArithmeticMismatch: return "ArithmeticMismatch";
        case Finding::Kind::UnitMismatch: return "UnitMismatch";
        case Finding::Kind::UnsupportedClaim: return "UnsupportedClaim";
        case Finding::Kind::MissingItem: return "MissingItem";
    }
    return "?";
}

std::string describe(const Finding& f) {
    std::string s = "Flagged " + std::string(to_string(f.kind)) + ": " + f.detail;
    if (!f.implicated_steps.empty()) s += " (steps " + fmt_steps(f.implicated_steps) + ")";
    return s;
}

std::vector<Finding> verify_deterministic(const std::vector<LogEntry>& entries, std::string_view answer,
                                          const VerifyOptions& opts) {
    std::vector<Finding> arithmetic;
    std::vector<Finding> units;
    std::vector<Finding> unsupported;
    std::vector<Finding> missing;

    std::int64_t answer_step = -1;
    for (auto it = entries.rbegin(); it != entries.rend(); ++it)
        if (it->type == EntryType::Answer) {
            answer_step = it->meta.step;
            break;
        }
    std::vector<std::int64_t> answer_steps;
    if (answer_step >= 0) answer_steps.push_back(answer_step);

    const auto operands = evidence::arithmetic_operands(entries);
    const auto derived = evidence::derive(operands);
    const auto ev = evidence::evidence_numerals(entries);
    std::vector<text::Numeral> query_nums;
    for (const auto& e : entries)
        if (e.type == EntryType::Query)
            for (auto& n : text::extract_numerals(e.content)) query_nums.push_back(std::move(n));

    auto nums = text::extract_numerals(answer);
    std::vector<bool> is_claim;
    auto claims = find_claims(answer, nums, is_claim);

    for (const auto& c : claims) {
        auto cands = candidates_for(c, derived);
        if (cands.empty()) {
            if (!evidence::numerically_supported(c.num, ev, derived))
                unsupported.push_back({Finding::Kind::UnsupportedClaim,
                                       "claimed " + c.num.text + " cannot be recomputed from logged values",
                                       answer_steps});
            continue;
        }
        if (std::any_of(cands.begin(), cands.end(), [&](const Candidate& x) { return claim_matches(c, x.value); }))
            continue;
        if (unit_mismatch(c, derived)) {
            units.push_back({Finding::Kind::UnitMismatch,
                             "claimed " + c.num.text + " has a unit that disagrees with the logged values",
                             answer_steps});
            continue;
        }
        const double claimed = signed_claim(c);
        double best_gap = INFINITY;
        for (const auto& x : cands) best_gap = std::min(best_gap, std::fabs(x.value - claimed));
        std::vector<std::int64_t> steps;
        double shown = 0.0;
        for (const auto& x : cands)
            if (std::fabs(x.value - claimed) == best_gap) {
                if (steps.empty()) shown = x.value;
                steps.insert(steps.end(), x.steps.begin(), x.steps.end());
            }
        std::sort(steps.begin(), steps.end());
        steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
        double shown_units = c.num.percent ? shown : shown / c.num.scale;
        arithmetic.push_back({Finding::Kind::ArithmeticMismatch,
                              "claimed " + c.num.text + " but logged values give " + fmt_number(shown_units) +
                                  (c.num.percent ? "%" : ""),
                              steps});
    }

    for (std::size_t i = 0; i < nums.size(); ++i) {
        if (is_claim[i]) continue;
        const auto& n = nums[i];
        if (evidence::numerically_supported(n, ev, derived)) continue;
        if (n.year_like && std::any_of(query_nums.begin(), query_nums.end(),
                                       [&](const text::Numeral& q) { return text::same_quantity(q, n); }))
            continue;
        // Same digits at another magnitude counts as a unit problem.
        bool unit_problem = std::any_of(ev.begin(), ev.end(), [&](const evidence::EvidenceNumeral& e) {
            return !n.year_like && !e.num.year_like && n.scale != e.num.scale &&
                   text::numerically_equal(n.mantissa, e.num.mantissa);
        });
        if (unit_problem)
            units.push_back({Finding::Kind::UnitMismatch, n.text + " disagrees in unit with the logged value",
                             answer_steps});
        else
            unsupported.push_back(
                {Finding::Kind::UnsupportedClaim, n.text + " appears in no evidence entry", answer_steps});
    }

    if (count_gap_phrases(answer) > 0 || text::contains_ci(answer, "unknown"))
        missing.push_back({Finding::Kind::MissingItem, "the answer reports an item as unknown or missing", answer_steps});

    if (opts.check_contradictions) {
        // Quote numerals that share a topic word with a Lookup but match none of its values.
        for (const auto& q : entries) {
            if (q.type != EntryType::Quote) continue;
            auto qt = text::content_tokens(q.content);
            std::set<std::string> qset(qt.begin(), qt.end());
            for (const auto& l : entries) {
                if (l.type != EntryType::Lookup) continue;
                auto lt = text::content_tokens(l.content);
                bool topical = std::any_of(lt.begin(), lt.end(), [&](const std::string& t) {
                    return qset.contains(t) && !std::isdigit(static_cast<unsigned char>(t[0]));
                });
                if (!topical) continue;
                auto lnums = text::extract_numerals(l.content);
                for (const auto& qn : text::extract_numerals(q.content)) {
                    if (qn.year_like || !(qn.currency || qn.scale > 1.0)) continue;
                    bool agrees = std::any_of(lnums.begin(), lnums.end(),
                                              [&](const text::Numeral& ln) { return text::same_quantity(ln, qn); });
                    if (!agrees)
                        unsupported.push_back({Finding::Kind::UnsupportedClaim,
                                               "Quote value " + qn.text + " contradicts the Lookup",
                                               {l.meta.step, q.meta.step}});
                }
            }
        }
    }

    std::vector<Finding> out;
    for (auto* group : {&arithmetic, &units, &unsupported, &missing})
        out.insert(out.end(), group->begin(), group->end());
    return out;
}

VerificationOutcome verification_act(const AgentContext& ctx, TextBackend& backend) {
    auto entries = ctx.log.entries();
    const LogEntry* latest = nullptr;
    for (auto it = entries.rbegin(); it != entries.rend(); ++it)
        if (it->agent == agent_names::kSummarizing) {
            latest = &*it;
            break;
        }
    if (!latest || latest->type != EntryType::Answer)
        throw std::logic_error("verification requires the latest Summarizing entry to be an Answer");
    auto answer = parse_answer(latest->content).value_or(latest->content);

    VerificationOutcome out;
    const auto mode = ctx.agents.verifier_mode;
    auto ok_entry = [&](std::string content) {
        return make_entry(AgentRole::Verification, EntryType::OK, std::move(content), ctx.round);
    };
    if (mode == VerifierMode::AlwaysOk) {
        out.entry = ok_entry("OK");
        return out;
    }
    if (mode != VerifierMode::BackendOnly) {
        out.findings = verify_deterministic(entries, answer, {ctx.agents.check_contradictions});
        if (!out.findings.empty()) {
            std::string content = describe(out.findings.front()) + ".";
            for (std::size_t i = 1; i < out.findings.size(); ++i) content += " Also " + describe(out.findings[i]) + ".";
            out.entry = make_entry(AgentRole::Verification, EntryType::Flag, std::move(content), ctx.round);
            return out;
        }
        if (mode == VerifierMode::DeterministicOnly) {
            out.entry = ok_entry("OK: deterministic checks passed.");
            return out;
        }
    }

    std::string reply;
    try {
        out.backend_consulted = true;
        auto prompt = make_agent(AgentRole::Verification)->build_prompt(ctx);
        reply = backend.generate(request_for(AgentRole::Verification, ctx, std::move(prompt))).text;
    } catch (const TransportError& err) {
        out.backend_unavailable = true;
        out.entry = ok_entry("OK (backend-unavailable: " + std::string(err.what()) + "; deterministic checks passed)");
        return out;
    }
    auto body = text::trim(strip_role_prefix(reply, agent_name(AgentRole::Verification)));
    auto verdict = parse_verdict(body);
    if (verdict.ok) {
        out.entry = ok_entry(body.empty() ? "OK" : body);
        return out;
    }
    out.entry = make_entry(AgentRole::Verification, EntryType::Flag, body.empty() ? "Flag: " + verdict.reason : body,
                           ctx.round);
    return out;
}

}  // namespace logboard
