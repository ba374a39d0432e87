#include <doctest.h>

#include <random>
#include <set>
#include <thread>

#include "logboard/log_store.hpp"
#include "logboard/text.hpp"

using namespace logboard;

namespace {

LogEntry lookup(std::string content, std::size_t row = 1) {
    LogEntry e{std::string(agent_names::kTable), EntryType::Lookup, std::move(content), {}};
    e.meta.provenance.push_back(TableAnchor{"Table 1", row, 1});
    return e;
}

LogEntry query(std::string q) { return {std::string(agent_names::kUser), EntryType::Query, std::move(q), {}}; }

// Brute-force dedup oracle, written independently of the library.
double jaccard3(const std::string& a, const std::string& b) {
    auto grams = [](const std::string& s) {
        std::vector<std::string> w;
        std::string cur;
        for (char c : s) {
            if (std::isalnum(static_cast<unsigned char>(c))) {
                cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            } else if (!cur.empty()) {
                w.push_back(cur);
                cur.clear();
            }
        }
        if (!cur.empty()) w.push_back(cur);
        std::set<std::string> g;
        for (std::size_t i = 0; i + 2 < w.size(); ++i) g.insert(w[i] + " " + w[i + 1] + " " + w[i + 2]);
        return g;
    };
    auto ga = grams(a), gb = grams(b);
    std::size_t inter = 0;
    for (const auto& g : ga) inter += gb.count(g);
    std::size_t uni = ga.size() + gb.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::string words(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) s += ' ';
        s += "w" + std::to_string(rng() % vocab);
    }
    return s;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST_CASE("append assigns steps and rejects duplicates") {
    SharedLog log;
    std::int64_t step = -1;
    CHECK(log.append(query("By how much did the revenue increase from 2018 to 2019?"), &step) == AppendResult::Accepted);
    CHECK(step == 0);
    CHECK(log.append(lookup("Revenue in 2018 was $50M.")) == AppendResult::Accepted);
    CHECK(log.append(lookup("Revenue in 2018 was $50M.")) == AppendResult::RejectedDuplicate);
    CHECK(log.append(lookup("revenue   IN 2018 was $50m")) == AppendResult::RejectedDuplicate);
    CHECK(log.size() == 2);
}

TEST_CASE("validation names the violated invariant") {
    SharedLog log;
    auto e = lookup("");
    CHECK_THROWS_WITH_AS(log.append(e), doctest::Contains("content is non-empty"), ValidationError);
    LogEntry bare{std::string(agent_names::kTable), EntryType::Lookup, "x", {}};
    CHECK_THROWS_WITH_AS(log.append(bare), doctest::Contains("TableAnchor"), ValidationError);
    LogEntry wrong{std::string(agent_names::kTable), EntryType::Answer, "x", {}};
    CHECK_THROWS_WITH_AS(log.append(wrong), doctest::Contains("role/type mismatch"), ValidationError);
    LogEntry quote{std::string(agent_names::kContext), EntryType::Quote, "x", {}};
    quote.meta.provenance.push_back(DocSpan{"d", 5, 2});
    CHECK_THROWS_AS(log.append(quote), ValidationError);
    CHECK(log.empty());
}

TEST_CASE("near duplicate predicate") {
    CHECK(is_near_duplicate("abc", "abc"));
    CHECK_FALSE(is_near_duplicate("Revenue was $50M in 2018", "Profit fell in 2020"));
    std::mt19937_64 rng(7);
    std::string s = words(rng, 40, 1000);
    CHECK(jaccard3(s, s + " indeed") >= 0.85);
    CHECK(is_near_duplicate(s, s + " indeed"));
    CHECK(is_near_duplicate("a b", "A  b!"));
    CHECK_FALSE(is_near_duplicate("a b", "a c"));
}

TEST_CASE("near duplicate agrees with the brute-force oracle") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 500; ++i) {
        std::string a = words(rng, 3 + rng() % 20, 6);
        std::string b = (rng() % 2) ? a + " " + words(rng, rng() % 3, 6) : words(rng, 3 + rng() % 20, 6);
        CHECK(is_near_duplicate(a, b) == (jaccard3(a, b) >= 0.85));
    }
}

TEST_CASE("dedup soundness over random append sequences") {
    std::mt19937_64 rng(3);
    SharedLog log;
    for (int i = 0; i < 300; ++i) log.append(lookup(words(rng, 3 + rng() % 6, 4), 1 + rng() % 5));
    auto es = log.entries();
    for (std::size_t i = 0; i < es.size(); ++i) {
        for (std::size_t j = i + 1; j < es.size(); ++j) CHECK_FALSE(is_near_duplicate(es[i].content, es[j].content));
        if (i) CHECK(es[i - 1].meta.step < es[i].meta.step);
    }
}

TEST_CASE("concurrent appends keep a strict step order") {
    SharedLog log;
    std::vector<std::thread> ts;
    for (int t = 0; t < 4; ++t)
        ts.emplace_back([&log, t] {
            for (int i = 0; i < 50; ++i) log.append(lookup("thread " + std::to_string(t) + " item " + std::to_string(i) + " value"));
        });
    for (auto& t : ts) t.join();
    auto es = log.entries();
    CHECK(es.size() == 200);
    for (std::size_t i = 0; i < es.size(); ++i) CHECK(es[i].meta.step == static_cast<std::int64_t>(i));
}

TEST_CASE("token estimate") {
    CHECK(token_estimate("") == 0);
    CHECK(token_estimate(std::string(4000, 'a')) == 1000);
    CHECK(token_estimate("abcde") == 2);
}

TEST_CASE("render_view below the trigger is verbatim") {
    SharedLog log;
    log.append(query("What was revenue?"));
    log.append(lookup("Revenue in 2018 was $50M."));
    auto v = render_view(log);
    CHECK(v == "[0] User (Query): What was revenue?\n[1] TableAgent (Lookup): Revenue in 2018 was $50M. {table:Table 1[1,1]}");
    CHECK(v.find("HistorySummary") == std::string::npos);
}

TEST_CASE("render_view compresses 20 entries of 300 tokens") {
    std::mt19937_64 rng(5);
    SharedLog log;
    for (int i = 0; i < 20; ++i) {
        std::string c = "entry" + std::to_string(i) + " " + words(rng, 400, 100000);
        c.resize(1200);
        log.append(lookup(c, static_cast<std::size_t>(i)));
    }
    auto v = render_view(log);
    CHECK(token_estimate(v) <= 3900);
    CHECK(v.find("HistorySummary") != std::string::npos);
    CHECK(v.find("table:Table 1[0,1]") != std::string::npos);
}

TEST_CASE("budget bound and anchor preservation on random logs") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        SharedLog log;
        std::size_t n = 1 + rng() % 50;
        for (std::size_t i = 0; i < n; ++i) {
            std::string c = "e" + std::to_string(i) + " " + words(rng, 50 + rng() % 400, 1000000);
            LogEntry e = lookup(c, i);
            if (rng() % 2) e.meta.provenance.push_back(TableAnchor{"T" + std::to_string(i), i, i});
            log.append(e);
        }
        auto es = log.entries();
        std::string verbatim;
        for (const auto& e : es) verbatim += render_entry(e) + "\n";
        bool with_fn = rng() % 2;
        SummarizeFn fn;
        if (with_fn) fn = [](std::span<const LogEntry> s) { return std::string(5000, 's') + std::to_string(s.size()); };
        auto v = render_view(log, fn);
        if (token_estimate(verbatim) > 3600) CHECK(token_estimate(v) <= 3900);
        for (const auto& e : es)
            for (const auto& p : e.meta.provenance) {
                auto c = citation(p);
                CHECK(count_occurrences(v, c) >= 1);
            }
        std::size_t total = 0, found = 0;
        for (const auto& e : es) total += e.meta.provenance.size();
        for (const auto& e : es)
            for (const auto& p : e.meta.provenance) found += count_occurrences(v, citation(p)) > 0;
        CHECK(found == total);
    }
}

TEST_CASE("parse_answer") {
    CHECK(parse_answer("The revenue increased. Answer: $5M increase, due to higher sales volume.") ==
          "$5M increase, due to higher sales volume.");
    CHECK_FALSE(parse_answer("We still need the 2019 figure.").has_value());
    CHECK(parse_answer("Therefore, the answer is 42.") == "Therefore, the answer is 42.");
    for (std::string a : {"42", "$5M increase", "yes", "In 2019, Paris."}) CHECK(parse_answer(format_answer(a)) == a);
}

TEST_CASE("parse_verdict") {
    CHECK(parse_verdict("Verified. The table shows $50M -> $55M (+$5M). (No issues flagged.)").ok);
    auto f = parse_verdict("Flagged incorrect calculation: 55-50 != 6.");
    CHECK_FALSE(f.ok);
    CHECK(f.reason.rfind("Flagged incorrect calculation", 0) == 0);
    auto m = parse_verdict("The table value is unsupported; CEO in 2020 missing.");
    CHECK_FALSE(m.ok);
    CHECK(m.reason.find("missing") != std::string::npos);
    auto u = parse_verdict("Hmm.");
    CHECK(u.reason == "unparseable verdict");
    CHECK_FALSE(parse_verdict("BOOKED").ok);
}

TEST_CASE("from_entries requires increasing steps") {
    auto a = query("q");
    a.meta.step = 3;
    auto b = lookup("x");
    b.meta.step = 3;
    CHECK_THROWS_WITH(SharedLog::from_entries({a, b}), doctest::Contains("strictly increasing"));
}
