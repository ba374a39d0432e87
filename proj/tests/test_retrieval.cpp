#include <doctest.h>

#include "logboard/retrieval.hpp"
#include "oracles.hpp"

using namespace logboard;
using namespace logboard::retrieval;

TEST_CASE("empty corpus") {
    auto idx = index({});
    CHECK(idx.doc_count() == 0);
    CHECK(retrieve(idx, "anything", 3).empty());
}

TEST_CASE("index statistics match hand counts") {
    std::vector<Passage> ps{{"a", "revenue grew revenue"}, {"b", "costs grew"}, {"c", "Revenue fell in 2019"}};
    auto idx = index(ps);
    CHECK(idx.doc_count() == 3);
    CHECK(idx.document_frequency("revenue") == 2);
    CHECK(idx.document_frequency("grew") == 2);
    CHECK(idx.document_frequency("2019") == 1);
    CHECK(idx.document_frequency("absent") == 0);
    CHECK(idx.term_frequency(0, "revenue") == 2);
    CHECK(idx.term_frequency(1, "revenue") == 0);
    CHECK(idx.avg_doc_length() == doctest::Approx(3.0));
    auto again = index(ps);
    CHECK(again.avg_doc_length() == idx.avg_doc_length());
    CHECK(again.document_frequency("revenue") == idx.document_frequency("revenue"));
    CHECK_THROWS_AS(index({{"a", "x"}, {"a", "y"}}), SourceError);
}

TEST_CASE("retrieve ranking") {
    std::vector<Passage> ps{{"a", "alpha beta"}, {"b", "beta gamma"}, {"c", "delta"}};
    auto idx = index(ps);
    auto r = retrieve(idx, "gamma", 3);
    REQUIRE(r.size() == 1);
    CHECK(r[0].doc_id == "b");
    CHECK(retrieve(idx, "zeta omega", 3).empty());
    CHECK(retrieve(idx, "beta", 1).size() == 1);
}

TEST_CASE("retrieve agrees with the direct formula") {
    std::mt19937_64 rng(99);
    for (int c = 0; c < 50; ++c) {
        std::vector<std::pair<std::string, std::string>> docs;
        std::vector<Passage> ps;
        std::size_t n = 1 + rng() % 10;
        for (std::size_t d = 0; d < n; ++d) {
            std::string body;
            for (std::size_t w = 0, len = 1 + rng() % 12; w < len; ++w) body += "t" + std::to_string(rng() % 15) + " ";
            docs.emplace_back("d" + std::to_string(d), body);
            ps.push_back({docs.back().first, body});
        }
        std::string q;
        for (int w = 0; w < 3; ++w) q += "t" + std::to_string(rng() % 15) + " ";
        auto expected = oracle::bm25_rank(docs, q);
        auto got = retrieve(index(ps), q, 100);
        REQUIRE(got.size() == expected.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].doc_id == expected[i].first);
            CHECK(got[i].score == doctest::Approx(expected[i].second));
        }
    }
}

TEST_CASE("reranker hook adjusts scores") {
    auto idx = index({{"a", "beta beta"}, {"b", "beta"}});
    auto r = retrieve(idx, "beta", 2, {}, [](const std::string& id, double s) { return id == "b" ? s * 10 : s; });
    REQUIRE(r.size() == 2);
    CHECK(r[0].doc_id == "b");
}

TEST_CASE("table slice") {
    Table t{"Table 1", {"Year", "Revenue"}, {{"2017", "$48M"}, {"2018", "$50M"}, {"2019", "$55M"}}};
    auto s = select_table_slice(t, "By how much did the revenue increase from 2018 to 2019?");
    CHECK(s.kept_rows == std::vector<std::size_t>{1, 2});
    CHECK(std::find(s.kept_cols.begin(), s.kept_cols.end(), 1) != s.kept_cols.end());
    auto f = select_table_slice(t, "unrelated words only");
    CHECK(f.kept_rows == std::vector<std::size_t>{0, 1, 2});
    Table big{"B", {"k"}, {}};
    for (int i = 0; i < 80; ++i) big.rows.push_back({"x"});
    CHECK(select_table_slice(big, "nothing").kept_rows.size() == kFallbackRowCap);
    Table one{"O", {"k"}, {{"v"}}};
    CHECK(select_table_slice(one, "zzz").kept_rows == std::vector<std::size_t>{0});
}

TEST_CASE("truncate_span window") {
    std::string p = "One. Two. Three. Four. Five.";
    auto third = p.find("Three");
    CHECK(truncate_span(p, {third, third + 5}, 1) == "Two. Three. Four.");
    CHECK(truncate_span(p, {0, 3}, 2) == "One. Two. Three.");
    CHECK(truncate_span(p, {0, 3}, 0) == "One.");
}

TEST_CASE("best sentence") {
    std::string p = "The company expanded. The revenue increase in 2019 was due to volume. Growth continues.";
    auto s = best_sentence(p, "revenue increase 2019");
    REQUIRE(s.has_value());
    CHECK(p.substr(s->begin, s->end - s->begin) == "The revenue increase in 2019 was due to volume.");
    CHECK_FALSE(best_sentence(p, "zebra").has_value());
}

TEST_CASE("visual text keeps numerals") {
    ImageRecord cap{"i", "A pie chart", ""};
    CHECK(render_visual_text(cap) == "A pie chart");
    ImageRecord bar{"i", "Bar chart of sales by year with a long descriptive caption",
                    "Sales in 2020 were 5.2 and in 2021 were 6.1 million dollars"};
    auto full = render_visual_text(bar);
    CHECK(full.find("| OCR: Sales in 2020") != std::string::npos);
    auto tight = render_visual_text(bar, 20);
    CHECK(tight.find("5.2") != std::string::npos);
    CHECK(tight.find("6.1") != std::string::npos);
}
