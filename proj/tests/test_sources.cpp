#include <doctest.h>

#include "logboard/sources.hpp"
#include "oracles.hpp"

using namespace logboard;

TEST_CASE("fixture bundle loads") {
    auto s = load_sources(std::filesystem::path(LOGBOARD_FIXTURES) / "revenue" / "sources.json");
    REQUIRE(s.tables.size() == 1);
    CHECK(s.tables[0].id == "Table 1");
    CHECK(s.tables[0].rows.size() == 3);
    CHECK(s.find_passage("report-p1") != nullptr);
    CHECK(s.find_image("nope") == nullptr);
}

TEST_CASE("csv tables handle quoting") {
    auto t = table_from_csv("Year,Revenue\r\n2018,\"$1,200\"\n2019,\"say \"\"hi\"\"\"\n", "rev");
    CHECK(t.id == "rev");
    CHECK(t.header == std::vector<std::string>{"Year", "Revenue"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "$1,200");
    CHECK(t.rows[1][1] == "say \"hi\"");
    CHECK_THROWS_AS(table_from_csv("a,\"b\n", "x"), SourceError);
}

TEST_CASE("validation rejects duplicates and ragged rows") {
    SourceBundle s;
    s.passages = {{"p", "a"}, {"p", "b"}};
    CHECK_THROWS_WITH_AS(validate(s), doctest::Contains("duplicate passage id"), SourceError);
    SourceBundle t;
    t.tables.push_back({"T", {"a", "b"}, {{"1"}}});
    CHECK_THROWS_AS(validate(t), SourceError);
}

TEST_CASE("directory layout and save round trip") {
    oracle::TempDir dir("sources");
    std::filesystem::create_directories(dir.path() / "tables");
    oracle::spit(dir.path() / "tables" / "sales.csv", "Year,Sales\n2020,$5.2M\n");
    oracle::spit(dir.path() / "passages.json", R"([{"id":"p1","text":"Sales grew."}])");
    oracle::spit(dir.path() / "images.json", R"([{"id":"fig1","caption":"Bar chart","ocr_text":"5.2 6.1"}])");
    auto s = load_sources(dir.path());
    REQUIRE(s.tables.size() == 1);
    CHECK(s.tables[0].id == "sales");
    CHECK(s.images[0].ocr_text == "5.2 6.1");
    save_sources(dir.path() / "out" / "bundle.json", s);
    auto back = load_sources(dir.path() / "out" / "bundle.json");
    CHECK(to_json(back) == to_json(s));
    CHECK_THROWS_AS(load_sources(dir.path() / "missing"), SourceError);
}
