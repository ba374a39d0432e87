#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "logboard/cli.hpp"
#include "oracles.hpp"

using namespace logboard;

namespace {

const std::filesystem::path kFix(LOGBOARD_FIXTURES);

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string question() { return oracle::slurp(kFix / "revenue" / "question.txt").substr(0, 120); }

}  // namespace

TEST_CASE("ask reproduces the golden exchange") {
    oracle::TempDir dir("ask");
    auto r = cli({"ask", question(), "--sources", (kFix / "revenue" / "sources.json").string(), "--scripted",
                  (kFix / "revenue" / "script.json").string(), "--out", dir.path().string()});
    CHECK(r.code == kExitAnswered);
    CHECK(r.out == "$5M increase, due to higher sales volume.\n");
    CHECK(r.err.find("termination: AnswerVerified") != std::string::npos);
    CHECK(oracle::slurp(dir.path() / "trace.jsonl") == oracle::slurp(kFix / "revenue" / "golden_trace.jsonl"));
    auto run = nlohmann::json::parse(oracle::slurp(dir.path() / "run.json"));
    CHECK(run["rounds"] == 1);
}

TEST_CASE("ask usage errors") {
    auto empty = cli({"ask", "  ", "--sources", (kFix / "revenue" / "sources.json").string(), "--scripted",
                      (kFix / "revenue" / "script.json").string()});
    CHECK(empty.code == kExitError);
    CHECK(empty.err.find("usage error") != std::string::npos);
    CHECK(cli({"ask", "q"}).code == kExitError);
    CHECK(cli({}).code == kExitError);
    CHECK(cli({"ask", "q", "--sources", "x.json", "--verifier", "maybe"}).code == kExitError);
    auto nobackend = cli({"ask", "q", "--sources", (kFix / "revenue" / "sources.json").string(), "--backend-url", ""});
    CHECK(nobackend.code == kExitError);
}

TEST_CASE("ask without an answer exits 2") {
    oracle::TempDir dir("noans");
    oracle::spit(dir.path() / "script.json", R"({"default":"Still unclear what the figures are."})");
    auto r = cli({"ask", question(), "--sources", (kFix / "revenue" / "sources.json").string(), "--scripted",
                  (dir.path() / "script.json").string(), "--out", (dir.path() / "o").string()});
    CHECK(r.code == kExitNoAnswer);
    CHECK(r.out.empty());
    CHECK(r.err.find("NoProgress") != std::string::npos);
}

TEST_CASE("config file values yield to flags") {
    oracle::TempDir dir("cfg");
    oracle::spit(dir.path() / "cfg.json", R"({"max_rounds": 1, "verify": false})");
    auto r = cli({"ask", question(), "--sources", (kFix / "revenue" / "sources.json").string(), "--scripted",
                  (kFix / "revenue" / "script.json").string(), "--config", (dir.path() / "cfg.json").string(), "--out",
                  dir.path().string()});
    CHECK(r.code == kExitAnswered);
    CHECK(r.err.find("AnswerUnverified") != std::string::npos);
    auto flag = cli({"ask", question(), "--sources", (kFix / "revenue" / "sources.json").string(), "--scripted",
                     (kFix / "revenue" / "script.json").string(), "--config", (dir.path() / "cfg.json").string(),
                     "--no-verify", "--out", dir.path().string()});
    CHECK(flag.err.find("AnswerUnverified") != std::string::npos);
    oracle::spit(dir.path() / "bad.json", R"({"max_rounds": "six"})");
    CHECK(cli({"ask", "q", "--sources", "x", "--config", (dir.path() / "bad.json").string()}).code == kExitError);
}

TEST_CASE("bench writes metrics") {
    oracle::TempDir dir("clibench");
    auto r = cli({"bench", (kFix / "bench" / "records.jsonl").string(), "--scripted",
                  (kFix / "bench" / "script.json").string(), "--out", dir.path().string()});
    CHECK(r.code == 0);
    auto m = nlohmann::json::parse(oracle::slurp(dir.path() / "metrics.json"));
    CHECK(m["em"] == 1.0);
    CHECK(m.contains("ci_low"));
    CHECK(m.contains("ci_high"));
    auto nos = cli({"bench", (kFix / "bench" / "records.jsonl").string(), "--scripted",
                    (kFix / "bench" / "script.json").string(), "--fault-type", "arithmetic", "--out",
                    dir.path().string()});
    CHECK(nos.code == kExitError);
    CHECK(nos.err.find("--seed") != std::string::npos);
}

TEST_CASE("trace renders markdown") {
    auto r = cli({"trace", (kFix / "revenue" / "golden_trace.jsonl").string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("| Agent (Type) | Log Entry Content |") != std::string::npos);
    CHECK(r.out.find("| TableAgent (Lookup) | Revenue in 2018 was $50M") != std::string::npos);
    auto j = cli({"trace", (kFix / "revenue" / "golden_trace.jsonl").string(), "--format", "jsonl"});
    CHECK(j.out == oracle::slurp(kFix / "revenue" / "golden_trace.jsonl"));
}

TEST_CASE("inject lists each mutation") {
    oracle::TempDir dir("inject");
    auto r = cli({"inject", (kFix / "revenue" / "sources.json").string(), "--rate", "0.2", "--type", "arithmetic",
                  "--seed", "3", "--out", dir.path().string()});
    CHECK(r.code == 0);
    auto f = nlohmann::json::parse(oracle::slurp(dir.path() / "faults.json"));
    REQUIRE(f["labels"].size() == 1);
    CHECK(f["labels"][0]["type"] == "ArithmeticCorruption");
    CHECK(std::filesystem::exists(dir.path() / "sources.json"));
    CHECK(cli({"inject", (kFix / "revenue" / "sources.json").string()}).code == kExitError);
}

TEST_CASE("train-gate fits on bench traces") {
    oracle::TempDir dir("train");
    // Single-round traces give no samples: training must refuse.
    cli({"bench", (kFix / "bench" / "records.jsonl").string(), "--scripted", (kFix / "bench" / "script.json").string(),
         "--out", (dir.path() / "b").string()});
    auto r = cli({"train-gate", (dir.path() / "b" / "traces").string(), "--out", (dir.path() / "g").string()});
    CHECK(r.code == kExitError);
    CHECK(r.err.find("single label") != std::string::npos);
}

TEST_CASE("the executable returns the same exit codes") {
    std::string cmd = std::string("\"") + LOGBOARD_CLI + "\" ask \"\" --sources x > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == kExitError);
}
