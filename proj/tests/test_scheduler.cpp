#include <doctest.h>

#include <atomic>

#include "logboard/scheduler.hpp"
#include "logboard/sources.hpp"
#include "logboard/trace_io.hpp"

using namespace logboard;

namespace {

std::filesystem::path fixture(const char* name) { return std::filesystem::path(LOGBOARD_FIXTURES) / "revenue" / name; }

std::string question() {
    return "By how much did the revenue increase from 2018 to 2019, and what is the source of this increase according "
           "to the report?";
}

std::vector<std::pair<std::string, EntryType>> shape(const SharedLog& log) {
    std::vector<std::pair<std::string, EntryType>> out;
    for (const auto& e : log.entries()) out.emplace_back(e.agent, e.type);
    return out;
}

bool role(const GenerationRequest& r, std::string_view name) {
    return r.prompt.rfind("You are the " + std::string(name), 0) == 0;
}

// Passages whose sentences the Context role can quote one per call.
SourceBundle notes_bundle() {
    SourceBundle s;
    s.passages.push_back({"notes",
                          "Alpha revenue detail one. Bravo revenue detail two. Charlie revenue detail three. Delta "
                          "revenue detail four."});
    return s;
}

}  // namespace

TEST_CASE("golden exchange verifies in one round") {
    RunResources res(load_sources(fixture("sources.json")));
    auto backend = ScriptedBackend::from_file(fixture("script.json"));
    auto r = run(question(), res, AgentSet{}, backend);
    CHECK(r.termination == Termination::AnswerVerified);
    CHECK(r.metrics.rounds == 1);
    CHECK(r.metrics.backend_calls == 4);
    CHECK(r.metrics.agent_turns == 4);
    CHECK(r.metrics.wall_ms == 400);
    CHECK(r.final_answer == "$5M increase, due to higher sales volume.");
    CHECK(shape(r.log) == std::vector<std::pair<std::string, EntryType>>{{"User", EntryType::Query},
                                                                         {"TableAgent", EntryType::Lookup},
                                                                         {"ContextAgent", EntryType::Quote},
                                                                         {"SummarizingAgent", EntryType::Answer},
                                                                         {"VerificationAgent", EntryType::OK}});
    auto es = r.log.entries();
    for (std::size_t i = 0; i < es.size(); ++i) CHECK(es[i].meta.ts_ms == static_cast<std::int64_t>(i) * 100);
    auto summary = run_summary(r);
    CHECK(summary["termination"] == "AnswerVerified");
    CHECK(summary["backend_calls"] == 4);
}

TEST_CASE("identical inputs give identical traces") {
    RunResources res(load_sources(fixture("sources.json")));
    auto a = ScriptedBackend::from_file(fixture("script.json"));
    auto b = ScriptedBackend::from_file(fixture("script.json"));
    CHECK(to_jsonl(run(question(), res, AgentSet{}, a).log.entries()) ==
          to_jsonl(run(question(), res, AgentSet{}, b).log.entries()));
}

TEST_CASE("parallel retrieval commits in role order") {
    RunResources res(load_sources(fixture("sources.json")));
    auto a = ScriptedBackend::from_file(fixture("script.json"));
    auto b = ScriptedBackend::from_file(fixture("script.json"));
    SchedulerConfig par;
    par.parallel_retrieval = true;
    auto seq = run(question(), res, AgentSet{}, a);
    auto p = run(question(), res, AgentSet{}, b, par);
    CHECK(shape(seq.log) == shape(p.log));
    CHECK(p.termination == Termination::AnswerVerified);
}

TEST_CASE("a persistent Flag grants exactly one extra round") {
    RunResources res(load_sources(fixture("sources.json")));
    auto golden = ScriptedBackend::from_file(fixture("script.json"));
    int verdicts = 0;
    FunctionBackend backend([&](const GenerationRequest& r) {
        if (role(r, "VerificationAgent"))
            return "Flagged incorrect calculation: check number " + std::to_string(++verdicts) + " disagrees.";
        if (role(r, "SummarizingAgent") && r.prompt.find("Flagged") != std::string::npos)
            return std::string("Rechecked the table. Answer: $5M increase.");
        return golden.generate(r).text;
    });
    auto r = run(question(), res, AgentSet{}, backend);
    CHECK(r.termination == Termination::AnswerUnverified);
    CHECK(r.reengagements == 1);
    CHECK(r.metrics.rounds == 2);
    CHECK(r.final_answer == "$5M increase.");
    int flags = 0;
    for (const auto& e : r.log.entries()) flags += e.type == EntryType::Flag;
    CHECK(flags == 2);
}

TEST_CASE("no progress after two non-Answer summaries in a stalled round") {
    RunResources res(load_sources(fixture("sources.json")));
    std::atomic<int> n{0};
    FunctionBackend backend([&](const GenerationRequest& r) {
        if (role(r, "SummarizingAgent")) return "Attempt " + std::to_string(++n) + ": the figures are unclear.";
        return std::string("no relevant info found");
    });
    auto r = run(question(), res, AgentSet{}, backend);
    CHECK(r.termination == Termination::NoProgress);
    CHECK(r.metrics.rounds == 2);
    CHECK_FALSE(r.final_answer.has_value());
    CHECK(r.partial_summary == "Attempt 2: the figures are unclear.");
    REQUIRE(r.history.size() == 2);
    CHECK(r.history[1].accepted == 0);
    CHECK(r.history[1].consecutive_nonanswer == 2);
}

TEST_CASE("rounds that add evidence never stop for lack of progress") {
    RunResources res(notes_bundle());
    std::atomic<int> quotes{0}, sums{0};
    const char* sentences[] = {"Alpha revenue detail one.", "Bravo revenue detail two.", "Charlie revenue detail three.",
                               "Delta revenue detail four."};
    FunctionBackend backend([&](const GenerationRequest& r) {
        if (role(r, "ContextAgent")) return std::string(sentences[quotes++ % 4]);
        return "Pass " + std::to_string(++sums) + ": a revenue total is still needed.";
    });
    SchedulerConfig cfg;
    cfg.max_rounds = 3;
    cfg.per_agent_cap = 10;
    auto r = run("What is the revenue detail?", res, AgentSet{}, backend, cfg);
    CHECK(r.termination == Termination::MaxRounds);
    CHECK(r.metrics.rounds == 3);
    CHECK(quotes == 3);
}

TEST_CASE("per-agent cap bounds retrieval turns") {
    RunResources res(notes_bundle());
    std::atomic<int> quotes{0};
    const char* sentences[] = {"Alpha revenue detail one.", "Bravo revenue detail two.", "Charlie revenue detail three.",
                               "Delta revenue detail four."};
    FunctionBackend backend([&](const GenerationRequest& r) {
        if (role(r, "ContextAgent")) return std::string(sentences[quotes++ % 4]);
        return std::string("More revenue context is still needed, round ") + std::to_string(quotes.load());
    });
    SchedulerConfig cfg;
    cfg.per_agent_cap = 2;
    auto r = run("What is the revenue detail?", res, AgentSet{}, backend, cfg);
    CHECK(quotes == 2);
    CHECK(r.termination == Termination::NoProgress);
}

TEST_CASE("gate stop triggers a final summarization") {
    RunResources res(load_sources(fixture("sources.json")));
    FunctionBackend backend([&](const GenerationRequest& r) {
        if (role(r, "TableAgent")) return std::string("Revenue in 2018 was $50M, revenue in 2019 was $55M (from Table 1).");
        if (role(r, "SummarizingAgent")) {
            if (r.prompt.find("No further retrieval rounds") != std::string::npos) return std::string("Answer: $5M increase.");
            return std::string("Revenue figures are logged; the cause may follow.");
        }
        if (role(r, "VerificationAgent")) return std::string("OK");
        return std::string("no relevant info found");
    });
    LogisticGate stop{{0, 0, 0, 0}, -10.0, 0.5};
    SchedulerConfig cfg;
    cfg.gate_enabled = true;
    auto r = run(question(), res, AgentSet{}, backend, cfg, &stop);
    CHECK(r.termination == Termination::AnswerVerified);
    CHECK(r.metrics.rounds == 1);
    REQUIRE(r.history.size() == 1);
    CHECK(r.history[0].gate_probability.has_value());

    LogisticGate go{{0, 0, 0, 0}, 10.0, 0.5};
    auto ungated = run(question(), res, AgentSet{}, backend, cfg, &go);
    CHECK(ungated.metrics.rounds > 1);
    CHECK_THROWS_AS(run(question(), res, AgentSet{}, backend, cfg, nullptr), std::invalid_argument);
}

TEST_CASE("entry hook sees every retrieval entry") {
    RunResources res(load_sources(fixture("sources.json")));
    auto backend = ScriptedBackend::from_file(fixture("script.json"));
    std::vector<std::pair<std::size_t, std::int64_t>> seen;
    EntryHook hook;
    hook.rewrite = [](LogEntry e, std::size_t) { return std::vector<LogEntry>{std::move(e)}; };
    hook.committed = [&](std::size_t ordinal, const LogEntry&, AppendResult r, std::int64_t step) {
        CHECK(r == AppendResult::Accepted);
        seen.emplace_back(ordinal, step);
    };
    run(question(), res, AgentSet{}, backend, {}, nullptr, &hook);
    CHECK(seen == std::vector<std::pair<std::size_t, std::int64_t>>{{0, 1}, {1, 2}});
}

TEST_CASE("transport failures abort with the partial log") {
    RunResources res(load_sources(fixture("sources.json")));
    std::atomic<int> calls{0};
    FunctionBackend backend([&](const GenerationRequest& r) -> std::string {
        ++calls;
        if (role(r, "ContextAgent")) throw TransportError("connection reset");
        return "Revenue in 2018 was $50M, revenue in 2019 was $55M (from Table 1).";
    });
    try {
        run(question(), res, AgentSet{}, backend);
        FAIL("expected RunAborted");
    } catch (const RunAborted& e) {
        CHECK(e.partial_log.size() == 2);
        CHECK(calls == 4);
        CHECK(e.metrics.backend_calls == 4);
    }
}

TEST_CASE("argument validation") {
    RunResources res(SourceBundle{});
    ScriptedBackend b;
    CHECK_THROWS_AS(run("   ", res, AgentSet{}, b), std::invalid_argument);
    SchedulerConfig bad;
    bad.max_rounds = 0;
    CHECK_THROWS_AS(run("q", res, AgentSet{}, b, bad), std::invalid_argument);
    CHECK(termination_from_string("NoProgress") == Termination::NoProgress);
    CHECK_FALSE(termination_from_string("Other").has_value());
}
