#include <doctest.h>

#include "logboard/agents.hpp"
#include "logboard/sources.hpp"

using namespace logboard;

namespace {

const std::string kQuestion =
    "By how much did the revenue increase from 2018 to 2019, and what is the source of this increase according to "
    "the report?";

std::filesystem::path fixture(const char* name) { return std::filesystem::path(LOGBOARD_FIXTURES) / "revenue" / name; }

RunResources revenue() { return RunResources(load_sources(fixture("sources.json"))); }

LogEntry entry(std::string_view agent, EntryType t, std::string content, std::vector<Provenance> prov = {}) {
    LogEntry e{std::string(agent), t, std::move(content), {}};
    e.meta.provenance = std::move(prov);
    return e;
}

LogEntry revenue_lookup(std::string content = "Revenue in 2018 was $50M, revenue in 2019 was $55M (from Table 1).") {
    return entry(agent_names::kTable, EntryType::Lookup, std::move(content),
                 {TableAnchor{"Table 1", 1, 1}, TableAnchor{"Table 1", 2, 1}});
}

SharedLog log_of(std::vector<LogEntry> es) {
    SharedLog log;
    for (auto& e : es) log.append(std::move(e));
    return log;
}

}  // namespace

TEST_CASE("roles and permitted types") {
    CHECK(agent_name(AgentRole::Table) == "TableAgent");
    CHECK(permitted_types(AgentRole::Summarizing) == std::vector<EntryType>{EntryType::Summary, EntryType::Answer});
    CHECK(permitted_types(AgentRole::Verification) == std::vector<EntryType>{EntryType::Flag, EntryType::OK});
    CHECK(AgentConfig::defaults(AgentRole::Summarizing).temperature == 0.0);
    CHECK(AgentConfig::defaults(AgentRole::Table).temperature == doctest::Approx(0.3));
}

TEST_CASE("should_act gating per role") {
    auto res = revenue();
    AgentSet agents;
    auto log = log_of({entry(agent_names::kUser, EntryType::Query, kQuestion)});
    AgentContext ctx{log, res, agents, 0};
    CHECK_FALSE(should_act(AgentRole::Visual, ctx));
    CHECK(should_act(AgentRole::Context, ctx));
    CHECK(should_act(AgentRole::Table, ctx));
    AgentContext later{log, res, agents, 1};
    CHECK_FALSE(should_act(AgentRole::Context, later));
}

TEST_CASE("table role stops once relevant columns are covered") {
    SourceBundle s;
    s.tables.push_back({"T", {"Year", "Revenue"}, {{"2018", "$50M"}, {"2019", "$55M"}}});
    RunResources res(s);
    AgentSet agents;
    auto log = log_of({entry(agent_names::kUser, EntryType::Query, "What was revenue in 2018?")});
    AgentContext ctx{log, res, agents, 0};
    CHECK(should_act(AgentRole::Table, ctx));
    log.append(entry(agent_names::kTable, EntryType::Lookup, "Revenue in 2018 was $50M.", {TableAnchor{"T", 0, 1}}));
    CHECK_FALSE(should_act(AgentRole::Table, ctx));
    // A Flag implicating the Lookup re-opens the table.
    log.append(entry(agent_names::kSummarizing, EntryType::Answer, "Answer: $50M"));
    log.append(entry(agent_names::kVerification, EntryType::Flag, "Flagged UnsupportedClaim: wrong row (steps 1)"));
    CHECK(should_act(AgentRole::Table, ctx));
}

TEST_CASE("table act anchors the cited cells") {
    auto res = revenue();
    AgentSet agents;
    auto log = log_of({entry(agent_names::kUser, EntryType::Query, kQuestion)});
    AgentContext ctx{log, res, agents, 0};
    auto backend = ScriptedBackend::from_file(fixture("script.json"));
    auto out = act(AgentRole::Table, ctx, backend);
    REQUIRE(out.entry.has_value());
    CHECK(out.entry->type == EntryType::Lookup);
    CHECK(out.entry->content == "Revenue in 2018 was $50M, revenue in 2019 was $55M (from Table 1).");
    CHECK(out.entry->meta.provenance ==
          std::vector<Provenance>{TableAnchor{"Table 1", 1, 1}, TableAnchor{"Table 1", 2, 1}});
    auto prompt = build_prompt(AgentRole::Table, ctx);
    CHECK(prompt.find(kQuestion) != std::string::npos);
    CHECK(prompt.find("| 2 | 2019 | $55M |") != std::string::npos);
    CHECK(prompt.find("| 0 | 2017") == std::string::npos);
}

TEST_CASE("context role quotes with a doc span and abstains on irrelevant corpora") {
    auto res = revenue();
    AgentSet agents;
    auto log = log_of({entry(agent_names::kUser, EntryType::Query, kQuestion)});
    AgentContext ctx{log, res, agents, 0};
    auto backend = ScriptedBackend::from_file(fixture("script.json"));
    auto out = act(AgentRole::Context, ctx, backend);
    REQUIRE(out.entry.has_value());
    CHECK(out.entry->type == EntryType::Quote);
    CHECK(out.entry->meta.provenance == std::vector<Provenance>{DocSpan{"report-p1", 59, 129}});

    SourceBundle s;
    s.passages.push_back({"x", "Weather was sunny all week."});
    RunResources other(s);
    AgentContext octx{log, other, agents, 0};
    FunctionBackend never([](const GenerationRequest&) -> std::string { throw TransportError("must not be called"); });
    auto none = act(AgentRole::Context, octx, never);
    CHECK_FALSE(none.entry.has_value());
    CHECK(none.abstained);
    CHECK_FALSE(none.called_backend);

    FunctionBackend abstain([](const GenerationRequest&) { return std::string("no relevant info found"); });
    auto ab = act(AgentRole::Context, ctx, abstain);
    CHECK(ab.abstained);
    CHECK(ab.called_backend);
}

TEST_CASE("visual role anchors images by id or numerals") {
    SourceBundle s;
    s.images.push_back({"fig1", "Bar chart of sales", "2020 5.2 2021 6.1"});
    s.images.push_back({"fig2", "Pie chart", "40% 60%"});
    RunResources res(s);
    AgentSet agents;
    auto log = log_of({entry(agent_names::kUser, EntryType::Query, "What does the figure show for 2021 sales?")});
    AgentContext ctx{log, res, agents, 0};
    CHECK(should_act(AgentRole::Visual, ctx));
    FunctionBackend b([](const GenerationRequest&) { return std::string("VisualAgent: sales were $6.1M in 2021."); });
    auto out = act(AgentRole::Visual, ctx, b);
    REQUIRE(out.entry.has_value());
    CHECK(out.entry->content == "sales were $6.1M in 2021.");
    CHECK(out.entry->meta.provenance == std::vector<Provenance>{ImageRef{"fig1"}});
}

TEST_CASE("summarizing produces an Answer on the trace") {
    auto res = revenue();
    AgentSet agents;
    auto log = log_of({entry(agent_names::kUser, EntryType::Query, kQuestion), revenue_lookup(),
                       entry(agent_names::kContext, EntryType::Quote,
                             "According to the report: 'The revenue increase in 2019 was primarily due to higher sales "
                             "volume.'",
                             {DocSpan{"report-p1", 59, 129}})});
    AgentContext ctx{log, res, agents, 0};
    auto backend = ScriptedBackend::from_file(fixture("script.json"));
    auto out = act(AgentRole::Summarizing, ctx, backend);
    REQUIRE(out.entry.has_value());
    CHECK(out.entry->type == EntryType::Answer);
    CHECK(parse_answer(out.entry->content) == "$5M increase, due to higher sales volume.");

    FunctionBackend hedge([](const GenerationRequest&) { return std::string("The 2019 figure is still needed."); });
    auto s = act(AgentRole::Summarizing, ctx, hedge);
    REQUIRE(s.entry.has_value());
    CHECK(s.entry->type == EntryType::Summary);

    AgentContext fin{log, res, agents, 0, true};
    CHECK(build_prompt(AgentRole::Summarizing, fin).find("No further retrieval rounds") != std::string::npos);
}

TEST_CASE("prompts respect the context window") {
    auto res = revenue();
    AgentSet agents;
    agents.config(AgentRole::Table).context_window = 200;
    auto log = log_of({entry(agent_names::kUser, EntryType::Query, kQuestion)});
    for (int i = 0; i < 30; ++i)
        log.append(entry(agent_names::kSummarizing, EntryType::Summary,
                         "Round " + std::to_string(i) + " notes: the comparison still lacks a reference figure " +
                             std::to_string(i * 7)));
    AgentContext ctx{log, res, agents, 0};
    auto prompt = build_prompt(AgentRole::Table, ctx);
    CHECK(token_estimate(prompt) <= 200);
    CHECK(prompt.rfind("You are the TableAgent.", 0) == 0);
}

TEST_CASE("deterministic verifier") {
    std::vector<LogEntry> log{entry(agent_names::kUser, EntryType::Query, kQuestion), revenue_lookup()};
    log[0].meta.step = 0;
    log[1].meta.step = 1;
    CHECK(verify_deterministic(log, "Revenue rose +$5M.").empty());
    CHECK(verify_deterministic(log, "$5M increase, due to higher sales volume.").empty());
    auto bad = verify_deterministic(log, "Revenue increased by $6M.");
    REQUIRE(bad.size() == 1);
    CHECK(bad[0].kind == Finding::Kind::ArithmeticMismatch);
    CHECK(bad[0].implicated_steps == std::vector<std::int64_t>{1});
    auto un = verify_deterministic(log, "Margin was 42%.");
    REQUIRE(un.size() == 1);
    CHECK(un[0].kind == Finding::Kind::UnsupportedClaim);
    auto units = verify_deterministic(log, "Revenue increased by $5K.");
    REQUIRE(units.size() == 1);
    CHECK(units[0].kind == Finding::Kind::UnitMismatch);
    auto miss = verify_deterministic(log, "The 2019 cause is unknown.");
    REQUIRE(miss.size() == 1);
    CHECK(miss[0].kind == Finding::Kind::MissingItem);
    CHECK(verify_deterministic(log, "Revenue increased 10% from 2018 to 2019.").empty());
}

TEST_CASE("contradiction check is opt-in") {
    std::vector<LogEntry> log{entry(agent_names::kUser, EntryType::Query, "What was revenue in 2019?"),
                              revenue_lookup(),
                              entry(agent_names::kContext, EntryType::Quote, "A separate report states revenue was $60M.",
                                    {DocSpan{"d", 0, 5}})};
    for (std::size_t i = 0; i < log.size(); ++i) log[i].meta.step = static_cast<std::int64_t>(i);
    CHECK(verify_deterministic(log, "Revenue in 2019 was $55M.").empty());
    auto f = verify_deterministic(log, "Revenue in 2019 was $55M.", {true});
    REQUIRE(f.size() == 1);
    CHECK(f[0].implicated_steps == std::vector<std::int64_t>{1, 2});
}

TEST_CASE("verification act paths") {
    auto res = revenue();
    AgentSet agents;
    auto backend = ScriptedBackend::from_file(fixture("script.json"));
    auto base = [&](std::string lookup_text, std::string answer) {
        return log_of({entry(agent_names::kUser, EntryType::Query, kQuestion), revenue_lookup(std::move(lookup_text)),
                       entry(agent_names::kSummarizing, EntryType::Answer, "Answer: " + answer)});
    };
    auto clean = base("Revenue in 2018 was $50M, revenue in 2019 was $55M (from Table 1).",
                      "$5M increase, due to higher sales volume.");
    AgentContext ctx{clean, res, agents, 0};
    auto ok = verification_act(ctx, backend);
    CHECK(ok.entry.type == EntryType::OK);
    CHECK(ok.backend_consulted);

    auto corrupted = base("Revenue in 2018 was $50M, revenue in 2019 was $56M (from Table 1).",
                          "$5M increase, due to higher sales volume.");
    AgentContext cctx{corrupted, res, agents, 0};
    auto flag = verification_act(cctx, backend);
    CHECK(flag.entry.type == EntryType::Flag);
    CHECK(flag.entry.content.find("ArithmeticMismatch") != std::string::npos);
    CHECK(implicated_steps(flag.entry.content) == std::vector<std::int64_t>{1});
    CHECK_FALSE(flag.backend_consulted);

    auto entity = base("Revenue in 2018 was $50M, revenue in 2019 was $55M (from Table 1).",
                       "$5M increase, driven by Paris.");
    AgentContext ectx{entity, res, agents, 0};
    FunctionBackend unsupported(
        [](const GenerationRequest&) { return std::string("Paris is unsupported by the log; flagged."); });
    auto eflag = verification_act(ectx, unsupported);
    CHECK(eflag.entry.type == EntryType::Flag);

    FunctionBackend down([](const GenerationRequest&) -> std::string { throw TransportError("refused"); });
    auto na = verification_act(ctx, down);
    CHECK(na.entry.type == EntryType::OK);
    CHECK(na.backend_unavailable);
    CHECK(na.entry.content.find("backend-unavailable") != std::string::npos);

    AgentSet noop;
    noop.verifier_mode = VerifierMode::AlwaysOk;
    AgentContext nctx{corrupted, res, noop, 0};
    CHECK(verification_act(nctx, backend).entry.type == EntryType::OK);

    AgentSet det;
    det.verifier_mode = VerifierMode::DeterministicOnly;
    AgentContext dctx{clean, res, det, 0};
    auto d = verification_act(dctx, down);
    CHECK(d.entry.type == EntryType::OK);
    CHECK_FALSE(d.backend_consulted);

    auto no_answer = log_of({entry(agent_names::kUser, EntryType::Query, kQuestion)});
    AgentContext bad{no_answer, res, agents, 0};
    CHECK_THROWS_AS(verification_act(bad, backend), std::logic_error);
}

TEST_CASE("open requests, gap phrases and implicated steps") {
    CHECK(count_gap_phrases("The CEO in 2020 is missing; I don\xE2\x80\x99t have it and I'm not sure.") == 3);
    CHECK(count_gap_phrases("all good") == 0);
    CHECK(implicated_steps("Flagged X: bad (steps 3, 1) and (step 7).") == std::vector<std::int64_t>{1, 3, 7});
    std::vector<LogEntry> es{entry(agent_names::kUser, EntryType::Query, "q"),
                             entry(agent_names::kSummarizing, EntryType::Summary, "The 2019 value is needed.")};
    CHECK(open_request(es) == "The 2019 value is needed.");
    es.push_back(entry(agent_names::kSummarizing, EntryType::Summary, "Revenue looks stable."));
    CHECK(open_request(es).empty());
    es.push_back(entry(agent_names::kVerification, EntryType::Flag, "Flagged: wrong."));
    CHECK(open_request(es) == "Flagged: wrong.");
    es.push_back(entry(agent_names::kSummarizing, EntryType::Answer, "Answer: 5"));
    CHECK(open_request(es).empty());
    CHECK(question_of(es) == "q");
}
