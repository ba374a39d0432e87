#include "logboard/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "logboard/agents.hpp"
#include "logboard/backend.hpp"
#include "logboard/gating.hpp"
#include "logboard/harness.hpp"
#include "logboard/scheduler.hpp"
#include "logboard/sources.hpp"
#include "logboard/text.hpp"
#include "logboard/trace_io.hpp"

namespace logboard {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
    std::string config;
    int max_rounds = 6;
    bool no_verify = false;
    std::string verifier = "layered";
    bool check_contradictions = false;
    std::string gate;
    std::uint64_t seed = 0;
    std::string backend_url;
    std::string scripted;
    std::string model = "default";
    std::string out = "logboard-out";
    int patience = 1;
    int per_agent_cap = 2;
    bool parallel = false;
    int jobs = 1;
    double k1 = 1.2;
    double b = 0.75;
    std::size_t top_n = 3;
    std::size_t window = 2;
};

struct Settings {
    SchedulerConfig scheduler;
    AgentSet agents;
    std::optional<std::string> gate;
    std::optional<std::uint64_t> seed;
    std::string backend_url;
    std::string scripted;
    std::string model = "default";
    fs::path out = "logboard-out";
    int jobs = 1;
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "JSON config file; flags override its values");
    sub->add_option("--max-rounds", f.max_rounds, "Maximum scheduler rounds")->check(CLI::PositiveNumber);
    sub->add_flag("--no-verify", f.no_verify, "Skip the Verification role");
    sub->add_option("--verifier", f.verifier, "layered | deterministic | backend | none")
        ->check(CLI::IsMember({"layered", "deterministic", "backend", "none"}));
    sub->add_flag("--check-contradictions", f.check_contradictions, "Flag Lookup/Quote numeric conflicts");
    sub->add_option("--gate", f.gate, "Gate JSON; enables gated rounds");
    sub->add_option("--seed", f.seed, "Seed for stochastic steps");
    sub->add_option("--backend-url", f.backend_url, "Chat-completion base URL (else LOGBOARD_BASE_URL)");
    sub->add_option("--scripted", f.scripted, "Scripted backend fixture");
    sub->add_option("--model", f.model, "Model name sent to the remote backend");
    sub->add_option("--out", f.out, "Output directory");
    sub->add_option("--patience", f.patience, "Stalled rounds before the Summarizer runs anyway");
    sub->add_option("--per-agent-cap", f.per_agent_cap, "Actions per retrieval role and question")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--parallel-retrieval", f.parallel, "Run retrieval roles concurrently");
    sub->add_option("--jobs", f.jobs, "Concurrent benchmark runs")->check(CLI::PositiveNumber);
    sub->add_option("--k1", f.k1, "BM25 k1");
    sub->add_option("--b", f.b, "BM25 b");
    sub->add_option("--top-n", f.top_n, "Passages retrieved per Context turn");
    sub->add_option("--sentence-window", f.window, "Sentences kept around a matched span");
}

VerifierMode verifier_mode(const std::string& s) {
    if (s == "deterministic") return VerifierMode::DeterministicOnly;
    if (s == "backend") return VerifierMode::BackendOnly;
    if (s == "none") return VerifierMode::AlwaysOk;
    if (s == "layered") return VerifierMode::Layered;
    throw UsageError("unknown verifier mode '" + s + "'");
}

// Config file values first, then every flag given on the command line.
Settings resolve(const CLI::App* sub, const Flags& f) {
    Settings s;
    auto given = [&](const char* name) { return sub->count(name) > 0; };
    json cfg = json::object();
    if (!f.config.empty()) {
        std::ifstream is(f.config);
        if (!is) throw UsageError("cannot read config " + f.config);
        try {
            cfg = json::parse(is);
        } catch (const json::exception& e) {
            throw UsageError(f.config + ": " + e.what());
        }
        if (!cfg.is_object()) throw UsageError(f.config + ": config must be a JSON object");
    }
    auto pick = [&](const char* flag, const char* key, auto flag_value) {
        using T = decltype(flag_value);
        if (given(flag)) return flag_value;
        if (cfg.contains(key)) return cfg.at(key).get<T>();
        return flag_value;
    };
    try {
        s.scheduler.max_rounds = pick("--max-rounds", "max_rounds", f.max_rounds);
        s.scheduler.patience = pick("--patience", "patience", f.patience);
        s.scheduler.per_agent_cap = pick("--per-agent-cap", "per_agent_cap", f.per_agent_cap);
        s.scheduler.parallel_retrieval = pick("--parallel-retrieval", "parallel_retrieval", f.parallel);
        bool verify = given("--no-verify") ? !f.no_verify : cfg.value("verify", true);
        s.scheduler.verifier_enabled = verify;
        s.agents.verifier_mode = verifier_mode(pick("--verifier", "verifier", f.verifier));
        s.agents.check_contradictions = pick("--check-contradictions", "check_contradictions", f.check_contradictions);
        auto gate = pick("--gate", "gate", f.gate);
        if (!gate.empty()) s.gate = gate;
        if (given("--seed"))
            s.seed = f.seed;
        else if (cfg.contains("seed"))
            s.seed = cfg.at("seed").get<std::uint64_t>();
        s.backend_url = pick("--backend-url", "backend_url", f.backend_url);
        s.scripted = pick("--scripted", "scripted", f.scripted);
        s.model = pick("--model", "model", f.model);
        s.out = pick("--out", "out", f.out);
        s.jobs = pick("--jobs", "jobs", f.jobs);
        json r = cfg.value("retrieval", json::object());
        auto rpick = [&](const char* flag, const char* key, auto v) {
            using T = decltype(v);
            if (given(flag)) return v;
            if (r.contains(key)) return r.at(key).get<T>();
            return v;
        };
        s.agents.retrieval.k1 = rpick("--k1", "k1", f.k1);
        s.agents.retrieval.b = rpick("--b", "b", f.b);
        s.agents.retrieval.top_n = rpick("--top-n", "top_n", f.top_n);
        s.agents.retrieval.sentence_window_k = rpick("--sentence-window", "sentence_window_k", f.window);
    } catch (const json::exception& e) {
        throw UsageError(std::string("config value has the wrong type: ") + e.what());
    }
    if (!s.agents.retrieval.valid()) throw UsageError("retrieval parameters need k1 > 0, 0 <= b <= 1, top_n >= 1");
    if (!s.scheduler.valid()) throw UsageError("scheduler parameters out of range");
    s.scheduler.gate_enabled = s.gate.has_value();
    return s;
}

std::unique_ptr<TextBackend> make_backend(const Settings& s) {
    if (!s.scripted.empty()) {
        if (!fs::exists(s.scripted)) throw UsageError("scripted fixture not found: " + s.scripted);
        return std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(s.scripted));
    }
    auto opts = HttpChatBackend::options_from_env(s.model);
    if (!s.backend_url.empty()) opts.base_url = s.backend_url;
    if (opts.base_url.empty())
        throw UsageError("no backend configured: pass --scripted PATH, --backend-url URL or set LOGBOARD_BASE_URL");
    return std::make_unique<HttpChatBackend>(opts);
}

std::optional<LogisticGate> gate_of(const Settings& s) {
    if (!s.gate) return std::nullopt;
    return load_gate(*s.gate);
}

harness::FaultType parse_fault_type(const std::string& s) {
    auto t = harness::fault_type_from_string(s);
    if (!t) throw UsageError("unknown fault type '" + s + "'");
    return *t;
}

int cmd_ask(const CLI::App* sub, const Flags& f, const std::string& question, const std::string& sources_path,
            std::ostream& out, std::ostream& err) {
    if (text::trim(question).empty()) throw UsageError("question must be non-empty");
    auto s = resolve(sub, f);
    auto backend = make_backend(s);
    auto gate = gate_of(s);
    RunResources resources(load_sources(sources_path));
    auto result = run(question, resources, s.agents, *backend, s.scheduler, gate ? &*gate : nullptr);

    fs::create_directories(s.out);
    write_jsonl(s.out / "trace.jsonl", result.log.entries());
    std::ofstream(s.out / "run.json") << run_summary(result).dump(2) << "\n";

    err << "termination: " << to_string(result.termination) << "\n";
    if (result.final_answer) {
        out << *result.final_answer << "\n";
        return kExitAnswered;
    }
    if (result.partial_summary) err << "partial summary: " << *result.partial_summary << "\n";
    return kExitNoAnswer;
}

int cmd_bench(const CLI::App* sub, const Flags& f, const std::string& dataset, const std::string& fault_type,
              double rate, std::ostream& out) {
    auto s = resolve(sub, f);
    auto backend = make_backend(s);
    auto gate = gate_of(s);
    auto records = harness::load_records(dataset);
    harness::BenchOptions opts;
    opts.scheduler = s.scheduler;
    opts.agents = s.agents;
    opts.gate = gate ? &*gate : nullptr;
    opts.out_dir = s.out;
    opts.jobs = s.jobs;
    if (!fault_type.empty()) {
        if (!s.seed) throw UsageError("fault injection needs --seed");
        opts.fault = harness::FaultSpec{parse_fault_type(fault_type), rate, *s.seed};
        if (!opts.fault->valid()) throw UsageError("--rate must be in (0, 1]");
    }
    if (s.seed) opts.seed = *s.seed;
    auto r = harness::run_benchmark(records, *backend, opts);
    const auto& m = r.metrics;
    std::ostringstream line;
    line << std::fixed << std::setprecision(3) << "n=" << m.n << " em=" << m.em << " ci=[" << m.ci_low << ","
         << m.ci_high << "] calls=" << m.backend_calls_mean << " rounds=" << m.rounds_mean;
    if (opts.fault) line << " catch=" << m.catch_rate << " repair=" << m.repair_rate;
    line << " out=" << s.out.string();
    out << line.str() << "\n";
    return 0;
}

int cmd_train_gate(const CLI::App* sub, const Flags& f, const std::string& dir, int epochs, double lr, double l2, double threshold, std::ostream& out,
                   std::ostream& err) {
    auto s = resolve(sub, f);
    auto mined = mine_samples(read_trace_dir(dir));
    for (const auto& w : mined.warnings) err << "warning: " << w << "\n";
    TrainOptions opts;
    opts.epochs = epochs;
    opts.learning_rate = lr;
    opts.l2 = l2;
    opts.threshold = threshold;
    auto r = train(mined.samples, opts);
    fs::create_directories(s.out);
    save_gate(s.out / "gate.json", r.gate);
    out << "samples=" << mined.samples.size() << " final_loss=" << std::setprecision(6) << r.final_loss
        << " gate=" << (s.out / "gate.json").string() << "\n";
    return 0;
}

int cmd_inject(const CLI::App* sub, const Flags& f, const std::string& sources_path, const std::string& type,
               double rate, std::ostream& out) {
    auto s = resolve(sub, f);
    if (!s.seed) throw UsageError("inject needs --seed");
    harness::FaultSpec spec{parse_fault_type(type), rate, *s.seed};
    if (!spec.valid()) throw UsageError("--rate must be in (0, 1]");
    auto injected = harness::inject_faults(load_sources(sources_path), spec);
    fs::create_directories(s.out);
    save_sources(s.out / "sources.json", injected.sources);
    nlohmann::ordered_json j;
    j["type"] = std::string(harness::to_string(spec.type));
    j["rate"] = spec.rate;
    j["seed"] = spec.seed;
    j["labels"] = nlohmann::ordered_json::array();
    for (const auto& l : injected.labels) j["labels"].push_back(harness::to_json(l));
    std::ofstream(s.out / "faults.json") << j.dump(2) << "\n";
    out << "injected=" << injected.labels.size() << " out=" << s.out.string() << "\n";
    return 0;
}

int cmd_trace(const std::string& path, const std::string& format, std::ostream& out) {
    auto t = read_jsonl(fs::path(path));
    if (format == "jsonl")
        out << to_jsonl(t.entries);
    else
        out << render_markdown(t.entries);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Question answering over a shared agent log"};
    app.name("logboard");
    app.require_subcommand(1);
    Flags f;

    std::string question, sources_path;
    auto* ask = app.add_subcommand("ask", "Answer one question");
    ask->add_option("question", question, "Question text")->required();
    ask->add_option("--sources", sources_path, "Source bundle JSON or directory")->required();
    add_common(ask, f);

    std::string dataset, fault_type;
    double rate = 0.1;
    auto* bench = app.add_subcommand("bench", "Run a benchmark file");
    bench->add_option("dataset", dataset, "Benchmark JSONL")->required();
    bench->add_option("--fault-type", fault_type, "Inject faults of this type during the runs");
    bench->add_option("--rate", rate, "Fraction of eligible entries corrupted");
    add_common(bench, f);

    std::string traces_dir;
    int epochs = 500;
    double lr = 0.1, l2 = 0.0, threshold = 0.5;
    auto* tg = app.add_subcommand("train-gate", "Fit the continue/stop gate on trace files");
    tg->add_option("traces", traces_dir, "Directory of JSONL traces")->required();
    tg->add_option("--epochs", epochs, "Gradient descent epochs");
    tg->add_option("--lr", lr, "Learning rate");
    tg->add_option("--l2", l2, "L2 penalty");
    tg->add_option("--threshold", threshold, "Continue threshold");
    add_common(tg, f);

    std::string inject_sources, inject_type = "arithmetic";
    double inject_rate = 0.1;
    auto* inj = app.add_subcommand("inject", "Corrupt a source bundle");
    inj->add_option("sources", inject_sources, "Source bundle JSON or directory")->required();
    inj->add_option("--type", inject_type, "Fault type");
    inj->add_option("--rate", inject_rate, "Fraction of eligible items corrupted");
    add_common(inj, f);

    std::string trace_path, format = "markdown";
    auto* tr = app.add_subcommand("trace", "Render a JSONL trace");
    tr->add_option("trace", trace_path, "Trace JSONL")->required();
    tr->add_option("--format", format, "markdown | jsonl")->check(CLI::IsMember({"markdown", "jsonl"}));

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitError;
    }

    try {
        if (ask->parsed()) return cmd_ask(ask, f, question, sources_path, out, err);
        if (bench->parsed()) return cmd_bench(bench, f, dataset, fault_type, rate, out);
        if (tg->parsed()) return cmd_train_gate(tg, f, traces_dir, epochs, lr, l2, threshold, out, err);
        if (inj->parsed()) return cmd_inject(inj, f, inject_sources, inject_type, inject_rate, out);
        if (tr->parsed()) return cmd_trace(trace_path, format, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}

}  // namespace logboard
