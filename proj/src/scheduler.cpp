#include "logboard/scheduler.hpp"

#include <array>
#include <chrono>
#include <future>

namespace logboard {

bool SchedulerConfig::valid() const {
    return max_rounds >= 1 && patience >= 0 && per_agent_cap >= 1 && (reengage_limit == 0 || reengage_limit == 1) &&
           transport_retries >= 0 && budget.valid();
}

std::string_view to_string(Termination t) {
    switch (t) {
        case Termination::AnswerVerified: return "AnswerVerified";
        case Termination::AnswerUnverified: return "AnswerUnverified";
        case Termination::NoProgress: return "NoProgress";
        case Termination::MaxRounds: return "MaxRounds";
    }
    return "?";
}

std::optional<Termination> termination_from_string(std::string_view s) {
    for (auto t : {Termination::AnswerVerified, Termination::AnswerUnverified, Termination::NoProgress,
                   Termination::MaxRounds})
        if (to_string(t) == s) return t;
    return std::nullopt;
}

Completion RetryingBackend::generate(const GenerationRequest& req) {
    for (int attempt = 0;; ++attempt) {
        try {
            return inner_.generate(req);
        } catch (const TransportError&) {
            if (attempt >= retries_) throw;
        }
    }
}

nlohmann::ordered_json run_summary(const RunResult& r) {
    nlohmann::ordered_json j;
    j["answer"] = r.final_answer ? nlohmann::ordered_json(*r.final_answer) : nlohmann::ordered_json(nullptr);
    j["termination"] = std::string(to_string(r.termination));
    j["rounds"] = r.metrics.rounds;
    j["backend_calls"] = r.metrics.backend_calls;
    j["token_usage"] = r.metrics.token_usage;
    j["wall_ms"] = r.metrics.wall_ms;
    return j;
}

namespace {

enum class Verdict { Verified, Reengage, Unverified };

class Run {
public:
    Run(const RunResources& res, const AgentSet& agents, TextBackend& backend, const SchedulerConfig& cfg,
        const LogisticGate* gate, const EntryHook* hook)
        : res_(res),
          agents_(agents),
          metered_(backend),
          retrying_(metered_, cfg.transport_retries),
          cfg_(cfg),
          gate_(gate),
          hook_(hook),
          start_(std::chrono::steady_clock::now()) {
        result_.log = SharedLog(cfg.budget);
    }

    RunResult go(std::string_view question) {
        LogEntry q;
        q.agent = agent_names::kUser;
        q.type = EntryType::Query;
        q.content = std::string(question);
        q.meta.round = 0;
        q.meta.ts_ms = 0;
        result_.log.append(std::move(q));

        int stalled = 0;
        for (int round = 0; round < cfg_.max_rounds; ++round) {
            result_.metrics.rounds = round + 1;
            RoundRecord rec;
            rec.round = round;
            retrieval_phase(round, rec);
            const bool updated = rec.accepted > 0;
            const int stalled_now = updated ? 0 : stalled + 1;
            stalled = stalled_now;

            bool reengaging = false;
            if (updated || round == 0 || stalled_now >= cfg_.patience) {
                rec.summarized = true;
                auto outcome = summarize(round, false);
                if (outcome && outcome->type == EntryType::Answer) {
                    rec.summary_was_answer = true;
                    consecutive_nonanswer_ = 0;
                    auto v = verify(round, rec);
                    if (v == Verdict::Verified) return finish(Termination::AnswerVerified, rec);
                    if (v == Verdict::Unverified) return finish(Termination::AnswerUnverified, rec);
                    reengaging = true;
                } else {
                    ++consecutive_nonanswer_;
                }
            }
            rec.consecutive_nonanswer = consecutive_nonanswer_;

            if (!updated && consecutive_nonanswer_ >= 2) return finish(Termination::NoProgress, rec);

            // The gate never overrides a Flag-driven re-engagement.
            if (cfg_.gate_enabled && gate_ && !reengaging && round + 1 < cfg_.max_rounds) {
                auto entries = result_.log.entries();
                auto f = extract_features(entries, &res_.sources, rec.accepted);
                double p = gate_->predict_continue(f);
                rec.gate_probability = p;
                if (p < gate_->threshold) {
                    auto outcome = summarize(round, true);
                    if (outcome && outcome->type == EntryType::Answer) {
                        consecutive_nonanswer_ = 0;
                        auto v = verify(round, rec);
                        if (v == Verdict::Verified) return finish(Termination::AnswerVerified, rec);
                        if (v == Verdict::Unverified) return finish(Termination::AnswerUnverified, rec);
                    } else {
                        ++consecutive_nonanswer_;
                        rec.consecutive_nonanswer = consecutive_nonanswer_;
                        return finish(Termination::NoProgress, rec);
                    }
                }
            }
            result_.history.push_back(rec);
        }
        bool has_answer = last_answer().has_value();
        RoundRecord none;
        none.round = -1;
        return finish(has_answer ? Termination::AnswerUnverified : Termination::MaxRounds, none);
    }

private:
    std::int64_t now_ms() const {
        if (metered_.saw_simulated_latency()) return metered_.simulated_ms();
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_).count();
    }

    [[noreturn]] void abort(const TransportError& e) {
        fill_metrics();
        throw RunAborted(std::string("transport failure after retries: ") + e.what(), result_.log, result_.metrics);
    }

    void fill_metrics() {
        result_.metrics.backend_calls = metered_.calls();
        result_.metrics.token_usage = metered_.tokens();
        result_.metrics.wall_ms = now_ms();
    }

    AppendResult commit(LogEntry e, std::int64_t* step) {
        e.meta.ts_ms = now_ms();
        return result_.log.append(std::move(e), step);
    }

    void note(const std::string& d) {
        if (!d.empty()) result_.diagnostics.push_back(d);
    }

    void retrieval_phase(int round, RoundRecord& rec) {
        AgentContext ctx{result_.log, res_, agents_, round, false};
        if (cfg_.parallel_retrieval) {
            // Decide on one snapshot, act concurrently, commit in role order.
            std::array<std::optional<std::future<ActOutcome>>, 3> pending;
            for (std::size_t i = 0; i < kRetrievalRoles.size(); ++i) {
                auto role = kRetrievalRoles[i];
                if (caps_[i] >= cfg_.per_agent_cap || !should_act(role, ctx)) continue;
                ++caps_[i];
                pending[i] = std::async(std::launch::async, [this, role, &ctx] { return act(role, ctx, retrying_); });
            }
            std::optional<TransportError> failure;
            std::array<std::optional<ActOutcome>, 3> done;
            for (std::size_t i = 0; i < pending.size(); ++i) {
                if (!pending[i]) continue;
                try {
                    done[i] = pending[i]->get();
                } catch (const TransportError& e) {
                    if (!failure) failure = e;
                }
            }
            if (failure) abort(*failure);
            for (std::size_t i = 0; i < done.size(); ++i)
                if (done[i]) take(*done[i], rec);
            return;
        }
        for (std::size_t i = 0; i < kRetrievalRoles.size(); ++i) {
            auto role = kRetrievalRoles[i];
            if (caps_[i] >= cfg_.per_agent_cap || !should_act(role, ctx)) continue;
            ++caps_[i];
            try {
                take(act(role, ctx, retrying_), rec);
            } catch (const TransportError& e) {
                ++result_.metrics.agent_turns;
                abort(e);
            }
        }
    }

    void take(ActOutcome out, RoundRecord& rec) {
        ++result_.metrics.agent_turns;
        note(out.diagnostic);
        if (!out.entry) return;
        std::vector<LogEntry> batch;
        const std::size_t ordinal = ordinal_++;
        if (hook_ && hook_->rewrite)
            batch = hook_->rewrite(std::move(*out.entry), ordinal);
        else
            batch.push_back(std::move(*out.entry));
        for (auto& e : batch) {
            std::int64_t step = -1;
            LogEntry copy = e;
            auto r = commit(std::move(e), &step);
            if (r == AppendResult::Accepted)
                ++rec.accepted;
            else
                ++rec.rejected;
            if (hook_ && hook_->committed) hook_->committed(ordinal, copy, r, step);
        }
    }

    // Returns the Summarizing entry produced, accepted or not.
    std::optional<LogEntry> summarize(int round, bool finalize) {
        AgentContext ctx{result_.log, res_, agents_, round, finalize};
        ActOutcome out;
        try {
            ++result_.metrics.agent_turns;
            out = act(AgentRole::Summarizing, ctx, retrying_);
        } catch (const TransportError& e) {
            abort(e);
        }
        note(out.diagnostic);
        if (!out.entry) return std::nullopt;
        LogEntry e = *out.entry;
        if (commit(std::move(*out.entry), nullptr) == AppendResult::RejectedDuplicate)
            note("SummarizingAgent entry rejected as near-duplicate");
        return e;
    }

    Verdict verify(int round, RoundRecord& rec) {
        if (!cfg_.verifier_enabled) return Verdict::Unverified;
        AgentContext ctx{result_.log, res_, agents_, round, false};
        ++result_.metrics.agent_turns;
        auto v = verification_act(ctx, retrying_);
        if (v.backend_unavailable) note("verification backend unavailable; deterministic checks only");
        const auto type = v.entry.type;
        rec.verdict = type;
        commit(std::move(v.entry), nullptr);
        if (type == EntryType::OK) return Verdict::Verified;
        if (result_.reengagements < cfg_.reengage_limit) {
            ++result_.reengagements;
            return Verdict::Reengage;
        }
        return Verdict::Unverified;
    }

    std::optional<std::string> last_answer() const {
        auto entries = result_.log.entries();
        for (auto it = entries.rbegin(); it != entries.rend(); ++it)
            if (it->agent == agent_names::kSummarizing && it->type == EntryType::Answer) return parse_answer(it->content);
        return std::nullopt;
    }

    RunResult finish(Termination t, const RoundRecord& rec) {
        if (rec.round >= 0) result_.history.push_back(rec);
        result_.termination = t;
        if (t == Termination::AnswerVerified || t == Termination::AnswerUnverified) {
            result_.final_answer = last_answer();
        } else {
            auto entries = result_.log.entries();
            for (auto it = entries.rbegin(); it != entries.rend(); ++it)
                if (it->type == EntryType::Summary) {
                    result_.partial_summary = it->content;
                    break;
                }
        }
        fill_metrics();
        return std::move(result_);
    }

    const RunResources& res_;
    const AgentSet& agents_;
    MeteredBackend metered_;
    RetryingBackend retrying_;
    const SchedulerConfig& cfg_;
    const LogisticGate* gate_;
    const EntryHook* hook_;
    std::chrono::steady_clock::time_point start_;
    RunResult result_;
    std::array<int, 3> caps_{};
    int consecutive_nonanswer_ = 0;
    std::size_t ordinal_ = 0;
};

}  // namespace

RunResult run(std::string_view question, const RunResources& resources, const AgentSet& agents, TextBackend& backend,
              const SchedulerConfig& config, const LogisticGate* gate, const EntryHook* hook) {
    if (text::trim(question).empty()) throw std::invalid_argument("question must be non-empty");
    if (!config.valid()) throw std::invalid_argument("invalid scheduler config");
    if (config.gate_enabled && !gate) throw std::invalid_argument("gate_enabled requires a gate");
    Run r(resources, agents, backend, config, gate, hook);
    return r.go(question);
}

}  // namespace logboard
