#include "logboard/backend.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

namespace logboard {

using nlohmann::json;

namespace {

std::vector<std::string> string_or_list(const json& j, const char* key) {
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    const auto& v = j.at(key);
    if (v.is_string())
        out.push_back(v.get<std::string>());
    else
        out = v.get<std::vector<std::string>>();
    return out;
}

}  // namespace

ScriptedBackend::ScriptedBackend(std::vector<Rule> rules, std::optional<std::string> fallback,
                                 std::int64_t default_latency_ms, TokenEstimator estimator)
    : rules_(std::move(rules)),
      fallback_(std::move(fallback)),
      default_latency_ms_(default_latency_ms),
      estimator_(std::move(estimator)) {}

ScriptedBackend ScriptedBackend::from_json(const json& j) {
    std::vector<Rule> rules;
    try {
        for (const auto& r : j.value("rules", json::array())) {
            Rule rule;
            rule.match = string_or_list(r, "match");
            rule.unless = string_or_list(r, "unless");
            rule.reply = r.value("reply", std::string{});
            if (r.contains("error")) rule.error = r.at("error").get<std::string>();
            if (r.contains("latency_ms")) rule.latency_ms = r.at("latency_ms").get<std::int64_t>();
            rules.push_back(std::move(rule));
        }
        std::optional<std::string> fallback;
        if (j.contains("default")) fallback = j.at("default").get<std::string>();
        return ScriptedBackend(std::move(rules), std::move(fallback), j.value("default_latency_ms", std::int64_t{0}));
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed scripted backend fixture: ") + e.what());
    }
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("cannot read scripted backend fixture " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return from_json(j);
}

Completion ScriptedBackend::generate(const GenerationRequest& req) {
    ++calls_;
    for (const auto& rule : rules_) {
        bool hit = std::all_of(rule.match.begin(), rule.match.end(),
                               [&](const std::string& m) { return req.prompt.find(m) != std::string::npos; });
        hit = hit && std::none_of(rule.unless.begin(), rule.unless.end(),
                                  [&](const std::string& m) { return req.prompt.find(m) != std::string::npos; });
        if (!hit) continue;
        if (rule.error) throw TransportError(*rule.error);
        Completion c;
        c.text = rule.reply;
        c.prompt_tokens = static_cast<std::int64_t>(estimator_(req.prompt));
        c.completion_tokens = static_cast<std::int64_t>(estimator_(c.text));
        c.simulated_latency_ms = rule.latency_ms.value_or(default_latency_ms_);
        return c;
    }
    if (!fallback_) throw TransportError("scripted backend: no rule matches prompt for " + req.role);
    Completion c;
    c.text = *fallback_;
    c.prompt_tokens = static_cast<std::int64_t>(estimator_(req.prompt));
    c.completion_tokens = static_cast<std::int64_t>(estimator_(c.text));
    c.simulated_latency_ms = default_latency_ms_;
    return c;
}

Completion FunctionBackend::generate(const GenerationRequest& req) {
    Completion c;
    c.text = fn_(req);
    c.prompt_tokens = static_cast<std::int64_t>(estimator_(req.prompt));
    c.completion_tokens = static_cast<std::int64_t>(estimator_(c.text));
    c.simulated_latency_ms = latency_ms_;
    return c;
}

HttpChatBackend::HttpChatBackend(Options opts, TokenEstimator estimator)
    : opts_(std::move(opts)), estimator_(std::move(estimator)) {
    const auto& url = opts_.base_url;
    auto scheme_end = url.find("://");
    if (url.empty() || scheme_end == std::string::npos)
        throw std::invalid_argument("backend base URL must look like http://host[:port][/prefix], got '" + url + "'");
    auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

HttpChatBackend::Options HttpChatBackend::options_from_env(std::string model) {
    Options o;
    if (const char* u = std::getenv("LOGBOARD_BASE_URL")) o.base_url = u;
    if (const char* k = std::getenv("LOGBOARD_API_KEY")) o.api_key = k;
    o.model = std::move(model);
    return o;
}

json HttpChatBackend::request_body(const Options& opts, const GenerationRequest& req) {
    return json{{"model", opts.model},
                {"messages", json::array({json{{"role", "user"}, {"content", req.prompt}}})},
                {"temperature", req.temperature},
                {"max_tokens", req.max_tokens}};
}

Completion HttpChatBackend::generate(const GenerationRequest& req) {
    httplib::Client cli(scheme_host_port_);
    cli.set_connection_timeout(opts_.timeout_seconds);
    cli.set_read_timeout(opts_.timeout_seconds);
    if (!opts_.api_key.empty()) cli.set_bearer_token_auth(opts_.api_key);

    auto body = request_body(opts_, req).dump();
    auto res = cli.Post(path_prefix_ + "/chat/completions", body, "application/json");
    if (!res) throw TransportError("HTTP request failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw TransportError("HTTP status " + std::to_string(res->status) + ": " + res->body.substr(0, 200));

    Completion c;
    try {
        auto j = json::parse(res->body);
        c.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (j.contains("usage") && j["usage"].is_object()) {
            c.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
            c.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
        }
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed completion body: ") + e.what());
    }
    if (c.prompt_tokens == 0) c.prompt_tokens = static_cast<std::int64_t>(estimator_(req.prompt));
    if (c.completion_tokens == 0) c.completion_tokens = static_cast<std::int64_t>(estimator_(c.text));
    return c;
}

Completion MeteredBackend::generate(const GenerationRequest& req) {
    ++calls_;
    Completion c = inner_.generate(req);
    tokens_ += c.prompt_tokens + c.completion_tokens;
    if (c.simulated_latency_ms) {
        simulated_ms_ += *c.simulated_latency_ms;
        saw_simulated_ = true;
    }
    return c;
}

}  // namespace logboard
