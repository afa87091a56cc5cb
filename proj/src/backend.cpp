#include "chainmem/backend.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "chainmem/text.hpp"

namespace chainmem {

using nlohmann::json;

const char* to_string(BackendKind kind) {
    return kind == BackendKind::Http ? "http" : "scripted";
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

namespace {
std::atomic<std::uint64_t> g_script_seq{0};
}

ScriptRule reply(std::string pattern, std::string text, bool once) {
    ScriptRule rule;
    rule.pattern = std::move(pattern);
    rule.respond = [text = std::move(text)](const ChatRequest&) { return text; };
    rule.once = once;
    return rule;
}

ScriptRule reply_once(std::string text) {
    return reply("", std::move(text), /*once=*/true);
}

ScriptRule reply_with(std::string pattern, std::function<std::string(const ChatRequest&)> fn,
                      bool once) {
    ScriptRule rule;
    rule.pattern = std::move(pattern);
    rule.respond = std::move(fn);
    rule.once = once;
    return rule;
}

ScriptRule reply_error(std::string pattern, ErrorKind kind, bool once) {
    ScriptRule rule;
    rule.pattern = std::move(pattern);
    rule.respond = [kind](const ChatRequest&) -> std::string {
        throw Error(kind, std::string("scripted failure: ") + to_string(kind));
    };
    rule.once = once;
    return rule;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptRule> rules)
    : rules_(std::move(rules)), spent_(rules_.size(), false) {}

std::string ScriptedBackend::respond(const ChatRequest& request) {
    std::lock_guard<std::mutex> lock(mu_);
    const std::string haystack = request.system + "\n" + request.user;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        if (spent_[i]) continue;
        const ScriptRule& rule = rules_[i];
        if (!rule.pattern.empty() && haystack.find(rule.pattern) == std::string::npos) continue;
        if (rule.once) spent_[i] = true;
        std::string response = rule.respond(request);
        calls_.push_back({g_script_seq.fetch_add(1) + 1, request, response});
        return response;
    }
    throw Error(ErrorKind::ScriptExhausted, "scripted backend has no rule for request");
}

std::vector<ScriptCall> ScriptedBackend::transcript() const {
    std::lock_guard<std::mutex> lock(mu_);
    return calls_;
}

std::size_t ScriptedBackend::call_count() const {
    std::lock_guard<std::mutex> lock(mu_);
    return calls_.size();
}

BackendSpec script_backend(std::vector<ScriptRule> rules) {
    BackendSpec spec;
    spec.kind = BackendKind::Scripted;
    spec.model = "scripted";
    spec.script = std::make_shared<ScriptedBackend>(std::move(rules));
    return spec;
}

// ---------------------------------------------------------------------------
// HTTP chat-completions client
// ---------------------------------------------------------------------------

namespace {

struct EndpointParts {
    std::string base;   // scheme://host[:port]
    std::string prefix; // path prefix, may be empty
};

EndpointParts parse_endpoint(const std::string& endpoint) {
    const auto scheme_pos = endpoint.find("://");
    if (scheme_pos == std::string::npos)
        throw Error(ErrorKind::Config, "endpoint must include a scheme: " + endpoint);
    const auto path_pos = endpoint.find('/', scheme_pos + 3);
    EndpointParts parts;
    if (path_pos == std::string::npos) {
        parts.base = endpoint;
    } else {
        parts.base = endpoint.substr(0, path_pos);
        parts.prefix = endpoint.substr(path_pos);
        while (!parts.prefix.empty() && parts.prefix.back() == '/') parts.prefix.pop_back();
    }
    return parts;
}

json build_request_body(const BackendSpec& spec, const ChatRequest& request) {
    json messages = json::array();
    messages.push_back({{"role", "system"}, {"content", request.system}});
    messages.push_back({{"role", "user"}, {"content", request.user}});
    json body = {
        {"model", spec.model},
        {"messages", std::move(messages)},
        {"temperature", request.temperature},
    };
    const int max_tokens = request.max_tokens > 0 ? request.max_tokens : spec.max_output_units;
    if (max_tokens > 0) body["max_tokens"] = max_tokens;
    return body;
}

ChatResponse parse_response_body(const std::string& body, const ChatRequest& request) {
    json parsed;
    try {
        parsed = json::parse(body);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Malformed, std::string("response is not JSON: ") + e.what());
    }
    if (!parsed.contains("choices") || !parsed["choices"].is_array() || parsed["choices"].empty())
        throw Error(ErrorKind::Malformed, "response has no choices");
    const json& message = parsed["choices"][0].value("message", json::object());
    if (!message.contains("content") || !message["content"].is_string())
        throw Error(ErrorKind::Malformed, "response lacks completion text");

    ChatResponse response;
    response.text = message["content"].get<std::string>();
    if (parsed.contains("usage") && parsed["usage"].is_object()) {
        const json& usage = parsed["usage"];
        response.input_units = usage.value("prompt_tokens", 0);
        response.output_units = usage.value("completion_tokens", 0);
    }
    // Endpoints that omit usage fall back to whitespace-word accounting.
    if (response.input_units == 0)
        response.input_units =
            count_units(request.system, UnitMode::Word) + count_units(request.user, UnitMode::Word);
    if (response.output_units == 0) response.output_units = count_units(response.text, UnitMode::Word);
    return response;
}

ChatResponse complete_http(const BackendSpec& spec, const ChatRequest& request) {
    const EndpointParts parts = parse_endpoint(spec.endpoint);
    const std::string path = parts.prefix + "/chat/completions";
    const std::string body = build_request_body(spec, request).dump();

    httplib::Client client(parts.base);
    const auto timeout = std::chrono::milliseconds(static_cast<long>(spec.timeout_seconds * 1000.0));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (!spec.api_key_env.empty()) {
        if (const char* key = std::getenv(spec.api_key_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const int max_attempts = 1 + (spec.retries > 0 ? spec.retries : 0);
    std::string last_error;
    bool timed_out = false;
    const auto start = std::chrono::steady_clock::now();

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        auto result = client.Post(path, headers, body, "application/json");
        if (result) {
            const int status = result->status;
            if (status >= 200 && status < 300) {
                ChatResponse response = parse_response_body(result->body, request);
                response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::steady_clock::now() - start)
                                          .count();
                response.attempts = attempt;
                return response;
            }
            if (status < 500) {
                throw Error(ErrorKind::RemoteStatus,
                            "endpoint returned status " + std::to_string(status))
                    .with_status(status);
            }
            timed_out = false;
            last_error = "status " + std::to_string(status);
        } else {
            const auto err = result.error();
            timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
            last_error = httplib::to_string(err);
        }
        if (attempt < max_attempts) {
            const long delay = static_cast<long>(spec.backoff_base_ms) << (attempt - 1);
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
    }
    const std::string what =
        "request failed after " + std::to_string(max_attempts) + " attempts: " + last_error;
    throw Error(timed_out ? ErrorKind::Timeout : ErrorKind::Transport, what);
}

} // namespace

ChatResponse complete(const BackendSpec& spec, const ChatRequest& request) {
    if (request.user.empty())
        throw Error(ErrorKind::InvalidArgument, "chat request user text is empty");
    if (spec.kind == BackendKind::Http) {
        if (spec.endpoint.empty() || spec.model.empty())
            throw Error(ErrorKind::Config, "http backend requires endpoint and model");
        return complete_http(spec, request);
    }
    if (!spec.script) throw Error(ErrorKind::Config, "scripted backend has no script");
    const auto start = std::chrono::steady_clock::now();
    ChatResponse response;
    response.text = spec.script->respond(request);
    response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - start)
                              .count();
    response.input_units =
        count_units(request.system, UnitMode::Word) + count_units(request.user, UnitMode::Word);
    response.output_units = count_units(response.text, UnitMode::Word);
    return response;
}

} // namespace chainmem
