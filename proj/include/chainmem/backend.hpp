#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "chainmem/errors.hpp"

namespace chainmem {

enum class BackendKind { Http, Scripted };

const char* to_string(BackendKind kind);

struct ChatRequest {
    std::string system;
    std::string user;
    double temperature = 0.0;
    int max_tokens = 0; // 0 = leave unset
};

struct ChatResponse {
    std::string text;
    std::size_t input_units = 0;  // reported usage, or whitespace-word estimate
    std::size_t output_units = 0;
    long long latency_ms = 0;
    int attempts = 1;
};

class ScriptedBackend;

struct BackendSpec {
    BackendKind kind = BackendKind::Scripted;
    std::string endpoint; // e.g. http://localhost:8000/v1
    std::string model;
    double temperature = 0.0;
    int max_output_units = 0;
    double timeout_seconds = 60.0;
    int retries = 3;            // extra attempts after the first
    int backoff_base_ms = 250;  // delay before retry a (1-based) is base << (a-1)
    std::string api_key_env;    // env var holding the bearer token, if any
    std::shared_ptr<ScriptedBackend> script; // required when kind == Scripted
};

// One chat completion. Http issues POST {endpoint}/chat/completions and
// retries transport errors and 5xx responses with exponential backoff;
// 4xx is never retried. Scripted replays the configured rules
// deterministically (no retries). Throws Error with kinds Timeout /
// Transport / RemoteStatus / ScriptExhausted / Malformed.
ChatResponse complete(const BackendSpec& spec, const ChatRequest& request);

// ---------------------------------------------------------------------------
// Scripted backend: a deterministic stand-in for a model endpoint.
// ---------------------------------------------------------------------------

struct ScriptRule {
    // Substring matched against system + user text; empty matches everything.
    std::string pattern;
    // Produces the completion; may inspect the request or throw an Error to
    // simulate a backend failure.
    std::function<std::string(const ChatRequest&)> respond;
    // Consume-once rules are spent after their first match.
    bool once = false;
};

ScriptRule reply(std::string pattern, std::string text, bool once = false);
ScriptRule reply_once(std::string text);
ScriptRule reply_with(std::string pattern, std::function<std::string(const ChatRequest&)> fn,
                      bool once = false);
ScriptRule reply_error(std::string pattern, ErrorKind kind, bool once = false);

struct ScriptCall {
    std::uint64_t seq = 0; // process-wide call order, shared by all scripted backends
    ChatRequest request;
    std::string response;
};

class ScriptedBackend {
  public:
    explicit ScriptedBackend(std::vector<ScriptRule> rules);

    // First-match in rule order; throws ScriptExhausted when nothing matches.
    std::string respond(const ChatRequest& request);

    std::vector<ScriptCall> transcript() const;
    std::size_t call_count() const;

  private:
    mutable std::mutex mu_;
    std::vector<ScriptRule> rules_;
    std::vector<bool> spent_;
    std::vector<ScriptCall> calls_;
};

// Convenience: a ready-to-use scripted BackendSpec.
BackendSpec script_backend(std::vector<ScriptRule> rules);

} // namespace chainmem
