#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace conflens {

enum class ChatRole { System, User, Assistant };

struct ChatMessage {
    ChatRole role = ChatRole::User;
    std::string content;
};

const char* role_name(ChatRole role);  // "system", "user", "assistant"

// Transcripts must be non-empty, open with exactly one system message, and
// carry no empty contents. Throws std::invalid_argument.
void validate_transcript(const std::vector<ChatMessage>& messages);

enum class ProviderErrorKind {
    Transport,       // connection failures, unexpected statuses
    Auth,            // 401/403, never retried
    RateLimited,     // 429 after retries
    Timeout,         // connect/read deadline after retries
    MalformedReply,  // 200 with a body that is not a completion
    ScriptExhausted, // scripted provider ran out of answers
};

class ProviderError : public std::runtime_error {
public:
    ProviderError(ProviderErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    ProviderErrorKind kind() const { return kind_; }

private:
    ProviderErrorKind kind_;
};

// A chat completion backend. complete() takes the whole transcript and
// returns the assistant's reply text. Implementations are thread safe.
class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

// Deterministic in-process provider for tests and offline runs. Answers come
// from, in order of precedence: the ordered `responses` list (consumed once
// each), the first `rules` entry whose `contains` occurs in the most recent
// message, then `fallback`. Nothing left to say -> ScriptExhausted.
struct ScriptRule {
    std::string contains;
    std::string respond;
};

class ScriptedProvider : public LlmProvider {
public:
    ScriptedProvider(std::vector<std::string> responses, std::vector<ScriptRule> rules,
                     std::optional<std::string> fallback);

    // Script files are JSON: {"responses": [...], "rules": [{"contains":
    // ..., "respond": ...}], "default": ...}, every key optional. Throws
    // std::invalid_argument on malformed scripts.
    static std::unique_ptr<ScriptedProvider> from_json(const std::string& json_text);
    static std::unique_ptr<ScriptedProvider> from_file(const std::string& path);

    std::string complete(const std::vector<ChatMessage>& messages) override;

    std::size_t calls() const;
    // Every transcript passed to complete(), for assertions in tests.
    std::vector<std::vector<ChatMessage>> transcripts() const;

private:
    mutable std::mutex mutex_;
    std::vector<std::string> responses_;
    std::size_t next_response_ = 0;
    std::vector<ScriptRule> rules_;
    std::optional<std::string> fallback_;
    std::size_t calls_ = 0;
    std::vector<std::vector<ChatMessage>> transcripts_;
};

struct HttpProviderConfig {
    std::string endpoint_url;  // scheme://host[:port][/custom/path]
    std::string model = "gpt-4o-2024-05-13";
    double temperature = 0.0;
    // Name of the environment variable holding the bearer token. The key
    // itself stays out of configs, logs, and error messages.
    std::string api_key_env = "PROVIDER_API_KEY";
    int timeout_seconds = 60;
    int max_attempts = 3;      // total tries for retryable failures
    int backoff_initial_ms = 500;  // doubles per retry
};

// Talks to an OpenAI-style chat-completions endpoint. Requests POST to
// /v1/chat/completions under the endpoint URL (or to the URL's own path when
// it has one) with body fields model, messages and temperature. 429 and 5xx
// responses and transport failures are retried with exponential backoff;
// 401/403 raise Auth immediately.
class HttpProvider : public LlmProvider {
public:
    explicit HttpProvider(HttpProviderConfig config);

    std::string complete(const std::vector<ChatMessage>& messages) override;

    // The exact request body complete() would send, for tests.
    static std::string build_request_body(const HttpProviderConfig& config,
                                          const std::vector<ChatMessage>& messages);

private:
    HttpProviderConfig config_;
};

struct ProviderConfig {
    enum class Kind { Scripted, Http };
    Kind kind = Kind::Scripted;
    std::string script_path;  // Scripted only
    HttpProviderConfig http;  // Http only
};

std::unique_ptr<LlmProvider> make_provider(const ProviderConfig& config);

}  // namespace conflens
