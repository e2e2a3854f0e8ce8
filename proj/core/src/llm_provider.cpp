#include "conflens/llm_provider.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace conflens {

namespace {

using ojson = nlohmann::ordered_json;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open script file: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

const char* role_name(ChatRole role) {
    switch (role) {
        case ChatRole::System: return "system";
        case ChatRole::User: return "user";
        case ChatRole::Assistant: return "assistant";
    }
    return "user";
}

void validate_transcript(const std::vector<ChatMessage>& messages) {
    if (messages.empty()) throw std::invalid_argument("transcript is empty");
    if (messages.front().role != ChatRole::System)
        throw std::invalid_argument("transcript must open with a system message");
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (messages[i].content.empty())
            throw std::invalid_argument("transcript message " + std::to_string(i) + " is empty");
        if (i > 0 && messages[i].role == ChatRole::System)
            throw std::invalid_argument("transcript has a second system message at index " +
                                        std::to_string(i));
    }
}

// ---------------------------------------------------------------------------
// ScriptedProvider

ScriptedProvider::ScriptedProvider(std::vector<std::string> responses,
                                   std::vector<ScriptRule> rules,
                                   std::optional<std::string> fallback)
    : responses_(std::move(responses)), rules_(std::move(rules)), fallback_(std::move(fallback)) {}

std::unique_ptr<ScriptedProvider> ScriptedProvider::from_json(const std::string& json_text) {
    ojson j;
    try {
        j = ojson::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("malformed provider script: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("provider script must be a JSON object");

    std::vector<std::string> responses;
    if (j.contains("responses")) {
        if (!j["responses"].is_array())
            throw std::invalid_argument("script \"responses\" must be an array");
        for (const auto& r : j["responses"]) {
            if (!r.is_string())
                throw std::invalid_argument("script \"responses\" entries must be strings");
            responses.push_back(r.get<std::string>());
        }
    }
    std::vector<ScriptRule> rules;
    if (j.contains("rules")) {
        if (!j["rules"].is_array()) throw std::invalid_argument("script \"rules\" must be an array");
        for (const auto& r : j["rules"]) {
            if (!r.is_object() || !r.contains("contains") || !r.contains("respond") ||
                !r["contains"].is_string() || !r["respond"].is_string())
                throw std::invalid_argument(
                    "script rules must be {\"contains\": string, \"respond\": string}");
            rules.push_back({r["contains"].get<std::string>(), r["respond"].get<std::string>()});
        }
    }
    std::optional<std::string> fallback;
    if (j.contains("default")) {
        if (!j["default"].is_string())
            throw std::invalid_argument("script \"default\" must be a string");
        fallback = j["default"].get<std::string>();
    }
    return std::make_unique<ScriptedProvider>(std::move(responses), std::move(rules),
                                              std::move(fallback));
}

std::unique_ptr<ScriptedProvider> ScriptedProvider::from_file(const std::string& path) {
    return from_json(read_file(path));
}

std::string ScriptedProvider::complete(const std::vector<ChatMessage>& messages) {
    validate_transcript(messages);
    std::lock_guard<std::mutex> lock(mutex_);
    ++calls_;
    transcripts_.push_back(messages);
    if (next_response_ < responses_.size()) return responses_[next_response_++];
    const std::string& last = messages.back().content;
    for (const ScriptRule& rule : rules_)
        if (last.find(rule.contains) != std::string::npos) return rule.respond;
    if (fallback_) return *fallback_;
    throw ProviderError(ProviderErrorKind::ScriptExhausted,
                        "scripted provider has no response left for call " +
                            std::to_string(calls_));
}

std::size_t ScriptedProvider::calls() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return calls_;
}

std::vector<std::vector<ChatMessage>> ScriptedProvider::transcripts() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return transcripts_;
}

// ---------------------------------------------------------------------------
// HttpProvider

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
    if (config_.endpoint_url.empty())
        throw std::invalid_argument("HttpProvider requires an endpoint URL");
    if (config_.max_attempts < 1) throw std::invalid_argument("max_attempts must be at least 1");
}

std::string HttpProvider::build_request_body(const HttpProviderConfig& config,
                                             const std::vector<ChatMessage>& messages) {
    ojson body;
    body["model"] = config.model;
    body["messages"] = ojson::array();
    for (const ChatMessage& m : messages) {
        ojson jm;
        jm["role"] = role_name(m.role);
        jm["content"] = m.content;
        body["messages"].push_back(std::move(jm));
    }
    body["temperature"] = config.temperature;
    return body.dump();
}

std::string HttpProvider::complete(const std::vector<ChatMessage>& messages) {
    validate_transcript(messages);
    const std::string body = build_request_body(config_, messages);

    std::string base = config_.endpoint_url;
    std::string path = "/v1/chat/completions";
    const std::size_t scheme_end = base.find("://");
    const std::size_t path_start = base.find('/', scheme_end == std::string::npos
                                                     ? 0
                                                     : scheme_end + 3);
    if (path_start != std::string::npos) {
        std::string given = base.substr(path_start);
        base.resize(path_start);
        if (!given.empty() && given != "/") path = std::move(given);
    }

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    ProviderErrorKind pending_kind = ProviderErrorKind::Transport;
    std::string pending_message = "request never attempted";
    for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(config_.backoff_initial_ms << (attempt - 1)));
        }
        httplib::Client client(base);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);
        client.set_write_timeout(config_.timeout_seconds, 0);

        httplib::Result result = client.Post(path, headers, body, "application/json");
        if (!result) {
            const bool timed_out = result.error() == httplib::Error::ConnectionTimeout;
            pending_kind = timed_out ? ProviderErrorKind::Timeout : ProviderErrorKind::Transport;
            pending_message = "transport failure talking to " + base + ": " +
                              httplib::to_string(result.error());
            continue;  // retry
        }
        const int status = result->status;
        if (status == 200) {
            ojson reply;
            try {
                reply = ojson::parse(result->body);
            } catch (const nlohmann::json::parse_error&) {
                throw ProviderError(ProviderErrorKind::MalformedReply,
                                    "endpoint returned 200 with a non-JSON body");
            }
            if (!reply.contains("choices") || !reply["choices"].is_array() ||
                reply["choices"].empty() || !reply["choices"][0].contains("message") ||
                !reply["choices"][0]["message"].contains("content") ||
                !reply["choices"][0]["message"]["content"].is_string())
                throw ProviderError(ProviderErrorKind::MalformedReply,
                                    "completion body lacks choices[0].message.content");
            return reply["choices"][0]["message"]["content"].get<std::string>();
        }
        if (status == 401 || status == 403)
            throw ProviderError(ProviderErrorKind::Auth,
                                "endpoint rejected credentials with status " +
                                    std::to_string(status));
        if (status == 429) {
            pending_kind = ProviderErrorKind::RateLimited;
            pending_message = "endpoint rate limited the request (429)";
            continue;
        }
        if (status >= 500 && status < 600) {
            pending_kind = ProviderErrorKind::Transport;
            pending_message = "endpoint failed with status " + std::to_string(status);
            continue;
        }
        throw ProviderError(ProviderErrorKind::Transport,
                            "endpoint returned unexpected status " + std::to_string(status));
    }
    throw ProviderError(pending_kind, pending_message + " after " +
                                          std::to_string(config_.max_attempts) + " attempts");
}

std::unique_ptr<LlmProvider> make_provider(const ProviderConfig& config) {
    if (config.kind == ProviderConfig::Kind::Scripted)
        return ScriptedProvider::from_file(config.script_path);
    return std::make_unique<HttpProvider>(config.http);
}

}  // namespace conflens
