#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "conflens/config_tree.hpp"
#include "conflens/context_miner.hpp"
#include "conflens/llm_provider.hpp"
#include "conflens/value_classifier.hpp"

namespace conflens {

// What the reviewer is asked to look for. The phrase lands uppercased in the
// prompt: "Identify any <PHRASE> misconfigurations ...".
struct DetectionFocus {
    enum class Kind { Syntax, Range, DependencyConflict, General, Custom };
    Kind kind = Kind::General;
    std::string custom_phrase;  // Custom only

    static DetectionFocus syntax() { return {Kind::Syntax, {}}; }
    static DetectionFocus range() { return {Kind::Range, {}}; }
    static DetectionFocus dependency_conflict() { return {Kind::DependencyConflict, {}}; }
    static DetectionFocus general() { return {Kind::General, {}}; }
    static DetectionFocus custom(std::string phrase) { return {Kind::Custom, std::move(phrase)}; }

    std::string phrase() const;
};

// The line (or, for unparseable files, the raw excerpt) under review.
struct ReviewTarget {
    enum class Kind { PathLine, TextExcerpt };
    Kind kind = Kind::PathLine;
    std::string source_id;
    ConfigPath path;      // PathLine only
    std::string excerpt;  // TextExcerpt only

    static ReviewTarget path_line(std::string source_id, ConfigPath path) {
        ReviewTarget t;
        t.kind = Kind::PathLine;
        t.source_id = std::move(source_id);
        t.path = std::move(path);
        return t;
    }
    static ReviewTarget text_excerpt(std::string source_id, std::string excerpt) {
        ReviewTarget t;
        t.kind = Kind::TextExcerpt;
        t.source_id = std::move(source_id);
        t.excerpt = std::move(excerpt);
        return t;
    }
};

struct ProtocolOptions {
    std::size_t max_iterations = 5;  // model calls before the forcing message
    std::size_t retry_limit = 2;     // consecutive rejected replies tolerated
    std::size_t token_budget = 120000;
    MiningOptions mining;
};

// ceil(bytes / 4), the usual rough chars-per-token estimate. The transcript
// form sums the per-message estimates.
std::size_t estimate_tokens(std::string_view text);
std::size_t estimate_tokens(const std::vector<ChatMessage>& transcript);

enum class ActionErrorKind {
    Unparseable,   // no JSON object in the reply
    InvalidAction, // JSON, but not one of the documented action forms
    EmptyRequest,  // request names only unavailable or already-delivered types
};

class ActionError : public std::runtime_error {
public:
    ActionError(ActionErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    ActionErrorKind kind() const { return kind_; }

private:
    ActionErrorKind kind_;
};

enum class ProtocolErrorKind {
    Unparseable,      // too many consecutive rejected replies
    Undecided,        // no verdict even after the forcing message
    BudgetExhausted,  // token budget cannot hold the next message
};

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(ProtocolErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    ProtocolErrorKind kind() const { return kind_; }

private:
    ProtocolErrorKind kind_;
};

struct RequestContextAction {
    std::vector<ContextType> types;  // validated, deduped, not yet delivered
};

struct VerdictAction {
    bool misconfigured = false;
    std::vector<std::string> err_parameters;
    std::string reason;
};

using ModelAction = std::variant<RequestContextAction, VerdictAction>;

enum class SessionState { AwaitingModel, Delivering, Done, Failed };

const char* to_string(SessionState state);

// One review conversation. The transcript alternates user/assistant after
// the opening system+user pair; context deliveries are user messages.
struct DetectionSession {
    std::vector<ChatMessage> transcript;
    std::vector<ContextType> offered;    // menu shown in the initial prompt
    std::vector<ContextType> delivered;  // delivery order
    std::vector<ContextType> requested;  // first-request order
    SessionState state = SessionState::AwaitingModel;
    std::size_t model_calls = 0;
    std::size_t consecutive_rejects = 0;
    std::vector<std::string> transitions;  // human-readable state audit trail
};

struct Verdict {
    bool misconfigured = false;
    std::vector<std::string> err_parameters;
    std::string reason;
    std::string focus_phrase;
    std::vector<ContextType> requested_contexts;
    std::size_t iterations = 0;      // total model calls
    std::size_t token_estimate = 0;  // final transcript estimate
};

// System + opening user message. The context menu lists `offered` only;
// a TextExcerpt target states that no context is available.
std::vector<ChatMessage> render_initial_prompt(const ReviewTarget& target,
                                               const DetectionFocus& focus,
                                               const std::vector<ContextType>& offered);

DetectionSession start_session(const ReviewTarget& target, const DetectionFocus& focus,
                               const std::vector<ContextType>& offered);

// Parses a model reply into an action. Context requests are validated
// against the session's menu and filtered to undelivered types; throws
// ActionError when nothing useful remains.
ModelAction parse_model_action(const std::string& reply, const DetectionSession& session);

// Renders the requested types from `bundle` into one user message, appends
// it, and marks the types delivered. Entries are dropped tail-first with a
// "(truncated)" marker to respect `token_budget` over the whole transcript;
// a type whose heading plus one entry cannot fit raises BudgetExhausted.
const ChatMessage& deliver_context(DetectionSession& session,
                                   const std::vector<ContextType>& types,
                                   const ContextBundle& bundle, std::size_t token_budget);

// Feeds one model reply through the session state machine: appends it,
// parses it, and reports what the driver must do next. Pure with respect to
// providers and miners, so recorded replies replay identically.
struct StepOutcome {
    enum class Kind { NeedContext, GotVerdict, Retry, Fail };
    Kind kind = Kind::Retry;
    std::vector<ContextType> types;  // NeedContext
    VerdictAction verdict;           // GotVerdict
    std::string failure;             // Fail
};

StepOutcome step_session(DetectionSession& session, const std::string& reply,
                         const ProtocolOptions& options);

// Runs the full iterative review of one target: initial prompt, context
// request loop, forcing message after options.max_iterations calls. Throws
// ProtocolError on protocol failure and propagates ProviderError untouched.
Verdict run_detection(LlmProvider& provider, std::span<const ConfigTree> snapshot,
                      std::size_t origin_index, const ReviewTarget& target,
                      const DetectionFocus& focus, const ProtocolOptions& options = {});
Verdict run_detection(LlmProvider& provider, std::span<const ConfigTree> snapshot,
                      std::size_t origin_index, const ReviewTarget& target,
                      const DetectionFocus& focus, const ClassificationTable& table,
                      const ProtocolOptions& options = {});

struct ScanRow {
    std::string source_id;
    std::size_t path_id = 0;
    std::string set_line;
    std::string focus_phrase;
    bool misconfigured = false;
    std::vector<std::string> err_parameters;
    std::string reason;
    std::vector<ContextType> requested_contexts;
    std::size_t iterations = 0;
    std::string error;  // empty on success
};

struct ScanOptions {
    ProtocolOptions protocol;
    std::size_t max_in_flight = 4;  // concurrent sessions
    std::string match;              // keep only set-lines containing this
};

// Reviews every path of every snapshot tree (trees ordered by source_id,
// paths by path_id). Sessions run on a fixed worker pool; a session failure
// lands in the row's error field and counts as not misconfigured. Row order
// is deterministic regardless of scheduling.
std::vector<ScanRow> scan_snapshot(LlmProvider& provider, std::span<const ConfigTree> snapshot,
                                   const DetectionFocus& focus, const ScanOptions& options = {});

std::string scan_rows_to_jsonl(const std::vector<ScanRow>& rows);
std::string verdict_to_json_string(const Verdict& verdict);

}  // namespace conflens
