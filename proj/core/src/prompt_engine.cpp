#include "conflens/prompt_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <numeric>
#include <thread>

#include "json.hpp"

namespace conflens {

namespace {

std::string join_wire_names(const std::vector<ContextType>& types) {
    std::string out;
    for (ContextType type : types) {
        if (!out.empty()) out += ',';
        out += context_wire_name(type);
    }
    return out;
}

bool contains_type(const std::vector<ContextType>& types, ContextType type) {
    return std::find(types.begin(), types.end(), type) != types.end();
}

const char* menu_description(ContextType type) {
    switch (type) {
        case ContextType::Neighbors:
            return "lines that share this line's enclosing configuration section";
        case ContextType::Similar:
            return "lines elsewhere that set the same parameter under the same top-level "
                   "section";
        case ContextType::Referenceable:
            return "lines defined under the configuration sections named by this line's value";
        case ContextType::NeighborsOfReferenceable:
            return "the neighboring configurations of those referenceable configurations";
        case ContextType::IntraRouterConsistency:
            return "how often this exact line appears across the other configuration files";
    }
    return "";
}

const char* action_error_name(ActionErrorKind kind) {
    switch (kind) {
        case ActionErrorKind::Unparseable: return "Unparseable";
        case ActionErrorKind::InvalidAction: return "InvalidAction";
        case ActionErrorKind::EmptyRequest: return "EmptyRequest";
    }
    return "?";
}

std::string corrective_reminder(ActionErrorKind kind) {
    switch (kind) {
        case ActionErrorKind::Unparseable:
            return "The previous reply did not contain a valid JSON object. Reply with "
                   "exactly one JSON object in one of the documented action forms.";
        case ActionErrorKind::InvalidAction:
            return "The previous reply was not a documented action. Use {\"action\": "
                   "\"request_context\", \"context_types\": [...]} or {\"action\": "
                   "\"verdict\", \"misconfigured\": <true|false>, \"errParameter\": [...], "
                   "\"reason\": \"...\"} exactly.";
        case ActionErrorKind::EmptyRequest:
            return "The previous request named no deliverable context types; each type is "
                   "delivered at most once. Request undelivered types from the menu or "
                   "return a verdict.";
    }
    return "";
}

// Finds the first balanced {...} region that parses as a JSON object.
// String literals and escapes are honoured while matching braces, so prose
// around or after the object does not confuse extraction.
std::optional<nlohmann::json> extract_first_json_object(const std::string& text) {
    for (std::size_t start = text.find('{'); start != std::string::npos;
         start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        std::size_t end = std::string::npos;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped)
                    escaped = false;
                else if (c == '\\')
                    escaped = true;
                else if (c == '"')
                    in_string = false;
            } else if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) {
                    end = i;
                    break;
                }
            }
        }
        if (end == std::string::npos) continue;
        nlohmann::json parsed =
            nlohmann::json::parse(text.substr(start, end - start + 1), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) return parsed;
    }
    return std::nullopt;
}

std::string render_entry_line(const ContextEntry& entry) {
    return render_set_line(entry.path) + "\n";
}

constexpr const char* kTruncationMarker = "(truncated)\n";
constexpr const char* kEmptyTypeNote = "(no entries found for this context type)\n";

std::string prevalence_sentence(const Prevalence& prevalence) {
    return "For the configuration line under review, the same configuration is found in " +
           std::to_string(prevalence.count_matching) + " out of " +
           std::to_string(prevalence.count_total) +
           " other configuration files. (Significantly lower prevalence may indicate an "
           "uncommon or potentially erroneous configuration.)\n";
}

Verdict finalize_verdict(const DetectionSession& session, const VerdictAction& action,
                         const DetectionFocus& focus) {
    Verdict verdict;
    verdict.misconfigured = action.misconfigured;
    verdict.err_parameters = action.err_parameters;
    verdict.reason = action.reason;
    verdict.focus_phrase = focus.phrase();
    verdict.requested_contexts = session.requested;
    verdict.iterations = session.model_calls;
    verdict.token_estimate = estimate_tokens(session.transcript);
    return verdict;
}

}  // namespace

std::string DetectionFocus::phrase() const {
    switch (kind) {
        case Kind::Syntax: return "SYNTAX";
        case Kind::Range: return "RANGE";
        case Kind::DependencyConflict: return "DEPENDENCY/CONFLICT";
        case Kind::General: return "GENERAL";
        case Kind::Custom: break;
    }
    std::string upper = custom_phrase;
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return upper;
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::size_t estimate_tokens(const std::vector<ChatMessage>& transcript) {
    return std::accumulate(transcript.begin(), transcript.end(), std::size_t{0},
                           [](std::size_t acc, const ChatMessage& message) {
                               return acc + estimate_tokens(message.content);
                           });
}

const char* to_string(SessionState state) {
    switch (state) {
        case SessionState::AwaitingModel: return "AwaitingModel";
        case SessionState::Delivering: return "Delivering";
        case SessionState::Done: return "Done";
        case SessionState::Failed: return "Failed";
    }
    return "?";
}

std::vector<ChatMessage> render_initial_prompt(const ReviewTarget& target,
                                               const DetectionFocus& focus,
                                               const std::vector<ContextType>& offered) {
    std::vector<ChatMessage> messages;
    messages.push_back(
        {ChatRole::System,
         "You are a senior network engineer reviewing router configurations for "
         "misconfigurations. Always reply with exactly one JSON object and no other text."});

    std::string user;
    if (target.kind == ReviewTarget::Kind::PathLine) {
        user += "Configuration line under review, from " + target.source_id + ":\n\n";
        user += "    " + render_set_line(target.path) + "\n\n";
        user += "Identify any " + focus.phrase() + " misconfigurations in this line.\n\n";
        if (!offered.empty()) {
            user += "Before deciding you may request additional context. Available context "
                    "types:\n";
            for (ContextType type : offered) {
                user += std::string("- ") + context_wire_name(type) + ": " +
                        context_long_name(type) + ", " + menu_description(type) + "\n";
            }
            user += "\n";
        } else {
            user += "No additional context is available for this line. Return a verdict "
                    "now.\n\n";
        }
        user += "Actions (reply with exactly one JSON object):\n";
        if (!offered.empty())
            user += "{\"action\": \"request_context\", \"context_types\": [\"N\", \"R\"]}\n";
        user += "{\"action\": \"verdict\", \"misconfigured\": true, \"errParameter\": "
                "[\"mtu\"], \"reason\": \"brief explanation\"}\n";
        user += "{\"action\": \"verdict\", \"misconfigured\": false, \"errParameter\": [], "
                "\"reason\": \"brief explanation\"}\n";
        if (!offered.empty())
            user += "\nEach context type is delivered at most once; request only types not "
                    "yet delivered.\n";
    } else {
        user += "Configuration excerpt under review, from " + target.source_id +
                " (this file failed to parse; the excerpt surrounds the suspect region):\n\n";
        user += target.excerpt;
        if (user.empty() || user.back() != '\n') user += '\n';
        user += "\nIdentify any " + focus.phrase() + " misconfigurations in this excerpt.\n\n";
        user += "No additional context is available for this excerpt. Return a verdict "
                "now.\n\n";
        user += "Reply with exactly one JSON object:\n";
        user += "{\"action\": \"verdict\", \"misconfigured\": true, \"errParameter\": "
                "[\"name\"], \"reason\": \"brief explanation\"}\n";
        user += "{\"action\": \"verdict\", \"misconfigured\": false, \"errParameter\": [], "
                "\"reason\": \"brief explanation\"}\n";
    }
    messages.push_back({ChatRole::User, std::move(user)});
    return messages;
}

DetectionSession start_session(const ReviewTarget& target, const DetectionFocus& focus,
                               const std::vector<ContextType>& offered) {
    DetectionSession session;
    session.transcript = render_initial_prompt(target, focus, offered);
    session.offered = offered;
    session.transitions.push_back("start offered=" + join_wire_names(offered));
    return session;
}

ModelAction parse_model_action(const std::string& reply, const DetectionSession& session) {
    std::optional<nlohmann::json> object = extract_first_json_object(reply);
    if (!object)
        throw ActionError(ActionErrorKind::Unparseable, "reply contains no JSON object");
    const nlohmann::json& j = *object;

    if (!j.contains("action") || !j["action"].is_string())
        throw ActionError(ActionErrorKind::InvalidAction,
                          "action object lacks a string \"action\" field");
    const std::string action = j["action"].get<std::string>();

    if (action == "request_context") {
        if (!j.contains("context_types") || !j["context_types"].is_array())
            throw ActionError(ActionErrorKind::InvalidAction,
                              "request_context requires a \"context_types\" array");
        std::vector<ContextType> types;
        for (const nlohmann::json& element : j["context_types"]) {
            if (!element.is_string())
                throw ActionError(ActionErrorKind::InvalidAction,
                                  "context_types entries must be strings");
            const std::string name = element.get<std::string>();
            std::optional<ContextType> type = context_from_wire(name);
            if (!type)
                throw ActionError(ActionErrorKind::InvalidAction,
                                  "unknown context type \"" + name + "\"");
            if (!contains_type(types, *type)) types.push_back(*type);
        }
        std::vector<ContextType> deliverable;
        for (ContextType type : types)
            if (contains_type(session.offered, type) && !contains_type(session.delivered, type))
                deliverable.push_back(type);
        if (deliverable.empty())
            throw ActionError(ActionErrorKind::EmptyRequest,
                              "request names no deliverable context types");
        return RequestContextAction{std::move(deliverable)};
    }

    if (action == "verdict") {
        if (!j.contains("misconfigured") || !j["misconfigured"].is_boolean())
            throw ActionError(ActionErrorKind::InvalidAction,
                              "verdict requires a boolean \"misconfigured\" field");
        VerdictAction verdict;
        verdict.misconfigured = j["misconfigured"].get<bool>();
        if (j.contains("errParameter")) {
            if (!j["errParameter"].is_array())
                throw ActionError(ActionErrorKind::InvalidAction,
                                  "\"errParameter\" must be an array of strings");
            for (const nlohmann::json& element : j["errParameter"]) {
                if (!element.is_string())
                    throw ActionError(ActionErrorKind::InvalidAction,
                                      "\"errParameter\" must be an array of strings");
                verdict.err_parameters.push_back(element.get<std::string>());
            }
        }
        if (j.contains("reason")) {
            if (!j["reason"].is_string())
                throw ActionError(ActionErrorKind::InvalidAction,
                                  "\"reason\" must be a string");
            verdict.reason = j["reason"].get<std::string>();
        }
        return verdict;
    }

    throw ActionError(ActionErrorKind::InvalidAction, "unknown action \"" + action + "\"");
}

const ChatMessage& deliver_context(DetectionSession& session,
                                   const std::vector<ContextType>& types,
                                   const ContextBundle& bundle, std::size_t token_budget) {
    const std::size_t base = estimate_tokens(session.transcript);
    auto fits = [&](const std::string& candidate) {
        return base + estimate_tokens(candidate) <= token_budget;
    };
    auto exhausted = [&](ContextType type) -> ProtocolError {
        session.state = SessionState::Failed;
        session.transitions.push_back("Delivering->Failed budget type=" +
                                      std::string(context_wire_name(type)));
        return ProtocolError(ProtocolErrorKind::BudgetExhausted,
                             std::string("token budget cannot hold context type ") +
                                 context_wire_name(type));
    };

    std::string message = "Requested context follows.\n";
    for (ContextType type : types) {
        const std::string heading = std::string("\n## ") + context_long_name(type) + " (" +
                                    context_wire_name(type) + ")\n";
        if (type == ContextType::IntraRouterConsistency) {
            const Prevalence prevalence = bundle.prevalence.value_or(Prevalence{});
            const std::string body = prevalence_sentence(prevalence);
            if (!fits(message + heading + body)) throw exhausted(type);
            message += heading + body;
            continue;
        }
        const auto found = bundle.entries.find(type);
        const std::vector<ContextEntry>* entries =
            found == bundle.entries.end() ? nullptr : &found->second;
        if (entries == nullptr || entries->empty()) {
            if (!fits(message + heading + kEmptyTypeNote)) throw exhausted(type);
            message += heading + kEmptyTypeNote;
            continue;
        }
        const auto capped = bundle.cap_applied.find(type);
        const bool cap_applied = capped != bundle.cap_applied.end() && capped->second;
        std::string section = heading;
        std::size_t appended = 0;
        for (std::size_t i = 0; i < entries->size(); ++i) {
            const std::string line = render_entry_line((*entries)[i]);
            // keep room for the marker whenever entries after this one could
            // still be dropped
            const bool reserve_marker = cap_applied || i + 1 < entries->size();
            if (!fits(message + section + line + (reserve_marker ? kTruncationMarker : "")))
                break;
            section += line;
            ++appended;
        }
        if (appended == 0) throw exhausted(type);
        if (appended < entries->size() || cap_applied) section += kTruncationMarker;
        message += section;
    }

    session.transcript.push_back({ChatRole::User, std::move(message)});
    for (ContextType type : types)
        if (!contains_type(session.delivered, type)) session.delivered.push_back(type);
    session.state = SessionState::AwaitingModel;
    session.transitions.push_back("Delivering->AwaitingModel delivered=" +
                                  join_wire_names(types));
    return session.transcript.back();
}

StepOutcome step_session(DetectionSession& session, const std::string& reply,
                         const ProtocolOptions& options) {
    if (session.state != SessionState::AwaitingModel)
        throw std::logic_error(std::string("step_session called in state ") +
                               to_string(session.state));
    ++session.model_calls;
    // an empty reply must stay out of the transcript or the next provider
    // call would fail transcript validation
    if (!reply.empty()) session.transcript.push_back({ChatRole::Assistant, reply});

    StepOutcome outcome;
    try {
        ModelAction action = parse_model_action(reply, session);
        session.consecutive_rejects = 0;
        if (auto* request = std::get_if<RequestContextAction>(&action)) {
            for (ContextType type : request->types) session.requested.push_back(type);
            session.state = SessionState::Delivering;
            session.transitions.push_back("AwaitingModel->Delivering request=" +
                                          join_wire_names(request->types));
            outcome.kind = StepOutcome::Kind::NeedContext;
            outcome.types = request->types;
            return outcome;
        }
        outcome.verdict = std::get<VerdictAction>(action);
        session.state = SessionState::Done;
        session.transitions.push_back(
            std::string("AwaitingModel->Done verdict misconfigured=") +
            (outcome.verdict.misconfigured ? "true" : "false"));
        outcome.kind = StepOutcome::Kind::GotVerdict;
        return outcome;
    } catch (const ActionError& error) {
        ++session.consecutive_rejects;
        if (session.consecutive_rejects > options.retry_limit) {
            session.state = SessionState::Failed;
            session.transitions.push_back(
                "AwaitingModel->Failed rejects=" +
                std::to_string(session.consecutive_rejects) + " last=" +
                action_error_name(error.kind()));
            outcome.kind = StepOutcome::Kind::Fail;
            outcome.failure =
                std::string(action_error_name(error.kind())) + ": " + error.what();
            return outcome;
        }
        session.transcript.push_back({ChatRole::User, corrective_reminder(error.kind())});
        session.transitions.push_back(std::string("AwaitingModel->AwaitingModel retry=") +
                                      action_error_name(error.kind()));
        outcome.kind = StepOutcome::Kind::Retry;
        return outcome;
    }
}

namespace {

Verdict run_detection_impl(LlmProvider& provider, std::span<const ConfigTree> snapshot,
                           std::size_t origin_index, const ReviewTarget& target,
                           const DetectionFocus& focus, const ClassificationTable* table,
                           const ProtocolOptions& options) {
    std::vector<ContextType> offered;
    if (target.kind == ReviewTarget::Kind::PathLine) {
        if (origin_index >= snapshot.size())
            throw MiningError(MiningErrorKind::OriginNotInSnapshot,
                              "origin index " + std::to_string(origin_index) +
                                  " outside snapshot of " + std::to_string(snapshot.size()));
        offered = {ContextType::Neighbors, ContextType::Similar, ContextType::Referenceable,
                   ContextType::NeighborsOfReferenceable};
        if (snapshot.size() >= 2) offered.push_back(ContextType::IntraRouterConsistency);
    }

    DetectionSession session = start_session(target, focus, offered);
    if (estimate_tokens(session.transcript) > options.token_budget) {
        session.state = SessionState::Failed;
        throw ProtocolError(ProtocolErrorKind::BudgetExhausted,
                            "initial prompt exceeds the token budget");
    }

    std::optional<ClassificationTable> local_table;
    auto classification = [&]() -> const ClassificationTable& {
        if (table != nullptr) return *table;
        if (!local_table) local_table = build_classification_table(snapshot);
        return *local_table;
    };

    while (session.model_calls < options.max_iterations &&
           session.state != SessionState::Done && session.state != SessionState::Failed) {
        const std::string reply = provider.complete(session.transcript);
        StepOutcome outcome = step_session(session, reply, options);
        switch (outcome.kind) {
            case StepOutcome::Kind::Retry: break;
            case StepOutcome::Kind::Fail:
                throw ProtocolError(ProtocolErrorKind::Unparseable, outcome.failure);
            case StepOutcome::Kind::GotVerdict:
                return finalize_verdict(session, outcome.verdict, focus);
            case StepOutcome::Kind::NeedContext: {
                ContextBundle bundle =
                    assemble_bundle(snapshot, origin_index, target.path, outcome.types,
                                    classification(), options.mining);
                deliver_context(session, outcome.types, bundle, options.token_budget);
                break;
            }
        }
    }

    session.transcript.push_back(
        {ChatRole::User,
         "Iteration limit reached. Return your verdict now as exactly one JSON object: "
         "{\"action\": \"verdict\", \"misconfigured\": <true|false>, \"errParameter\": "
         "[...], \"reason\": \"...\"}."});
    const std::string reply = provider.complete(session.transcript);
    ++session.model_calls;
    if (!reply.empty()) session.transcript.push_back({ChatRole::Assistant, reply});
    try {
        ModelAction action = parse_model_action(reply, session);
        if (auto* verdict = std::get_if<VerdictAction>(&action)) {
            session.state = SessionState::Done;
            session.transitions.push_back("AwaitingModel->Done verdict forced");
            return finalize_verdict(session, *verdict, focus);
        }
    } catch (const ActionError&) {
        // fall through to Undecided
    }
    session.state = SessionState::Failed;
    session.transitions.push_back("AwaitingModel->Failed undecided");
    throw ProtocolError(ProtocolErrorKind::Undecided,
                        "no verdict after the forcing message (" +
                            std::to_string(session.model_calls) + " model calls)");
}

}  // namespace

Verdict run_detection(LlmProvider& provider, std::span<const ConfigTree> snapshot,
                      std::size_t origin_index, const ReviewTarget& target,
                      const DetectionFocus& focus, const ProtocolOptions& options) {
    return run_detection_impl(provider, snapshot, origin_index, target, focus, nullptr,
                              options);
}

Verdict run_detection(LlmProvider& provider, std::span<const ConfigTree> snapshot,
                      std::size_t origin_index, const ReviewTarget& target,
                      const DetectionFocus& focus, const ClassificationTable& table,
                      const ProtocolOptions& options) {
    return run_detection_impl(provider, snapshot, origin_index, target, focus, &table,
                              options);
}

std::vector<ScanRow> scan_snapshot(LlmProvider& provider, std::span<const ConfigTree> snapshot,
                                   const DetectionFocus& focus, const ScanOptions& options) {
    struct Job {
        std::size_t tree = 0;
        std::size_t path = 0;
    };

    std::vector<std::size_t> tree_order(snapshot.size());
    std::iota(tree_order.begin(), tree_order.end(), std::size_t{0});
    std::stable_sort(tree_order.begin(), tree_order.end(), [&](std::size_t a, std::size_t b) {
        return snapshot[a].source_id() < snapshot[b].source_id();
    });

    std::vector<Job> jobs;
    for (std::size_t tree_index : tree_order) {
        const ConfigTree& tree = snapshot[tree_index];
        for (const ConfigPath& path : tree.paths()) {
            if (!options.match.empty() &&
                render_set_line(path).find(options.match) == std::string::npos)
                continue;
            jobs.push_back({tree_index, path.path_id});
        }
    }

    const ClassificationTable table = build_classification_table(snapshot);
    std::vector<ScanRow> rows(jobs.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        for (;;) {
            const std::size_t index = next.fetch_add(1);
            if (index >= jobs.size()) return;
            const Job& job = jobs[index];
            const ConfigTree& tree = snapshot[job.tree];
            const ConfigPath& path = tree.paths()[job.path];
            ScanRow row;
            row.source_id = tree.source_id();
            row.path_id = path.path_id;
            row.set_line = render_set_line(path);
            row.focus_phrase = focus.phrase();
            try {
                Verdict verdict = run_detection(
                    provider, snapshot, job.tree,
                    ReviewTarget::path_line(tree.source_id(), path), focus, table,
                    options.protocol);
                row.misconfigured = verdict.misconfigured;
                row.err_parameters = verdict.err_parameters;
                row.reason = verdict.reason;
                row.requested_contexts = verdict.requested_contexts;
                row.iterations = verdict.iterations;
            } catch (const std::exception& error) {
                row.error = error.what();
            }
            rows[index] = std::move(row);
        }
    };

    const std::size_t worker_count =
        std::max<std::size_t>(1, std::min<std::size_t>(options.max_in_flight, jobs.size()));
    std::vector<std::thread> pool;
    pool.reserve(worker_count);
    for (std::size_t i = 0; i < worker_count; ++i) pool.emplace_back(worker);
    for (std::thread& thread : pool) thread.join();
    return rows;
}

std::string scan_rows_to_jsonl(const std::vector<ScanRow>& rows) {
    std::string out;
    for (const ScanRow& row : rows) {
        nlohmann::ordered_json j;
        j["source"] = row.source_id;
        j["path_id"] = row.path_id;
        j["set_line"] = row.set_line;
        j["focus"] = row.focus_phrase;
        j["misconfigured"] = row.misconfigured;
        j["errParameter"] = row.err_parameters;
        j["reason"] = row.reason;
        nlohmann::ordered_json requested = nlohmann::ordered_json::array();
        for (ContextType type : row.requested_contexts) requested.push_back(context_wire_name(type));
        j["requested_contexts"] = std::move(requested);
        j["iterations"] = row.iterations;
        if (!row.error.empty()) j["error"] = row.error;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string verdict_to_json_string(const Verdict& verdict) {
    nlohmann::ordered_json j;
    j["misconfigured"] = verdict.misconfigured;
    j["errParameter"] = verdict.err_parameters;
    j["reason"] = verdict.reason;
    j["focus"] = verdict.focus_phrase;
    nlohmann::ordered_json requested = nlohmann::ordered_json::array();
    for (ContextType type : verdict.requested_contexts)
        requested.push_back(context_wire_name(type));
    j["requested_contexts"] = std::move(requested);
    j["iterations"] = verdict.iterations;
    j["token_estimate"] = verdict.token_estimate;
    return j.dump(2);
}

}  // namespace conflens
