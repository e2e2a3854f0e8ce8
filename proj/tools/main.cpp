#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "conflens/config_tree.hpp"
#include "conflens/context_miner.hpp"
#include "conflens/llm_provider.hpp"
#include "conflens/mutation_harness.hpp"
#include "conflens/prompt_engine.hpp"
#include "conflens/value_classifier.hpp"

namespace {

using namespace conflens;

constexpr int kOk = 0;
constexpr int kFlagged = 1;
constexpr int kParseFailure = 2;
constexpr int kProtocolFailure = 3;

// carries a ready-to-print diagnostic and the process exit code
struct CliFailure {
    int code;
    std::string message;
};

std::string read_file(const std::string& path) {
    std::ifstream input(path, std::ios::binary);
    if (!input) throw CliFailure{kParseFailure, "cannot read " + path};
    std::ostringstream buffer;
    buffer << input.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream output(path, std::ios::binary);
    if (!output) throw CliFailure{kParseFailure, "cannot write " + path};
    output << content;
}

const char* parse_error_kind_name(ParseErrorKind kind) {
    switch (kind) {
        case ParseErrorKind::UnbalancedBraces: return "UnbalancedBraces";
        case ParseErrorKind::StatementOutsideRoot: return "StatementOutsideRoot";
        case ParseErrorKind::EmptyInput: return "EmptyInput";
        case ParseErrorKind::MalformedJson: return "MalformedJson";
    }
    return "ParseError";
}

bool wants_json(const std::string& path, const std::string& format) {
    if (format == "json") return true;
    if (format == "juniper") return false;
    return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
}

ConfigTree load_tree(const std::string& path, const std::string& format) {
    const std::string text = read_file(path);
    try {
        return wants_json(path, format) ? parse_json_tree(text, path)
                                        : parse_juniper(text, path);
    } catch (const ParseError& error) {
        throw CliFailure{kParseFailure, path + ":" + std::to_string(error.line()) + ": " +
                                            parse_error_kind_name(error.kind()) + ": " +
                                            error.what()};
    }
}

std::vector<ConfigTree> load_trees(const std::vector<std::string>& paths,
                                   const std::string& format) {
    std::vector<ConfigTree> trees;
    trees.reserve(paths.size());
    for (const std::string& path : paths) trees.push_back(load_tree(path, format));
    return trees;
}

const ConfigPath& resolve_line(const ConfigTree& tree, const std::string& line) {
    SelectorResolution res = resolve_selector(tree, line);
    if (res.status == SelectorResolution::Status::Ambiguous)
        throw CliFailure{kParseFailure, "--line matches " +
                                            std::to_string(res.candidates.size()) +
                                            " statements in " + tree.source_id() +
                                            "; it must match exactly one"};
    if (res.status != SelectorResolution::Status::Resolved || !res.path)
        throw CliFailure{kParseFailure,
                         "--line does not match any statement in " + tree.source_id()};
    return tree.paths()[res.path->path_id];
}

std::string lowercase(std::string text) {
    for (char& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return text;
}

DetectionFocus focus_from(const std::string& name) {
    const std::string lowered = lowercase(name);
    if (lowered.empty() || lowered == "general") return DetectionFocus::general();
    if (lowered == "syntax") return DetectionFocus::syntax();
    if (lowered == "range") return DetectionFocus::range();
    if (lowered == "dependency-conflict" || lowered == "dependency/conflict")
        return DetectionFocus::dependency_conflict();
    return DetectionFocus::custom(name);
}

struct ProviderFlags {
    std::string script;
    std::string endpoint;
    std::string model = "gpt-4o-2024-05-13";
    double temperature = 0.0;
    std::string api_key_env = "PROVIDER_API_KEY";
};

void add_provider_flags(CLI::App* cmd, ProviderFlags& flags) {
    auto* script =
        cmd->add_option("--script", flags.script, "scripted provider JSON file, fully offline");
    auto* endpoint =
        cmd->add_option("--endpoint", flags.endpoint, "chat-completions endpoint URL");
    script->excludes(endpoint);
    endpoint->excludes(script);
    cmd->add_option("--model", flags.model, "model name sent to the endpoint");
    cmd->add_option("--temperature", flags.temperature, "sampling temperature");
    cmd->add_option("--api-key-env", flags.api_key_env,
                    "environment variable holding the bearer token");
}

std::unique_ptr<LlmProvider> provider_from(const ProviderFlags& flags) {
    ProviderConfig config;
    if (!flags.script.empty()) {
        config.kind = ProviderConfig::Kind::Scripted;
        config.script_path = flags.script;
    } else if (!flags.endpoint.empty()) {
        config.kind = ProviderConfig::Kind::Http;
        config.http.endpoint_url = flags.endpoint;
        config.http.model = flags.model;
        config.http.temperature = flags.temperature;
        config.http.api_key_env = flags.api_key_env;
    } else {
        throw CliFailure{kProtocolFailure,
                         "a provider is required here: pass --script FILE or --endpoint URL"};
    }
    try {
        return make_provider(config);
    } catch (const std::invalid_argument& error) {
        throw CliFailure{kParseFailure, std::string("bad provider script: ") + error.what()};
    }
}

struct ProtocolFlags {
    std::size_t max_iterations = 5;
    std::size_t token_budget = 120000;
    std::size_t context_cap = 50;
};

void add_protocol_flags(CLI::App* cmd, ProtocolFlags& flags) {
    cmd->add_option("--max-iterations", flags.max_iterations,
                    "model calls before the verdict is forced");
    cmd->add_option("--token-budget", flags.token_budget,
                    "transcript token estimate the session must stay under");
    cmd->add_option("--context-cap", flags.context_cap, "max entries kept per context type");
}

ProtocolOptions protocol_from(const ProtocolFlags& flags) {
    ProtocolOptions options;
    options.max_iterations = flags.max_iterations;
    options.token_budget = flags.token_budget;
    options.mining.per_type_cap = flags.context_cap;
    return options;
}

void emit(const std::string& payload, const std::string& out_path) {
    if (out_path.empty())
        std::cout << payload;
    else
        write_file(out_path, payload);
}

std::string with_final_newline(std::string text) {
    if (text.empty() || text.back() != '\n') text += '\n';
    return text;
}

int cmd_parse(const std::vector<std::string>& files, const std::string& format,
              const std::string& emit_as) {
    for (const std::string& file : files) {
        ConfigTree tree = load_tree(file, format);
        TreeFormat target = TreeFormat::Json;
        if (emit_as == "set-lines") target = TreeFormat::SetLines;
        if (emit_as == "braces") target = TreeFormat::Braces;
        std::cout << with_final_newline(serialize(tree, target));
    }
    return kOk;
}

int cmd_mine(const std::string& file, const std::vector<std::string>& with,
             const std::string& format, const std::string& line, const std::string& context_csv,
             std::optional<std::size_t> m, std::size_t context_cap) {
    std::vector<std::string> paths{file};
    paths.insert(paths.end(), with.begin(), with.end());
    std::vector<ConfigTree> trees = load_trees(paths, format);
    const ConfigPath& target = resolve_line(trees[0], line);

    std::vector<ContextType> requested;
    if (context_csv.empty()) {
        requested = {ContextType::Neighbors, ContextType::Similar, ContextType::Referenceable,
                     ContextType::NeighborsOfReferenceable};
        if (trees.size() > 1) requested.push_back(ContextType::IntraRouterConsistency);
    } else {
        std::stringstream stream(context_csv);
        std::string name;
        while (std::getline(stream, name, ',')) {
            std::optional<ContextType> type = context_from_wire(name);
            if (!type)
                throw CliFailure{kParseFailure,
                                 "unknown context type \"" + name +
                                     "\"; expected N, S, R, NR or IRC"};
            requested.push_back(*type);
        }
        if (requested.empty())
            throw CliFailure{kParseFailure, "--context names no context types"};
    }

    ClassificationTable table = build_classification_table(trees);
    MiningOptions options;
    options.per_type_cap = context_cap;
    options.neighbor_depth = m;

    ContextBundle bundle = assemble_bundle(trees, 0, target, requested, table, options);

    const bool wants_r = std::find(requested.begin(), requested.end(),
                                   ContextType::Referenceable) != requested.end();
    if (wants_r &&
        table.classify(target.leaf_label(), target.value).cls == ValueClass::PreDefined)
        std::cerr << "note: referenceable context is empty by rule; the value classifies as "
                     "pre-defined\n";

    nlohmann::ordered_json contexts = nlohmann::ordered_json::object();
    for (ContextType type : kAllContextTypes) {
        if (type == ContextType::IntraRouterConsistency) continue;
        if (std::find(requested.begin(), requested.end(), type) == requested.end()) continue;
        nlohmann::ordered_json entries = nlohmann::ordered_json::array();
        auto found = bundle.entries.find(type);
        if (found != bundle.entries.end())
            for (const ContextEntry& entry : found->second)
                entries.push_back(render_set_line(entry.path));
        contexts[context_wire_name(type)] = std::move(entries);
    }

    nlohmann::ordered_json j;
    j["target"] = render_set_line(target);
    j["contexts"] = std::move(contexts);
    if (bundle.prevalence) {
        j["prevalence"] = {{"count_matching", bundle.prevalence->count_matching},
                           {"count_total", bundle.prevalence->count_total}};
    } else {
        j["prevalence"] = nullptr;
    }
    std::cout << j.dump(2) << "\n";
    return kOk;
}

int cmd_classify(const std::vector<std::string>& files, const std::string& format) {
    std::vector<ConfigTree> trees = load_trees(files, format);
    std::cout << build_classification_table(trees).to_json_string();
    return kOk;
}

int cmd_check(const std::string& file, const std::vector<std::string>& with,
              const std::string& format, const std::string& line, const std::string& focus,
              const ProviderFlags& provider_flags, const ProtocolFlags& protocol_flags) {
    std::vector<std::string> paths{file};
    paths.insert(paths.end(), with.begin(), with.end());
    std::vector<ConfigTree> trees = load_trees(paths, format);
    const ConfigPath& target = resolve_line(trees[0], line);

    std::unique_ptr<LlmProvider> provider = provider_from(provider_flags);
    Verdict verdict =
        run_detection(*provider, trees, 0, ReviewTarget::path_line(file, target),
                      focus_from(focus), protocol_from(protocol_flags));
    std::cout << verdict_to_json_string(verdict) << "\n";
    return verdict.misconfigured ? kFlagged : kOk;
}

int cmd_scan(const std::vector<std::string>& files, const std::string& format,
             const std::string& focus, const std::string& match, const std::string& out_path,
             bool pretty, std::size_t max_in_flight, const ProviderFlags& provider_flags,
             const ProtocolFlags& protocol_flags) {
    std::vector<ConfigTree> trees = load_trees(files, format);
    std::unique_ptr<LlmProvider> provider = provider_from(provider_flags);

    ScanOptions options;
    options.protocol = protocol_from(protocol_flags);
    options.max_in_flight = max_in_flight;
    options.match = match;

    std::vector<ScanRow> rows = scan_snapshot(*provider, trees, focus_from(focus), options);
    std::string payload = scan_rows_to_jsonl(rows);
    if (pretty) {
        nlohmann::ordered_json output = nlohmann::ordered_json::array();
        std::stringstream stream(payload);
        std::string row_line;
        while (std::getline(stream, row_line))
            if (!row_line.empty()) output.push_back(nlohmann::ordered_json::parse(row_line));
        payload = output.dump(2) + "\n";
    }
    emit(payload, out_path);

    for (const ScanRow& row : rows)
        if (row.misconfigured) return kFlagged;
    return kOk;
}

int cmd_inject(const std::string& file, const std::string& kind_name, std::uint64_t seed,
               const std::string& target, const std::string& out_path,
               const std::string& record_path, const std::string& apply_path, bool list_kinds,
               bool list_candidates) {
    if (list_kinds) {
        for (MutationKind kind : kAllMutationKinds)
            std::cout << to_string(kind) << "\t" << to_string(category_of(kind)) << "\t"
                      << to_string(layer_of(kind)) << "\n";
        return kOk;
    }
    if (file.empty())
        throw CliFailure{kParseFailure, "a config file is required unless --list-kinds"};
    const std::string text = read_file(file);

    try {
        if (!apply_path.empty()) {
            MutationRecord record = record_from_json(read_file(apply_path));
            MutationResult result = apply_record(record, text);
            if (out_path.empty())
                std::cout << result.mutated_text;
            else
                write_file(out_path, result.mutated_text);
            return kOk;
        }

        std::optional<MutationKind> kind = mutation_from_name(kind_name);
        if (!kind) {
            std::string known;
            for (MutationKind k : kAllMutationKinds) {
                if (!known.empty()) known += ", ";
                known += to_string(k);
            }
            throw CliFailure{kParseFailure, "--kind must be one of: " + known};
        }

        if (list_candidates) {
            ConfigTree tree = parse_juniper(text, file);
            for (const std::string& candidate : mutation_candidates(*kind, tree))
                std::cout << candidate << "\n";
            return kOk;
        }

        MutationResult result = inject_mutation(*kind, text, file, seed, target);
        if (!record_path.empty())
            write_file(record_path, record_to_json(result.record) + "\n");
        if (out_path.empty()) {
            std::cout << result.mutated_text;
        } else {
            write_file(out_path, result.mutated_text);
            if (record_path.empty()) std::cout << record_to_json(result.record) << "\n";
        }
        return kOk;
    } catch (const ParseError& error) {
        throw CliFailure{kParseFailure, file + ":" + std::to_string(error.line()) + ": " +
                                            parse_error_kind_name(error.kind()) + ": " +
                                            error.what()};
    } catch (const MutationError& error) {
        throw CliFailure{kParseFailure, std::string("injection failed: ") + error.what()};
    }
}

int cmd_eval(const std::string& file, std::uint64_t seed, const std::string& detector_name,
             bool markdown, const std::string& out_path, const ProviderFlags& provider_flags,
             const ProtocolFlags& protocol_flags) {
    const std::string text = read_file(file);

    std::unique_ptr<LlmProvider> provider;  // outlives the evaluation below
    DetectorFn detector;
    if (!provider_flags.script.empty() || !provider_flags.endpoint.empty()) {
        provider = provider_from(provider_flags);
        detector = make_llm_detector(*provider, protocol_from(protocol_flags));
    } else if (detector_name == "always-clean") {
        detector = make_always_clean_detector();
    } else {
        detector = make_omniscient_detector();
    }

    try {
        EvalSummary summary = evaluate_catalog(detector, text, file, seed);
        std::string payload =
            markdown ? eval_summary_to_markdown(summary) : eval_summary_to_json(summary) + "\n";
        emit(payload, out_path);
        return kOk;
    } catch (const ParseError& error) {
        throw CliFailure{kParseFailure, file + ":" + std::to_string(error.line()) + ": " +
                                            parse_error_kind_name(error.kind()) + ": " +
                                            error.what()};
    } catch (const MutationError& error) {
        throw CliFailure{kParseFailure, std::string("evaluation failed: ") + error.what()};
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conflens: mine context from router configs and drive an LLM reviewer"};
    app.require_subcommand(1);

    int rc = kOk;

    // parse
    std::vector<std::string> parse_files;
    std::string parse_format = "auto";
    std::string parse_emit = "json";
    CLI::App* parse_cmd = app.add_subcommand("parse", "parse configs and print the tree");
    parse_cmd->add_option("files", parse_files, "config files")->required()->expected(-1);
    parse_cmd->add_option("--format", parse_format, "input format, default by extension")
        ->check(CLI::IsMember({"auto", "juniper", "json"}));
    parse_cmd->add_option("--emit", parse_emit, "output form")
        ->check(CLI::IsMember({"json", "set-lines", "braces"}));
    parse_cmd->callback([&] { rc = cmd_parse(parse_files, parse_format, parse_emit); });

    // mine
    std::string mine_file, mine_format = "auto", mine_line, mine_context;
    std::vector<std::string> mine_with;
    std::optional<std::size_t> mine_m;
    std::size_t mine_cap = 50;
    CLI::App* mine_cmd = app.add_subcommand("mine", "mine context around one statement");
    mine_cmd->add_option("file", mine_file, "config under review")->required();
    mine_cmd->add_option("--with", mine_with, "additional snapshot configs");
    mine_cmd->add_option("--format", mine_format, "input format")
        ->check(CLI::IsMember({"auto", "juniper", "json"}));
    mine_cmd->add_option("--line", mine_line, "set line naming the statement")->required();
    mine_cmd->add_option("--context", mine_context,
                         "comma-separated context types (default N,S,R,NR and IRC when peers "
                         "are given)");
    std::size_t mine_m_value = 0;
    CLI::Option* mine_m_opt = mine_cmd->add_option(
        "--m", mine_m_value, "neighbor prefix depth, default one above the leaf");
    mine_cmd->add_option("--context-cap", mine_cap, "max entries per context type");
    mine_cmd->callback([&] {
        if (mine_m_opt->count() > 0) mine_m = mine_m_value;
        rc = cmd_mine(mine_file, mine_with, mine_format, mine_line, mine_context, mine_m,
                      mine_cap);
    });

    // classify
    std::vector<std::string> classify_files;
    std::string classify_format = "auto";
    CLI::App* classify_cmd =
        app.add_subcommand("classify", "classify parameter values over the given configs");
    classify_cmd->add_option("files", classify_files, "config files")->required()->expected(-1);
    classify_cmd->add_option("--format", classify_format, "input format")
        ->check(CLI::IsMember({"auto", "juniper", "json"}));
    classify_cmd->callback([&] { rc = cmd_classify(classify_files, classify_format); });

    // check
    std::string check_file, check_format = "auto", check_line, check_focus = "general";
    std::vector<std::string> check_with;
    ProviderFlags check_provider;
    ProtocolFlags check_protocol;
    CLI::App* check_cmd = app.add_subcommand("check", "review one statement with the model");
    check_cmd->add_option("file", check_file, "config under review")->required();
    check_cmd->add_option("--with", check_with, "additional snapshot configs");
    check_cmd->add_option("--format", check_format, "input format")
        ->check(CLI::IsMember({"auto", "juniper", "json"}));
    check_cmd->add_option("--line", check_line, "set line naming the statement")->required();
    check_cmd->add_option("--focus", check_focus,
                          "general, syntax, range, dependency-conflict, or a custom phrase");
    add_provider_flags(check_cmd, check_provider);
    add_protocol_flags(check_cmd, check_protocol);
    check_cmd->callback([&] {
        rc = cmd_check(check_file, check_with, check_format, check_line, check_focus,
                       check_provider, check_protocol);
    });

    // scan
    std::vector<std::string> scan_files;
    std::string scan_format = "auto", scan_focus = "general", scan_match, scan_out;
    bool scan_pretty = false, scan_jsonl = false;
    std::size_t scan_in_flight = 4;
    ProviderFlags scan_provider;
    ProtocolFlags scan_protocol;
    CLI::App* scan_cmd = app.add_subcommand("scan", "review every statement in the configs");
    scan_cmd->add_option("files", scan_files, "config files")->required()->expected(-1);
    scan_cmd->add_option("--format", scan_format, "input format")
        ->check(CLI::IsMember({"auto", "juniper", "json"}));
    scan_cmd->add_option("--focus", scan_focus, "detection focus, default general");
    scan_cmd->add_option("--match", scan_match, "only review set lines containing this text");
    scan_cmd->add_option("--out", scan_out, "write the report here instead of stdout");
    CLI::Option* pretty_flag =
        scan_cmd->add_flag("--pretty", scan_pretty, "pretty-printed JSON array");
    CLI::Option* jsonl_flag =
        scan_cmd->add_flag("--jsonl", scan_jsonl, "one JSON object per line (default)");
    pretty_flag->excludes(jsonl_flag);
    jsonl_flag->excludes(pretty_flag);
    scan_cmd->add_option("--max-in-flight", scan_in_flight, "concurrent review sessions");
    add_provider_flags(scan_cmd, scan_provider);
    add_protocol_flags(scan_cmd, scan_protocol);
    scan_cmd->callback([&] {
        rc = cmd_scan(scan_files, scan_format, scan_focus, scan_match, scan_out, scan_pretty,
                      scan_in_flight, scan_provider, scan_protocol);
    });

    // inject
    std::string inject_file, inject_kind, inject_target, inject_out, inject_record,
        inject_apply;
    std::uint64_t inject_seed = 0;
    bool inject_list_kinds = false, inject_list_candidates = false;
    CLI::App* inject_cmd =
        app.add_subcommand("inject", "plant a synthetic misconfiguration in a config");
    inject_cmd->add_option("file", inject_file, "original config");
    inject_cmd->add_option("--kind", inject_kind, "mutation kind, see --list-kinds");
    inject_cmd->add_option("--seed", inject_seed, "candidate selector when --target is absent");
    inject_cmd->add_option("--target", inject_target, "exact candidate descriptor to mutate");
    inject_cmd->add_option("--out", inject_out, "write the mutated config here");
    inject_cmd->add_option("--record", inject_record, "write the mutation record here");
    inject_cmd->add_option("--apply", inject_apply, "replay a recorded mutation instead");
    inject_cmd->add_flag("--list-kinds", inject_list_kinds, "print the mutation catalog");
    inject_cmd->add_flag("--list-candidates", inject_list_candidates,
                         "print candidate targets for --kind");
    inject_cmd->callback([&] {
        rc = cmd_inject(inject_file, inject_kind, inject_seed, inject_target, inject_out,
                        inject_record, inject_apply, inject_list_kinds, inject_list_candidates);
    });

    // eval
    std::string eval_file, eval_detector = "omniscient", eval_out;
    std::uint64_t eval_seed = 0;
    bool eval_markdown = false;
    ProviderFlags eval_provider;
    ProtocolFlags eval_protocol;
    CLI::App* eval_cmd = app.add_subcommand(
        "eval", "inject the whole mutation catalog and score a detector on it");
    eval_cmd->add_option("file", eval_file, "original config")->required();
    eval_cmd->add_option("--seed", eval_seed, "candidate selector seed");
    eval_cmd->add_option("--detector", eval_detector,
                         "built-in detector when no provider is given")
        ->check(CLI::IsMember({"omniscient", "always-clean"}));
    eval_cmd->add_flag("--markdown", eval_markdown, "emit a markdown table");
    eval_cmd->add_option("--out", eval_out, "write the report here instead of stdout");
    add_provider_flags(eval_cmd, eval_provider);
    add_protocol_flags(eval_cmd, eval_protocol);
    eval_cmd->callback([&] {
        rc = cmd_eval(eval_file, eval_seed, eval_detector, eval_markdown, eval_out,
                      eval_provider, eval_protocol);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& error) {
        return app.exit(error);
    } catch (const CliFailure& failure) {
        std::cerr << "conflens: " << failure.message << "\n";
        return failure.code;
    } catch (const ProtocolError& error) {
        std::cerr << "conflens: protocol failure: " << error.what() << "\n";
        return kProtocolFailure;
    } catch (const ProviderError& error) {
        std::cerr << "conflens: provider failure: " << error.what() << "\n";
        return kProtocolFailure;
    } catch (const ParseError& error) {
        std::cerr << "conflens: " << parse_error_kind_name(error.kind()) << ": " << error.what()
                  << "\n";
        return kParseFailure;
    } catch (const MiningError& error) {
        std::cerr << "conflens: " << error.what() << "\n";
        return kParseFailure;
    } catch (const MutationError& error) {
        std::cerr << "conflens: " << error.what() << "\n";
        return kParseFailure;
    } catch (const SerializeError& error) {
        std::cerr << "conflens: " << error.what() << "\n";
        return kParseFailure;
    } catch (const std::exception& error) {
        std::cerr << "conflens: " << error.what() << "\n";
        return kParseFailure;
    }
    return rc;
}
