// Acceptance gate: one line per criterion, nonzero exit when any fails.
// Each check runs against the public library surface only.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "conflens/config_tree.hpp"
#include "conflens/context_miner.hpp"
#include "conflens/llm_provider.hpp"
#include "conflens/mutation_harness.hpp"
#include "conflens/prompt_engine.hpp"
#include "conflens/value_classifier.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracle.hpp"
#include "../support/tree_gen.hpp"

using namespace conflens;

namespace {

std::vector<std::size_t> ids(const std::vector<ConfigPath>& paths) {
    std::vector<std::size_t> out;
    out.reserve(paths.size());
    for (const ConfigPath& p : paths) out.push_back(p.path_id);
    return out;
}

const ConfigPath& must_resolve(const ConfigTree& tree, const std::string& line) {
    SelectorResolution res = resolve_selector(tree, line);
    if (res.status != SelectorResolution::Status::Resolved || !res.path)
        throw std::runtime_error("fixture line does not resolve: " + line);
    return tree.paths()[res.path->path_id];
}

bool contains_line(const std::vector<ConfigPath>& paths, const std::string& line) {
    return std::any_of(paths.begin(), paths.end(), [&](const ConfigPath& p) {
        return render_set_line(p) == line;
    });
}

std::string make_request(const std::vector<ContextType>& types) {
    std::string json = "{\"action\": \"request_context\", \"context_types\": [";
    for (std::size_t i = 0; i < types.size(); ++i) {
        if (i) json += ", ";
        json += std::string("\"") + context_wire_name(types[i]) + "\"";
    }
    json += "]}";
    return json;
}

std::string make_verdict(bool misconfigured, const std::string& param) {
    std::string params = param.empty() ? "" : "\"" + param + "\"";
    return std::string("{\"action\": \"verdict\", \"misconfigured\": ") +
           (misconfigured ? "true" : "false") + ", \"errParameter\": [" + params +
           "], \"reason\": \"scripted acceptance run\"}";
}

// criterion 1: indexed miners equal the brute-force definitions on random
// trees, for every path and every valid neighbor depth
std::string criterion_miner_oracle() {
    const auto started = std::chrono::steady_clock::now();
    std::size_t trees_checked = 0;
    std::size_t paths_checked = 0;

    for (std::uint32_t seed = 1; seed <= 1000; ++seed) {
        treegen::Generator gen(seed);
        ConfigTree tree = ConfigTree::build(gen.tree(), "gen");
        ClassificationTable table = build_classification_table(tree);
        std::vector<oracle::Path> all = oracle::enumerate(tree.root());
        if (all.size() != tree.paths().size())
            return "seed " + std::to_string(seed) + ": enumeration count mismatch";
        if (all.size() > 500)
            return "seed " + std::to_string(seed) + ": generator exceeded 500 paths";

        for (const ConfigPath& p : tree.paths()) {
            for (std::size_t m = 1; m < p.depth(); ++m) {
                if (ids(mine_neighbors(tree, p, m)) != oracle::neighbors(all, p.path_id, m))
                    return "seed " + std::to_string(seed) + " path " +
                           std::to_string(p.path_id) + " m " + std::to_string(m) +
                           ": neighbor sets differ";
            }
            if (ids(mine_similar(tree, p)) != oracle::similar(all, p.path_id))
                return "seed " + std::to_string(seed) + " path " + std::to_string(p.path_id) +
                       ": similar sets differ";

            const bool gated =
                table.classify(p.leaf_label(), p.value).cls == ValueClass::PreDefined;
            if (ids(mine_referenceable(tree, p, table)) !=
                oracle::referenceable(tree.root(), all, p.path_id, gated))
                return "seed " + std::to_string(seed) + " path " + std::to_string(p.path_id) +
                       ": referenceable sets differ";
            if (ids(mine_neighbors_of_referenceable(tree, p, table)) !=
                oracle::neighbors_of_referenceable(tree.root(), all, p.path_id, gated))
                return "seed " + std::to_string(seed) + " path " + std::to_string(p.path_id) +
                       ": neighbors-of-referenceable sets differ";
            ++paths_checked;
        }
        ++trees_checked;
    }

    const auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
        std::chrono::steady_clock::now() - started);
    if (trees_checked != 1000) return "expected 1000 trees, checked fewer";
    if (paths_checked == 0) return "no paths were checked";
    if (elapsed.count() >= 120)
        return "took " + std::to_string(elapsed.count()) + "s, limit is 120s";
    return "";
}

// criterion 2: the three worked context-mining memberships
std::string criterion_worked_examples() {
    ConfigTree tree = parse_juniper(fixtures::read("worked_examples.conf"), "worked");
    ClassificationTable table = build_classification_table(tree);

    const ConfigPath& address = must_resolve(
        tree, "set interfaces ge-0/0/0 unit 0 family inet address 192.168.1.1/24");
    if (!contains_line(mine_neighbors(tree, address),
                       "set interfaces ge-0/0/0 unit 0 family inet mtu 1500"))
        return "the mtu statement is missing from the address line's neighbors";

    const ConfigPath& mtu0 = must_resolve(tree, "set Interfaces Ethernet0 IP MTU 1500");
    if (!contains_line(mine_similar(tree, mtu0), "set Interfaces Ethernet1 IP MTU 9000"))
        return "Ethernet1's MTU is missing from Ethernet0's similar set";

    const ConfigPath& import_policy =
        must_resolve(tree, "set RouterA Policy ImportPolicy PolicyX");
    if (!contains_line(mine_referenceable(tree, import_policy, table),
                       "set RouterA Policy PolicyX Filter AllowAll"))
        return "PolicyX's filter is missing from the referenceable set";
    return "";
}

// criterion 3: majority-vote value classification on the worked examples
std::string criterion_classification() {
    ConfigTree tree = parse_juniper(fixtures::read("classify_examples.conf"), "cls");
    ClassificationTable table = build_classification_table(tree);

    if (table.classify("Timeout", "1000").cls != ValueClass::PreDefined)
        return "Timeout must classify pre-defined";
    if (table.classify("ImportPolicy", "PolicyA").cls != ValueClass::UserDefined)
        return "ImportPolicy must classify user-defined";
    if (table.classify("TiePar", "X").cls != ValueClass::PreDefined)
        return "the one-of-two tie must fall to pre-defined";

    const auto& rows = table.rows();
    auto timeout = rows.find("Timeout");
    if (timeout == rows.end() || timeout->second.n != 3 || timeout->second.user_votes != 0)
        return "Timeout row must show 3 unique values, none evidenced";
    auto import_policy = rows.find("ImportPolicy");
    if (import_policy == rows.end() || import_policy->second.n != 3 ||
        import_policy->second.user_votes != 2)
        return "ImportPolicy row must show 3 unique values, 2 evidenced";
    auto tie = rows.find("TiePar");
    if (tie == rows.end() || tie->second.n != 2 || tie->second.user_votes != 1)
        return "TiePar row must show the 1-of-2 split";
    return "";
}

// criterion 4: for each mutation kind, a provider scripted to request the
// kind's expected context sequence yields exactly that delivered trace
std::string criterion_protocol_conformance() {
    const std::string original = fixtures::read("backbone.conf");
    for (MutationKind kind : kAllMutationKinds) {
        PreparedCase prepared = prepare_case(kind, original, "core-sw1", 0);
        const std::vector<ContextType>& expected = expected_contexts(kind);

        std::vector<std::string> responses;
        if (!expected.empty()) responses.push_back(make_request(expected));
        responses.push_back(make_verdict(true, prepared.record.param_label));
        ScriptedProvider provider(responses, {}, std::nullopt);

        Verdict verdict;
        try {
            verdict = run_detection(provider, prepared.snapshot, 0, prepared.review,
                                    focus_for(prepared.record.category));
        } catch (const std::exception& error) {
            return std::string(to_string(kind)) + ": session failed: " + error.what();
        }

        if (verdict.requested_contexts != expected)
            return std::string(to_string(kind)) + ": delivered trace differs from the catalog";
        const std::size_t wanted_calls = expected.empty() ? 1 : 2;
        if (verdict.iterations != wanted_calls)
            return std::string(to_string(kind)) + ": expected " +
                   std::to_string(wanted_calls) + " model calls, saw " +
                   std::to_string(verdict.iterations);
        if (provider.calls() != wanted_calls)
            return std::string(to_string(kind)) + ": provider saw extra calls";
        if (!verdict.misconfigured)
            return std::string(to_string(kind)) + ": scripted verdict was dropped";
    }
    return "";
}

// criterion 5: harness arithmetic under the two bounding detectors
std::string criterion_harness_arithmetic() {
    const std::string original = fixtures::read("backbone.conf");

    EvalSummary best = evaluate_catalog(make_omniscient_detector(), original, "core-sw1", 0);
    if (best.total_syntax != 4 || best.total_range != 4 || best.total_dependency != 8)
        return "catalog does not split 4/4/8 by category";
    if (best.detected_syntax != 4) return "omniscient detector must find all 4 syntax cases";
    if (best.detected_range != 4) return "omniscient detector must find all 4 range cases";
    if (best.detected_dependency != 8)
        return "omniscient detector must find all 8 dependency/conflict cases";
    if (best.controls_clean != 16 || best.controls_total != 16)
        return "all 16 untouched originals must pass the control review";

    EvalSummary worst =
        evaluate_catalog(make_always_clean_detector(), original, "core-sw1", 0);
    if (worst.detected_syntax + worst.detected_range + worst.detected_dependency != 0)
        return "always-clean detector must detect nothing";
    if (worst.controls_clean != 16) return "always-clean controls must stay clean";
    return "";
}

// criterion 6: a 1,000-token budget holds against a 10,000-line neighbor
// set, with a truncation marker and byte-identical reruns
std::string criterion_budget_enforcement() {
    std::ostringstream config;
    config << "iface {\n";
    for (int i = 0; i < 10000; ++i) config << "    param-" << i << " value-" << i << ";\n";
    config << "    probe-param probe-value;\n}\n";

    std::vector<ConfigTree> snapshot;
    snapshot.push_back(parse_juniper(config.str(), "adversarial"));
    const ConfigPath& target = must_resolve(snapshot[0], "set iface probe-param probe-value");

    ProtocolOptions options;
    options.token_budget = 1000;
    options.mining.per_type_cap = 20000;  // let the budget do the cutting

    auto run_once = [&](ScriptedProvider& provider) {
        return run_detection(provider, snapshot, 0,
                             ReviewTarget::path_line("adversarial", target),
                             DetectionFocus::general(), options);
    };

    std::vector<std::string> responses = {
        make_request({ContextType::Neighbors}),
        make_verdict(false, ""),
    };
    ScriptedProvider first(responses, {}, std::nullopt);
    ScriptedProvider second(responses, {}, std::nullopt);
    run_once(first);
    run_once(second);

    if (first.calls() != 2) return "expected exactly two model calls";
    const auto a = first.transcripts();
    const auto b = second.transcripts();
    for (const std::vector<ChatMessage>& transcript : a) {
        if (estimate_tokens(transcript) > 1000)
            return "an outbound request exceeded the 1000-token budget, estimate " +
                   std::to_string(estimate_tokens(transcript));
    }

    bool marker_found = false;
    for (const ChatMessage& message : a.back())
        if (message.content.find("(truncated)") != std::string::npos) marker_found = true;
    if (!marker_found) return "the delivery message lacks the truncation marker";

    if (a.size() != b.size()) return "reruns made different call counts";
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != b[i].size()) return "rerun transcripts differ in length";
        for (std::size_t j = 0; j < a[i].size(); ++j)
            if (a[i][j].role != b[i][j].role || a[i][j].content != b[i][j].content)
                return "rerun transcripts are not byte-identical";
    }
    return "";
}

bool nodes_equal(const ConfigNode& a, const ConfigNode& b) {
    if (a.kind != b.kind || a.label != b.label) return false;
    if (a.kind == NodeKind::Parameter) return a.value == b.value;
    if (a.children.size() != b.children.size()) return false;
    for (std::size_t i = 0; i < a.children.size(); ++i)
        if (!nodes_equal(a.children[i], b.children[i])) return false;
    return true;
}

// criterion 7: parse -> serialize -> parse is a fixpoint, structurally exact
std::string criterion_round_trip() {
    for (const char* name : {"backbone.conf", "worked_examples.conf", "classify_examples.conf"}) {
        ConfigTree tree = parse_juniper(fixtures::read(name), name);
        std::string first = serialize(tree, TreeFormat::Braces);
        ConfigTree reparsed = parse_juniper(first, name);
        if (!nodes_equal(tree.root(), reparsed.root()))
            return std::string(name) + ": reparse changed the tree";
        if (serialize(reparsed, TreeFormat::Braces) != first)
            return std::string(name) + ": second serialization drifted";
    }

    for (std::uint32_t seed = 5000; seed < 6000; ++seed) {
        treegen::Generator gen(seed);
        ConfigTree tree = ConfigTree::build(gen.tree(), "gen");
        std::string first = serialize(tree, TreeFormat::Braces);
        ConfigTree reparsed = parse_juniper(first, "gen");
        if (!nodes_equal(tree.root(), reparsed.root()))
            return "seed " + std::to_string(seed) + ": reparse changed the tree";
        if (serialize(reparsed, TreeFormat::Braces) != first)
            return "seed " + std::to_string(seed) + ": second serialization drifted";
    }
    return "";
}

// criterion 8: prevalence over a 192-file corpus where 189 of the 191
// other files carry the probe line
std::string criterion_prevalence() {
    std::vector<ConfigTree> corpus;
    corpus.push_back(parse_juniper("common { shared-param shared-value; origin-extra yes; }\n",
                                   "origin"));
    for (int i = 0; i < 189; ++i)
        corpus.push_back(parse_juniper("common { shared-param shared-value; }\n",
                                       "peer-" + std::to_string(i)));
    for (int i = 0; i < 2; ++i)
        corpus.push_back(parse_juniper("common { other-param other-value; }\n",
                                       "odd-" + std::to_string(i)));
    if (corpus.size() != 192) return "corpus construction is off";

    const ConfigPath& probe = must_resolve(corpus[0], "set common shared-param shared-value");
    Prevalence prevalence = mine_intra_router(corpus, probe, "origin");
    if (prevalence.count_matching != 189 || prevalence.count_total != 191)
        return "got (" + std::to_string(prevalence.count_matching) + ", " +
               std::to_string(prevalence.count_total) + "), wanted (189, 191)";

    auto cross_check = oracle::intra_router(corpus, {probe.labels, probe.value}, "origin");
    if (cross_check.first != 189 || cross_check.second != 191)
        return "oracle disagrees with the corpus construction";
    return "";
}

struct Criterion {
    int number;
    std::string title;
    std::function<std::string()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "indexed miners equal the brute-force oracle on 1000 random trees",
         criterion_miner_oracle},
        {2, "worked context-mining examples reproduce", criterion_worked_examples},
        {3, "value classification votes land as documented", criterion_classification},
        {4, "every mutation kind's scripted session delivers its expected context trace",
         criterion_protocol_conformance},
        {5, "harness arithmetic: omniscient 4/4, 4/4, 8/8 and 16/16 clean controls",
         criterion_harness_arithmetic},
        {6, "1000-token budget holds against a 10000-line neighbor set",
         criterion_budget_enforcement},
        {7, "parse-serialize-parse is a fixpoint on fixtures and 1000 random trees",
         criterion_round_trip},
        {8, "prevalence over the 192-file corpus is (189, 191)", criterion_prevalence},
    };

    bool all_passed = true;
    for (const Criterion& criterion : criteria) {
        std::string detail;
        try {
            detail = criterion.run();
        } catch (const std::exception& error) {
            detail = std::string("exception: ") + error.what();
        }
        const bool passed = detail.empty();
        all_passed = all_passed && passed;
        std::cout << (passed ? "[PASS]" : "[FAIL]") << " criterion " << criterion.number
                  << ": " << criterion.title;
        if (!passed) std::cout << " (" << detail << ")";
        std::cout << "\n";
    }
    return all_passed ? 0 : 1;
}
