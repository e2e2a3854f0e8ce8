#include "conflens/mutation_harness.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "json.hpp"

namespace conflens {

namespace {

struct KindInfo {
    const char* name;
    MutationCategory category;
    MutationLayer layer;
    std::vector<std::string> params;  // eligible leaf labels
    std::string ancestor;             // required enclosing section label, "" = any
    std::string replacement;          // new value, tree-layer kinds only
    std::vector<ContextType> expected;
};

using CT = ContextType;

const KindInfo& info_for(MutationKind kind) {
    static const std::map<MutationKind, KindInfo> table = {
        {MutationKind::MissingBrace,
         {"missing-brace", MutationCategory::Syntax, MutationLayer::Text, {}, "", "", {}}},
        {MutationKind::InvalidKeyword,
         {"invalid-keyword", MutationCategory::Syntax, MutationLayer::Tree, {"mtu"}, "",
          "True", {CT::Neighbors, CT::Referenceable}}},
        {MutationKind::IncorrectHierarchy,
         {"incorrect-hierarchy", MutationCategory::Syntax, MutationLayer::Text, {"host-name"},
          "", "", {CT::Neighbors}}},
        {MutationKind::InvalidIpAddress,
         {"invalid-ip-address", MutationCategory::Syntax, MutationLayer::Tree,
          {"neighbor", "local-address", "address"}, "", "192.168.253.1.1",
          {CT::Neighbors, CT::Referenceable}}},
        {MutationKind::InvalidMtu,
         {"invalid-mtu", MutationCategory::Range, MutationLayer::Tree, {"mtu"}, "", "10000",
          {CT::Neighbors, CT::Referenceable}}},
        {MutationKind::InvalidVlanId,
         {"invalid-vlan-id", MutationCategory::Range, MutationLayer::Tree, {"vlan-id"}, "",
          "5000", {CT::Neighbors, CT::Referenceable, CT::NeighborsOfReferenceable}}},
        {MutationKind::InvalidAsNumber,
         {"invalid-as-number", MutationCategory::Range, MutationLayer::Tree,
          {"autonomous-system"}, "", "70000", {CT::Neighbors, CT::Referenceable}}},
        {MutationKind::InvalidPrefixLimit,
         {"invalid-prefix-limit", MutationCategory::Range, MutationLayer::Tree, {"maximum"},
          "prefix-limit", "200000", {CT::Neighbors, CT::Referenceable}}},
        {MutationKind::NonexistentGroup,
         {"nonexistent-group", MutationCategory::DependencyConflict, MutationLayer::Tree,
          {"apply-groups"}, "", "L2-LSP-ATTRIBUTES",
          {CT::Neighbors, CT::Referenceable, CT::NeighborsOfReferenceable}}},
        {MutationKind::PolicyConflict,
         {"policy-conflict", MutationCategory::DependencyConflict, MutationLayer::Text,
          {"community add"}, "", "",
          {CT::Neighbors, CT::Referenceable, CT::NeighborsOfReferenceable}}},
        {MutationKind::NonexistentFilter,
         {"nonexistent-filter", MutationCategory::DependencyConflict, MutationLayer::Tree,
          {"input-list"}, "inet6", "uplink", {CT::Neighbors, CT::Referenceable}}},
        {MutationKind::NonexistentPolicy,
         {"nonexistent-policy", MutationCategory::DependencyConflict, MutationLayer::Tree,
          {"export"}, "", "OESS-400-300-LOOP", {CT::Referenceable}}},
        {MutationKind::IncorrectFilterUsage,
         {"incorrect-filter-usage", MutationCategory::DependencyConflict, MutationLayer::Tree,
          {"input-list"}, "mpls", "v6filter", {CT::Referenceable, CT::Similar}}},
        {MutationKind::DisabledSampling,
         {"disabled-sampling", MutationCategory::DependencyConflict, MutationLayer::Text,
          {"sampling"}, "inet6", "", {CT::Referenceable, CT::Neighbors}}},
        {MutationKind::VrfTargetConflict,
         {"vrf-target-conflict", MutationCategory::DependencyConflict, MutationLayer::Tree,
          {"vrf-target"}, "", "target:11537:313001", {CT::Similar}}},
        {MutationKind::AbnormalSmallMtu,
         {"abnormal-small-mtu", MutationCategory::DependencyConflict, MutationLayer::Tree,
          {"mtu"}, "iso", "1497", {CT::Referenceable, CT::Similar}}},
    };
    return table.at(kind);
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::pair<std::string, ConfigTree> canonicalize(const std::string& text,
                                                const std::string& source_id) {
    ConfigTree first = parse_juniper(text, source_id);
    std::string canonical = serialize(first, TreeFormat::Braces);
    ConfigTree tree = parse_juniper(canonical, source_id);
    return {std::move(canonical), std::move(tree)};
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string current;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    if (!current.empty()) lines.push_back(current);
    return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string text;
    for (const std::string& line : lines) {
        text += line;
        text += '\n';
    }
    return text;
}

// single minimal hunk: shared top and bottom trimmed, "@@ <first line>",
// then the original window as "-" lines and the replacement as "+" lines
std::string line_diff(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::size_t top = 0;
    while (top < a.size() && top < b.size() && a[top] == b[top]) ++top;
    std::size_t end_a = a.size();
    std::size_t end_b = b.size();
    while (end_a > top && end_b > top && a[end_a - 1] == b[end_b - 1]) {
        --end_a;
        --end_b;
    }
    std::string out = "@@ " + std::to_string(top + 1) + "\n";
    for (std::size_t i = top; i < end_a; ++i) out += "-" + a[i] + "\n";
    for (std::size_t i = top; i < end_b; ++i) out += "+" + b[i] + "\n";
    return out;
}

struct ParsedDiff {
    std::size_t first_line = 0;  // 1-based
    std::vector<std::string> removed;
    std::vector<std::string> added;
};

ParsedDiff parse_diff(const std::string& diff) {
    ParsedDiff parsed;
    std::vector<std::string> lines = split_lines(diff);
    if (lines.empty() || lines[0].rfind("@@ ", 0) != 0)
        throw MutationError(MutationErrorKind::BadRecord, "diff must open with an @@ line");
    try {
        parsed.first_line = std::stoull(lines[0].substr(3));
    } catch (const std::exception&) {
        throw MutationError(MutationErrorKind::BadRecord, "bad line number in diff header");
    }
    if (parsed.first_line == 0)
        throw MutationError(MutationErrorKind::BadRecord, "diff lines are 1-based");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty())
            throw MutationError(MutationErrorKind::BadRecord, "empty diff body line");
        if (lines[i][0] == '-')
            parsed.removed.push_back(lines[i].substr(1));
        else if (lines[i][0] == '+')
            parsed.added.push_back(lines[i].substr(1));
        else
            throw MutationError(MutationErrorKind::BadRecord,
                                "diff body lines must start with - or +");
    }
    return parsed;
}

std::vector<std::string> apply_line_diff(std::vector<std::string> lines,
                                         const std::string& diff) {
    ParsedDiff parsed = parse_diff(diff);
    const std::size_t at = parsed.first_line - 1;
    if (at + parsed.removed.size() > lines.size())
        throw MutationError(MutationErrorKind::ReplayMismatch,
                            "diff window falls outside the text");
    for (std::size_t i = 0; i < parsed.removed.size(); ++i)
        if (lines[at + i] != parsed.removed[i])
            throw MutationError(MutationErrorKind::ReplayMismatch,
                                "line " + std::to_string(at + i + 1) +
                                    " no longer matches the recorded diff");
    lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(at),
                lines.begin() + static_cast<std::ptrdiff_t>(at + parsed.removed.size()));
    lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(at), parsed.added.begin(),
                 parsed.added.end());
    return lines;
}

// exact label or one of its whitespace tokens, so "inet6" finds "family inet6"
bool label_matches(const std::string& label, const std::string& wanted) {
    if (label == wanted) return true;
    std::size_t pos = 0;
    while (pos < label.size()) {
        while (pos < label.size() && std::isspace(static_cast<unsigned char>(label[pos]))) ++pos;
        std::size_t end = pos;
        while (end < label.size() && !std::isspace(static_cast<unsigned char>(label[end]))) ++end;
        if (end > pos && label.compare(pos, end - pos, wanted) == 0) return true;
        pos = end;
    }
    return false;
}

bool has_intermediate_label(const ConfigPath& path, const std::string& label) {
    for (std::size_t i = 1; i + 1 < path.labels.size(); ++i)
        if (label_matches(path.labels[i], label)) return true;
    return false;
}

bool label_in(const std::vector<std::string>& labels, const std::string& label) {
    return std::find(labels.begin(), labels.end(), label) != labels.end();
}

// parameter nodes paired with their parent section, in path_id order
void collect_parameters(const ConfigNode& section,
                        std::vector<std::pair<const ConfigNode*, const ConfigNode*>>& out) {
    for (const ConfigNode& child : section.children) {
        if (child.kind == NodeKind::Parameter)
            out.emplace_back(&child, &section);
        else
            collect_parameters(child, out);
    }
}

struct SectionRef {
    const ConfigNode* node = nullptr;
    std::vector<std::string> labels;  // includes the root label
};

void collect_sections(const ConfigNode& section, std::vector<std::string>& labels,
                      std::vector<SectionRef>& out) {
    labels.push_back(section.label);
    out.push_back({&section, labels});
    for (const ConfigNode& child : section.children)
        if (child.kind == NodeKind::Section) collect_sections(child, labels, out);
    labels.pop_back();
}

std::string section_descriptor(const std::vector<std::string>& labels) {
    std::string out = "section";
    for (std::size_t i = 1; i < labels.size(); ++i) {
        out += ' ';
        out += labels[i];
    }
    return out;
}

std::string trim_copy(const std::string& text) {
    std::size_t begin = text.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    std::size_t end = text.find_last_not_of(" \t\r\n");
    return text.substr(begin, end - begin + 1);
}

bool edit_parameter_value(ConfigNode& section, std::size_t& counter, std::size_t wanted,
                          const std::string& value) {
    for (ConfigNode& child : section.children) {
        if (child.kind == NodeKind::Parameter) {
            if (counter++ == wanted) {
                child.value = value;
                return true;
            }
        } else if (edit_parameter_value(child, counter, wanted, value)) {
            return true;
        }
    }
    return false;
}

bool insert_after_parameter(ConfigNode& section, std::size_t& counter, std::size_t wanted,
                            const ConfigNode& node) {
    for (std::size_t i = 0; i < section.children.size(); ++i) {
        ConfigNode& child = section.children[i];
        if (child.kind == NodeKind::Parameter) {
            if (counter++ == wanted) {
                section.children.insert(
                    section.children.begin() + static_cast<std::ptrdiff_t>(i + 1), node);
                return true;
            }
        } else if (insert_after_parameter(child, counter, wanted, node)) {
            return true;
        }
    }
    return false;
}

bool erase_parameter(ConfigNode& section, std::size_t& counter, std::size_t wanted) {
    for (std::size_t i = 0; i < section.children.size(); ++i) {
        ConfigNode& child = section.children[i];
        if (child.kind == NodeKind::Parameter) {
            if (counter++ == wanted) {
                section.children.erase(section.children.begin() +
                                       static_cast<std::ptrdiff_t>(i));
                return true;
            }
        } else if (erase_parameter(child, counter, wanted)) {
            return true;
        }
    }
    return false;
}

// moves the wanted parameter into the front of its first sibling subsection
bool renest_parameter(ConfigNode& section, std::size_t& counter, std::size_t wanted) {
    for (std::size_t i = 0; i < section.children.size(); ++i) {
        ConfigNode& child = section.children[i];
        if (child.kind == NodeKind::Parameter) {
            if (counter++ == wanted) {
                for (std::size_t j = 0; j < section.children.size(); ++j) {
                    if (j == i || section.children[j].kind != NodeKind::Section) continue;
                    ConfigNode moved = section.children[i];
                    std::size_t into = j > i ? j - 1 : j;
                    section.children.erase(section.children.begin() +
                                           static_cast<std::ptrdiff_t>(i));
                    ConfigNode& host = section.children[into];
                    host.children.insert(host.children.begin(), std::move(moved));
                    return true;
                }
                throw MutationError(MutationErrorKind::NoCandidate,
                                    "target has no sibling section to nest into");
            }
        } else if (renest_parameter(child, counter, wanted)) {
            return true;
        }
    }
    return false;
}

const ConfigPath& resolve_or_throw(const ConfigTree& tree, const std::string& set_line,
                                   MutationErrorKind kind) {
    SelectorResolution res = resolve_selector(tree, set_line);
    if (res.status != SelectorResolution::Status::Resolved || !res.path)
        throw MutationError(kind, "selector does not resolve uniquely: " + set_line);
    return tree.paths()[res.path->path_id];
}

const SectionRef* find_section(const std::vector<SectionRef>& sections,
                               const std::string& descriptor) {
    for (const SectionRef& ref : sections)
        if (section_descriptor(ref.labels) == descriptor) return &ref;
    return nullptr;
}

MutationRecord base_record(MutationKind kind, const KindInfo& info,
                           const std::string& source_id, std::uint64_t seed,
                           const std::string& target) {
    MutationRecord record;
    record.kind = kind;
    record.category = info.category;
    record.layer = info.layer;
    record.source_id = source_id;
    record.target = target;
    record.seed = seed;
    return record;
}

std::string serialize_edited(ConfigNode root, const std::string& source_id) {
    ConfigTree tree = ConfigTree::build(std::move(root), source_id);
    return serialize(tree, TreeFormat::Braces);
}

std::size_t diff_first_line(const std::string& diff) { return parse_diff(diff).first_line; }

std::string excerpt_around(const std::vector<std::string>& lines, std::size_t index,
                           std::size_t radius) {
    const std::size_t lo = index >= radius ? index - radius : 0;
    const std::size_t hi = std::min(lines.size(), index + radius);
    std::vector<std::string> window(lines.begin() + static_cast<std::ptrdiff_t>(lo),
                                    lines.begin() + static_cast<std::ptrdiff_t>(hi));
    return join_lines(window);
}

}  // namespace

const char* to_string(MutationKind kind) { return info_for(kind).name; }

const char* to_string(MutationCategory category) {
    switch (category) {
        case MutationCategory::Syntax: return "syntax";
        case MutationCategory::Range: return "range";
        case MutationCategory::DependencyConflict: return "dependency-conflict";
    }
    return "?";
}

const char* to_string(MutationLayer layer) {
    return layer == MutationLayer::Tree ? "tree" : "text";
}

std::optional<MutationKind> mutation_from_name(std::string_view name) {
    for (MutationKind kind : kAllMutationKinds)
        if (name == info_for(kind).name) return kind;
    return std::nullopt;
}

MutationCategory category_of(MutationKind kind) { return info_for(kind).category; }

MutationLayer layer_of(MutationKind kind) { return info_for(kind).layer; }

const std::vector<ContextType>& expected_contexts(MutationKind kind) {
    return info_for(kind).expected;
}

DetectionFocus focus_for(MutationCategory category) {
    switch (category) {
        case MutationCategory::Syntax: return DetectionFocus::syntax();
        case MutationCategory::Range: return DetectionFocus::range();
        case MutationCategory::DependencyConflict: return DetectionFocus::dependency_conflict();
    }
    return DetectionFocus::general();
}

std::string record_to_json(const MutationRecord& record) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(record.kind);
    j["category"] = to_string(record.category);
    j["layer"] = to_string(record.layer);
    j["source"] = record.source_id;
    j["target"] = record.target;
    j["mutated"] = record.mutated;
    j["param"] = record.param_label;
    j["seed"] = record.seed;
    return j.dump(2);
}

MutationRecord record_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw MutationError(MutationErrorKind::BadRecord, "record is not a JSON object");
    for (const char* key : {"kind", "source", "target", "mutated", "param"})
        if (!j.contains(key) || !j[key].is_string())
            throw MutationError(MutationErrorKind::BadRecord,
                                std::string("record lacks string field \"") + key + "\"");
    std::optional<MutationKind> kind = mutation_from_name(j["kind"].get<std::string>());
    if (!kind)
        throw MutationError(MutationErrorKind::BadRecord,
                            "unknown mutation kind \"" + j["kind"].get<std::string>() + "\"");
    MutationRecord record;
    record.kind = *kind;
    record.category = category_of(*kind);
    record.layer = layer_of(*kind);
    record.source_id = j["source"].get<std::string>();
    record.target = j["target"].get<std::string>();
    record.mutated = j["mutated"].get<std::string>();
    record.param_label = j["param"].get<std::string>();
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned())
            throw MutationError(MutationErrorKind::BadRecord, "seed must be unsigned");
        record.seed = j["seed"].get<std::uint64_t>();
    }
    return record;
}

namespace {

// ambiguous set lines cannot be resolved back, so drop every copy
void sort_and_drop_duplicates(std::vector<std::string>& out) {
    std::sort(out.begin(), out.end());
    std::vector<std::string> unique;
    for (std::size_t i = 0; i < out.size();) {
        std::size_t j = i;
        while (j < out.size() && out[j] == out[i]) ++j;
        if (j - i == 1) unique.push_back(out[i]);
        i = j;
    }
    out = std::move(unique);
}

}  // namespace

std::vector<std::string> mutation_candidates(MutationKind kind, const ConfigTree& original) {
    const KindInfo& info = info_for(kind);
    std::vector<std::string> out;

    if (kind == MutationKind::MissingBrace) {
        std::vector<SectionRef> sections;
        std::vector<std::string> labels;
        collect_sections(original.root(), labels, sections);
        for (const SectionRef& ref : sections)
            if (ref.labels.size() >= 3) out.push_back(section_descriptor(ref.labels));
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    if (kind == MutationKind::IncorrectHierarchy) {
        std::vector<std::pair<const ConfigNode*, const ConfigNode*>> params;
        collect_parameters(original.root(), params);
        for (std::size_t id = 0; id < params.size(); ++id) {
            if (!label_in(info.params, params[id].first->label)) continue;
            const ConfigNode* parent = params[id].second;
            const bool has_sibling_section =
                std::any_of(parent->children.begin(), parent->children.end(),
                            [&](const ConfigNode& sibling) {
                                return sibling.kind == NodeKind::Section;
                            });
            if (has_sibling_section) out.push_back(render_set_line(original.paths()[id]));
        }
        sort_and_drop_duplicates(out);
        return out;
    }

    for (const ConfigPath& path : original.paths()) {
        if (!label_in(info.params, path.leaf_label())) continue;
        if (!info.ancestor.empty() && !has_intermediate_label(path, info.ancestor)) continue;
        if (kind == MutationKind::DisabledSampling && path.value != "true") continue;
        if (!info.replacement.empty() && path.value == info.replacement) continue;
        out.push_back(render_set_line(path));
    }
    sort_and_drop_duplicates(out);
    return out;
}

MutationResult inject_mutation(MutationKind kind, const std::string& original_text,
                               const std::string& source_id, std::uint64_t seed,
                               const std::string& target) {
    const KindInfo& info = info_for(kind);
    auto [canonical, tree] = canonicalize(original_text, source_id);
    std::vector<std::string> candidates = mutation_candidates(kind, tree);
    if (candidates.empty())
        throw MutationError(MutationErrorKind::NoCandidate,
                            std::string("no statement in ") + source_id + " suits " +
                                info.name);
    std::string chosen;
    if (!target.empty()) {
        const std::string wanted = trim_copy(target);
        if (std::find(candidates.begin(), candidates.end(), wanted) == candidates.end())
            throw MutationError(MutationErrorKind::TargetNotFound,
                                "\"" + wanted + "\" is not a " + info.name + " candidate");
        chosen = wanted;
    } else {
        chosen = candidates[seed % candidates.size()];
    }

    MutationResult result;
    result.record = base_record(kind, info, source_id, seed, chosen);
    const std::vector<std::string> canonical_lines = split_lines(canonical);

    if (kind == MutationKind::MissingBrace) {
        std::vector<SectionRef> sections;
        std::vector<std::string> labels;
        collect_sections(tree.root(), labels, sections);
        const SectionRef* ref = find_section(sections, chosen);
        if (ref == nullptr)
            throw MutationError(MutationErrorKind::TargetNotFound,
                                "section not found: " + chosen);
        const std::size_t closer = ref->node->span.end_line;  // 1-based in canonical
        if (closer == 0 || closer > canonical_lines.size() ||
            trim_copy(canonical_lines[closer - 1]) != "}")
            throw MutationError(MutationErrorKind::ReplayMismatch,
                                "section closer not where expected");
        std::vector<std::string> mutated_lines = canonical_lines;
        mutated_lines.erase(mutated_lines.begin() + static_cast<std::ptrdiff_t>(closer - 1));
        result.mutated_text = join_lines(mutated_lines);
        result.record.mutated = line_diff(canonical_lines, mutated_lines);
        result.record.param_label = ref->labels.back();
        return result;
    }

    const ConfigPath& path = resolve_or_throw(tree, chosen, MutationErrorKind::TargetNotFound);

    if (info.layer == MutationLayer::Tree) {
        ConfigNode root = tree.root();
        std::size_t counter = 0;
        edit_parameter_value(root, counter, path.path_id, info.replacement);
        result.mutated_text = serialize_edited(std::move(root), source_id);
        ConfigPath mutated_path = path;
        mutated_path.value = info.replacement;
        result.record.mutated = render_set_line(mutated_path);
        result.record.param_label = path.leaf_label();
        return result;
    }

    ConfigNode root = tree.root();
    std::size_t counter = 0;
    if (kind == MutationKind::PolicyConflict) {
        ConfigNode conflicting;
        conflicting.kind = NodeKind::Parameter;
        conflicting.label = "community delete";
        conflicting.value = path.value;
        insert_after_parameter(root, counter, path.path_id, conflicting);
    } else if (kind == MutationKind::DisabledSampling) {
        erase_parameter(root, counter, path.path_id);
    } else {  // IncorrectHierarchy
        renest_parameter(root, counter, path.path_id);
    }
    result.mutated_text = serialize_edited(std::move(root), source_id);
    result.record.mutated = line_diff(canonical_lines, split_lines(result.mutated_text));
    result.record.param_label = path.leaf_label();
    return result;
}

MutationResult apply_record(const MutationRecord& record, const std::string& original_text) {
    auto [canonical, tree] = canonicalize(original_text, record.source_id);
    MutationResult result;
    result.record = record;

    if (record.layer == MutationLayer::Tree) {
        const ConfigPath& path =
            resolve_or_throw(tree, record.target, MutationErrorKind::ReplayMismatch);
        std::string prefix = "set ";
        for (std::size_t i = 1; i < path.labels.size(); ++i) {
            prefix += path.labels[i];
            prefix += ' ';
        }
        if (record.mutated.rfind(prefix, 0) != 0 || record.mutated.size() <= prefix.size())
            throw MutationError(MutationErrorKind::ReplayMismatch,
                                "mutated set line does not extend the target's labels");
        const std::string value = record.mutated.substr(prefix.size());
        ConfigNode root = tree.root();
        std::size_t counter = 0;
        edit_parameter_value(root, counter, path.path_id, value);
        result.mutated_text = serialize_edited(std::move(root), record.source_id);
        return result;
    }

    result.mutated_text = join_lines(apply_line_diff(split_lines(canonical), record.mutated));
    return result;
}

namespace {

ReviewTarget review_for_case(const MutationRecord& record, const ConfigTree& original_tree,
                             const ConfigTree& mutated_tree) {
    if (record.layer == MutationLayer::Tree)
        return ReviewTarget::path_line(
            record.source_id,
            resolve_or_throw(mutated_tree, record.mutated, MutationErrorKind::ReplayMismatch));

    if (record.kind == MutationKind::PolicyConflict)
        return ReviewTarget::path_line(
            record.source_id,
            resolve_or_throw(mutated_tree, record.target, MutationErrorKind::ReplayMismatch));

    if (record.kind == MutationKind::DisabledSampling) {
        const ConfigPath& gone =
            resolve_or_throw(original_tree, record.target, MutationErrorKind::ReplayMismatch);
        std::vector<std::string> parent(gone.labels.begin(), gone.labels.end() - 1);
        const ConfigPath* fallback = nullptr;
        for (const ConfigPath& q : mutated_tree.paths()) {
            if (q.labels.size() < parent.size() + 1) continue;
            if (!std::equal(parent.begin(), parent.end(), q.labels.begin())) continue;
            if (q.labels.size() == parent.size() + 1)
                return ReviewTarget::path_line(record.source_id, q);
            if (fallback == nullptr) fallback = &q;
        }
        if (fallback != nullptr) return ReviewTarget::path_line(record.source_id, *fallback);
        return ReviewTarget::path_line(record.source_id, mutated_tree.paths().front());
    }

    // IncorrectHierarchy: the statement now renders at its wrong new home
    std::set<std::string> original_lines;
    for (const ConfigPath& p : original_tree.paths())
        original_lines.insert(render_set_line(p));
    for (const ConfigPath& q : mutated_tree.paths())
        if (original_lines.count(render_set_line(q)) == 0)
            return ReviewTarget::path_line(record.source_id, q);
    throw MutationError(MutationErrorKind::ReplayMismatch,
                        "mutated tree contains no new statement");
}

}  // namespace

PreparedCase prepare_case(const MutationRecord& record, const std::string& original_text) {
    PreparedCase prepared;
    prepared.record = record;
    MutationResult replayed = apply_record(record, original_text);
    auto [canonical, original_tree] = canonicalize(original_text, record.source_id);
    prepared.canonical_text = std::move(canonical);
    prepared.mutated_text = std::move(replayed.mutated_text);

    if (record.kind == MutationKind::MissingBrace) {
        const std::size_t at = diff_first_line(record.mutated) - 1;
        prepared.review = ReviewTarget::text_excerpt(
            record.source_id, excerpt_around(split_lines(prepared.mutated_text), at, 3));
        prepared.control_review = ReviewTarget::text_excerpt(
            record.source_id, excerpt_around(split_lines(prepared.canonical_text), at, 3));
        prepared.control_snapshot.push_back(std::move(original_tree));
        return prepared;
    }

    ConfigTree mutated_tree = parse_juniper(prepared.mutated_text, record.source_id);
    prepared.review = review_for_case(record, original_tree, mutated_tree);
    prepared.control_review = ReviewTarget::path_line(
        record.source_id,
        resolve_or_throw(original_tree, record.target, MutationErrorKind::ReplayMismatch));
    prepared.snapshot.push_back(std::move(mutated_tree));
    prepared.control_snapshot.push_back(std::move(original_tree));
    return prepared;
}

PreparedCase prepare_case(MutationKind kind, const std::string& original_text,
                          const std::string& source_id, std::uint64_t seed) {
    MutationResult result = inject_mutation(kind, original_text, source_id, seed);
    return prepare_case(result.record, original_text);
}

bool parameters_match(const std::string& planted_label,
                      const std::vector<std::string>& err_parameters) {
    const std::string planted = to_lower(planted_label);
    if (planted.empty()) return false;
    for (const std::string& reported : err_parameters) {
        const std::string lowered = to_lower(reported);
        if (lowered.empty()) continue;
        if (planted.find(lowered) != std::string::npos ||
            lowered.find(planted) != std::string::npos)
            return true;
    }
    return false;
}

DetectorFn make_llm_detector(LlmProvider& provider, const ProtocolOptions& options) {
    return [&provider, options](const ReviewTarget& target, const DetectionFocus& focus,
                                std::span<const ConfigTree> snapshot, std::size_t origin_index,
                                const MutationRecord*) {
        return run_detection(provider, snapshot, origin_index, target, focus, options);
    };
}

DetectorFn make_omniscient_detector() {
    return [](const ReviewTarget&, const DetectionFocus&, std::span<const ConfigTree>,
              std::size_t, const MutationRecord* truth) {
        Verdict verdict;
        verdict.iterations = 1;
        if (truth != nullptr) {
            verdict.misconfigured = true;
            verdict.err_parameters = {truth->param_label};
            verdict.reason = "planted misconfiguration";
        } else {
            verdict.reason = "nothing planted here";
        }
        return verdict;
    };
}

DetectorFn make_always_clean_detector() {
    return [](const ReviewTarget&, const DetectionFocus&, std::span<const ConfigTree>,
              std::size_t, const MutationRecord*) {
        Verdict verdict;
        verdict.iterations = 1;
        verdict.reason = "looks fine";
        return verdict;
    };
}

EvalSummary evaluate_catalog(const DetectorFn& detector, const std::string& original_text,
                             const std::string& source_id, std::uint64_t seed) {
    EvalSummary summary;
    for (MutationKind kind : kAllMutationKinds) {
        PreparedCase prepared = prepare_case(kind, original_text, source_id, seed);
        EvalCaseResult result;
        result.record = prepared.record;

        const DetectionFocus focus = focus_for(prepared.record.category);
        try {
            Verdict verdict =
                detector(prepared.review, focus, prepared.snapshot, 0, &prepared.record);
            result.detected = verdict.misconfigured &&
                              parameters_match(prepared.record.param_label,
                                               verdict.err_parameters);
            result.detail = verdict.reason;
        } catch (const std::exception& error) {
            result.error = true;
            result.detail = error.what();
        }

        bool clean = true;
        for (MutationCategory category :
             {MutationCategory::Syntax, MutationCategory::Range,
              MutationCategory::DependencyConflict}) {
            try {
                Verdict verdict = detector(prepared.control_review, focus_for(category),
                                           prepared.control_snapshot, 0, nullptr);
                if (verdict.misconfigured) clean = false;
            } catch (const std::exception&) {
                result.control_error = true;
                clean = false;
            }
        }
        result.control_clean = clean;

        switch (prepared.record.category) {
            case MutationCategory::Syntax:
                ++summary.total_syntax;
                if (result.detected) ++summary.detected_syntax;
                break;
            case MutationCategory::Range:
                ++summary.total_range;
                if (result.detected) ++summary.detected_range;
                break;
            case MutationCategory::DependencyConflict:
                ++summary.total_dependency;
                if (result.detected) ++summary.detected_dependency;
                break;
        }
        ++summary.controls_total;
        if (clean) ++summary.controls_clean;
        summary.cases.push_back(std::move(result));
    }
    return summary;
}

std::string eval_summary_to_json(const EvalSummary& summary) {
    nlohmann::ordered_json cases = nlohmann::ordered_json::array();
    for (const EvalCaseResult& result : summary.cases) {
        nlohmann::ordered_json row;
        row["kind"] = to_string(result.record.kind);
        row["category"] = to_string(result.record.category);
        row["target"] = result.record.target;
        row["param"] = result.record.param_label;
        row["detected"] = result.detected;
        row["error"] = result.error;
        row["control_clean"] = result.control_clean;
        row["detail"] = result.detail;
        cases.push_back(std::move(row));
    }
    nlohmann::ordered_json j;
    j["cases"] = std::move(cases);
    j["summary"] = {
        {"syntax", {{"detected", summary.detected_syntax}, {"total", summary.total_syntax}}},
        {"range", {{"detected", summary.detected_range}, {"total", summary.total_range}}},
        {"dependency-conflict",
         {{"detected", summary.detected_dependency}, {"total", summary.total_dependency}}},
        {"controls", {{"clean", summary.controls_clean}, {"total", summary.controls_total}}},
    };
    return j.dump(2);
}

std::string eval_summary_to_markdown(const EvalSummary& summary) {
    std::string out;
    out += "| kind | category | target | detected | control clean |\n";
    out += "| --- | --- | --- | --- | --- |\n";
    for (const EvalCaseResult& result : summary.cases) {
        out += "| ";
        out += to_string(result.record.kind);
        out += " | ";
        out += to_string(result.record.category);
        out += " | `";
        out += result.record.target;
        out += "` | ";
        out += result.error ? "error" : (result.detected ? "yes" : "no");
        out += " | ";
        out += result.control_clean ? "yes" : "no";
        out += " |\n";
    }
    out += "\nsyntax " + std::to_string(summary.detected_syntax) + "/" +
           std::to_string(summary.total_syntax);
    out += ", range " + std::to_string(summary.detected_range) + "/" +
           std::to_string(summary.total_range);
    out += ", dependency-conflict " + std::to_string(summary.detected_dependency) + "/" +
           std::to_string(summary.total_dependency);
    out += ", controls clean " + std::to_string(summary.controls_clean) + "/" +
           std::to_string(summary.controls_total) + "\n";
    return out;
}

}  // namespace conflens
