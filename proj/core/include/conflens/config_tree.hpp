#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace conflens {

// A router configuration is an ordered tree. Sections carry a label and
// children; parameters carry a label and a value and sit at the leaves.
// The root is a synthetic section labelled "<root>".

enum class NodeKind { Section, Parameter };

struct SourceSpan {
    int begin_line = 0;  // 1-based; (0,0) for trees not built from brace text
    int end_line = 0;
};

struct ConfigNode {
    std::string label;
    NodeKind kind = NodeKind::Section;
    std::string value;                 // parameters only
    std::vector<ConfigNode> children;  // sections only
    SourceSpan span;
};

// One root-to-leaf path: labels[0] is always "<root>", labels.back() is the
// parameter label, value is the leaf's value. path_id is the document-order
// index of the leaf within its tree.
struct ConfigPath {
    std::vector<std::string> labels;
    std::string value;
    std::size_t path_id = 0;

    std::size_t depth() const { return labels.size(); }
    const std::string& leaf_label() const { return labels.back(); }
};

enum class ParseErrorKind {
    UnbalancedBraces,
    StatementOutsideRoot,
    EmptyInput,
    MalformedJson,
};

class ParseError : public std::runtime_error {
public:
    ParseError(ParseErrorKind kind, int line, const std::string& message)
        : std::runtime_error(message), kind_(kind), line_(line) {}

    ParseErrorKind kind() const { return kind_; }
    int line() const { return line_; }

private:
    ParseErrorKind kind_;
    int line_;
};

enum class SerializeErrorKind { UnrepresentableTree };

class SerializeError : public std::runtime_error {
public:
    SerializeError(SerializeErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    SerializeErrorKind kind() const { return kind_; }

private:
    SerializeErrorKind kind_;
};

enum class TreeFormat { Braces, Json, SetLines };

// Immutable parsed configuration plus the lookup indexes the miners need.
// Construction validates the tree invariants and never mutates afterwards,
// so a ConfigTree may be shared freely across threads.
class ConfigTree {
public:
    // Validates invariants (root labelled "<root>", labels non-empty and
    // newline-free, parameters childless, sections valueless) and builds all
    // indexes. Throws std::invalid_argument on violation.
    static ConfigTree build(ConfigNode root, std::string source_id);

    const ConfigNode& root() const { return root_; }
    const std::string& source_id() const { return source_id_; }

    // Every root-to-leaf path in document order; paths()[i].path_id == i.
    const std::vector<ConfigPath>& paths() const { return paths_; }

    // Rendered set-line for each path, same order as paths().
    const std::vector<std::string>& set_lines() const { return set_lines_; }

    // True when some non-root section's label equals `value` exactly or
    // contains it as a whitespace-separated token. Empty sections count.
    bool has_intermediate_matching(std::string_view value) const;

    // path_ids of every path passing through a non-root section whose label
    // matches `value` (exact or token match). Sorted ascending, deduped.
    std::vector<std::size_t> paths_under_sections_matching(std::string_view value) const;

    // path_ids of paths whose first `m` labels (counting "<root>") equal
    // labels[0..m-1]. Document order. Null when no path has that prefix.
    const std::vector<std::size_t>* paths_with_prefix(const std::vector<std::string>& labels,
                                                      std::size_t m) const;

    // path_ids sharing top-level section labels[1] and parameter label leaf.
    // Document order. Null when none.
    const std::vector<std::size_t>* paths_in_category(const std::string& category,
                                                      const std::string& leaf) const;

    // True when this tree contains a path with identical labels[1..] and
    // value (exact match, not set-line rendering, which can be ambiguous).
    bool contains_exact_line(const ConfigPath& p) const;

private:
    ConfigTree() = default;

    struct TrieNode {
        std::unordered_map<std::string, std::size_t> children;
        std::vector<std::size_t> path_ids;  // document order
    };

    void index_subtree(const ConfigNode& node, std::vector<std::string>& stack);

    ConfigNode root_;
    std::string source_id_;
    std::vector<ConfigPath> paths_;
    std::vector<std::string> set_lines_;

    std::vector<TrieNode> trie_;  // trie_[0] covers the prefix {"<root>"}
    std::unordered_map<std::string, std::vector<std::size_t>> label_sections_;  // exact label -> node ords
    std::unordered_map<std::string, std::vector<std::size_t>> token_sections_;  // label token -> node ords
    std::vector<std::pair<std::size_t, std::size_t>> section_path_range_;       // node ord -> [first,end) path_id
    std::unordered_map<std::string, std::vector<std::size_t>> category_index_;  // category\x1Fleaf -> path_ids
    std::unordered_set<std::string> exact_line_keys_;
};

// Parses Juniper-style brace text. Grammar: `label... value;` statements,
// `label... {` sections, '#' line comments, '/* */' block comments, quoted
// tokens with \" and \\ escapes. Throws ParseError.
ConfigTree parse_juniper(std::string_view text, std::string source_id);

// Parses the JSON tree form produced by serialize(..., TreeFormat::Json).
// Objects become sections, strings/numbers/booleans become parameters, and
// arrays of scalars become runs of same-labelled sibling parameters.
ConfigTree parse_json_tree(std::string_view json_text, std::string source_id);

// Braces: canonical 4-space-indented Juniper text (value "true" renders as a
//   bare flag, tokens are re-quoted when they contain specials).
// Json: ordered object form; adjacent same-labelled parameter runs become
//   arrays; other duplicate labels are unrepresentable -> SerializeError.
// SetLines: one "set ..." line per path, document order.
std::string serialize(const ConfigTree& tree, TreeFormat format);

// "set " + labels[1..] joined by spaces + " " + value (value omitted when
// empty). Deterministic; used verbatim in prompts and reports.
std::string render_set_line(const ConfigPath& p);

// Label/kind/value/children equality, ignoring source spans.
bool structurally_equal(const ConfigNode& a, const ConfigNode& b);

struct SelectorResolution {
    enum class Status { Resolved, NotFound, Ambiguous };
    Status status = Status::NotFound;
    std::optional<ConfigPath> path;        // set when Resolved
    std::vector<std::size_t> candidates;   // all matching path_ids
};

// Finds the unique path whose rendered set-line equals `set_line` byte for
// byte (leading/trailing whitespace on the selector is trimmed first).
SelectorResolution resolve_selector(const ConfigTree& tree, std::string_view set_line);

}  // namespace conflens
