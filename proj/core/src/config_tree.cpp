#include "conflens/config_tree.hpp"

#include <algorithm>
#include <cctype>
#include <utility>

#include "json.hpp"

namespace conflens {

namespace {

constexpr char kFieldSep = '\x1F';
constexpr char kValueSep = '\x1E';

std::string line_key(const ConfigPath& p) {
    std::string key;
    for (std::size_t i = 1; i < p.labels.size(); ++i) {
        if (i > 1) key += kFieldSep;
        key += p.labels[i];
    }
    key += kValueSep;
    key += p.value;
    return key;
}

// ---------------------------------------------------------------------------
// Brace-text lexer

struct Token {
    enum class Kind { Word, LBrace, RBrace, Semi, End };
    Kind kind = Kind::End;
    std::string text;
    int line = 0;
};

class Lexer {
public:
    explicit Lexer(std::string_view text) : text_(text) {}

    bool saw_any_token() const { return saw_any_token_; }
    int line() const { return line_; }

    Token next() {
        skip_blanks();
        if (pos_ >= text_.size()) return {Token::Kind::End, "", line_};
        saw_any_token_ = true;
        char c = text_[pos_];
        if (c == '{') return single(Token::Kind::LBrace);
        if (c == '}') return single(Token::Kind::RBrace);
        if (c == ';') return single(Token::Kind::Semi);
        if (c == '"') return quoted_word();
        return bare_word();
    }

private:
    Token single(Token::Kind kind) {
        ++pos_;
        return {kind, "", line_};
    }

    void skip_blanks() {
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == '\n') {
                ++line_;
                ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '*') {
                pos_ += 2;
                // An unterminated block comment swallows the rest of the
                // input; any resulting imbalance is reported by the parser.
                while (pos_ < text_.size()) {
                    if (text_[pos_] == '\n') ++line_;
                    if (text_[pos_] == '*' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '/') {
                        pos_ += 2;
                        break;
                    }
                    ++pos_;
                }
            } else {
                return;
            }
        }
    }

    Token quoted_word() {
        int start_line = line_;
        ++pos_;  // opening quote
        std::string out;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == '\\' && pos_ + 1 < text_.size() &&
                (text_[pos_ + 1] == '"' || text_[pos_ + 1] == '\\')) {
                out += text_[pos_ + 1];
                pos_ += 2;
                continue;
            }
            if (c == '"') {
                ++pos_;
                return {Token::Kind::Word, std::move(out), start_line};
            }
            if (c == '\n') {
                throw ParseError(ParseErrorKind::StatementOutsideRoot, start_line,
                                 "newline inside quoted string started on line " +
                                     std::to_string(start_line));
            }
            out += c;
            ++pos_;
        }
        throw ParseError(ParseErrorKind::StatementOutsideRoot, start_line,
                         "unterminated quoted string started on line " + std::to_string(start_line));
    }

    Token bare_word() {
        int start_line = line_;
        std::string out;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (std::isspace(static_cast<unsigned char>(c)) || c == '{' || c == '}' || c == ';' ||
                c == '#' || c == '"')
                break;
            if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '*') break;
            out += c;
            ++pos_;
        }
        return {Token::Kind::Word, std::move(out), start_line};
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    bool saw_any_token_ = false;
};

std::string join_words(const std::vector<std::string>& words, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) out += ' ';
        out += words[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Brace-text parser

class Parser {
public:
    explicit Parser(std::string_view text) : lexer_(text) {}

    ConfigNode parse() {
        tok_ = lexer_.next();
        if (tok_.kind == Token::Kind::End && !lexer_.saw_any_token())
            throw ParseError(ParseErrorKind::EmptyInput, 1, "input contains no statements");
        ConfigNode root;
        root.label = "<root>";
        root.kind = NodeKind::Section;
        parse_items(root, /*is_root=*/true, 1);
        root.span = {1, lexer_.line()};
        return root;
    }

private:
    void parse_items(ConfigNode& parent, bool is_root, int open_line) {
        for (;;) {
            switch (tok_.kind) {
                case Token::Kind::End:
                    if (is_root) return;
                    throw ParseError(ParseErrorKind::UnbalancedBraces, open_line,
                                     "section opened on line " + std::to_string(open_line) +
                                         " is never closed");
                case Token::Kind::RBrace:
                    if (is_root)
                        throw ParseError(ParseErrorKind::UnbalancedBraces, tok_.line,
                                         "unmatched '}' on line " + std::to_string(tok_.line));
                    return;  // caller consumes the brace
                case Token::Kind::Semi:
                    throw ParseError(ParseErrorKind::StatementOutsideRoot, tok_.line,
                                     "empty statement on line " + std::to_string(tok_.line));
                case Token::Kind::LBrace:
                    throw ParseError(ParseErrorKind::UnbalancedBraces, tok_.line,
                                     "'{' without a section header on line " +
                                         std::to_string(tok_.line));
                case Token::Kind::Word:
                    parse_statement(parent);
                    break;
            }
        }
    }

    void parse_statement(ConfigNode& parent) {
        std::vector<std::string> words;
        int first_line = tok_.line;
        while (tok_.kind == Token::Kind::Word) {
            words.push_back(std::move(tok_.text));
            tok_ = lexer_.next();
        }
        if (tok_.kind == Token::Kind::Semi) {
            ConfigNode p;
            p.kind = NodeKind::Parameter;
            if (words.size() == 1) {
                p.label = std::move(words[0]);
                p.value = "true";
            } else {
                p.label = join_words(words, 0, words.size() - 1);
                p.value = std::move(words.back());
            }
            if (p.label.empty())
                throw ParseError(ParseErrorKind::StatementOutsideRoot, first_line,
                                 "statement with an empty label on line " +
                                     std::to_string(first_line));
            p.span = {first_line, tok_.line};
            parent.children.push_back(std::move(p));
            tok_ = lexer_.next();
            return;
        }
        if (tok_.kind == Token::Kind::LBrace) {
            ConfigNode s;
            s.kind = NodeKind::Section;
            s.label = join_words(words, 0, words.size());
            if (s.label.empty())
                throw ParseError(ParseErrorKind::StatementOutsideRoot, first_line,
                                 "section with an empty label on line " + std::to_string(first_line));
            int brace_line = tok_.line;
            tok_ = lexer_.next();
            parse_items(s, /*is_root=*/false, brace_line);
            s.span = {first_line, tok_.line};
            parent.children.push_back(std::move(s));
            tok_ = lexer_.next();  // consume '}'
            return;
        }
        if (tok_.kind == Token::Kind::End)
            throw ParseError(ParseErrorKind::StatementOutsideRoot, first_line,
                             "statement starting on line " + std::to_string(first_line) +
                                 " is not terminated before end of input");
        throw ParseError(ParseErrorKind::StatementOutsideRoot, tok_.line,
                         "statement is not terminated before '}' on line " +
                             std::to_string(tok_.line));
    }

    Lexer lexer_;
    Token tok_;
};

// ---------------------------------------------------------------------------
// Brace-text emission

bool needs_quoting(const std::string& token) {
    if (token.empty()) return true;
    for (char c : token) {
        if (c == ' ' || c == '\t' || c == '{' || c == '}' || c == ';' || c == '#' || c == '"')
            return true;
    }
    return token.find("/*") != std::string::npos || token.find("*/") != std::string::npos;
}

std::string emit_token(const std::string& token) {
    if (!needs_quoting(token)) return token;
    std::string out = "\"";
    for (char c : token) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    out += '"';
    return out;
}

// Labels are stored as single-space joins of their header tokens. Splitting
// on single spaces reproduces an equal label string on reparse regardless of
// the original token boundaries; a label with leading, trailing or doubled
// spaces can only have come from one quoted token, so it is emitted as one.
// True when emit_label() renders `label` as one token: either it has no
// spaces, or an empty split segment forces whole-label quoting below.
bool label_emits_single_token(const std::string& label) {
    if (label.find(' ') == std::string::npos) return true;
    return label.front() == ' ' || label.back() == ' ' ||
           label.find("  ") != std::string::npos;
}

std::string emit_label(const std::string& label) {
    std::vector<std::string> segments;
    std::string cur;
    for (char c : label) {
        if (c == ' ') {
            segments.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    segments.push_back(cur);
    for (const auto& seg : segments) {
        if (seg.empty()) return emit_token(label);
    }
    std::string out;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (i > 0) out += ' ';
        out += emit_token(segments[i]);
    }
    return out;
}

void emit_braces(const ConfigNode& section, int depth, std::string& out) {
    const std::string indent(static_cast<std::size_t>(depth) * 4, ' ');
    for (const ConfigNode& child : section.children) {
        out += indent;
        if (child.kind == NodeKind::Parameter) {
            // The bare flag form reparses as a one-word statement, so it is
            // only usable when the label emits as a single token; otherwise
            // `a b;` would read back as label "a" with value "b".
            out += emit_label(child.label);
            if (child.value != "true" || !label_emits_single_token(child.label)) {
                out += ' ';
                out += emit_token(child.value);
            }
            out += ";\n";
        } else {
            out += emit_label(child.label);
            out += " {\n";
            emit_braces(child, depth + 1, out);
            out += indent;
            out += "}\n";
        }
    }
}

// ---------------------------------------------------------------------------
// JSON form

using ojson = nlohmann::ordered_json;

std::string scalar_to_string(const ojson& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();  // numbers
}

void check_json_key(const std::string& key) {
    if (key.empty())
        throw ParseError(ParseErrorKind::MalformedJson, 0, "empty object key");
    if (key.find('\n') != std::string::npos)
        throw ParseError(ParseErrorKind::MalformedJson, 0, "object key contains a newline");
}

void convert_json_object(const ojson& obj, ConfigNode& section) {
    for (const auto& [key, val] : obj.items()) {
        check_json_key(key);
        if (val.is_object()) {
            ConfigNode s;
            s.kind = NodeKind::Section;
            s.label = key;
            convert_json_object(val, s);
            section.children.push_back(std::move(s));
        } else if (val.is_string() || val.is_boolean() || val.is_number()) {
            ConfigNode p;
            p.kind = NodeKind::Parameter;
            p.label = key;
            p.value = scalar_to_string(val);
            if (p.value.find('\n') != std::string::npos)
                throw ParseError(ParseErrorKind::MalformedJson, 0,
                                 "value of \"" + key + "\" contains a newline");
            section.children.push_back(std::move(p));
        } else if (val.is_array()) {
            if (val.empty())
                throw ParseError(ParseErrorKind::MalformedJson, 0,
                                 "empty array under \"" + key + "\"");
            for (const auto& elem : val) {
                if (!(elem.is_string() || elem.is_boolean() || elem.is_number()))
                    throw ParseError(ParseErrorKind::MalformedJson, 0,
                                     "array under \"" + key + "\" holds a non-scalar element");
                ConfigNode p;
                p.kind = NodeKind::Parameter;
                p.label = key;
                p.value = scalar_to_string(elem);
                if (p.value.find('\n') != std::string::npos)
                    throw ParseError(ParseErrorKind::MalformedJson, 0,
                                     "value of \"" + key + "\" contains a newline");
                section.children.push_back(std::move(p));
            }
        } else {
            throw ParseError(ParseErrorKind::MalformedJson, 0,
                             "value of \"" + key + "\" is not representable (null)");
        }
    }
}

ojson to_json_object(const ConfigNode& section) {
    ojson obj = ojson::object();
    const auto& ch = section.children;
    std::size_t i = 0;
    while (i < ch.size()) {
        const ConfigNode& c = ch[i];
        if (obj.contains(c.label))
            throw SerializeError(SerializeErrorKind::UnrepresentableTree,
                                 "label \"" + c.label +
                                     "\" repeats non-adjacently among siblings; the JSON form "
                                     "cannot hold it");
        if (c.kind == NodeKind::Section) {
            obj[c.label] = to_json_object(c);
            ++i;
            continue;
        }
        std::size_t run_end = i + 1;
        while (run_end < ch.size() && ch[run_end].kind == NodeKind::Parameter &&
               ch[run_end].label == c.label)
            ++run_end;
        if (run_end - i == 1) {
            obj[c.label] = c.value;
        } else {
            ojson arr = ojson::array();
            for (std::size_t j = i; j < run_end; ++j) arr.push_back(ch[j].value);
            obj[c.label] = std::move(arr);
        }
        i = run_end;
    }
    return obj;
}

void validate_node(const ConfigNode& n) {
    if (n.label.empty()) throw std::invalid_argument("config node with an empty label");
    if (n.label.find('\n') != std::string::npos)
        throw std::invalid_argument("config node label contains a newline");
    if (n.kind == NodeKind::Parameter) {
        if (!n.children.empty())
            throw std::invalid_argument("parameter node \"" + n.label + "\" has children");
        if (n.value.find('\n') != std::string::npos)
            throw std::invalid_argument("parameter value of \"" + n.label + "\" contains a newline");
    } else if (!n.value.empty()) {
        throw std::invalid_argument("section node \"" + n.label + "\" carries a value");
    }
    for (const ConfigNode& c : n.children) validate_node(c);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConfigTree

ConfigTree ConfigTree::build(ConfigNode root, std::string source_id) {
    if (root.label != "<root>" || root.kind != NodeKind::Section)
        throw std::invalid_argument("root must be a section labelled \"<root>\"");
    validate_node(root);
    ConfigTree tree;
    tree.root_ = std::move(root);
    tree.source_id_ = std::move(source_id);
    tree.trie_.emplace_back();
    std::vector<std::string> stack{tree.root_.label};
    tree.index_subtree(tree.root_, stack);
    return tree;
}

void ConfigTree::index_subtree(const ConfigNode& node, std::vector<std::string>& stack) {
    const std::size_t ord = section_path_range_.size();
    section_path_range_.emplace_back(paths_.size(), paths_.size());
    if (stack.size() > 1) {
        label_sections_[node.label].push_back(ord);
        std::unordered_set<std::string> seen;
        for (auto& token : split_ws(node.label)) {
            if (seen.insert(token).second) token_sections_[token].push_back(ord);
        }
    }
    for (const ConfigNode& child : node.children) {
        if (child.kind == NodeKind::Parameter) {
            ConfigPath p;
            p.labels = stack;
            p.labels.push_back(child.label);
            p.value = child.value;
            p.path_id = paths_.size();

            std::size_t t = 0;
            trie_[t].path_ids.push_back(p.path_id);
            for (std::size_t i = 1; i < p.labels.size(); ++i) {
                std::size_t next_ord = trie_.size();
                auto it = trie_[t].children.find(p.labels[i]);
                if (it == trie_[t].children.end()) {
                    trie_[t].children.emplace(p.labels[i], next_ord);
                    trie_.emplace_back();
                    t = next_ord;
                } else {
                    t = it->second;
                }
                trie_[t].path_ids.push_back(p.path_id);
            }

            category_index_[p.labels[1] + kFieldSep + p.labels.back()].push_back(p.path_id);
            exact_line_keys_.insert(line_key(p));
            set_lines_.push_back(render_set_line(p));
            paths_.push_back(std::move(p));
        } else {
            stack.push_back(child.label);
            index_subtree(child, stack);
            stack.pop_back();
        }
    }
    section_path_range_[ord].second = paths_.size();
}

bool ConfigTree::has_intermediate_matching(std::string_view value) const {
    const std::string key(value);
    return label_sections_.count(key) > 0 || token_sections_.count(key) > 0;
}

std::vector<std::size_t> ConfigTree::paths_under_sections_matching(std::string_view value) const {
    const std::string key(value);
    std::vector<std::size_t> ords;
    if (auto it = label_sections_.find(key); it != label_sections_.end())
        ords.insert(ords.end(), it->second.begin(), it->second.end());
    if (auto it = token_sections_.find(key); it != token_sections_.end())
        ords.insert(ords.end(), it->second.begin(), it->second.end());
    std::sort(ords.begin(), ords.end());
    ords.erase(std::unique(ords.begin(), ords.end()), ords.end());

    std::vector<std::size_t> ids;
    for (std::size_t ord : ords) {
        const auto [first, end] = section_path_range_[ord];
        for (std::size_t id = first; id < end; ++id) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

const std::vector<std::size_t>* ConfigTree::paths_with_prefix(const std::vector<std::string>& labels,
                                                              std::size_t m) const {
    if (m == 0 || labels.size() < m || labels[0] != root_.label) return nullptr;
    std::size_t t = 0;
    for (std::size_t i = 1; i < m; ++i) {
        auto it = trie_[t].children.find(labels[i]);
        if (it == trie_[t].children.end()) return nullptr;
        t = it->second;
    }
    return &trie_[t].path_ids;
}

const std::vector<std::size_t>* ConfigTree::paths_in_category(const std::string& category,
                                                              const std::string& leaf) const {
    auto it = category_index_.find(category + kFieldSep + leaf);
    if (it == category_index_.end()) return nullptr;
    return &it->second;
}

bool ConfigTree::contains_exact_line(const ConfigPath& p) const {
    return exact_line_keys_.count(line_key(p)) > 0;
}

// ---------------------------------------------------------------------------
// Free functions

ConfigTree parse_juniper(std::string_view text, std::string source_id) {
    Parser parser(text);
    return ConfigTree::build(parser.parse(), std::move(source_id));
}

ConfigTree parse_json_tree(std::string_view json_text, std::string source_id) {
    ojson j;
    try {
        j = ojson::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        int line = 1;
        const std::size_t limit = std::min<std::size_t>(e.byte, json_text.size());
        for (std::size_t i = 0; i < limit; ++i)
            if (json_text[i] == '\n') ++line;
        throw ParseError(ParseErrorKind::MalformedJson, line, e.what());
    }
    if (!j.is_object())
        throw ParseError(ParseErrorKind::MalformedJson, 1, "top-level JSON value must be an object");
    ConfigNode root;
    root.label = "<root>";
    root.kind = NodeKind::Section;
    convert_json_object(j, root);
    return ConfigTree::build(std::move(root), std::move(source_id));
}

std::string serialize(const ConfigTree& tree, TreeFormat format) {
    switch (format) {
        case TreeFormat::Braces: {
            std::string out;
            emit_braces(tree.root(), 0, out);
            return out;
        }
        case TreeFormat::Json:
            return to_json_object(tree.root()).dump(2) + "\n";
        case TreeFormat::SetLines: {
            std::string out;
            for (const auto& line : tree.set_lines()) {
                out += line;
                out += '\n';
            }
            return out;
        }
    }
    return {};
}

std::string render_set_line(const ConfigPath& p) {
    std::string out = "set";
    for (std::size_t i = 1; i < p.labels.size(); ++i) {
        out += ' ';
        out += p.labels[i];
    }
    if (!p.value.empty()) {
        out += ' ';
        out += p.value;
    }
    return out;
}

bool structurally_equal(const ConfigNode& a, const ConfigNode& b) {
    if (a.label != b.label || a.kind != b.kind || a.value != b.value) return false;
    if (a.children.size() != b.children.size()) return false;
    for (std::size_t i = 0; i < a.children.size(); ++i)
        if (!structurally_equal(a.children[i], b.children[i])) return false;
    return true;
}

SelectorResolution resolve_selector(const ConfigTree& tree, std::string_view set_line) {
    std::size_t begin = set_line.find_first_not_of(" \t\r\n");
    std::size_t end = set_line.find_last_not_of(" \t\r\n");
    std::string needle = begin == std::string_view::npos
                             ? std::string()
                             : std::string(set_line.substr(begin, end - begin + 1));

    SelectorResolution res;
    const auto& lines = tree.set_lines();
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (lines[i] == needle) res.candidates.push_back(i);

    if (res.candidates.empty()) {
        res.status = SelectorResolution::Status::NotFound;
    } else if (res.candidates.size() == 1) {
        res.status = SelectorResolution::Status::Resolved;
        res.path = tree.paths()[res.candidates.front()];
    } else {
        res.status = SelectorResolution::Status::Ambiguous;
    }
    return res;
}

}  // namespace conflens
