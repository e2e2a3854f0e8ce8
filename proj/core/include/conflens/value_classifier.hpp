#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "conflens/config_tree.hpp"

namespace conflens {

// Whether a parameter's values are operator-chosen names (UserDefined) or
// vendor keywords/numbers (PreDefined). Decided per parameter by majority
// vote over its unique values: a value votes UserDefined when it occurs as a
// non-root section label somewhere in the scope, ties go to PreDefined.

enum class ValueClass { PreDefined, UserDefined };

struct ClassificationRow {
    ValueClass cls = ValueClass::PreDefined;
    std::size_t n = 0;           // unique values observed for the parameter
    std::size_t user_votes = 0;  // values that exist as section labels
    std::size_t pre_votes = 0;   // n - user_votes
    std::map<std::string, bool> evidence;  // unique value -> voted UserDefined
};

class ClassificationTable {
public:
    struct Result {
        ValueClass cls = ValueClass::PreDefined;
        bool unknown_parameter = false;
    };

    // Parameters never seen at build time classify PreDefined with the
    // unknown flag set. The value argument does not affect the class (the
    // vote is per parameter); it is part of the call shape so callers can
    // ask about a concrete line.
    Result classify(const std::string& parameter, const std::string& value) const;

    const std::map<std::string, ClassificationRow>& rows() const { return rows_; }

    // Deterministic JSON array of rows, sorted by parameter label.
    std::string to_json_string() const;

private:
    friend ClassificationTable build_classification_table(std::span<const ConfigTree>);
    std::map<std::string, ClassificationRow> rows_;
};

// True when `value` matches some non-root section label of the tree, either
// exactly or as one whitespace-separated token of the label.
bool value_exists_as_intermediate(const ConfigTree& tree, std::string_view value);

// Votes over the parameters and unique values of every tree in the scope;
// existence evidence is also pooled (a match in any tree counts).
ClassificationTable build_classification_table(std::span<const ConfigTree> scope);
ClassificationTable build_classification_table(const ConfigTree& tree);

const char* to_string(ValueClass cls);

}  // namespace conflens
