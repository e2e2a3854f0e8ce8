#include "conflens/value_classifier.hpp"

#include <set>

#include "json.hpp"

namespace conflens {

bool value_exists_as_intermediate(const ConfigTree& tree, std::string_view value) {
    if (value.empty()) return false;
    return tree.has_intermediate_matching(value);
}

ClassificationTable build_classification_table(std::span<const ConfigTree> scope) {
    std::map<std::string, std::set<std::string>> values_by_parameter;
    for (const ConfigTree& tree : scope)
        for (const ConfigPath& p : tree.paths())
            values_by_parameter[p.leaf_label()].insert(p.value);

    ClassificationTable table;
    for (auto& [parameter, values] : values_by_parameter) {
        ClassificationRow row;
        row.n = values.size();
        for (const std::string& v : values) {
            bool user = false;
            for (const ConfigTree& tree : scope) {
                if (value_exists_as_intermediate(tree, v)) {
                    user = true;
                    break;
                }
            }
            row.evidence.emplace(v, user);
            if (user) ++row.user_votes;
        }
        row.pre_votes = row.n - row.user_votes;
        // Strict majority for UserDefined; a tie keeps the parameter
        // PreDefined so reference mining stays conservative.
        row.cls = 2 * row.user_votes > row.n ? ValueClass::UserDefined : ValueClass::PreDefined;
        table.rows_.emplace(parameter, std::move(row));
    }
    return table;
}

ClassificationTable build_classification_table(const ConfigTree& tree) {
    return build_classification_table(std::span<const ConfigTree>(&tree, 1));
}

ClassificationTable::Result ClassificationTable::classify(const std::string& parameter,
                                                          const std::string& /*value*/) const {
    auto it = rows_.find(parameter);
    if (it == rows_.end()) return {ValueClass::PreDefined, true};
    return {it->second.cls, false};
}

const char* to_string(ValueClass cls) {
    return cls == ValueClass::UserDefined ? "UserDefined" : "PreDefined";
}

std::string ClassificationTable::to_json_string() const {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& [parameter, row] : rows_) {
        nlohmann::ordered_json obj;
        obj["parameter"] = parameter;
        obj["class"] = to_string(row.cls);
        obj["n"] = row.n;
        obj["user_votes"] = row.user_votes;
        obj["pre_votes"] = row.pre_votes;
        arr.push_back(std::move(obj));
    }
    return arr.dump(2) + "\n";
}

}  // namespace conflens
