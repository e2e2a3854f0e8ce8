#include <vector>

#include "conflens/value_classifier.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"

using namespace conflens;

TEST_CASE("numeric-only parameters classify PreDefined") {
    ConfigTree t = parse_juniper(fixtures::read("classify_examples.conf"), "cls");
    ClassificationTable table = build_classification_table(t);
    const auto& row = table.rows().at("Timeout");
    CHECK(row.cls == ValueClass::PreDefined);
    CHECK(row.n == 3);
    CHECK(row.user_votes == 0);
    CHECK(row.pre_votes == 3);
}

TEST_CASE("a majority of section-named values classifies UserDefined") {
    ConfigTree t = parse_juniper(fixtures::read("classify_examples.conf"), "cls");
    ClassificationTable table = build_classification_table(t);
    const auto& row = table.rows().at("ImportPolicy");
    CHECK(row.cls == ValueClass::UserDefined);
    CHECK(row.n == 3);
    CHECK(row.user_votes == 2);  // PolicyA, PolicyB; "1000" names no section
    CHECK(row.pre_votes == 1);
    CHECK(row.evidence.at("PolicyA"));
    CHECK(row.evidence.at("PolicyB"));
    CHECK_FALSE(row.evidence.at("1000"));
}

TEST_CASE("a tie classifies PreDefined") {
    ConfigTree t = parse_juniper(fixtures::read("classify_examples.conf"), "cls");
    ClassificationTable table = build_classification_table(t);
    const auto& row = table.rows().at("TiePar");
    CHECK(row.n == 2);
    CHECK(row.user_votes == 1);
    CHECK(row.cls == ValueClass::PreDefined);
}

TEST_CASE("duplicate values vote once") {
    ConfigTree t = parse_juniper(
        "a { use X; } b { use X; } c { use 7; } X { y 1; }", "dup");
    ClassificationTable table = build_classification_table(t);
    const auto& row = table.rows().at("use");
    CHECK(row.n == 2);  // {X, 7}, not three occurrences
    CHECK(row.user_votes == 1);
    CHECK(row.cls == ValueClass::PreDefined);  // 2*1 == 2, tie
}

TEST_CASE("unknown parameters classify PreDefined with the flag set") {
    ConfigTree t = parse_juniper("a { b 1; }", "u");
    ClassificationTable table = build_classification_table(t);
    auto known = table.classify("b", "1");
    CHECK(known.cls == ValueClass::PreDefined);
    CHECK_FALSE(known.unknown_parameter);
    auto unknown = table.classify("never-seen", "x");
    CHECK(unknown.cls == ValueClass::PreDefined);
    CHECK(unknown.unknown_parameter);
}

TEST_CASE("existence matches labels exactly or by token, including empty sections") {
    ConfigTree t = parse_juniper("family inet { mtu 1; } empty-grp { } plain { x 1; }", "e");
    CHECK(value_exists_as_intermediate(t, "family inet"));
    CHECK(value_exists_as_intermediate(t, "inet"));
    CHECK(value_exists_as_intermediate(t, "empty-grp"));
    CHECK_FALSE(value_exists_as_intermediate(t, "mtu"));  // parameter labels don't count
    CHECK_FALSE(value_exists_as_intermediate(t, ""));
}

TEST_CASE("pooled tables merge values and existence evidence across trees") {
    ConfigTree a = parse_juniper("r { use GroupA; }", "a");
    ConfigTree b = parse_juniper("GroupA { member 1; } r { use GroupB; }", "b");
    std::vector<ConfigTree> scope;
    scope.push_back(a);
    scope.push_back(b);
    ClassificationTable pooled = build_classification_table(scope);
    const auto& row = pooled.rows().at("use");
    // GroupA exists in tree b even though tree a uses it; GroupB exists
    // nowhere. One vote each way, tie -> PreDefined.
    CHECK(row.n == 2);
    CHECK(row.user_votes == 1);
    CHECK(row.cls == ValueClass::PreDefined);

    // Classified alone, tree a's table knows nothing about GroupA.
    ClassificationTable solo = build_classification_table(a);
    CHECK(solo.rows().at("use").user_votes == 0);
}

TEST_CASE("table JSON is deterministic and idempotent") {
    ConfigTree t = parse_juniper(fixtures::read("classify_examples.conf"), "cls");
    std::string once = build_classification_table(t).to_json_string();
    std::string twice = build_classification_table(t).to_json_string();
    CHECK(once == twice);
    CHECK(once.find("\"parameter\": \"ImportPolicy\"") != std::string::npos);
    CHECK(once.find("\"class\": \"UserDefined\"") != std::string::npos);
}
