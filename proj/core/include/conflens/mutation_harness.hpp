#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "conflens/config_tree.hpp"
#include "conflens/prompt_engine.hpp"

namespace conflens {

// The catalog of synthetic misconfigurations. Order is fixed: four syntax
// kinds, four range kinds, eight dependency/conflict kinds.
enum class MutationKind {
    MissingBrace,
    InvalidKeyword,
    IncorrectHierarchy,
    InvalidIpAddress,
    InvalidMtu,
    InvalidVlanId,
    InvalidAsNumber,
    InvalidPrefixLimit,
    NonexistentGroup,
    PolicyConflict,
    NonexistentFilter,
    NonexistentPolicy,
    IncorrectFilterUsage,
    DisabledSampling,
    VrfTargetConflict,
    AbnormalSmallMtu,
};

inline constexpr std::array<MutationKind, 16> kAllMutationKinds = {
    MutationKind::MissingBrace,        MutationKind::InvalidKeyword,
    MutationKind::IncorrectHierarchy,  MutationKind::InvalidIpAddress,
    MutationKind::InvalidMtu,          MutationKind::InvalidVlanId,
    MutationKind::InvalidAsNumber,     MutationKind::InvalidPrefixLimit,
    MutationKind::NonexistentGroup,    MutationKind::PolicyConflict,
    MutationKind::NonexistentFilter,   MutationKind::NonexistentPolicy,
    MutationKind::IncorrectFilterUsage, MutationKind::DisabledSampling,
    MutationKind::VrfTargetConflict,   MutationKind::AbnormalSmallMtu,
};

enum class MutationCategory { Syntax, Range, DependencyConflict };

// Tree mutations rewrite one statement's value and record the mutated set
// line. Text mutations restructure the file (delete a brace, move or insert
// or delete a whole line) and record a minimal line diff against the
// canonical serialization of the original.
enum class MutationLayer { Tree, Text };

const char* to_string(MutationKind kind);
const char* to_string(MutationCategory category);
const char* to_string(MutationLayer layer);
std::optional<MutationKind> mutation_from_name(std::string_view name);
MutationCategory category_of(MutationKind kind);
MutationLayer layer_of(MutationKind kind);

// The context types a competent review of this mutation kind is expected to
// consult, in request order.
const std::vector<ContextType>& expected_contexts(MutationKind kind);

DetectionFocus focus_for(MutationCategory category);

enum class MutationErrorKind { NoCandidate, TargetNotFound, BadRecord, ReplayMismatch };

class MutationError : public std::runtime_error {
public:
    MutationError(MutationErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    MutationErrorKind kind() const { return kind_; }

private:
    MutationErrorKind kind_;
};

// Everything needed to reproduce and score one injected misconfiguration.
// `target` names the statement picked in the canonical original: a set line,
// or "section <labels>" for MissingBrace. `mutated` is the mutated set line
// (tree layer) or the line diff (text layer, "@@ <line>" then "-"/"+" lines).
struct MutationRecord {
    MutationKind kind = MutationKind::MissingBrace;
    MutationCategory category = MutationCategory::Syntax;
    MutationLayer layer = MutationLayer::Text;
    std::string source_id;
    std::string target;
    std::string mutated;
    std::string param_label;  // ground-truth parameter for scoring
    std::uint64_t seed = 0;
};

std::string record_to_json(const MutationRecord& record);
MutationRecord record_from_json(const std::string& json_text);

struct MutationResult {
    std::string mutated_text;
    MutationRecord record;
};

// Statements in the canonical original that `kind` could target, as target
// descriptors, sorted. Empty when the config offers no suitable statement.
std::vector<std::string> mutation_candidates(MutationKind kind, const ConfigTree& original);

// Canonicalizes the original (parse, serialize, reparse), picks the
// seed % candidates target (or the explicit `target` descriptor), applies the
// recipe. Identical (kind, target, seed) inputs yield identical bytes.
// Throws MutationError when no candidate or the target does not resolve.
MutationResult inject_mutation(MutationKind kind, const std::string& original_text,
                               const std::string& source_id, std::uint64_t seed,
                               const std::string& target = "");

// Replays a record against the original text by applying the recorded form
// itself (set-line rewrite or line diff), not by re-running the recipe.
// Throws MutationError{ReplayMismatch} when the text no longer matches.
MutationResult apply_record(const MutationRecord& record, const std::string& original_text);

// A mutation staged for review: the review target inside the mutated config,
// plus a control target at the same statement in the untouched original.
// MissingBrace leaves the mutated file unparseable, so its review target is
// a text excerpt and its snapshot is empty.
struct PreparedCase {
    MutationRecord record;
    std::string canonical_text;
    std::string mutated_text;
    ReviewTarget review;
    std::vector<ConfigTree> snapshot;
    ReviewTarget control_review;
    std::vector<ConfigTree> control_snapshot;
};

PreparedCase prepare_case(const MutationRecord& record, const std::string& original_text);
PreparedCase prepare_case(MutationKind kind, const std::string& original_text,
                          const std::string& source_id, std::uint64_t seed);

// True when any reported parameter matches the planted one: case-insensitive
// containment in either direction, empty entries ignored.
bool parameters_match(const std::string& planted_label,
                      const std::vector<std::string>& err_parameters);

// A detector reviews one target and returns a verdict. `truth` carries the
// planted mutation record on mutated runs and is null on control runs; it
// exists so harness self-checks can reference ground truth. Real detectors
// must ignore it.
using DetectorFn = std::function<Verdict(const ReviewTarget& target, const DetectionFocus& focus,
                                         std::span<const ConfigTree> snapshot,
                                         std::size_t origin_index, const MutationRecord* truth)>;

DetectorFn make_llm_detector(LlmProvider& provider, const ProtocolOptions& options = {});
// Self-check detectors: one flags exactly the planted parameter, the other
// never flags anything.
DetectorFn make_omniscient_detector();
DetectorFn make_always_clean_detector();

struct EvalCaseResult {
    MutationRecord record;
    bool detected = false;
    bool error = false;
    std::string detail;  // error text, or the verdict's reason
    bool control_clean = false;
    bool control_error = false;
};

struct EvalSummary {
    std::vector<EvalCaseResult> cases;  // catalog order
    std::size_t detected_syntax = 0;
    std::size_t total_syntax = 0;
    std::size_t detected_range = 0;
    std::size_t total_range = 0;
    std::size_t detected_dependency = 0;
    std::size_t total_dependency = 0;
    std::size_t controls_clean = 0;
    std::size_t controls_total = 0;
};

// Injects every catalog kind into the config, reviews each mutated case with
// the category focus, and reviews each control statement with all three
// focuses (clean means none flags it). Detector exceptions are captured and
// count as not detected (or not clean).
EvalSummary evaluate_catalog(const DetectorFn& detector, const std::string& original_text,
                             const std::string& source_id, std::uint64_t seed = 0);

std::string eval_summary_to_json(const EvalSummary& summary);
std::string eval_summary_to_markdown(const EvalSummary& summary);

}  // namespace conflens
