#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "conflens/config_tree.hpp"
#include "conflens/value_classifier.hpp"

namespace conflens {

// The five context types offered during a review. Wire names are the short
// codes used in prompts and CLI flags.
enum class ContextType {
    Neighbors,                 // N: paths sharing the first m nodes, other leaf
    Similar,                   // S: same top-level section and same leaf label
    Referenceable,             // R: paths under sections matching the value
    NeighborsOfReferenceable,  // NR: neighbors of the R paths
    IntraRouterConsistency,    // IRC: prevalence across the snapshot
};

inline constexpr ContextType kAllContextTypes[] = {
    ContextType::Neighbors,
    ContextType::Similar,
    ContextType::Referenceable,
    ContextType::NeighborsOfReferenceable,
    ContextType::IntraRouterConsistency,
};

const char* context_wire_name(ContextType type);                     // "N".."IRC"
const char* context_long_name(ContextType type);
std::optional<ContextType> context_from_wire(std::string_view name);

// Composition order for the NR type. The default expands neighbors around
// each referenced path; the alternate collects references of each neighbor.
enum class NrOrder { NeighborsOfReferences, ReferencesOfNeighbors };

struct MiningOptions {
    std::optional<std::size_t> neighbor_depth;  // m; defaults to k-1 per path
    NrOrder nr_order = NrOrder::NeighborsOfReferences;
    std::size_t per_type_cap = 50;  // max entries per context type in a bundle
};

enum class MiningErrorKind { InvalidDepth, PathNotInTree, OriginNotInSnapshot };

class MiningError : public std::runtime_error {
public:
    MiningError(MiningErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    MiningErrorKind kind() const { return kind_; }

private:
    MiningErrorKind kind_;
};

// Paths whose first m labels (counting "<root>") equal p's and whose
// parameter label differs. m defaults to p.depth() - 1, i.e. the enclosing
// section; explicit m must satisfy 1 <= m <= p.depth() - 1.
std::vector<ConfigPath> mine_neighbors(const ConfigTree& tree, const ConfigPath& p,
                                       std::optional<std::size_t> m = {});

// Paths with the same top-level section label and the same parameter label
// as p, anywhere in the tree. Duplicate values qualify.
std::vector<ConfigPath> mine_similar(const ConfigTree& tree, const ConfigPath& p);

// Paths under any non-root section whose label matches p's value exactly or
// as a whitespace token. Empty when p's parameter classifies PreDefined
// (numeric or keyword values reference nothing).
std::vector<ConfigPath> mine_referenceable(const ConfigTree& tree, const ConfigPath& p,
                                           const ClassificationTable& table);

// Union of default-depth neighbor sets over mine_referenceable(p), minus p
// and minus the referenced paths themselves (minus the neighbor base under
// the alternate order).
std::vector<ConfigPath> mine_neighbors_of_referenceable(
    const ConfigTree& tree, const ConfigPath& p, const ClassificationTable& table,
    NrOrder order = NrOrder::NeighborsOfReferences);

struct Prevalence {
    std::size_t count_matching = 0;
    std::size_t count_total = 0;
};

// How many other snapshot trees contain a line identical to p (same
// labels[1..] and value). count_total excludes the origin tree. The origin
// must be present in the snapshot and must contain p.
Prevalence mine_intra_router(std::span<const ConfigTree> snapshot, const ConfigPath& p,
                             std::string_view origin_source_id);

struct ContextEntry {
    std::string source_id;
    ConfigPath path;
};

struct ContextBundle {
    std::map<ContextType, std::vector<ContextEntry>> entries;  // N, S, R, NR only
    std::optional<Prevalence> prevalence;                      // set when IRC requested
    std::map<ContextType, bool> cap_applied;
};

// Mines every requested type around p (a path of snapshot[origin_index]).
// Entry lists are sorted by (source_id, path_id), deduped, never contain p,
// and are truncated to options.per_type_cap with cap_applied recording it.
ContextBundle assemble_bundle(std::span<const ConfigTree> snapshot, std::size_t origin_index,
                              const ConfigPath& p, const std::vector<ContextType>& requested,
                              const ClassificationTable& table, const MiningOptions& options = {});

}  // namespace conflens
