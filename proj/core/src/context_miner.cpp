#include "conflens/context_miner.hpp"

#include <algorithm>

namespace conflens {

namespace {

// Miners take paths by value from callers that may have copied them around;
// anchor every operation on the tree's own copy after checking it is really
// the same path.
const ConfigPath& checked_path(const ConfigTree& tree, const ConfigPath& p) {
    if (p.path_id < tree.paths().size()) {
        const ConfigPath& own = tree.paths()[p.path_id];
        if (own.labels == p.labels && own.value == p.value) return own;
    }
    throw MiningError(MiningErrorKind::PathNotInTree,
                      "path \"" + render_set_line(p) + "\" does not belong to tree \"" +
                          tree.source_id() + "\"");
}

std::vector<ConfigPath> ids_to_paths(const ConfigTree& tree, const std::vector<std::size_t>& ids) {
    std::vector<ConfigPath> out;
    out.reserve(ids.size());
    for (std::size_t id : ids) out.push_back(tree.paths()[id]);
    return out;
}

std::vector<std::size_t> neighbor_ids(const ConfigTree& tree, const ConfigPath& p,
                                      std::size_t m) {
    std::vector<std::size_t> out;
    const auto* candidates = tree.paths_with_prefix(p.labels, m);
    if (!candidates) return out;
    for (std::size_t id : *candidates) {
        if (id == p.path_id) continue;
        if (tree.paths()[id].leaf_label() == p.leaf_label()) continue;
        out.push_back(id);
    }
    return out;
}

std::vector<std::size_t> referenceable_ids(const ConfigTree& tree, const ConfigPath& p,
                                           const ClassificationTable& table) {
    if (table.classify(p.leaf_label(), p.value).cls == ValueClass::PreDefined) return {};
    std::vector<std::size_t> ids = tree.paths_under_sections_matching(p.value);
    ids.erase(std::remove(ids.begin(), ids.end(), p.path_id), ids.end());
    return ids;
}

}  // namespace

const char* context_wire_name(ContextType type) {
    switch (type) {
        case ContextType::Neighbors: return "N";
        case ContextType::Similar: return "S";
        case ContextType::Referenceable: return "R";
        case ContextType::NeighborsOfReferenceable: return "NR";
        case ContextType::IntraRouterConsistency: return "IRC";
    }
    return "?";
}

const char* context_long_name(ContextType type) {
    switch (type) {
        case ContextType::Neighbors: return "neighboring configurations";
        case ContextType::Similar: return "similar configurations";
        case ContextType::Referenceable: return "referenceable configurations";
        case ContextType::NeighborsOfReferenceable:
            return "neighbors of the referenceable configurations";
        case ContextType::IntraRouterConsistency: return "intra-router consistency";
    }
    return "?";
}

std::optional<ContextType> context_from_wire(std::string_view name) {
    for (ContextType type : kAllContextTypes)
        if (name == context_wire_name(type)) return type;
    return std::nullopt;
}

std::vector<ConfigPath> mine_neighbors(const ConfigTree& tree, const ConfigPath& p_in,
                                       std::optional<std::size_t> m) {
    const ConfigPath& p = checked_path(tree, p_in);
    const std::size_t k = p.depth();
    const std::size_t depth = m.value_or(k - 1);
    if (depth < 1 || depth > k - 1)
        throw MiningError(MiningErrorKind::InvalidDepth,
                          "neighbor depth " + std::to_string(depth) + " outside [1, " +
                              std::to_string(k - 1) + "] for a depth-" + std::to_string(k) +
                              " path");
    return ids_to_paths(tree, neighbor_ids(tree, p, depth));
}

std::vector<ConfigPath> mine_similar(const ConfigTree& tree, const ConfigPath& p_in) {
    const ConfigPath& p = checked_path(tree, p_in);
    const auto* ids = tree.paths_in_category(p.labels[1], p.leaf_label());
    std::vector<ConfigPath> out;
    if (!ids) return out;
    for (std::size_t id : *ids)
        if (id != p.path_id) out.push_back(tree.paths()[id]);
    return out;
}

std::vector<ConfigPath> mine_referenceable(const ConfigTree& tree, const ConfigPath& p_in,
                                           const ClassificationTable& table) {
    const ConfigPath& p = checked_path(tree, p_in);
    return ids_to_paths(tree, referenceable_ids(tree, p, table));
}

std::vector<ConfigPath> mine_neighbors_of_referenceable(const ConfigTree& tree,
                                                        const ConfigPath& p_in,
                                                        const ClassificationTable& table,
                                                        NrOrder order) {
    const ConfigPath& p = checked_path(tree, p_in);
    std::vector<std::size_t> base;  // paths expanded from, excluded from the result
    std::vector<std::size_t> ids;
    if (order == NrOrder::NeighborsOfReferences) {
        base = referenceable_ids(tree, p, table);
        for (std::size_t q : base) {
            const ConfigPath& qp = tree.paths()[q];
            for (std::size_t id : neighbor_ids(tree, qp, qp.depth() - 1)) ids.push_back(id);
        }
    } else {
        base = neighbor_ids(tree, p, p.depth() - 1);
        for (std::size_t q : base)
            for (std::size_t id : referenceable_ids(tree, tree.paths()[q], table))
                ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<ConfigPath> out;
    for (std::size_t id : ids) {
        if (id == p.path_id) continue;
        if (std::find(base.begin(), base.end(), id) != base.end()) continue;
        out.push_back(tree.paths()[id]);
    }
    return out;
}

Prevalence mine_intra_router(std::span<const ConfigTree> snapshot, const ConfigPath& p,
                             std::string_view origin_source_id) {
    const ConfigTree* origin = nullptr;
    for (const ConfigTree& tree : snapshot) {
        if (tree.source_id() == origin_source_id) {
            origin = &tree;
            break;
        }
    }
    if (!origin)
        throw MiningError(MiningErrorKind::OriginNotInSnapshot,
                          "no snapshot tree has source id \"" + std::string(origin_source_id) +
                              "\"");
    checked_path(*origin, p);

    Prevalence result;
    for (const ConfigTree& tree : snapshot) {
        if (tree.source_id() == origin_source_id) continue;
        ++result.count_total;
        if (tree.contains_exact_line(p)) ++result.count_matching;
    }
    return result;
}

ContextBundle assemble_bundle(std::span<const ConfigTree> snapshot, std::size_t origin_index,
                              const ConfigPath& p, const std::vector<ContextType>& requested,
                              const ClassificationTable& table, const MiningOptions& options) {
    if (origin_index >= snapshot.size())
        throw MiningError(MiningErrorKind::OriginNotInSnapshot,
                          "origin index " + std::to_string(origin_index) +
                              " outside snapshot of size " + std::to_string(snapshot.size()));
    const ConfigTree& origin = snapshot[origin_index];
    checked_path(origin, p);

    ContextBundle bundle;
    for (ContextType type : requested) {
        if (type == ContextType::IntraRouterConsistency) {
            bundle.prevalence = mine_intra_router(snapshot, p, origin.source_id());
            continue;
        }
        std::vector<ConfigPath> mined;
        switch (type) {
            case ContextType::Neighbors:
                mined = mine_neighbors(origin, p, options.neighbor_depth);
                break;
            case ContextType::Similar:
                mined = mine_similar(origin, p);
                break;
            case ContextType::Referenceable:
                mined = mine_referenceable(origin, p, table);
                break;
            case ContextType::NeighborsOfReferenceable:
                mined = mine_neighbors_of_referenceable(origin, p, table, options.nr_order);
                break;
            case ContextType::IntraRouterConsistency:
                break;
        }
        // Single-tree mining yields path_id order already; keep the sort as
        // the documented (source_id, path_id) contract.
        std::vector<ContextEntry> entries;
        entries.reserve(mined.size());
        for (ConfigPath& path : mined) entries.push_back({origin.source_id(), std::move(path)});
        std::stable_sort(entries.begin(), entries.end(),
                         [](const ContextEntry& a, const ContextEntry& b) {
                             if (a.source_id != b.source_id) return a.source_id < b.source_id;
                             return a.path.path_id < b.path.path_id;
                         });
        entries.erase(std::unique(entries.begin(), entries.end(),
                                  [](const ContextEntry& a, const ContextEntry& b) {
                                      return a.source_id == b.source_id &&
                                             a.path.path_id == b.path.path_id;
                                  }),
                      entries.end());
        bool capped = entries.size() > options.per_type_cap;
        if (capped) entries.resize(options.per_type_cap);
        bundle.cap_applied[type] = capped;
        bundle.entries[type] = std::move(entries);
    }
    return bundle;
}

}  // namespace conflens
