#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "conflens/config_tree.hpp"
#include "conflens/context_miner.hpp"
#include "conflens/value_classifier.hpp"

using namespace conflens;

namespace {

// deterministic config with `groups` top sections of `units` subsections,
// five parameters each; big enough that index lookups matter
std::string synth_config(int groups, int units) {
    std::ostringstream out;
    for (int g = 0; g < groups; ++g) {
        out << "group-" << g << " {\n";
        for (int u = 0; u < units; ++u) {
            out << "    unit-" << u << " {\n";
            out << "        mtu " << 1500 + (g * units + u) % 8000 << ";\n";
            out << "        vlan-id " << 1 + (g + u) % 4000 << ";\n";
            out << "        description item-" << g << "-" << u << ";\n";
            out << "        export policy-" << u % 7 << ";\n";
            out << "        address 10." << g % 250 << "." << u % 250 << ".1/24;\n";
            out << "    }\n";
        }
        out << "}\n";
    }
    for (int p = 0; p < 7; ++p) {
        out << "policy-" << p << " {\n    action accept;\n}\n";
    }
    return out.str();
}

const std::string& big_text() {
    static const std::string text = synth_config(40, 25);
    return text;
}

const ConfigTree& big_tree() {
    static const ConfigTree tree = parse_juniper(big_text(), "bench");
    return tree;
}

}  // namespace

static void BM_ParseJuniper(benchmark::State& state) {
    const std::string& text = big_text();
    for (auto _ : state) {
        ConfigTree tree = parse_juniper(text, "bench");
        benchmark::DoNotOptimize(tree.paths().size());
    }
    state.SetBytesProcessed(static_cast<int64_t>(state.iterations()) *
                            static_cast<int64_t>(text.size()));
}
BENCHMARK(BM_ParseJuniper);

static void BM_SerializeBraces(benchmark::State& state) {
    const ConfigTree& tree = big_tree();
    for (auto _ : state) {
        std::string text = serialize(tree, TreeFormat::Braces);
        benchmark::DoNotOptimize(text.data());
    }
}
BENCHMARK(BM_SerializeBraces);

static void BM_RenderSetLines(benchmark::State& state) {
    const ConfigTree& tree = big_tree();
    for (auto _ : state) {
        std::string text = serialize(tree, TreeFormat::SetLines);
        benchmark::DoNotOptimize(text.data());
    }
}
BENCHMARK(BM_RenderSetLines);

static void BM_BuildClassificationTable(benchmark::State& state) {
    const ConfigTree& tree = big_tree();
    for (auto _ : state) {
        ClassificationTable table = build_classification_table(tree);
        benchmark::DoNotOptimize(table.rows().size());
    }
}
BENCHMARK(BM_BuildClassificationTable);

static void BM_MineNeighbors(benchmark::State& state) {
    const ConfigTree& tree = big_tree();
    const std::vector<ConfigPath>& paths = tree.paths();
    std::size_t i = 0;
    for (auto _ : state) {
        const ConfigPath& p = paths[i++ % paths.size()];
        std::vector<ConfigPath> neighbors = mine_neighbors(tree, p);
        benchmark::DoNotOptimize(neighbors.size());
    }
}
BENCHMARK(BM_MineNeighbors);

static void BM_MineSimilar(benchmark::State& state) {
    const ConfigTree& tree = big_tree();
    const std::vector<ConfigPath>& paths = tree.paths();
    std::size_t i = 0;
    for (auto _ : state) {
        const ConfigPath& p = paths[i++ % paths.size()];
        std::vector<ConfigPath> similar = mine_similar(tree, p);
        benchmark::DoNotOptimize(similar.size());
    }
}
BENCHMARK(BM_MineSimilar);

static void BM_AssembleBundle(benchmark::State& state) {
    const ConfigTree& tree = big_tree();
    static const ClassificationTable table = build_classification_table(tree);
    const std::vector<ConfigTree> snapshot = [] {
        std::vector<ConfigTree> trees;
        trees.push_back(parse_juniper(big_text(), "bench"));
        return trees;
    }();
    const std::vector<ContextType> requested{
        ContextType::Neighbors, ContextType::Similar, ContextType::Referenceable,
        ContextType::NeighborsOfReferenceable};
    const std::vector<ConfigPath>& paths = snapshot[0].paths();
    std::size_t i = 0;
    for (auto _ : state) {
        const ConfigPath& p = paths[i++ % paths.size()];
        ContextBundle bundle = assemble_bundle(snapshot, 0, p, requested, table);
        benchmark::DoNotOptimize(bundle.entries.size());
    }
}
BENCHMARK(BM_AssembleBundle);

static void BM_IntraRouterPrevalence(benchmark::State& state) {
    const std::vector<ConfigTree> snapshot = [] {
        std::vector<ConfigTree> trees;
        for (int i = 0; i < 8; ++i)
            trees.push_back(parse_juniper(synth_config(10, 10), "peer-" + std::to_string(i)));
        return trees;
    }();
    const std::vector<ConfigPath>& paths = snapshot[0].paths();
    std::size_t i = 0;
    for (auto _ : state) {
        const ConfigPath& p = paths[i++ % paths.size()];
        Prevalence prevalence = mine_intra_router(snapshot, p, "peer-0");
        benchmark::DoNotOptimize(prevalence.count_matching);
    }
}
BENCHMARK(BM_IntraRouterPrevalence);

BENCHMARK_MAIN();
