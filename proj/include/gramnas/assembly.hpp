#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "gramnas/grammar.hpp"
#include "gramnas/term.hpp"

namespace gramnas {

struct GraphEdge {
    int tail = 0;
    int head = 0;
    std::string label;
    Attributes attrs;

    friend auto operator==(const GraphEdge&, const GraphEdge&) -> bool = default;
};

// Computational DAG Phi(t): labeled edges between integer nodes, one input
// and one output node.
struct ArchGraph {
    std::vector<Attributes> nodes;
    std::vector<GraphEdge> edges;
    int input = 0;
    int output = 1;
    std::string term;

    [[nodiscard]] auto node_count() const noexcept -> int { return static_cast<int>(nodes.size()); }

    friend auto operator==(const ArchGraph&, const ArchGraph&) -> bool = default;
};

// Edge replacement starting from a single input->output edge. With
// fold_level > 0 the term is read as fold(t, fold_level) without building
// the folded term; folded leaves carry `nt` and `folded` edge attributes.
auto assemble(const Term& t, const Grammar& g, int fold_level = 0) -> ArchGraph;

// Removes `zero` edges, then every node that is not on an input->output
// path (input and output are always kept). Nodes are renumbered in order.
auto prune_zero(const ArchGraph& g) -> ArchGraph;

auto is_connected(const ArchGraph& g) -> bool;

struct GraphStats {
    int nodes = 0;
    int edges = 0;
    int longest_path = 0;
    std::map<std::string, int> labels;
    // Fewest/most downsampling edges over input->output paths; both 0 when
    // disconnected.
    int min_downsample = 0;
    int max_downsample = 0;
};

// Computed on prune_zero(g).
auto graph_stats(const ArchGraph& g) -> GraphStats;

// {"schema":"archgraph/1", nodes, edges, input, output, meta}
auto to_json(const ArchGraph& g) -> nlohmann::json;
auto graph_from_json(const nlohmann::json& j) -> ArchGraph;
auto to_dot(const ArchGraph& g) -> std::string;

// Nodes in topological order (Kahn, smallest id first).
auto topological_order(const ArchGraph& g) -> std::vector<int>;

} // namespace gramnas
