#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gramnas {

// Fixed, argument-independent edge inside a template (e.g. the concat edges
// of the Darts cell).
struct FixedEdge {
    int tail = 0;
    int head = 0;
    std::string label;

    friend auto operator==(const FixedEdge&, const FixedEdge&) -> bool = default;
};

// Edge-replacement template of a topological operator.
//
// `ports` are the external nodes the operator is glued onto; the first is the
// source and the last the sink. Slot i is attached to `slots[i]`, an ordered
// tuple of template nodes. Ordinary slots have two attachment nodes
// (tail, head) and become a single labeled edge when the argument is a
// primitive. Slots with more attachment nodes take an operator whose own
// template has that many ports (hyperedge replacement, used by the Darts
// node operators).
struct GraphTemplate {
    std::string name;
    int nodes = 2;
    std::vector<int> ports{0, 1};
    std::vector<std::vector<int>> slots;
    std::vector<FixedEdge> fixed;
    // Merge mode for join nodes; empty means element-wise sum.
    std::string merge;

    [[nodiscard]] auto arity() const noexcept -> std::size_t { return slots.size(); }
    [[nodiscard]] auto source() const noexcept -> int { return ports.front(); }
    [[nodiscard]] auto sink() const noexcept -> int { return ports.back(); }

    // Empty string when the template satisfies its invariants, otherwise a
    // description of the first violation.
    [[nodiscard]] auto check() const -> std::string;

    friend auto operator==(const GraphTemplate&, const GraphTemplate&) -> bool = default;
};

// Built-in vocabulary: Linear/LinearN/Macro chains, Residual/Residual2/3,
// Cell, DAG4/DAG5, Darts with Node3..Node6, MobileNet Block, Linear1.
// Returns nothing when `name` has no built-in template for `arity`.
auto builtin_template(std::string_view name, std::size_t arity) -> std::optional<GraphTemplate>;

// Densely connected DAG on `n` nodes; edges ordered by head, then tail.
auto dense_dag_template(std::string name, int n) -> GraphTemplate;
auto chain_template(std::string name, int length) -> GraphTemplate;

} // namespace gramnas
