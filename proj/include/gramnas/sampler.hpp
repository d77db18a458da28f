#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gramnas/grammar.hpp"
#include "gramnas/random.hpp"
#include "gramnas/term.hpp"

namespace gramnas {

// Port reachability summary of a sub-term: bit (i * 8 + j) is set when port
// i reaches port j after removing `zero` edges. Templates have at most 8 ports.
using PortReach = std::uint64_t;

constexpr auto reach_bit(std::size_t from, std::size_t to) -> PortReach
{
    return PortReach{1} << (from * 8 + to);
}

// A leaf placed in a slot with `ports` attachment nodes: every attachment
// reaches the last one unless the label is `zero`.
auto leaf_reach(std::string_view label, std::size_t ports) -> PortReach;
auto compose_reach(const GraphTemplate& t, std::span<const PortReach> children) -> PortReach;
auto reach_connected(PortReach r, std::size_t ports) -> bool;

// Summary of `n` (resolved in `context` for placeholders) placed in a slot
// with `ports` attachment nodes.
auto node_reach(const Node& n, const Term& context, const Grammar& g, std::size_t ports = 2) -> PortReach;

// Custom constraint hooks act on one operator node: its template and the
// reach summaries of its children.
using ConstraintHook = std::function<bool(const GraphTemplate&, std::span<const PortReach>)>;
void register_hook(const std::string& name, ConstraintHook hook);
auto find_hook(std::string_view name) -> std::optional<ConstraintHook>;

// Built-in `full_nodes`: every template node lies on a source-sink path.
auto full_nodes_hook(const GraphTemplate& t, std::span<const PortReach> children) -> bool;

// Connectivity, derivation-count and hook constraints of `g` (and of bound
// grammars for the binding sub-terms).
auto satisfies_constraints(const Term& t, const Grammar& g) -> bool;

// Weighted top-down sampler. Productions are drawn proportionally to weight
// among those that can still terminate within the remaining depth and can
// meet the connectivity requirement of the enclosing scope.
class Sampler {
public:
    Sampler(const Grammar& g, int max_depth, std::optional<SymbolId> start = std::nullopt);
    ~Sampler();
    Sampler(Sampler&&) noexcept;
    Sampler(const Sampler&) = delete;
    auto operator=(const Sampler&) -> Sampler& = delete;
    auto operator=(Sampler&&) -> Sampler& = delete;

    [[nodiscard]] auto grammar() const noexcept -> const Grammar& { return g_; }
    [[nodiscard]] auto max_depth() const noexcept -> int { return max_depth_; }
    [[nodiscard]] auto start() const noexcept -> SymbolId { return start_; }

    // Throws Unsatisfiable when no term fits the depth budget and constraints.
    auto sample(Rng& rng) const -> Term;

    // Fresh subtree derived from `nt` with at most `budget` levels.
    // Placeholders resolve against `bindings`; missing ones are sampled and
    // appended. Only connectivity of `nt` itself is enforced here.
    auto sample_subtree(SymbolId nt, int budget, std::vector<TermBinding>& bindings, Rng& rng) const -> Node;

    // Minimum number of levels a derivation from `nt` needs (placeholders
    // count as one level). Large value when unproductive.
    [[nodiscard]] auto min_depth(SymbolId nt) const -> int;

    // Sampler of the grammar bound to `placeholder`, or null.
    [[nodiscard]] auto binding_sampler(std::string_view placeholder) const -> const Sampler*;

private:
    struct Tables;
    struct Context;

    auto tables_for(const std::vector<TermBinding>& bindings) const -> std::shared_ptr<const Tables>;
    auto bind_all(std::vector<TermBinding>& bindings, Rng& rng) const -> void;

    const Grammar& g_;
    int max_depth_;
    SymbolId start_;
    std::shared_ptr<const Tables> static_tables_;
    std::vector<std::unique_ptr<Sampler>> binding_samplers_;
};

auto sample_term(const Grammar& g, Rng& rng, int max_depth) -> Term;

// Drop bindings whose placeholder no longer occurs in the main tree.
void prune_bindings(Term& t);

struct Enumeration {
    std::vector<Term> terms;
    bool truncated = false;
};

// All constraint-satisfying derivations with depth <= max_depth, ordered
// lexicographically by production index (root choice first, then children
// left to right). Stops after `limit` terms and sets `truncated`.
auto enumerate_terms(const Grammar& g, std::size_t limit, int max_depth = 16) -> Enumeration;

} // namespace gramnas
