#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gramnas/grammar.hpp"

namespace gramnas {

// One derivation step that produced a node: `nonterminal ::= production`.
struct Annotation {
    std::string nonterminal;
    std::size_t production = 0;

    friend auto operator==(const Annotation&, const Annotation&) -> bool = default;
};

// Derivation-tree node. `chain` lists the derivation steps that produced the
// node, outermost first; unit productions (A ::= B) add an entry to the chain
// rather than a tree level. Terminal arguments written directly in a
// production have an empty chain.
struct Node {
    enum class Kind : std::uint8_t { op, primitive, placeholder, folded };

    Kind kind = Kind::primitive;
    std::string name;
    std::vector<Annotation> chain;
    std::vector<Node> children;

    [[nodiscard]] auto is_leaf() const noexcept -> bool { return children.empty(); }
    // Innermost nonterminal, or empty for bare terminal arguments.
    [[nodiscard]] auto nonterminal() const -> const std::string&;

    friend auto operator==(const Node&, const Node&) -> bool = default;
};

struct Term;

struct TermBinding {
    std::string placeholder;
    std::shared_ptr<const Term> term;
};

// Algebraic architecture term. Placeholder leaves in `root` refer to
// `bindings` by name; one sub-term per placeholder, shared by all occurrences.
struct Term {
    Node root;
    std::vector<TermBinding> bindings;

    [[nodiscard]] auto binding(std::string_view placeholder) const -> const Term*;

    friend auto operator==(const Term& a, const Term& b) -> bool;
};

// Canonical whitespace-free form: `Op(a,b)`, then one `x=...` line per
// binding (nested bindings are qualified, e.g. `x1.y1=...`).
auto to_string(const Term& t) -> std::string;
auto to_string(const Node& n) -> std::string;

// Inverse of to_string; annotations are recovered by matching against `g`
// (first matching production in source order).
auto parse_term(std::string_view text, const Grammar& g) -> Term;

// Placeholders replaced by their bound sub-terms, recursively.
auto expand(const Term& t) -> Term;

// Maximum node level of the expanded term; root level is 1.
auto depth(const Term& t) -> int;
auto depth(const Node& n) -> int;

// F_l: keep levels <= l; operators at level l lose their children and become
// folded leaves. Returns t itself when l >= depth(t).
auto fold(const Term& t, int level) -> Term;

// Position of a derivation step. `binding` is -1 for the main tree, otherwise
// an index into Term::bindings (nested bindings are not addressed). `step`
// indexes the node's annotation chain.
struct Site {
    int binding = -1;
    std::vector<std::uint32_t> path;
    std::size_t step = 0;

    friend auto operator==(const Site&, const Site&) -> bool = default;
};

// All derivation steps in preorder; main tree first, then each binding.
auto all_sites(const Term& t) -> std::vector<Site>;
auto subterm_sites(const Term& t, std::string_view nonterminal) -> std::vector<Site>;

auto node_at(const Term& t, const Site& site) -> const Node&;
auto site_nonterminal(const Term& t, const Site& site) -> const std::string&;

// Replace the subtree at `site`. The new node's chain is appended to the
// chain prefix above site.step.
auto replace(const Term& t, const Site& site, const Node& subtree) -> Term;

// Level of the site's node in the expanded term. For binding sites the
// deepest occurrence of the placeholder counts.
auto site_level(const Term& t, const Site& site) -> int;

// Number of nodes of the expanded term.
auto node_count(const Term& t) -> std::size_t;

// {op, nt, children} derivation tree plus a `bindings` object.
auto term_to_json(const Term& t) -> nlohmann::json;

} // namespace gramnas
