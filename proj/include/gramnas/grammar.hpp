#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "gramnas/graph_template.hpp"

namespace gramnas {

enum class SymbolKind { nonterminal, operator_terminal, primitive_terminal, placeholder_terminal };

using SymbolId = std::size_t;
using Attributes = std::map<std::string, std::string>;

struct Symbol {
    SymbolKind kind = SymbolKind::primitive_terminal;
    std::string name;
    std::size_t arity = 0;
    Attributes attributes;

    [[nodiscard]] auto is_terminal() const noexcept -> bool { return kind != SymbolKind::nonterminal; }

    friend auto operator==(const Symbol&, const Symbol&) -> bool = default;
};

// lhs ::= head(args...)   when head is an operator terminal
// lhs ::= head            when head is a primitive, placeholder or (unit) nonterminal
struct Production {
    SymbolId lhs = 0;
    SymbolId head = 0;
    std::vector<SymbolId> args;
    double weight = 1.0;

    friend auto operator==(const Production&, const Production&) -> bool = default;
};

struct ConstraintSpec {
    enum class Kind { connectivity, derivation_count, custom_hook };

    Kind kind = Kind::connectivity;
    // Nonterminal names; empty scope means every nonterminal.
    std::vector<std::string> scope;
    std::size_t count = 0;   // derivation_count only
    std::string hook;        // custom_hook only

    [[nodiscard]] auto applies_to(std::string_view nonterminal) const -> bool;

    friend auto operator==(const ConstraintSpec&, const ConstraintSpec&) -> bool = default;
};

class Grammar;

// Placeholder terminal substituted by one shared term from another grammar.
struct Binding {
    std::string placeholder;
    std::string start;
    std::shared_ptr<const Grammar> grammar;
};

// Immutable weighted context-free grammar over algebraic architecture terms.
// Built by parse_grammar (or GrammarBuilder in tests); safe to share.
class Grammar {
public:
    [[nodiscard]] auto name() const noexcept -> const std::string& { return name_; }
    [[nodiscard]] auto symbols() const noexcept -> const std::vector<Symbol>& { return symbols_; }
    [[nodiscard]] auto symbol(SymbolId id) const -> const Symbol& { return symbols_.at(id); }
    [[nodiscard]] auto productions() const noexcept -> const std::vector<Production>& { return productions_; }
    [[nodiscard]] auto production(std::size_t index) const -> const Production& { return productions_.at(index); }
    [[nodiscard]] auto start() const noexcept -> SymbolId { return start_; }
    [[nodiscard]] auto constraints() const noexcept -> const std::vector<ConstraintSpec>& { return constraints_; }
    [[nodiscard]] auto bindings() const noexcept -> const std::vector<Binding>& { return bindings_; }
    [[nodiscard]] auto templates() const noexcept -> const std::map<std::string, GraphTemplate>& { return templates_; }

    [[nodiscard]] auto find(std::string_view name) const -> std::optional<SymbolId>;
    [[nodiscard]] auto id_of(std::string_view name) const -> SymbolId;
    [[nodiscard]] auto nonterminals() const -> std::vector<SymbolId>;
    [[nodiscard]] auto terminals() const -> std::vector<SymbolId>;

    // Production indices with the given lhs, in source order.
    [[nodiscard]] auto productions_of(SymbolId lhs) const -> const std::vector<std::size_t>&;

    [[nodiscard]] auto binding(std::string_view placeholder) const -> const Binding*;
    [[nodiscard]] auto template_of(std::string_view op) const -> const GraphTemplate*;

    // Search this grammar, then bound grammars (depth first). Used where a
    // term spans several grammars after binding expansion.
    [[nodiscard]] auto find_template(std::string_view op) const -> const GraphTemplate*;
    [[nodiscard]] auto find_attributes(std::string_view terminal) const -> const Attributes*;
    [[nodiscard]] auto find_grammar(std::string_view name) const -> const Grammar*;

    // True when `nonterminal` is in the scope of a connectivity constraint.
    [[nodiscard]] auto requires_connectivity(SymbolId nonterminal) const -> bool;

    // Templates declared in the source text (not built in).
    [[nodiscard]] auto declared_templates() const noexcept -> const std::vector<std::string>& { return declared_templates_; }

    friend auto operator==(const Grammar& a, const Grammar& b) -> bool;

private:
    friend class GrammarBuilder;

    std::string name_ = "main";
    std::vector<Symbol> symbols_;
    std::unordered_map<std::string, SymbolId> by_name_;
    std::vector<Production> productions_;
    std::vector<std::vector<std::size_t>> by_lhs_;
    SymbolId start_ = 0;
    std::vector<ConstraintSpec> constraints_;
    std::vector<Binding> bindings_;
    std::map<std::string, GraphTemplate> templates_;
    std::vector<std::string> declared_templates_;
    std::vector<bool> connectivity_scope_;
};

// Programmatic construction; `build` validates the same invariants as the parser.
class GrammarBuilder {
public:
    explicit GrammarBuilder(std::string name = "main");

    auto add_symbol(Symbol symbol) -> SymbolId;
    auto add_production(Production production) -> GrammarBuilder&;
    auto set_start(SymbolId start) -> GrammarBuilder&;
    auto add_constraint(ConstraintSpec constraint) -> GrammarBuilder&;
    auto add_binding(Binding binding) -> GrammarBuilder&;
    auto add_template(GraphTemplate tmpl, bool declared) -> GrammarBuilder&;
    [[nodiscard]] auto find(std::string_view name) const -> std::optional<SymbolId>;

    [[nodiscard]] auto build() && -> std::shared_ptr<const Grammar>;

private:
    Grammar g_;
    bool start_set_ = false;
};

// Parse the extended BNF text format. The first `@grammar` section (or the
// unnamed leading section) is returned; other sections are reachable through
// its bindings.
auto parse_grammar(std::string_view text) -> std::shared_ptr<const Grammar>;
auto load_grammar(const std::filesystem::path& path) -> std::shared_ptr<const Grammar>;

// Inverse of parse_grammar: parse_grammar(render(g)) == g.
auto render(const Grammar& g) -> std::string;

struct Diagnostic {
    enum class Kind { unreachable, unproductive, infinite_language };
    Kind kind;
    std::string nonterminal;
    std::string message;
};

auto validate_grammar(const Grammar& g) -> std::vector<Diagnostic>;

// Size of the language, ignoring constraints. Bindings contribute one factor
// per placeholder.
struct SpaceSize {
    bool finite = true;
    boost::multiprecision::cpp_int exact;
    double log10 = 0.0;
};

auto count_space(const Grammar& g) -> SpaceSize;
auto log10_of(const boost::multiprecision::cpp_int& value) -> double;

// Number of nonterminal symbols reachable from the start symbol.
auto reachable_nonterminals(const Grammar& g, SymbolId from) -> std::vector<bool>;

// Nonterminals that participate in a cycle of the dependency graph
// (restricted to productive symbols).
auto has_infinite_language(const Grammar& g) -> bool;

// Directory with the bundled .cfg fixtures; GRAMNAS_FIXTURES overrides it.
auto fixture_directory() -> std::filesystem::path;

// `spec` is used as a path when it exists; otherwise it is looked up in the
// fixture directory, with and without a `.cfg` suffix.
auto resolve_grammar_path(const std::string& spec) -> std::filesystem::path;

} // namespace gramnas
