#include "gramnas/grammar.hpp"

#include <algorithm>
#include <cstdlib>

#include "gramnas/error.hpp"

#ifndef GRAMNAS_DEFAULT_FIXTURES
#define GRAMNAS_DEFAULT_FIXTURES "fixtures"
#endif

namespace gramnas {

auto ConstraintSpec::applies_to(std::string_view nonterminal) const -> bool
{
    return scope.empty() || std::find(scope.begin(), scope.end(), nonterminal) != scope.end();
}

auto Grammar::find(std::string_view name) const -> std::optional<SymbolId>
{
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) {
        return std::nullopt;
    }
    return it->second;
}

auto Grammar::id_of(std::string_view name) const -> SymbolId
{
    auto id = find(name);
    if (!id) {
        throw Error("unknown symbol '" + std::string(name) + "' in grammar " + name_);
    }
    return *id;
}

auto Grammar::nonterminals() const -> std::vector<SymbolId>
{
    std::vector<SymbolId> out;
    for (SymbolId i = 0; i < symbols_.size(); ++i) {
        if (symbols_[i].kind == SymbolKind::nonterminal) {
            out.push_back(i);
        }
    }
    return out;
}

auto Grammar::terminals() const -> std::vector<SymbolId>
{
    std::vector<SymbolId> out;
    for (SymbolId i = 0; i < symbols_.size(); ++i) {
        if (symbols_[i].is_terminal()) {
            out.push_back(i);
        }
    }
    return out;
}

auto Grammar::productions_of(SymbolId lhs) const -> const std::vector<std::size_t>&
{
    return by_lhs_.at(lhs);
}

auto Grammar::binding(std::string_view placeholder) const -> const Binding*
{
    for (const auto& b : bindings_) {
        if (b.placeholder == placeholder) {
            return &b;
        }
    }
    return nullptr;
}

auto Grammar::template_of(std::string_view op) const -> const GraphTemplate*
{
    auto it = templates_.find(std::string(op));
    return it == templates_.end() ? nullptr : &it->second;
}

auto Grammar::find_template(std::string_view op) const -> const GraphTemplate*
{
    if (const auto* t = template_of(op)) {
        return t;
    }
    for (const auto& b : bindings_) {
        if (const auto* t = b.grammar->find_template(op)) {
            return t;
        }
    }
    return nullptr;
}

auto Grammar::find_attributes(std::string_view terminal) const -> const Attributes*
{
    if (auto id = find(terminal); id && symbols_[*id].is_terminal()) {
        return &symbols_[*id].attributes;
    }
    for (const auto& b : bindings_) {
        if (const auto* a = b.grammar->find_attributes(terminal)) {
            return a;
        }
    }
    return nullptr;
}

auto Grammar::find_grammar(std::string_view name) const -> const Grammar*
{
    if (name_ == name) {
        return this;
    }
    for (const auto& b : bindings_) {
        if (const auto* g = b.grammar->find_grammar(name)) {
            return g;
        }
    }
    return nullptr;
}

auto Grammar::requires_connectivity(SymbolId nonterminal) const -> bool
{
    return nonterminal < connectivity_scope_.size() && connectivity_scope_[nonterminal];
}

auto operator==(const Grammar& a, const Grammar& b) -> bool
{
    if (a.name_ != b.name_ || a.symbols_ != b.symbols_ || a.productions_ != b.productions_ || a.start_ != b.start_
        || a.constraints_ != b.constraints_ || a.templates_ != b.templates_ || a.bindings_.size() != b.bindings_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.bindings_.size(); ++i) {
        const auto& x = a.bindings_[i];
        const auto& y = b.bindings_[i];
        if (x.placeholder != y.placeholder || x.start != y.start || !(*x.grammar == *y.grammar)) {
            return false;
        }
    }
    return true;
}

GrammarBuilder::GrammarBuilder(std::string name)
{
    g_.name_ = std::move(name);
}

auto GrammarBuilder::add_symbol(Symbol symbol) -> SymbolId
{
    if (auto existing = g_.find(symbol.name)) {
        auto& current = g_.symbols_[*existing];
        if (current.kind != symbol.kind) {
            throw GrammarError(GrammarError::Kind::duplicate_symbol,
                               "symbol '" + symbol.name + "' used with two different kinds");
        }
        if (current.kind == SymbolKind::operator_terminal && current.arity != symbol.arity) {
            throw GrammarError(GrammarError::Kind::arity_mismatch,
                               "operator '" + symbol.name + "' used with arities " + std::to_string(current.arity)
                                   + " and " + std::to_string(symbol.arity));
        }
        for (auto& [k, v] : symbol.attributes) {
            current.attributes[k] = v;
        }
        return *existing;
    }
    SymbolId id = g_.symbols_.size();
    g_.by_name_.emplace(symbol.name, id);
    g_.symbols_.push_back(std::move(symbol));
    return id;
}

auto GrammarBuilder::add_production(Production production) -> GrammarBuilder&
{
    g_.productions_.push_back(std::move(production));
    return *this;
}

auto GrammarBuilder::set_start(SymbolId start) -> GrammarBuilder&
{
    g_.start_ = start;
    start_set_ = true;
    return *this;
}

auto GrammarBuilder::add_constraint(ConstraintSpec constraint) -> GrammarBuilder&
{
    g_.constraints_.push_back(std::move(constraint));
    return *this;
}

auto GrammarBuilder::add_binding(Binding binding) -> GrammarBuilder&
{
    g_.bindings_.push_back(std::move(binding));
    return *this;
}

auto GrammarBuilder::add_template(GraphTemplate tmpl, bool declared) -> GrammarBuilder&
{
    if (declared && std::find(g_.declared_templates_.begin(), g_.declared_templates_.end(), tmpl.name)
                        == g_.declared_templates_.end()) {
        g_.declared_templates_.push_back(tmpl.name);
    }
    auto name = tmpl.name;
    g_.templates_[name] = std::move(tmpl);
    return *this;
}

auto GrammarBuilder::find(std::string_view name) const -> std::optional<SymbolId>
{
    return g_.find(name);
}

auto GrammarBuilder::build() && -> std::shared_ptr<const Grammar>
{
    using Kind = GrammarError::Kind;
    auto& g = g_;
    if (g.productions_.empty()) {
        throw GrammarError(Kind::invalid, "grammar '" + g.name_ + "' has no productions");
    }
    if (!start_set_) {
        g.start_ = g.productions_.front().lhs;
    }
    if (g.symbols_.at(g.start_).kind != SymbolKind::nonterminal) {
        throw GrammarError(Kind::invalid, "start symbol must be a nonterminal");
    }

    g.by_lhs_.assign(g.symbols_.size(), {});
    for (std::size_t i = 0; i < g.productions_.size(); ++i) {
        const auto& p = g.productions_[i];
        if (g.symbols_.at(p.lhs).kind != SymbolKind::nonterminal) {
            throw GrammarError(Kind::invalid, "production lhs '" + g.symbols_[p.lhs].name + "' is not a nonterminal");
        }
        if (!(p.weight > 0.0)) {
            throw GrammarError(Kind::invalid, "production weights must be positive");
        }
        const auto& head = g.symbols_.at(p.head);
        if (head.kind == SymbolKind::operator_terminal) {
            if (p.args.size() != head.arity) {
                throw GrammarError(Kind::arity_mismatch, "operator '" + head.name + "' expects "
                                                             + std::to_string(head.arity) + " arguments");
            }
        } else if (!p.args.empty()) {
            throw GrammarError(Kind::arity_mismatch, "'" + head.name + "' takes no arguments");
        }
        for (SymbolId a : p.args) {
            if (g.symbols_.at(a).kind == SymbolKind::operator_terminal) {
                throw GrammarError(Kind::syntax, "operator '" + g.symbols_[a].name + "' used as a bare argument");
            }
        }
        g.by_lhs_[p.lhs].push_back(i);
    }

    auto require_defined = [&](SymbolId id) {
        if (g.symbols_[id].kind == SymbolKind::nonterminal && g.by_lhs_[id].empty()) {
            throw GrammarError(Kind::undefined_nonterminal, "nonterminal '" + g.symbols_[id].name + "' has no productions");
        }
    };
    require_defined(g.start_);
    for (const auto& p : g.productions_) {
        require_defined(p.head);
        for (SymbolId a : p.args) {
            require_defined(a);
        }
    }

    for (const auto& sym : g.symbols_) {
        if (sym.kind == SymbolKind::operator_terminal) {
            auto it = g.templates_.find(sym.name);
            if (it == g.templates_.end()) {
                auto builtin = builtin_template(sym.name, sym.arity);
                if (!builtin) {
                    throw GrammarError(Kind::invalid, "no graph template for operator '" + sym.name + "' with arity "
                                                          + std::to_string(sym.arity));
                }
                g.templates_.emplace(sym.name, std::move(*builtin));
            } else if (it->second.arity() != sym.arity) {
                throw GrammarError(Kind::arity_mismatch, "template '" + sym.name + "' has "
                                                             + std::to_string(it->second.arity())
                                                             + " slots but operator is used with arity "
                                                             + std::to_string(sym.arity));
            }
        }
        if (sym.kind == SymbolKind::placeholder_terminal && g.binding(sym.name) == nullptr) {
            throw GrammarError(Kind::invalid, "placeholder '" + sym.name + "' has no binding");
        }
    }
    // Templates declared but unused by this grammar are dropped so that
    // grammars sharing a file compare equal after a render round trip.
    for (auto it = g.templates_.begin(); it != g.templates_.end();) {
        auto id = g.find(it->first);
        if (!id || g.symbols_[*id].kind != SymbolKind::operator_terminal) {
            it = g.templates_.erase(it);
        } else {
            ++it;
        }
    }
    std::erase_if(g.declared_templates_, [&](const std::string& n) { return !g.templates_.contains(n); });
    for (const auto& [name, t] : g.templates_) {
        if (auto problem = t.check(); !problem.empty()) {
            throw GrammarError(Kind::invalid, "template '" + name + "': " + problem);
        }
    }

    for (const auto& b : g.bindings_) {
        if (!b.grammar) {
            throw GrammarError(Kind::invalid, "binding '" + b.placeholder + "' has no grammar");
        }
        auto start = b.grammar->find(b.start);
        if (!start || b.grammar->symbol(*start).kind != SymbolKind::nonterminal) {
            throw GrammarError(Kind::undefined_nonterminal,
                               "binding target '" + b.grammar->name() + "." + b.start + "' is not a nonterminal");
        }
        if (b.grammar->find_grammar(g.name_) != nullptr) {
            throw GrammarError(Kind::cyclic_binding, "binding cycle through grammar '" + g.name_ + "'");
        }
    }

    g.connectivity_scope_.assign(g.symbols_.size(), false);
    for (const auto& c : g.constraints_) {
        if (c.kind == ConstraintSpec::Kind::derivation_count && c.count < 1) {
            throw GrammarError(Kind::invalid, "derivation count must be at least 1");
        }
        for (const auto& name : c.scope) {
            auto id = g.find(name);
            if (!id || g.symbols_[*id].kind != SymbolKind::nonterminal) {
                throw GrammarError(Kind::undefined_nonterminal, "constraint scope '" + name + "' is not a nonterminal");
            }
        }
        if (c.kind == ConstraintSpec::Kind::connectivity) {
            for (SymbolId i = 0; i < g.symbols_.size(); ++i) {
                if (g.symbols_[i].kind == SymbolKind::nonterminal && c.applies_to(g.symbols_[i].name)) {
                    g.connectivity_scope_[i] = true;
                }
            }
        }
    }
    return std::make_shared<const Grammar>(std::move(g));
}

auto fixture_directory() -> std::filesystem::path
{
    if (const char* env = std::getenv("GRAMNAS_FIXTURES"); env != nullptr && *env != '\0') {
        return env;
    }
    return GRAMNAS_DEFAULT_FIXTURES;
}

auto resolve_grammar_path(const std::string& spec) -> std::filesystem::path
{
    std::filesystem::path direct(spec);
    if (std::filesystem::exists(direct)) {
        return direct;
    }
    auto dir = fixture_directory();
    for (const auto& candidate : {dir / direct.filename(), dir / (direct.filename().string() + ".cfg")}) {
        if (std::filesystem::exists(candidate)) {
            return candidate;
        }
    }
    throw Error("grammar file not found: " + spec);
}

} // namespace gramnas
