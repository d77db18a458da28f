#include <cmath>
#include <functional>
#include <set>

#include "gramnas/grammar.hpp"

namespace gramnas {

namespace {

using boost::multiprecision::cpp_int;

// Nonterminals (and the placeholder symbols) a production refers to.
template <typename F>
void for_each_operand(const Production& p, F&& f)
{
    f(p.head);
    for (SymbolId a : p.args) {
        f(a);
    }
}

auto productive_set(const Grammar& g) -> std::vector<bool>
{
    const auto& syms = g.symbols();
    std::vector<bool> ok(syms.size(), false);
    for (SymbolId i = 0; i < syms.size(); ++i) {
        ok[i] = syms[i].is_terminal();
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& p : g.productions()) {
            if (ok[p.lhs]) {
                continue;
            }
            bool all = true;
            for_each_operand(p, [&](SymbolId s) { all = all && ok[s]; });
            if (all) {
                ok[p.lhs] = true;
                changed = true;
            }
        }
    }
    return ok;
}

auto usable(const Grammar& /*g*/, const Production& p, const std::vector<bool>& productive) -> bool
{
    bool all = true;
    for_each_operand(p, [&](SymbolId s) { all = all && productive[s]; });
    return all;
}

// Reachability restricted to productions whose operands are all productive.
auto useful_reach(const Grammar& g, SymbolId from, const std::vector<bool>& productive) -> std::vector<bool>
{
    std::vector<bool> seen(g.symbols().size(), false);
    std::vector<SymbolId> stack{from};
    seen[from] = true;
    while (!stack.empty()) {
        auto a = stack.back();
        stack.pop_back();
        if (g.symbol(a).kind != SymbolKind::nonterminal) {
            continue;
        }
        for (auto pi : g.productions_of(a)) {
            const auto& p = g.production(pi);
            if (!usable(g, p, productive)) {
                continue;
            }
            for_each_operand(p, [&](SymbolId s) {
                if (!seen[s]) {
                    seen[s] = true;
                    stack.push_back(s);
                }
            });
        }
    }
    return seen;
}

// True when the useful dependency graph reachable from `from` has a cycle.
auto cyclic_from(const Grammar& g, SymbolId from, const std::vector<bool>& productive, std::string* witness) -> bool
{
    enum class Mark { none, active, done };
    std::vector<Mark> mark(g.symbols().size(), Mark::none);
    std::function<bool(SymbolId)> dfs = [&](SymbolId a) -> bool {
        mark[a] = Mark::active;
        for (auto pi : g.productions_of(a)) {
            const auto& p = g.production(pi);
            if (!usable(g, p, productive)) {
                continue;
            }
            bool found = false;
            for_each_operand(p, [&](SymbolId s) {
                if (found || g.symbol(s).kind != SymbolKind::nonterminal) {
                    return;
                }
                if (mark[s] == Mark::active) {
                    if (witness != nullptr) {
                        *witness = g.symbol(s).name;
                    }
                    found = true;
                } else if (mark[s] == Mark::none && dfs(s)) {
                    found = true;
                }
            });
            if (found) {
                return true;
            }
        }
        mark[a] = Mark::done;
        return false;
    };
    return productive[from] && dfs(from);
}

struct Count {
    bool finite = true;
    cpp_int value;
};

auto count_from(const Grammar& g, SymbolId start) -> Count
{
    auto productive = productive_set(g);
    if (!productive[start]) {
        return {true, 0};
    }
    if (cyclic_from(g, start, productive, nullptr)) {
        return {false, 0};
    }
    std::vector<std::optional<cpp_int>> memo(g.symbols().size());
    std::function<cpp_int(SymbolId)> f = [&](SymbolId a) -> cpp_int {
        if (g.symbol(a).kind != SymbolKind::nonterminal) {
            return 1;
        }
        if (memo[a]) {
            return *memo[a];
        }
        cpp_int total = 0;
        for (auto pi : g.productions_of(a)) {
            const auto& p = g.production(pi);
            if (!usable(g, p, productive)) {
                continue;
            }
            cpp_int prod = f(p.head);
            for (SymbolId s : p.args) {
                prod *= f(s);
            }
            total += prod;
        }
        memo[a] = total;
        return total;
    };
    Count out{true, f(start)};

    auto reach = useful_reach(g, start, productive);
    for (const auto& b : g.bindings()) {
        auto id = g.find(b.placeholder);
        if (!id || !reach[*id]) {
            continue;
        }
        auto sub = count_from(*b.grammar, b.grammar->id_of(b.start));
        if (!sub.finite) {
            return {false, 0};
        }
        out.value *= sub.value;
    }
    return out;
}

} // namespace

auto log10_of(const cpp_int& value) -> double
{
    if (value <= 0) {
        return -std::numeric_limits<double>::infinity();
    }
    auto bits = boost::multiprecision::msb(value);
    if (bits < 60) {
        return std::log10(value.convert_to<double>());
    }
    auto shift = bits - 60;
    cpp_int top = value >> shift;
    return std::log10(top.convert_to<double>()) + static_cast<double>(shift) * std::log10(2.0);
}

auto count_space(const Grammar& g) -> SpaceSize
{
    auto c = count_from(g, g.start());
    SpaceSize out;
    out.finite = c.finite;
    if (c.finite) {
        out.exact = c.value;
        out.log10 = log10_of(c.value);
    } else {
        out.log10 = std::numeric_limits<double>::infinity();
    }
    return out;
}

auto reachable_nonterminals(const Grammar& g, SymbolId from) -> std::vector<bool>
{
    std::vector<bool> all(g.symbols().size(), true);
    auto seen = useful_reach(g, from, all);
    for (SymbolId i = 0; i < seen.size(); ++i) {
        seen[i] = seen[i] && g.symbol(i).kind == SymbolKind::nonterminal;
    }
    return seen;
}

auto has_infinite_language(const Grammar& g) -> bool
{
    return !count_space(g).finite;
}

namespace {

void diagnose(const Grammar& g, SymbolId start, const std::string& prefix, std::vector<Diagnostic>& out,
              std::set<std::string>& visited)
{
    if (!visited.insert(prefix + g.symbol(start).name).second) {
        return;
    }
    auto productive = productive_set(g);
    auto reach = reachable_nonterminals(g, start);
    for (SymbolId a : g.nonterminals()) {
        const auto& name = g.symbol(a).name;
        if (!reach[a]) {
            out.push_back({Diagnostic::Kind::unreachable, prefix + name, prefix + name + " is unreachable from "
                                                                              + g.symbol(start).name});
        }
        if (!productive[a]) {
            out.push_back({Diagnostic::Kind::unproductive, prefix + name, prefix + name + " has no terminating derivation"});
        }
    }
    std::string witness;
    if (cyclic_from(g, start, productive, &witness)) {
        out.push_back({Diagnostic::Kind::infinite_language, prefix + witness,
                       "language is infinite (" + prefix + witness + " is recursive)"});
    }
    for (const auto& b : g.bindings()) {
        diagnose(*b.grammar, b.grammar->id_of(b.start), b.grammar->name() + ".", out, visited);
    }
}

} // namespace

auto validate_grammar(const Grammar& g) -> std::vector<Diagnostic>
{
    std::vector<Diagnostic> out;
    std::set<std::string> visited;
    diagnose(g, g.start(), "", out, visited);
    return out;
}

} // namespace gramnas
