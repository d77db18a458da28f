#include "gramnas/sampler.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <mutex>
#include <set>

#include "gramnas/error.hpp"

namespace gramnas {

// ---------------------------------------------------------------------------
// Port reachability

auto leaf_reach(std::string_view label, std::size_t ports) -> PortReach
{
    if (label == "zero" || ports < 2) {
        return 0;
    }
    PortReach r = 0;
    for (std::size_t i = 0; i + 1 < ports; ++i) {
        r |= reach_bit(i, ports - 1);
    }
    return r;
}

auto reach_connected(PortReach r, std::size_t ports) -> bool
{
    return ports >= 2 && (r & reach_bit(0, ports - 1)) != 0;
}

namespace {

using Mask = std::uint64_t;

auto template_adjacency(const GraphTemplate& t, std::span<const PortReach> children) -> std::vector<Mask>
{
    if (t.nodes > 64 || t.ports.size() > 8) {
        throw Error("template '" + t.name + "' is too large for reachability summaries");
    }
    std::vector<Mask> adj(static_cast<std::size_t>(t.nodes), 0);
    for (std::size_t s = 0; s < t.slots.size() && s < children.size(); ++s) {
        const auto& a = t.slots[s];
        for (std::size_t i = 0; i < a.size(); ++i) {
            for (std::size_t j = 0; j < a.size(); ++j) {
                if (i != j && (children[s] & reach_bit(i, j)) != 0) {
                    adj[static_cast<std::size_t>(a[i])] |= Mask{1} << a[j];
                }
            }
        }
    }
    for (const auto& e : t.fixed) {
        if (e.label != "zero") {
            adj[static_cast<std::size_t>(e.tail)] |= Mask{1} << e.head;
        }
    }
    return adj;
}

auto closure(const std::vector<Mask>& adj, Mask start) -> Mask
{
    Mask seen = start;
    Mask frontier = start;
    while (frontier != 0) {
        Mask next = 0;
        while (frontier != 0) {
            auto v = static_cast<std::size_t>(std::countr_zero(frontier));
            frontier &= frontier - 1;
            next |= adj[v];
        }
        frontier = next & ~seen;
        seen |= next;
    }
    return seen;
}

} // namespace

auto compose_reach(const GraphTemplate& t, std::span<const PortReach> children) -> PortReach
{
    auto adj = template_adjacency(t, children);
    PortReach out = 0;
    for (std::size_t i = 0; i < t.ports.size(); ++i) {
        auto seen = closure(adj, Mask{1} << t.ports[i]);
        for (std::size_t j = 0; j < t.ports.size(); ++j) {
            if (i != j && t.ports[i] != t.ports[j] && (seen & (Mask{1} << t.ports[j])) != 0) {
                out |= reach_bit(i, j);
            }
        }
    }
    return out;
}

auto full_nodes_hook(const GraphTemplate& t, std::span<const PortReach> children) -> bool
{
    auto adj = template_adjacency(t, children);
    std::vector<Mask> rev(adj.size(), 0);
    for (std::size_t v = 0; v < adj.size(); ++v) {
        for (Mask m = adj[v]; m != 0; m &= m - 1) {
            rev[static_cast<std::size_t>(std::countr_zero(m))] |= Mask{1} << v;
        }
    }
    auto forward = closure(adj, Mask{1} << t.source());
    auto backward = closure(rev, Mask{1} << t.sink());
    Mask all = t.nodes == 64 ? ~Mask{0} : (Mask{1} << t.nodes) - 1;
    return (forward & backward & all) == all;
}

namespace {

auto template_for(const Grammar& g, const std::string& op) -> const GraphTemplate&
{
    const auto* t = g.find_template(op);
    if (t == nullptr) {
        throw Error("no graph template for operator '" + op + "'");
    }
    return *t;
}

} // namespace

auto node_reach(const Node& n, const Term& context, const Grammar& g, std::size_t ports) -> PortReach
{
    switch (n.kind) {
    case Node::Kind::placeholder:
        if (const Term* sub = context.binding(n.name)) {
            return node_reach(sub->root, *sub, g, ports);
        }
        return leaf_reach(n.name, ports);
    case Node::Kind::primitive:
    case Node::Kind::folded: return leaf_reach(n.name, ports);
    case Node::Kind::op: break;
    }
    const auto& t = template_for(g, n.name);
    std::vector<PortReach> children;
    children.reserve(n.children.size());
    for (std::size_t i = 0; i < n.children.size(); ++i) {
        children.push_back(node_reach(n.children[i], context, g, t.slots.at(i).size()));
    }
    return compose_reach(t, children);
}

// ---------------------------------------------------------------------------
// Hooks

namespace {

auto hook_registry() -> std::pair<std::mutex&, std::map<std::string, ConstraintHook, std::less<>>&>
{
    static std::mutex mutex;
    static std::map<std::string, ConstraintHook, std::less<>> hooks{{"full_nodes", full_nodes_hook}};
    return {mutex, hooks};
}

} // namespace

void register_hook(const std::string& name, ConstraintHook hook)
{
    auto [mutex, hooks] = hook_registry();
    std::lock_guard lock(mutex);
    hooks[name] = std::move(hook);
}

auto find_hook(std::string_view name) -> std::optional<ConstraintHook>
{
    auto [mutex, hooks] = hook_registry();
    std::lock_guard lock(mutex);
    auto it = hooks.find(name);
    if (it == hooks.end()) {
        return std::nullopt;
    }
    return it->second;
}

namespace {

// Constraint scopes resolved to symbol ids.
struct ConstraintIndex {
    std::vector<bool> conn;
    std::vector<std::vector<ConstraintHook>> hooks;
    std::vector<std::pair<std::size_t, std::vector<bool>>> counts; // (n, scope)

    explicit ConstraintIndex(const Grammar& g)
    {
        auto n = g.symbols().size();
        conn.assign(n, false);
        hooks.assign(n, {});
        for (const auto& c : g.constraints()) {
            std::vector<bool> scope(n, false);
            for (SymbolId s = 0; s < n; ++s) {
                scope[s] = g.symbol(s).kind == SymbolKind::nonterminal && c.applies_to(g.symbol(s).name);
            }
            switch (c.kind) {
            case ConstraintSpec::Kind::connectivity:
                for (SymbolId s = 0; s < n; ++s) {
                    conn[s] = conn[s] || scope[s];
                }
                break;
            case ConstraintSpec::Kind::custom_hook: {
                auto hook = find_hook(c.hook);
                if (!hook) {
                    throw Error("unknown constraint hook '" + c.hook + "'");
                }
                for (SymbolId s = 0; s < n; ++s) {
                    if (scope[s]) {
                        hooks[s].push_back(*hook);
                    }
                }
                break;
            }
            case ConstraintSpec::Kind::derivation_count: counts.emplace_back(c.count, std::move(scope)); break;
            }
        }
    }
};

struct Checker {
    const Grammar& g;
    const Grammar& root_grammar;
    const Term& context;
    ConstraintIndex index;
    std::vector<std::size_t> counts;
    bool ok = true;

    Checker(const Grammar& grammar, const Grammar& templates, const Term& t)
        : g(grammar)
        , root_grammar(templates)
        , context(t)
        , index(grammar)
        , counts(index.counts.size(), 0)
    {
    }

    auto visit(const Node& n, std::size_t ports) -> PortReach
    {
        PortReach r = 0;
        std::vector<PortReach> children;
        const GraphTemplate* t = nullptr;
        if (n.kind == Node::Kind::op) {
            t = &template_for(root_grammar, n.name);
            for (std::size_t i = 0; i < n.children.size(); ++i) {
                children.push_back(visit(n.children[i], t->slots.at(i).size()));
            }
            r = compose_reach(*t, children);
        } else {
            r = node_reach(n, context, root_grammar, ports);
        }
        for (const auto& a : n.chain) {
            auto id = g.find(a.nonterminal);
            if (!id) {
                ok = false;
                continue;
            }
            if (index.conn[*id] && !reach_connected(r, ports)) {
                ok = false;
            }
            if (t != nullptr) {
                for (const auto& hook : index.hooks[*id]) {
                    ok = ok && hook(*t, children);
                }
            }
            for (std::size_t c = 0; c < index.counts.size(); ++c) {
                counts[c] += index.counts[c].second[*id] ? 1 : 0;
            }
        }
        return r;
    }
};

auto satisfies_in(const Term& t, const Grammar& g, const Grammar& templates) -> bool
{
    Checker check(g, templates, t);
    check.visit(t.root, 2);
    if (!check.ok) {
        return false;
    }
    for (std::size_t c = 0; c < check.counts.size(); ++c) {
        if (check.counts[c] != check.index.counts[c].first) {
            return false;
        }
    }
    for (const auto& b : t.bindings) {
        const auto* gb = g.binding(b.placeholder);
        if (gb == nullptr || !satisfies_in(*b.term, *gb->grammar, templates)) {
            return false;
        }
    }
    return true;
}

} // namespace

auto satisfies_constraints(const Term& t, const Grammar& g) -> bool
{
    return satisfies_in(t, g, g);
}

// ---------------------------------------------------------------------------
// Sampler

namespace {

constexpr std::uint8_t kConn = 1;
constexpr std::uint8_t kDisc = 2;
constexpr int kFreeAttempts = 8;
constexpr int kSampleAttempts = 200;
constexpr int kUnreachable = 1 << 20;

enum class Want { any, conn, disc };

auto admits(std::uint8_t feas, Want want) -> bool
{
    switch (want) {
    case Want::any: return feas != 0;
    case Want::conn: return (feas & kConn) != 0;
    case Want::disc: return (feas & kDisc) != 0;
    }
    return false;
}

auto has_placeholders(const Grammar& g) -> bool
{
    return std::any_of(g.symbols().begin(), g.symbols().end(),
                       [](const Symbol& s) { return s.kind == SymbolKind::placeholder_terminal; });
}

} // namespace

struct Sampler::Tables {
    int depth = 0;
    // [symbol][d]: which outcomes (kConn | kDisc) a derivation within d levels can have.
    std::vector<std::vector<std::uint8_t>> feas;
    // [production][d]
    std::vector<std::vector<std::uint8_t>> prod;
    std::vector<int> min_depth;
    std::vector<PortReach> placeholder_reach;
    ConstraintIndex index;

    explicit Tables(const Grammar& g)
        : index(g)
    {
    }
};

struct Sampler::Context {
    const Sampler& self;
    const Tables& tables;
    const Term& bound; // root unused; carries the bindings
    Rng& rng;
    std::vector<std::size_t> counts;

    struct Result {
        Node node;
        PortReach reach = 0;
    };

    auto terminal(SymbolId s, std::size_t ports) -> Result
    {
        const auto& sym = self.g_.symbol(s);
        Result r;
        r.node.name = sym.name;
        if (sym.kind == SymbolKind::placeholder_terminal) {
            r.node.kind = Node::Kind::placeholder;
            const Term* sub = bound.binding(sym.name);
            r.reach = sub != nullptr ? node_reach(sub->root, *sub, self.g_, ports) : leaf_reach(sym.name, ports);
        } else {
            r.node.kind = Node::Kind::primitive;
            r.reach = leaf_reach(sym.name, ports);
        }
        return r;
    }

    auto gen(SymbolId nt, int budget, Want want, std::vector<const ConstraintHook*> hooks, std::size_t ports) -> Result
    {
        const auto& g = self.g_;
        if (tables.index.conn[nt]) {
            want = Want::conn;
        }
        for (const auto& h : tables.index.hooks[nt]) {
            hooks.push_back(&h);
        }
        const auto& options = g.productions_of(nt);
        std::vector<double> weights(options.size(), 0.0);
        bool any = false;
        for (std::size_t i = 0; i < options.size(); ++i) {
            if (budget >= 0 && budget <= tables.depth && admits(tables.prod[options[i]][static_cast<std::size_t>(budget)], want)) {
                weights[i] = g.production(options[i]).weight;
                any = true;
            }
        }
        if (!any) {
            throw Unsatisfiable(g.symbol(nt).name, budget);
        }
        auto pi = options[rng.weighted(weights)];
        for (std::size_t c = 0; c < tables.index.counts.size(); ++c) {
            counts[c] += tables.index.counts[c].second[nt] ? 1 : 0;
        }
        auto r = produce(pi, budget, want, std::move(hooks), ports);
        r.node.chain.insert(r.node.chain.begin(), Annotation{g.symbol(nt).name, pi});
        return r;
    }

    auto meets(const GraphTemplate& t, const Result& r, std::span<const PortReach> children, Want want,
               const std::vector<const ConstraintHook*>& hooks) const -> bool
    {
        bool connected = reach_connected(r.reach, t.ports.size());
        if ((want == Want::conn && !connected) || (want == Want::disc && connected)) {
            return false;
        }
        return std::all_of(hooks.begin(), hooks.end(), [&](const ConstraintHook* h) { return (*h)(t, children); });
    }

    auto produce(std::size_t pi, int budget, Want want, std::vector<const ConstraintHook*> hooks, std::size_t ports) -> Result
    {
        const auto& g = self.g_;
        const auto& p = g.production(pi);
        const auto& head = g.symbol(p.head);
        if (head.kind == SymbolKind::nonterminal) {
            return gen(p.head, budget, want, std::move(hooks), ports);
        }
        if (head.kind != SymbolKind::operator_terminal) {
            return terminal(p.head, ports);
        }
        const auto& t = template_for(g, head.name);
        auto child_budget = static_cast<std::size_t>(budget - 1);
        auto build = [&](auto&& want_of) {
            Result r;
            r.node.kind = Node::Kind::op;
            r.node.name = head.name;
            r.node.children.reserve(p.args.size());
            std::vector<PortReach> reaches;
            reaches.reserve(p.args.size());
            for (std::size_t i = 0; i < p.args.size(); ++i) {
                auto k = t.slots[i].size();
                auto child = g.symbol(p.args[i]).kind == SymbolKind::nonterminal ? gen(p.args[i], budget - 1, want_of(i), {}, k)
                                                                                  : terminal(p.args[i], k);
                reaches.push_back(child.reach);
                r.node.children.push_back(std::move(child.node));
            }
            r.reach = compose_reach(t, reaches);
            return std::make_pair(std::move(r), std::move(reaches));
        };
        for (int attempt = 0; attempt < kFreeAttempts; ++attempt) {
            auto [r, reaches] = build([](std::size_t) { return Want::any; });
            if (meets(t, r, reaches, want, hooks)) {
                return std::move(r);
            }
        }
        // Extreme assignment: by monotonicity it meets the requirement
        // whenever any assignment does.
        auto forced = [&](std::size_t i) {
            auto feas = tables.feas[p.args[i]][child_budget];
            if (want == Want::disc) {
                return (feas & kDisc) != 0 ? Want::disc : Want::conn;
            }
            return (feas & kConn) != 0 ? Want::conn : Want::disc;
        };
        auto [r, reaches] = build(forced);
        if (meets(t, r, reaches, want, hooks)) {
            return std::move(r);
        }
        throw Unsatisfiable(g.symbol(p.lhs).name, budget);
    }
};

Sampler::Sampler(const Grammar& g, int max_depth, std::optional<SymbolId> start)
    : g_(g)
    , max_depth_(max_depth)
    , start_(start.value_or(g.start()))
{
    if (max_depth < 1) {
        throw Error("max depth must be at least 1");
    }
    for (const auto& b : g.bindings()) {
        binding_samplers_.push_back(std::make_unique<Sampler>(*b.grammar, max_depth, b.grammar->id_of(b.start)));
    }
    if (!has_placeholders(g)) {
        static_tables_ = tables_for({});
    }
}

Sampler::~Sampler() = default;
Sampler::Sampler(Sampler&&) noexcept = default;

auto Sampler::tables_for(const std::vector<TermBinding>& bindings) const -> std::shared_ptr<const Tables>
{
    const auto& g = g_;
    auto tables = std::make_shared<Tables>(g);
    auto& tb = *tables;
    const auto n = g.symbols().size();
    const auto D = static_cast<std::size_t>(max_depth_);
    tb.depth = max_depth_;
    tb.feas.assign(n, std::vector<std::uint8_t>(D + 1, 0));
    tb.prod.assign(g.productions().size(), std::vector<std::uint8_t>(D + 1, 0));
    tb.placeholder_reach.assign(n, 0);

    Term context;
    context.bindings = bindings;
    for (SymbolId s = 0; s < n; ++s) {
        const auto& sym = g.symbol(s);
        if (sym.kind == SymbolKind::nonterminal || sym.kind == SymbolKind::operator_terminal) {
            continue;
        }
        std::size_t need = 1;
        bool conn = leaf_reach(sym.name, 2) != 0;
        if (sym.kind == SymbolKind::placeholder_terminal) {
            const Term* sub = context.binding(sym.name);
            if (sub == nullptr) {
                continue; // unbound: never admissible
            }
            need = static_cast<std::size_t>(depth(*sub));
            tb.placeholder_reach[s] = node_reach(sub->root, *sub, g, 2);
            conn = reach_connected(tb.placeholder_reach[s], 2);
        }
        for (std::size_t d = need; d <= D; ++d) {
            tb.feas[s][d] = conn ? kConn : kDisc;
        }
    }

    auto production_feas = [&](const Production& p, std::size_t d) -> std::uint8_t {
        const auto& head = g.symbol(p.head);
        if (head.kind != SymbolKind::operator_terminal) {
            return tb.feas[p.head][d];
        }
        if (d < 1) {
            return 0;
        }
        const auto& t = template_for(g, head.name);
        std::vector<PortReach> hi(p.args.size());
        std::vector<PortReach> lo(p.args.size());
        for (std::size_t i = 0; i < p.args.size(); ++i) {
            auto o = tb.feas[p.args[i]][d - 1];
            if (o == 0) {
                return 0;
            }
            auto full = leaf_reach("", t.slots[i].size());
            hi[i] = (o & kConn) != 0 ? full : 0;
            lo[i] = (o & kDisc) != 0 ? 0 : full;
        }
        std::uint8_t out = 0;
        if (reach_connected(compose_reach(t, hi), t.ports.size())) {
            out |= kConn;
        }
        if (!reach_connected(compose_reach(t, lo), t.ports.size())) {
            out |= kDisc;
        }
        return out;
    };

    for (std::size_t d = 1; d <= D; ++d) {
        bool changed = true;
        while (changed) {
            changed = false;
            for (std::size_t pi = 0; pi < g.productions().size(); ++pi) {
                const auto& p = g.production(pi);
                auto f = production_feas(p, d);
                tb.prod[pi][d] = f;
                auto merged = static_cast<std::uint8_t>(tb.feas[p.lhs][d] | f);
                if (tb.index.conn[p.lhs]) {
                    merged &= kConn;
                }
                if (merged != tb.feas[p.lhs][d]) {
                    tb.feas[p.lhs][d] = merged;
                    changed = true;
                }
            }
        }
    }
    tb.min_depth.assign(n, kUnreachable);
    for (SymbolId s = 0; s < n; ++s) {
        for (std::size_t d = 0; d <= D; ++d) {
            if (tb.feas[s][d] != 0) {
                tb.min_depth[s] = static_cast<int>(d);
                break;
            }
        }
    }
    return tables;
}

auto Sampler::min_depth(SymbolId nt) const -> int
{
    if (static_tables_) {
        return static_tables_->min_depth.at(nt);
    }
    return tables_for({})->min_depth.at(nt);
}

auto Sampler::binding_sampler(std::string_view placeholder) const -> const Sampler*
{
    const auto& declared = g_.bindings();
    for (std::size_t i = 0; i < declared.size(); ++i) {
        if (declared[i].placeholder == placeholder) {
            return binding_samplers_[i].get();
        }
    }
    return nullptr;
}

void Sampler::bind_all(std::vector<TermBinding>& bindings, Rng& rng) const
{
    const auto& declared = g_.bindings();
    std::vector<TermBinding> ordered;
    ordered.reserve(declared.size());
    for (std::size_t i = 0; i < declared.size(); ++i) {
        auto it = std::find_if(bindings.begin(), bindings.end(),
                               [&](const TermBinding& b) { return b.placeholder == declared[i].placeholder; });
        if (it != bindings.end()) {
            ordered.push_back(*it);
        } else {
            ordered.push_back({declared[i].placeholder, std::make_shared<const Term>(binding_samplers_[i]->sample(rng))});
        }
    }
    bindings = std::move(ordered);
}

auto Sampler::sample_subtree(SymbolId nt, int budget, std::vector<TermBinding>& bindings, Rng& rng) const -> Node
{
    bind_all(bindings, rng);
    auto tables = static_tables_ ? static_tables_ : tables_for(bindings);
    Term context;
    context.bindings = bindings;
    Context ctx{*this, *tables, context, rng, std::vector<std::size_t>(tables->index.counts.size(), 0)};
    return ctx.gen(nt, std::min(budget, max_depth_), Want::any, {}, 2).node;
}

auto Sampler::sample(Rng& rng) const -> Term
{
    std::optional<Unsatisfiable> last;
    for (int attempt = 0; attempt < kSampleAttempts; ++attempt) {
        Term t;
        bind_all(t.bindings, rng);
        auto tables = static_tables_ ? static_tables_ : tables_for(t.bindings);
        if (!admits(tables->feas[start_][static_cast<std::size_t>(max_depth_)], Want::any)) {
            Unsatisfiable e(g_.symbol(start_).name, max_depth_);
            if (static_tables_) {
                throw e;
            }
            last = e;
            continue;
        }
        Context ctx{*this, *tables, t, rng, std::vector<std::size_t>(tables->index.counts.size(), 0)};
        try {
            t.root = ctx.gen(start_, max_depth_, Want::any, {}, 2).node;
        } catch (const Unsatisfiable& e) {
            last = e;
            continue;
        }
        bool counts_ok = true;
        for (std::size_t c = 0; c < ctx.counts.size(); ++c) {
            counts_ok = counts_ok && ctx.counts[c] == tables->index.counts[c].first;
        }
        if (!counts_ok) {
            last = Unsatisfiable(g_.symbol(start_).name, max_depth_);
            continue;
        }
        prune_bindings(t);
        return t;
    }
    throw *last;
}

auto sample_term(const Grammar& g, Rng& rng, int max_depth) -> Term
{
    return Sampler(g, max_depth).sample(rng);
}

namespace {

void collect_placeholders(const Node& n, std::set<std::string>& out)
{
    if (n.kind == Node::Kind::placeholder) {
        out.insert(n.name);
    }
    for (const auto& c : n.children) {
        collect_placeholders(c, out);
    }
}

} // namespace

void prune_bindings(Term& t)
{
    std::set<std::string> used;
    collect_placeholders(t.root, used);
    std::erase_if(t.bindings, [&](const TermBinding& b) { return !used.contains(b.placeholder); });
}

// ---------------------------------------------------------------------------
// Enumeration

namespace {

class Enumerator {
public:
    Enumerator(const Grammar& g, std::size_t cap)
        : g_(g)
        , index_(g)
        , cap_(cap)
    {
    }

    auto list(SymbolId nt, int budget) -> const std::vector<Node>&
    {
        auto key = std::make_pair(nt, budget);
        if (auto it = memo_.find(key); it != memo_.end()) {
            return it->second;
        }
        std::vector<Node> out;
        if (budget >= 1) {
            memo_[key]; // guards unit cycles: a re-entrant lookup sees an empty list
            for (auto pi : g_.productions_of(nt)) {
                if (out.size() >= cap_) {
                    break;
                }
                expand_production(nt, pi, budget, out);
            }
        }
        auto& slot = memo_[key];
        slot = std::move(out);
        return slot;
    }

private:
    auto local_ok(const Node& n, SymbolId nt) -> bool
    {
        const GraphTemplate* t = nullptr;
        std::vector<PortReach> children;
        if (n.kind == Node::Kind::op) {
            t = &template_for(g_, n.name);
            for (std::size_t i = 0; i < n.children.size(); ++i) {
                children.push_back(node_reach(n.children[i], empty_, g_, t->slots[i].size()));
            }
        }
        if (index_.conn[nt]) {
            auto r = t != nullptr ? compose_reach(*t, children) : node_reach(n, empty_, g_, 2);
            if (!reach_connected(r, 2)) {
                return false;
            }
        }
        if (t != nullptr) {
            for (const auto& h : index_.hooks[nt]) {
                if (!h(*t, children)) {
                    return false;
                }
            }
        }
        return true;
    }

    void push(Node n, SymbolId nt, std::size_t pi, std::vector<Node>& out)
    {
        n.chain.insert(n.chain.begin(), Annotation{g_.symbol(nt).name, pi});
        if (local_ok(n, nt)) {
            out.push_back(std::move(n));
        }
    }

    auto leaf(SymbolId s) const -> Node
    {
        Node n;
        n.name = g_.symbol(s).name;
        n.kind = g_.symbol(s).kind == SymbolKind::placeholder_terminal ? Node::Kind::placeholder : Node::Kind::primitive;
        return n;
    }

    void expand_production(SymbolId nt, std::size_t pi, int budget, std::vector<Node>& out)
    {
        const auto& p = g_.production(pi);
        const auto& head = g_.symbol(p.head);
        if (head.kind == SymbolKind::nonterminal) {
            auto inner = list(p.head, budget); // copy: memo may rehash
            for (auto& n : inner) {
                if (out.size() >= cap_) {
                    return;
                }
                push(std::move(n), nt, pi, out);
            }
            return;
        }
        if (head.kind != SymbolKind::operator_terminal) {
            push(leaf(p.head), nt, pi, out);
            return;
        }
        std::vector<std::vector<Node>> options;
        for (SymbolId a : p.args) {
            if (g_.symbol(a).kind == SymbolKind::nonterminal) {
                options.push_back(list(a, budget - 1));
            } else {
                options.push_back({leaf(a)});
            }
            if (options.back().empty()) {
                return;
            }
        }
        std::vector<std::size_t> at(options.size(), 0);
        while (out.size() < cap_) {
            Node n;
            n.kind = Node::Kind::op;
            n.name = head.name;
            for (std::size_t i = 0; i < options.size(); ++i) {
                n.children.push_back(options[i][at[i]]);
            }
            push(std::move(n), nt, pi, out);
            // Odometer: last argument varies fastest.
            std::size_t i = options.size();
            while (i > 0) {
                --i;
                if (++at[i] < options[i].size()) {
                    break;
                }
                at[i] = 0;
                if (i == 0) {
                    return;
                }
            }
        }
    }

    const Grammar& g_;
    ConstraintIndex index_;
    std::size_t cap_;
    Term empty_;
    std::map<std::pair<SymbolId, int>, std::vector<Node>> memo_;
};

auto enumerate_from(const Grammar& g, SymbolId start, std::size_t limit, int max_depth) -> Enumeration
{
    bool exact_caps = !has_placeholders(g) && g.constraints().end()
                                                 == std::find_if(g.constraints().begin(), g.constraints().end(),
                                                                 [](const ConstraintSpec& c) {
                                                                     return c.kind == ConstraintSpec::Kind::derivation_count;
                                                                 });
    auto cap = exact_caps ? limit + 1 : std::numeric_limits<std::size_t>::max();
    Enumerator e(g, cap);
    const auto& roots = e.list(start, max_depth);

    std::vector<Enumeration> subs(g.bindings().size());
    std::vector<bool> ready(g.bindings().size(), false);

    Enumeration out;
    for (const auto& root : roots) {
        Term base;
        base.root = root;
        std::set<std::string> used;
        collect_placeholders(root, used);
        std::vector<std::size_t> active;
        for (std::size_t b = 0; b < g.bindings().size(); ++b) {
            const auto& decl = g.bindings()[b];
            if (!used.contains(decl.placeholder)) {
                continue;
            }
            if (!ready[b]) {
                subs[b] = enumerate_from(*decl.grammar, decl.grammar->id_of(decl.start), limit, max_depth);
                ready[b] = true;
            }
            active.push_back(b);
        }
        std::vector<std::size_t> at(active.size(), 0);
        while (true) {
            for (std::size_t i = 0; i < active.size(); ++i) {
                if (subs[active[i]].terms.empty()) {
                    goto next_root;
                }
            }
            {
                Term t;
                t.root = root;
                for (std::size_t i = 0; i < active.size(); ++i) {
                    const auto& decl = g.bindings()[active[i]];
                    t.bindings.push_back(
                        {decl.placeholder, std::make_shared<const Term>(subs[active[i]].terms[at[i]])});
                }
                if (satisfies_constraints(t, g)) {
                    if (out.terms.size() == limit) {
                        out.truncated = true;
                        return out;
                    }
                    out.terms.push_back(std::move(t));
                }
            }
            {
                std::size_t i = active.size();
                bool wrapped = true;
                while (i > 0) {
                    --i;
                    if (++at[i] < subs[active[i]].terms.size()) {
                        wrapped = false;
                        break;
                    }
                    at[i] = 0;
                }
                if (wrapped) {
                    break;
                }
            }
        }
    next_root:;
    }
    return out;
}

} // namespace

auto enumerate_terms(const Grammar& g, std::size_t limit, int max_depth) -> Enumeration
{
    return enumerate_from(g, g.start(), limit, max_depth);
}

} // namespace gramnas
