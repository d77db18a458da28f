#include "gramnas/assembly.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <sstream>

#include "gramnas/error.hpp"

namespace gramnas {

namespace {

class Assembler {
public:
    Assembler(const Grammar& g, int fold_level)
        : g_(g)
        , fold_(fold_level)
    {
    }

    auto run(const Term& t) -> ArchGraph
    {
        out_.nodes.assign(2, {});
        out_.input = 0;
        out_.output = 1;
        place(t.root, t, std::vector<int>{0, 1}, 1);
        out_.term = to_string(t);
        std::vector<int> indegree(out_.nodes.size(), 0);
        for (const auto& e : out_.edges) {
            ++indegree[static_cast<std::size_t>(e.head)];
        }
        for (std::size_t v = 0; v < out_.nodes.size(); ++v) {
            if (indegree[v] > 1 && !out_.nodes[v].contains("merge")) {
                out_.nodes[v]["merge"] = "sum";
            }
        }
        return std::move(out_);
    }

private:
    void leaf(const std::string& label, const Attributes& attrs, const std::vector<int>& at)
    {
        if (at.size() < 2) {
            throw AssemblyError("slot for '" + label + "' has fewer than two attachment nodes");
        }
        for (std::size_t i = 0; i + 1 < at.size(); ++i) {
            out_.edges.push_back({at[i], at.back(), label, attrs});
        }
    }

    void place(const Node& n, const Term& context, const std::vector<int>& at, int level)
    {
        switch (n.kind) {
        case Node::Kind::placeholder: {
            const Term* sub = context.binding(n.name);
            if (sub == nullptr) {
                throw AssemblyError("unbound placeholder '" + n.name + "'");
            }
            place(sub->root, *sub, at, level);
            return;
        }
        case Node::Kind::primitive: {
            const auto* attrs = g_.find_attributes(n.name);
            leaf(n.name, attrs != nullptr ? *attrs : Attributes{}, at);
            return;
        }
        case Node::Kind::folded: folded(n, at); return;
        case Node::Kind::op: break;
        }
        if (fold_ > 0 && level >= fold_) {
            folded(n, at);
            return;
        }
        const auto* t = g_.find_template(n.name);
        if (t == nullptr) {
            throw AssemblyError("no graph template for operator '" + n.name + "'");
        }
        if (t->arity() != n.children.size()) {
            throw AssemblyError("template '" + n.name + "' has " + std::to_string(t->arity()) + " slots, term has "
                                + std::to_string(n.children.size()) + " arguments");
        }
        if (t->ports.size() != at.size()) {
            throw AssemblyError("template '" + n.name + "' has " + std::to_string(t->ports.size())
                                + " ports but its slot provides " + std::to_string(at.size()));
        }
        std::vector<int> map(static_cast<std::size_t>(t->nodes), -1);
        for (std::size_t i = 0; i < t->ports.size(); ++i) {
            map[static_cast<std::size_t>(t->ports[i])] = at[i];
        }
        for (auto& m : map) {
            if (m < 0) {
                m = static_cast<int>(out_.nodes.size());
                out_.nodes.emplace_back();
            }
        }
        if (!t->merge.empty()) {
            out_.nodes[static_cast<std::size_t>(map[static_cast<std::size_t>(t->sink())])]["merge"] = t->merge;
        }
        for (std::size_t s = 0; s < t->slots.size(); ++s) {
            std::vector<int> child_at;
            child_at.reserve(t->slots[s].size());
            for (int v : t->slots[s]) {
                child_at.push_back(map[static_cast<std::size_t>(v)]);
            }
            place(n.children[s], context, child_at, level + 1);
        }
        for (const auto& e : t->fixed) {
            out_.edges.push_back(
                {map[static_cast<std::size_t>(e.tail)], map[static_cast<std::size_t>(e.head)], e.label, {}});
        }
    }

    void folded(const Node& n, const std::vector<int>& at)
    {
        Attributes attrs{{"folded", "true"}};
        if (!n.chain.empty()) {
            attrs["nt"] = n.chain.back().nonterminal;
        }
        leaf(n.name, attrs, at);
    }

    const Grammar& g_;
    int fold_;
    ArchGraph out_;
};

// Nodes reachable from `from` following edges forward (or backward).
auto reach(const ArchGraph& g, int from, bool forward) -> std::vector<bool>
{
    std::vector<std::vector<int>> adj(g.nodes.size());
    for (const auto& e : g.edges) {
        if (forward) {
            adj[static_cast<std::size_t>(e.tail)].push_back(e.head);
        } else {
            adj[static_cast<std::size_t>(e.head)].push_back(e.tail);
        }
    }
    std::vector<bool> seen(g.nodes.size(), false);
    std::vector<int> stack{from};
    seen[static_cast<std::size_t>(from)] = true;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : adj[static_cast<std::size_t>(v)]) {
            if (!seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = true;
                stack.push_back(w);
            }
        }
    }
    return seen;
}

} // namespace

auto assemble(const Term& t, const Grammar& g, int fold_level) -> ArchGraph
{
    return Assembler(g, fold_level).run(t);
}

auto prune_zero(const ArchGraph& g) -> ArchGraph
{
    ArchGraph live = g;
    std::erase_if(live.edges, [](const GraphEdge& e) { return e.label == "zero"; });
    auto from_input = reach(live, live.input, true);
    auto to_output = reach(live, live.output, false);
    std::vector<int> renumber(live.nodes.size(), -1);
    ArchGraph out;
    out.term = g.term;
    for (std::size_t v = 0; v < live.nodes.size(); ++v) {
        bool keep = (from_input[v] && to_output[v]) || static_cast<int>(v) == live.input
                    || static_cast<int>(v) == live.output;
        if (keep) {
            renumber[v] = static_cast<int>(out.nodes.size());
            out.nodes.push_back(live.nodes[v]);
        }
    }
    for (const auto& e : live.edges) {
        auto t = static_cast<std::size_t>(e.tail);
        auto h = static_cast<std::size_t>(e.head);
        if (renumber[t] >= 0 && renumber[h] >= 0 && from_input[t] && to_output[h]) {
            out.edges.push_back({renumber[t], renumber[h], e.label, e.attrs});
        }
    }
    out.input = renumber[static_cast<std::size_t>(live.input)];
    out.output = renumber[static_cast<std::size_t>(live.output)];
    return out;
}

auto is_connected(const ArchGraph& g) -> bool
{
    auto pruned = prune_zero(g);
    return reach(pruned, pruned.input, true)[static_cast<std::size_t>(pruned.output)];
}

auto topological_order(const ArchGraph& g) -> std::vector<int>
{
    std::vector<int> indegree(g.nodes.size(), 0);
    std::vector<std::vector<int>> adj(g.nodes.size());
    for (const auto& e : g.edges) {
        adj[static_cast<std::size_t>(e.tail)].push_back(e.head);
        ++indegree[static_cast<std::size_t>(e.head)];
    }
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (std::size_t v = 0; v < g.nodes.size(); ++v) {
        if (indegree[v] == 0) {
            ready.push(static_cast<int>(v));
        }
    }
    std::vector<int> order;
    while (!ready.empty()) {
        int v = ready.top();
        ready.pop();
        order.push_back(v);
        for (int w : adj[static_cast<std::size_t>(v)]) {
            if (--indegree[static_cast<std::size_t>(w)] == 0) {
                ready.push(w);
            }
        }
    }
    if (order.size() != g.nodes.size()) {
        throw AssemblyError("graph has a cycle");
    }
    return order;
}

auto graph_stats(const ArchGraph& g) -> GraphStats
{
    auto p = prune_zero(g);
    GraphStats s;
    s.nodes = p.node_count();
    s.edges = static_cast<int>(p.edges.size());
    for (const auto& e : p.edges) {
        ++s.labels[e.label];
    }
    if (!reach(p, p.input, true)[static_cast<std::size_t>(p.output)]) {
        return s;
    }
    constexpr int none = std::numeric_limits<int>::min() / 4;
    auto n = p.nodes.size();
    std::vector<int> longest(n, none);
    std::vector<int> lo(n, std::numeric_limits<int>::max() / 4);
    std::vector<int> hi(n, none);
    longest[static_cast<std::size_t>(p.input)] = 0;
    lo[static_cast<std::size_t>(p.input)] = 0;
    hi[static_cast<std::size_t>(p.input)] = 0;
    std::vector<std::vector<const GraphEdge*>> out(n);
    for (const auto& e : p.edges) {
        out[static_cast<std::size_t>(e.tail)].push_back(&e);
    }
    for (int v : topological_order(p)) {
        auto vi = static_cast<std::size_t>(v);
        if (longest[vi] == none) {
            continue;
        }
        for (const auto* e : out[vi]) {
            auto w = static_cast<std::size_t>(e->head);
            int down = e->attrs.contains("downsample") ? 1 : 0;
            longest[w] = std::max(longest[w], longest[vi] + 1);
            lo[w] = std::min(lo[w], lo[vi] + down);
            hi[w] = std::max(hi[w], hi[vi] + down);
        }
    }
    auto o = static_cast<std::size_t>(p.output);
    s.longest_path = longest[o];
    s.min_downsample = lo[o];
    s.max_downsample = hi[o];
    return s;
}

auto to_json(const ArchGraph& g) -> nlohmann::json
{
    nlohmann::json j;
    j["schema"] = "archgraph/1";
    auto nodes = nlohmann::json::array();
    for (std::size_t v = 0; v < g.nodes.size(); ++v) {
        nodes.push_back({{"id", v}, {"attrs", g.nodes[v]}});
    }
    j["nodes"] = std::move(nodes);
    auto edges = nlohmann::json::array();
    for (const auto& e : g.edges) {
        edges.push_back({{"tail", e.tail}, {"head", e.head}, {"label", e.label}, {"attrs", e.attrs}});
    }
    j["edges"] = std::move(edges);
    j["input"] = g.input;
    j["output"] = g.output;
    j["meta"] = {{"term_string", g.term}, {"downsample_count", graph_stats(g).max_downsample}};
    return j;
}

auto graph_from_json(const nlohmann::json& j) -> ArchGraph
{
    if (j.value("schema", "") != "archgraph/1") {
        throw Error("expected an archgraph/1 document");
    }
    ArchGraph g;
    for (const auto& n : j.at("nodes")) {
        auto id = n.at("id").get<std::size_t>();
        if (id != g.nodes.size()) {
            throw Error("archgraph node ids must be 0..n-1 in order");
        }
        g.nodes.push_back(n.value("attrs", Attributes{}));
    }
    for (const auto& e : j.at("edges")) {
        GraphEdge edge{e.at("tail").get<int>(), e.at("head").get<int>(), e.at("label").get<std::string>(),
                       e.value("attrs", Attributes{})};
        if (edge.tail < 0 || edge.head < 0 || edge.tail >= g.node_count() || edge.head >= g.node_count()) {
            throw Error("archgraph edge endpoint out of range");
        }
        g.edges.push_back(std::move(edge));
    }
    g.input = j.at("input").get<int>();
    g.output = j.at("output").get<int>();
    if (j.contains("meta")) {
        g.term = j["meta"].value("term_string", "");
    }
    return g;
}

auto to_dot(const ArchGraph& g) -> std::string
{
    auto quote = [](const std::string& s) {
        std::string out = "\"";
        for (char c : s) {
            if (c == '"' || c == '\\') {
                out += '\\';
            }
            out += c;
        }
        return out + "\"";
    };
    std::ostringstream out;
    out << "digraph arch {\n  rankdir=LR;\n";
    for (std::size_t v = 0; v < g.nodes.size(); ++v) {
        out << "  n" << v;
        if (static_cast<int>(v) == g.input) {
            out << " [label=\"in\", shape=box]";
        } else if (static_cast<int>(v) == g.output) {
            out << " [label=\"out\", shape=box]";
        } else {
            out << " [label=\"\", shape=circle, width=0.2]";
        }
        out << ";\n";
    }
    for (const auto& e : g.edges) {
        out << "  n" << e.tail << " -> n" << e.head << " [label=" << quote(e.label) << "];\n";
    }
    out << "}\n";
    return out.str();
}

} // namespace gramnas
