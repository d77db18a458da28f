#include "gramnas/graph_template.hpp"

#include <algorithm>
#include <charconv>
#include <queue>

namespace gramnas {

auto GraphTemplate::check() const -> std::string
{
    if (nodes < 2) {
        return "template needs at least two nodes";
    }
    if (ports.size() < 2) {
        return "template needs at least two ports";
    }
    auto in_range = [&](int v) { return v >= 0 && v < nodes; };
    if (!std::all_of(ports.begin(), ports.end(), in_range)) {
        return "port out of range";
    }
    std::vector<std::vector<int>> adjacency(static_cast<std::size_t>(nodes));
    std::vector<int> indegree(static_cast<std::size_t>(nodes), 0);
    std::vector<int> outdegree(static_cast<std::size_t>(nodes), 0);
    auto add = [&](int tail, int head) {
        adjacency[static_cast<std::size_t>(tail)].push_back(head);
        ++indegree[static_cast<std::size_t>(head)];
        ++outdegree[static_cast<std::size_t>(tail)];
    };
    for (const auto& slot : slots) {
        if (slot.size() < 2) {
            return "slot needs at least two attachment nodes";
        }
        if (!std::all_of(slot.begin(), slot.end(), in_range)) {
            return "slot attachment out of range";
        }
        for (std::size_t i = 0; i + 1 < slot.size(); ++i) {
            add(slot[i], slot.back());
        }
    }
    for (const auto& edge : fixed) {
        if (!in_range(edge.tail) || !in_range(edge.head)) {
            return "fixed edge out of range";
        }
        add(edge.tail, edge.head);
    }
    if (indegree[static_cast<std::size_t>(source())] != 0) {
        return "source has incoming edges";
    }
    if (outdegree[static_cast<std::size_t>(sink())] != 0) {
        return "sink has outgoing edges";
    }
    // Kahn's algorithm; leftover nodes mean a cycle.
    std::queue<int> ready;
    auto remaining = indegree;
    for (int v = 0; v < nodes; ++v) {
        if (remaining[static_cast<std::size_t>(v)] == 0) {
            ready.push(v);
        }
    }
    int visited = 0;
    while (!ready.empty()) {
        int v = ready.front();
        ready.pop();
        ++visited;
        for (int w : adjacency[static_cast<std::size_t>(v)]) {
            if (--remaining[static_cast<std::size_t>(w)] == 0) {
                ready.push(w);
            }
        }
    }
    if (visited != nodes) {
        return "template is not acyclic";
    }
    return {};
}

auto chain_template(std::string name, int length) -> GraphTemplate
{
    GraphTemplate t;
    t.name = std::move(name);
    t.nodes = length + 1;
    t.ports = {0, length};
    for (int i = 0; i < length; ++i) {
        t.slots.push_back({i, i + 1});
    }
    return t;
}

auto dense_dag_template(std::string name, int n) -> GraphTemplate
{
    GraphTemplate t;
    t.name = std::move(name);
    t.nodes = n;
    t.ports = {0, n - 1};
    for (int head = 1; head < n; ++head) {
        for (int tail = 0; tail < head; ++tail) {
            t.slots.push_back({tail, head});
        }
    }
    return t;
}

namespace {

auto darts_node_template(int k) -> GraphTemplate
{
    // Node<k>: ports are the k-1 predecessors followed by the node itself.
    GraphTemplate t;
    t.name = "Node" + std::to_string(k);
    t.nodes = k;
    t.ports.clear();
    for (int i = 0; i < k; ++i) {
        t.ports.push_back(i);
    }
    for (int i = 0; i + 1 < k; ++i) {
        t.slots.push_back({i, k - 1});
    }
    return t;
}

auto darts_template() -> GraphTemplate
{
    // 0: cell input (both preceding cells share it), 1..4: Node3..Node6, 5: output.
    GraphTemplate t;
    t.name = "Darts";
    t.nodes = 6;
    t.ports = {0, 5};
    t.slots = {{0, 0, 1}, {0, 0, 1, 2}, {0, 0, 1, 2, 3}, {0, 0, 1, 2, 3, 4}};
    for (int v = 1; v <= 4; ++v) {
        t.fixed.push_back({v, 5, "id"});
    }
    t.merge = "concat";
    return t;
}

auto trailing_number(std::string_view name, std::string_view prefix) -> std::optional<int>
{
    if (!name.starts_with(prefix) || name.size() == prefix.size()) {
        return std::nullopt;
    }
    int value = 0;
    auto digits = name.substr(prefix.size());
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
        return std::nullopt;
    }
    return value;
}

} // namespace

auto builtin_template(std::string_view name, std::size_t arity) -> std::optional<GraphTemplate>
{
    const int k = static_cast<int>(arity);
    auto expect = [&](GraphTemplate t) -> std::optional<GraphTemplate> {
        if (t.arity() != arity) {
            return std::nullopt;
        }
        return t;
    };

    // Variadic chains.
    if ((name == "Linear" || name == "Macro") && k >= 1) {
        return chain_template(std::string(name), k);
    }
    if (auto n = trailing_number(name, "Linear")) {
        return expect(chain_template(std::string(name), *n));
    }
    if (name == "Residual" || name == "Residual2") {
        GraphTemplate t;
        t.name = std::string(name);
        t.nodes = 3;
        t.ports = {0, 2};
        t.slots = {{0, 1}, {0, 2}, {1, 2}};
        return expect(std::move(t));
    }
    if (name == "Residual3") {
        GraphTemplate t;
        t.name = "Residual3";
        t.nodes = 4;
        t.ports = {0, 3};
        t.slots = {{0, 1}, {1, 2}, {0, 3}, {2, 3}};
        return expect(std::move(t));
    }
    if (name == "Cell" || name == "DAG4") {
        return expect(dense_dag_template(std::string(name), 4));
    }
    if (name == "DAG5") {
        return expect(dense_dag_template(std::string(name), 5));
    }
    if (name == "Darts") {
        return expect(darts_template());
    }
    if (auto n = trailing_number(name, "Node"); n && *n >= 3 && *n <= 6) {
        return expect(darts_node_template(*n));
    }
    if (name == "Block") {
        return expect(chain_template("Block", 6));
    }
    return std::nullopt;
}

} // namespace gramnas
